//! Frame bandwidth estimation against a high-frequency noise floor.
//!
//! Per frame, the floor is the loudest bin at or above 21 kHz; the bandwidth
//! is the highest bin below that region whose level clears the floor by a
//! fixed margin. Only frames with a bandwidth above 8 kHz enter the average.

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::spectral::Spectrogram;

pub const NOISE_FLOOR_HZ: f64 = 21_000.0;
pub const INCLUSION_CUTOFF_HZ: f64 = 8_000.0;
pub const REFERENCE_MARGIN_DB: f64 = 10.0;
pub const TEST_MARGIN_DB: f64 = 5.0;

/// Levels are clamped this far below a full-scale bin-centred sinusoid, a
/// stand-in for the quantization floor of 16-bit material.
pub const LEVEL_FLOOR_DB: f64 = -120.0;

/// Power of a full-scale sinusoid's peak bin under a periodic Hann window.
fn full_scale_power(bins: usize) -> f64 {
    let n = (2 * (bins - 1)) as f64;
    (n / 4.0) * (n / 4.0)
}

fn level_db(power: f64, floor_power: f64) -> f64 {
    10.0 * power.max(floor_power).log10()
}

fn floor_power(bins: usize) -> f64 {
    full_scale_power(bins) * 10f64.powf(LEVEL_FLOOR_DB / 10.0)
}

/// First bin of the noise-floor region, or an error if the region is empty.
fn floor_start_bin(bins: usize, bin_hz: f64) -> Result<usize> {
    let start = (NOISE_FLOOR_HZ / bin_hz).ceil() as usize;
    if start >= bins {
        return Err(Error::InvalidParameter(format!(
            "sample rate too low for a noise floor above {NOISE_FLOOR_HZ} Hz"
        )));
    }
    Ok(start)
}

fn noise_floor_db(power: ArrayView1<f64>, floor_start: usize) -> f64 {
    let fp = floor_power(power.len());
    power
        .iter()
        .skip(floor_start)
        .map(|&p| level_db(p, fp))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Highest bin below `search_end` whose level exceeds `floor_db + margin_db`.
fn highest_bin_above(
    power: ArrayView1<f64>,
    search_end: usize,
    floor_db: f64,
    margin_db: f64,
) -> Option<usize> {
    let fp = floor_power(power.len());
    (0..search_end)
        .rev()
        .find(|&k| level_db(power[k], fp) > floor_db + margin_db)
}

fn mean_or_zero(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Reference bandwidth (+10 dB) and test bandwidth (+5 dB, searched below
/// the reference bandwidth), both in Hz.
///
/// The floor comes from the test spectrum. Frames are averaged when the
/// reference bandwidth exceeds 8 kHz; with no such frame both values are 0.
pub fn reference_and_test_bandwidth(
    ref_power: &Array2<f64>,
    test_power: &Array2<f64>,
    bin_hz: f64,
) -> Result<(f64, f64)> {
    if ref_power.dim() != test_power.dim() {
        return Err(Error::DimensionMismatch {
            expected: ref_power.len(),
            got: test_power.len(),
        });
    }
    let floor_start = floor_start_bin(ref_power.ncols(), bin_hz)?;
    let mut ref_bw = Vec::new();
    let mut test_bw = Vec::new();
    for (r, t) in ref_power.rows().into_iter().zip(test_power.rows()) {
        let floor = noise_floor_db(t, floor_start);
        let Some(kr) = highest_bin_above(r, floor_start, floor, REFERENCE_MARGIN_DB) else {
            continue;
        };
        let ref_hz = kr as f64 * bin_hz;
        if ref_hz <= INCLUSION_CUTOFF_HZ {
            continue;
        }
        let kt = highest_bin_above(t, kr, floor, TEST_MARGIN_DB).unwrap_or(0);
        ref_bw.push(ref_hz);
        test_bw.push(kt as f64 * bin_hz);
    }
    Ok((mean_or_zero(&ref_bw), mean_or_zero(&test_bw)))
}

/// Test bandwidth with the reference margin, judged on the test alone.
pub fn test_bandwidth_new(test_power: &Array2<f64>, bin_hz: f64) -> Result<f64> {
    let floor_start = floor_start_bin(test_power.ncols(), bin_hz)?;
    let widths: Vec<f64> = test_power
        .rows()
        .into_iter()
        .filter_map(|t| {
            let floor = noise_floor_db(t, floor_start);
            highest_bin_above(t, floor_start, floor, REFERENCE_MARGIN_DB)
        })
        .map(|k| k as f64 * bin_hz)
        .filter(|&hz| hz > INCLUSION_CUTOFF_HZ)
        .collect();
    Ok(mean_or_zero(&widths))
}

/// [`test_bandwidth_new`] on a spectrogram at its native sample rate.
pub fn bandwidth_test_new(test: &Spectrogram) -> Result<f64> {
    let power = test.bins.mapv(|c| c.norm_sqr());
    test_bandwidth_new(&power, test.bin_hz())
}
