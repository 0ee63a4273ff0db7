//! Harmonic/percussive separation by median filtering, and the transient
//! level ratio built on it.
//!
//! Sustained partials are smooth along time, transients are smooth along
//! frequency. Median filtering the magnitude spectrogram in each direction
//! gives a harmonic and a percussive estimate; every STFT cell goes wholly to
//! whichever estimate is larger (ties go to the harmonic part).

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::spectral::{hann_window, stft, Spectrogram, StftParams};
use crate::stats::median_in_place;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpssParams {
    pub frame_size: usize,
    pub hop: usize,
    /// Median length along time, in frames.
    pub harmonic_width: usize,
    /// Median length along frequency, in bins.
    pub percussive_width: usize,
}

impl Default for HpssParams {
    fn default() -> Self {
        Self {
            frame_size: 1024,
            hop: 256,
            harmonic_width: 17,
            percussive_width: 17,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HpssOutput {
    pub harmonic: AudioSignal,
    pub percussive: AudioSignal,
    /// STFT of the zero-padded input that was separated.
    pub spectrogram: Spectrogram,
    /// True where a cell was assigned to the percussive part.
    pub percussive_mask: Array2<bool>,
}

fn median_filter_time(mags: &Array2<f64>, width: usize) -> Array2<f64> {
    let (frames, bins) = mags.dim();
    let half = width / 2;
    let mut out = Array2::zeros((frames, bins));
    let mut buf = Vec::with_capacity(width);
    for k in 0..bins {
        for u in 0..frames {
            buf.clear();
            let lo = u.saturating_sub(half);
            let hi = (u + half).min(frames - 1);
            buf.extend((lo..=hi).map(|v| mags[[v, k]]));
            out[[u, k]] = median_in_place(&mut buf);
        }
    }
    out
}

fn median_filter_freq(mags: &Array2<f64>, width: usize) -> Array2<f64> {
    let (frames, bins) = mags.dim();
    let half = width / 2;
    let mut out = Array2::zeros((frames, bins));
    let mut buf = Vec::with_capacity(width);
    for u in 0..frames {
        let row = mags.row(u);
        for k in 0..bins {
            buf.clear();
            let lo = k.saturating_sub(half);
            let hi = (k + half).min(bins - 1);
            buf.extend((lo..=hi).map(|j| row[j]));
            out[[u, k]] = median_in_place(&mut buf);
        }
    }
    out
}

/// Weighted overlap-add inverse of a one-sided STFT.
fn istft(bins: &Array2<Complex64>, params: StftParams, len: usize) -> Vec<f64> {
    let n = params.frame_size;
    let window = hann_window(n);
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (u, row) in bins.rows().into_iter().enumerate() {
        for k in 0..=n / 2 {
            buf[k] = row[k];
        }
        for k in 1..n / 2 {
            buf[n - k] = row[k].conj();
        }
        ifft.process(&mut buf);
        let start = u * params.hop;
        for i in 0..n {
            if start + i >= len {
                break;
            }
            let w = window[i];
            out[start + i] += buf[i].re / n as f64 * w;
            norm[start + i] += w * w;
        }
    }
    let peak_norm = norm.iter().cloned().fold(0.0_f64, f64::max);
    out.iter_mut().zip(&norm).for_each(|(o, &w)| {
        if w > peak_norm * 1e-6 {
            *o /= w;
        } else {
            *o = 0.0;
        }
    });
    out
}

/// Splits a signal into harmonic and percussive parts of the same length.
pub fn hpss(signal: &AudioSignal, params: HpssParams) -> Result<HpssOutput> {
    let stft_params = StftParams::new(params.frame_size, params.hop);
    stft_params.validate()?;
    if params.harmonic_width == 0 || params.percussive_width == 0 {
        return Err(Error::InvalidParameter("median widths must be positive".into()));
    }
    let n = params.frame_size;
    if signal.len() < n {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            frame_size: n,
        });
    }
    let mut padded = vec![0.0; n];
    padded.extend_from_slice(&signal.samples);
    padded.extend(std::iter::repeat(0.0).take(n));
    let padded = AudioSignal::new(padded, signal.sample_rate);
    let spec = stft(&padded, stft_params)?;
    let mags = spec.magnitudes();
    let harm_est = median_filter_time(&mags, params.harmonic_width);
    let perc_est = median_filter_freq(&mags, params.percussive_width);
    let mask = Array2::from_shape_fn(mags.dim(), |ix| perc_est[ix] > harm_est[ix]);

    let zero = Complex64::new(0.0, 0.0);
    let perc_bins = Array2::from_shape_fn(mags.dim(), |ix| if mask[ix] { spec.bins[ix] } else { zero });
    let harm_bins = Array2::from_shape_fn(mags.dim(), |ix| if mask[ix] { zero } else { spec.bins[ix] });
    let crop = |full: Vec<f64>| AudioSignal::new(full[n..n + signal.len()].to_vec(), signal.sample_rate);
    Ok(HpssOutput {
        harmonic: crop(istft(&harm_bins, stft_params, padded.len())),
        percussive: crop(istft(&perc_bins, stft_params, padded.len())),
        spectrogram: spec,
        percussive_mask: mask,
    })
}

/// Percussive component of a signal.
pub fn hps_percussive(signal: &AudioSignal, params: HpssParams) -> Result<AudioSignal> {
    Ok(hpss(signal, params)?.percussive)
}

/// RMS of the reference's percussive part over that of the test.
pub fn hps_transient_ratio(
    reference: &AudioSignal,
    test: &AudioSignal,
    params: HpssParams,
) -> Result<f64> {
    let r = hps_percussive(reference, params)?.rms();
    let t = hps_percussive(test, params)?.rms();
    percussive_rms_ratio(r, t)
}

pub fn percussive_rms_ratio(reference_rms: f64, test_rms: f64) -> Result<f64> {
    if test_rms == 0.0 {
        return Err(Error::NoPercussiveEnergy);
    }
    Ok(reference_rms / test_rms)
}
