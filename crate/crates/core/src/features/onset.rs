//! Onset envelope, peak picking and the two onset-based transient features.

use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::spectral::{stft, Spectrogram, StftParams};
use crate::stats;

/// Added to frame energies before the logarithm so silent frames stay finite.
pub const ONSET_LOG_FLOOR: f64 = 1e-12;

/// Log-energy difference per frame with its peaks.
///
/// `values[i]` is the difference between frames `i + 1` and `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct OnsetEnvelope {
    pub values: Vec<f64>,
    /// Strict local maxima over a ±2 neighbourhood.
    pub peak_indices: Vec<usize>,
    /// Peaks more than one standard deviation above the envelope mean.
    pub selected_peaks: Vec<usize>,
}

impl OnsetEnvelope {
    pub fn from_values(values: Vec<f64>) -> Self {
        let peak_indices = pick_peaks(&values);
        let selected_peaks = select_transients(&values, &peak_indices);
        Self {
            values,
            peak_indices,
            selected_peaks,
        }
    }

    /// Builds the envelope from per-frame weighted energies.
    pub fn from_energies(energies: &[f64]) -> Self {
        let values = energies
            .windows(2)
            .map(|w| (w[1] + ONSET_LOG_FLOOR).log10() - (w[0] + ONSET_LOG_FLOOR).log10())
            .collect();
        Self::from_values(values)
    }

    pub fn peak_count(&self) -> usize {
        self.peak_indices.len()
    }

    /// Mean envelope value at the selected peaks, if any were selected.
    pub fn mean_transient_level(&self) -> Option<f64> {
        if self.selected_peaks.is_empty() {
            return None;
        }
        let levels: Vec<f64> = self.selected_peaks.iter().map(|&i| self.values[i]).collect();
        Some(stats::mean(&levels))
    }
}

/// Bin-index weighted power per frame, bins `0..N/2` (Nyquist excluded).
pub fn weighted_energies(spec: &Spectrogram) -> Vec<f64> {
    let half = spec.frame_size / 2;
    spec.bins
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .take(half)
                .enumerate()
                .map(|(k, c)| k as f64 * c.norm_sqr())
                .sum()
        })
        .collect()
}

pub fn onset_envelope(signal: &AudioSignal, params: StftParams) -> Result<OnsetEnvelope> {
    let spec = stft(signal, params)?;
    if spec.frame_count() < 3 {
        return Err(Error::DegenerateFrames(format!(
            "onset detection needs at least 3 frames, got {}",
            spec.frame_count()
        )));
    }
    Ok(OnsetEnvelope::from_energies(&weighted_energies(&spec)))
}

/// Indices strictly greater than both neighbours on each side.
///
/// The first and last two positions are never peaks.
pub fn pick_peaks(values: &[f64]) -> Vec<usize> {
    if values.len() < 5 {
        return Vec::new();
    }
    (2..values.len() - 2)
        .filter(|&u| {
            let v = values[u];
            v > values[u - 2] && v > values[u - 1] && v > values[u + 1] && v > values[u + 2]
        })
        .collect()
}

/// Peaks whose level exceeds the envelope mean plus one standard deviation.
pub fn select_transients(values: &[f64], peaks: &[usize]) -> Vec<usize> {
    let threshold = stats::mean(values) + stats::std_dev(values);
    peaks
        .iter()
        .copied()
        .filter(|&p| values[p] > threshold)
        .collect()
}

/// Difference in onset count per second of reference material.
///
/// Both counts are scaled by the reference duration.
pub fn peak_delta(
    reference: &OnsetEnvelope,
    test: &OnsetEnvelope,
    sample_rate: u32,
    ref_len: usize,
) -> f64 {
    let diff = test.peak_count() as f64 - reference.peak_count() as f64;
    sample_rate as f64 / ref_len as f64 * diff
}

/// Ratio of mean selected-peak levels, reference over test.
///
/// `None` when either signal has no selected peak or the test level is zero.
pub fn transient_ratio_checked(reference: &OnsetEnvelope, test: &OnsetEnvelope) -> Option<f64> {
    let r = reference.mean_transient_level()?;
    let t = test.mean_transient_level()?;
    (t != 0.0).then(|| r / t)
}

/// Neutral value used when no transient ratio can be formed.
pub const NEUTRAL_TRANSIENT_RATIO: f64 = 1.0;

pub fn transient_ratio(reference: &OnsetEnvelope, test: &OnsetEnvelope) -> f64 {
    transient_ratio_checked(reference, test).unwrap_or(NEUTRAL_TRANSIENT_RATIO)
}
