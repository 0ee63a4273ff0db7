//! FFT-based peripheral ear model.
//!
//! Works on magnitude spectra rather than on time-domain frames so that the
//! reference can be stretched along time before the model sees it. All band
//! tables are derived from the Bark-scale formulas at the input's own sample
//! rate instead of the tabulated 48 kHz values.

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::spectral::StftParams;

/// Playback level of a full-scale sinusoid, dB SPL.
pub const LISTENING_LEVEL_DB: f64 = 92.0;
/// Band spacing in Bark.
pub const BAND_RESOLUTION: f64 = 0.25;
pub const LOWEST_BAND_HZ: f64 = 80.0;
pub const HIGHEST_BAND_HZ: f64 = 18_000.0;
/// Floor applied to grouped band energies.
pub const BAND_ENERGY_FLOOR: f64 = 1e-12;

const SPREAD_EXPONENT: f64 = 0.4;
const LOWER_SLOPE_DB_PER_BARK: f64 = 27.0;

fn hz_to_bark(f: f64) -> f64 {
    7.0 * (f / 650.0).asinh()
}

fn bark_to_hz(z: f64) -> f64 {
    650.0 * (z / 7.0).sinh()
}

/// Outer and middle ear frequency response in dB.
pub fn outer_ear_db(f_hz: f64) -> f64 {
    let f = (f_hz / 1000.0).max(1e-6);
    -0.6 * 3.64 * f.powf(-0.8) + 6.5 * (-0.6 * (f - 3.3).powi(2)).exp() - 1e-3 * f.powf(3.6)
}

/// Internal ear noise added to each band.
pub fn internal_noise(f_hz: f64) -> f64 {
    10f64.powf(0.4 * 0.364 * (f_hz / 1000.0).powf(-0.8))
}

/// Absolute hearing threshold in excitation units.
pub fn threshold_excitation(f_hz: f64) -> f64 {
    10f64.powf(0.364 * (f_hz / 1000.0).powf(-0.8))
}

/// Time-smoothing coefficient for a time constant spanning `tau_min` at high
/// frequencies to `tau_100` at 100 Hz.
pub fn smoothing_coefficient(fc: f64, tau_100: f64, tau_min: f64, frame_period: f64) -> f64 {
    let tau = tau_min + 100.0 / fc * (tau_100 - tau_min);
    (-frame_period / tau).exp()
}

/// Critical-band edges and centres in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalBands {
    pub lower: Vec<f64>,
    pub centre: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CriticalBands {
    pub fn new() -> Self {
        let z_lo = hz_to_bark(LOWEST_BAND_HZ);
        let z_hi = hz_to_bark(HIGHEST_BAND_HZ);
        let count = ((z_hi - z_lo) / BAND_RESOLUTION).ceil() as usize;
        let mut lower = Vec::with_capacity(count);
        let mut centre = Vec::with_capacity(count);
        let mut upper = Vec::with_capacity(count);
        for i in 0..count {
            let z = z_lo + i as f64 * BAND_RESOLUTION;
            lower.push(bark_to_hz(z));
            centre.push(bark_to_hz(z + 0.5 * BAND_RESOLUTION).min(HIGHEST_BAND_HZ));
            upper.push(bark_to_hz(z + BAND_RESOLUTION).min(HIGHEST_BAND_HZ));
        }
        Self {
            lower,
            centre,
            upper,
        }
    }

    pub fn len(&self) -> usize {
        self.centre.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centre.is_empty()
    }

    /// Index of the band whose edges contain `f_hz`.
    pub fn band_of(&self, f_hz: f64) -> Option<usize> {
        (0..self.len()).find(|&i| f_hz >= self.lower[i] && f_hz < self.upper[i])
    }
}

impl Default for CriticalBands {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-frame outputs of the ear model for one signal.
#[derive(Debug, Clone)]
pub struct ExcitationPatterns {
    pub sample_rate: u32,
    pub stft: StftParams,
    pub bands: CriticalBands,
    /// Unscaled FFT power `|X|²`, `[frame, bin]`.
    pub power: Array2<f64>,
    /// Level-scaled, outer-ear weighted power, `[frame, bin]`.
    pub weighted: Array2<f64>,
    /// Grouped band energies with internal noise, `[frame, band]`.
    pub band_energy: Array2<f64>,
    /// Excitation after frequency spreading only.
    pub unsmeared: Array2<f64>,
    /// Excitation after frequency and time spreading.
    pub excitation: Array2<f64>,
    /// Masking threshold derived from `excitation`.
    pub mask: Array2<f64>,
    /// Envelope modulation per band.
    pub modulation: Array2<f64>,
    /// Smoothed `unsmeared^0.3`, the average loudness used for weighting.
    pub average_loudness: Array2<f64>,
    /// Total loudness per frame, sone.
    pub loudness: Vec<f64>,
}

impl ExcitationPatterns {
    pub fn frame_count(&self) -> usize {
        self.power.nrows()
    }

    pub fn frame_period(&self) -> f64 {
        self.stft.hop as f64 / self.sample_rate as f64
    }
}

/// Precomputed tables of the ear model for one sample rate and frame size.
#[derive(Debug, Clone)]
pub struct EarModel {
    pub sample_rate: u32,
    pub stft: StftParams,
    pub bands: CriticalBands,
    /// Level scaling times outer-ear weighting, per bin.
    bin_gain: Vec<f64>,
    /// Fractional bin-to-band overlaps: `(first_bin, weights)` per band.
    grouping: Vec<(usize, Vec<f64>)>,
    pub internal_noise: Vec<f64>,
    pub threshold: Vec<f64>,
    spread_norm: Vec<f64>,
    time_spread: Vec<f64>,
    mask_gain: Vec<f64>,
    modulation_smoothing: Vec<f64>,
    loudness_slope: Vec<f64>,
}

impl EarModel {
    pub fn new(sample_rate: u32, stft: StftParams) -> Result<Self> {
        stft.validate()?;
        let bands = CriticalBands::new();
        let n = stft.frame_size;
        let bin_hz = sample_rate as f64 / n as f64;
        let bins = stft.bin_count();
        if bands.upper.last().copied().unwrap_or(0.0) > sample_rate as f64 / 2.0 {
            return Err(Error::InvalidParameter(format!(
                "sample rate {sample_rate} Hz cannot cover bands up to {HIGHEST_BAND_HZ} Hz"
            )));
        }

        // A bin-centred full-scale sinusoid peaks at N/4 under a periodic Hann window.
        let full_scale = n as f64 / 4.0;
        let level_gain = 10f64.powf(LISTENING_LEVEL_DB / 10.0) / (full_scale * full_scale);
        let bin_gain: Vec<f64> = (0..bins)
            .map(|k| {
                let f = k as f64 * bin_hz;
                if k == 0 {
                    0.0
                } else {
                    level_gain * 10f64.powf(outer_ear_db(f) / 10.0)
                }
            })
            .collect();

        let grouping = (0..bands.len())
            .map(|i| {
                let (fl, fu) = (bands.lower[i], bands.upper[i]);
                let first = ((fl / bin_hz) - 0.5).floor().max(0.0) as usize;
                let last = (((fu / bin_hz) + 0.5).ceil() as usize).min(bins - 1);
                let weights = (first..=last)
                    .map(|k| {
                        let lo = (k as f64 - 0.5) * bin_hz;
                        let hi = (k as f64 + 0.5) * bin_hz;
                        ((hi.min(fu) - lo.max(fl)) / bin_hz).max(0.0)
                    })
                    .collect();
                (first, weights)
            })
            .collect();

        let frame_period = stft.hop as f64 / sample_rate as f64;
        let internal_noise: Vec<f64> = bands.centre.iter().map(|&f| internal_noise(f)).collect();
        let threshold: Vec<f64> = bands.centre.iter().map(|&f| threshold_excitation(f)).collect();
        let time_spread = bands
            .centre
            .iter()
            .map(|&f| smoothing_coefficient(f, 0.030, 0.008, frame_period))
            .collect();
        let mask_gain = (0..bands.len())
            .map(|i| {
                let z = i as f64 * BAND_RESOLUTION;
                let offset_db = if z <= 12.0 { 3.0 } else { 0.25 * z };
                10f64.powf(-offset_db / 10.0)
            })
            .collect();
        let modulation_smoothing = bands
            .centre
            .iter()
            .map(|&f| smoothing_coefficient(f, 0.050, 0.008, frame_period))
            .collect();
        let loudness_slope = bands
            .centre
            .iter()
            .map(|&f| {
                let db = -2.0 - 2.05 * (f / 4000.0).atan() - 0.75 * ((f / 1600.0).powi(2)).atan();
                10f64.powf(db / 10.0)
            })
            .collect();

        let mut model = Self {
            sample_rate,
            stft,
            bands,
            bin_gain,
            grouping,
            internal_noise,
            threshold,
            spread_norm: Vec::new(),
            time_spread,
            mask_gain,
            modulation_smoothing,
            loudness_slope,
        };
        let unit = vec![1.0; model.bands.len()];
        model.spread_norm = model.spread_raw(&unit);
        Ok(model)
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    /// Groups a weighted power spectrum into bands.
    pub fn group(&self, weighted: ArrayView1<f64>) -> Vec<f64> {
        self.grouping
            .iter()
            .map(|(first, weights)| {
                weights
                    .iter()
                    .enumerate()
                    .map(|(j, w)| w * weighted[first + j])
                    .sum()
            })
            .collect()
    }

    /// Level-dependent frequency spreading before normalization.
    fn spread_raw(&self, energy: &[f64]) -> Vec<f64> {
        let z = energy.len();
        let lower = 10f64.powf(-LOWER_SLOPE_DB_PER_BARK * BAND_RESOLUTION / 10.0);
        let mut acc = vec![0.0; z];
        for l in 0..z {
            let e = energy[l];
            let upper_db =
                -24.0 - 230.0 / self.bands.centre[l] + 2.0 * e.max(1e-30).log10();
            let upper = 10f64.powf(upper_db.min(0.0) * BAND_RESOLUTION / 10.0);
            // Normalize the spreading function of masker l to unit sum.
            let below: f64 = (1..=l).map(|d| lower.powi(d as i32)).sum();
            let above: f64 = (0..z - l).map(|d| upper.powi(d as i32)).sum();
            let total = below + above;
            let base = (e / total).powf(SPREAD_EXPONENT);
            let lower_p = lower.powf(SPREAD_EXPONENT);
            let upper_p = upper.powf(SPREAD_EXPONENT);
            let mut term = base;
            for i in (0..l).rev() {
                term *= lower_p;
                acc[i] += term;
            }
            let mut term = base;
            for slot in acc.iter_mut().skip(l) {
                *slot += term;
                term *= upper_p;
            }
        }
        acc.into_iter()
            .map(|a| a.powf(1.0 / SPREAD_EXPONENT))
            .collect()
    }

    /// Frequency spreading normalized so a flat 0 dB input maps to itself.
    pub fn spread(&self, energy: &[f64]) -> Vec<f64> {
        self.spread_raw(energy)
            .into_iter()
            .zip(&self.spread_norm)
            .map(|(e, n)| e / n)
            .collect()
    }

    /// The excitation produced by a silent frame: floor energy plus internal
    /// noise, spread across bands.
    pub fn silent_excitation(&self) -> Vec<f64> {
        let floor: Vec<f64> = self
            .internal_noise
            .iter()
            .map(|n| BAND_ENERGY_FLOOR + n)
            .collect();
        self.spread(&floor)
    }

    /// Specific loudness summed over bands.
    fn total_loudness(&self, excitation: &[f64]) -> f64 {
        const CONST: f64 = 1.07664;
        const E0: f64 = 1e4;
        let z = excitation.len() as f64;
        let sum: f64 = excitation
            .iter()
            .enumerate()
            .map(|(k, &e)| {
                let s = self.loudness_slope[k];
                let et = self.threshold[k];
                let n = CONST
                    * (et / (s * E0)).powf(0.23)
                    * ((1.0 - s + s * e / et).powf(0.23) - 1.0);
                n.max(0.0)
            })
            .sum();
        24.0 / z * sum
    }

    /// Runs the model on a `[frame, bin]` magnitude matrix.
    pub fn process(&self, magnitudes: &Array2<f64>) -> Result<ExcitationPatterns> {
        let bins = self.stft.bin_count();
        if magnitudes.ncols() != bins {
            return Err(Error::DimensionMismatch {
                expected: bins,
                got: magnitudes.ncols(),
            });
        }
        let frames = magnitudes.nrows();
        if frames == 0 {
            return Err(Error::DegenerateFrames("ear model needs one frame".into()));
        }
        let z = self.band_count();
        let power = magnitudes.mapv(|m| m * m);
        let mut weighted = power.clone();
        for mut row in weighted.rows_mut() {
            row.iter_mut()
                .zip(&self.bin_gain)
                .for_each(|(p, g)| *p *= g);
        }

        let mut band_energy = Array2::zeros((frames, z));
        let mut unsmeared = Array2::zeros((frames, z));
        let mut excitation = Array2::zeros((frames, z));
        let mut mask = Array2::zeros((frames, z));
        let mut modulation = Array2::zeros((frames, z));
        let mut average_loudness = Array2::zeros((frames, z));
        let mut loudness = Vec::with_capacity(frames);

        let frame_rate = self.sample_rate as f64 / self.stft.hop as f64;
        let mut smeared_state = vec![0.0; z];
        let mut prev_pow = vec![0.0; z];
        let mut deriv_state = vec![0.0; z];
        let mut level_state = vec![0.0; z];

        for u in 0..frames {
            let grouped = self.group(weighted.row(u));
            let e_f: Vec<f64> = grouped
                .iter()
                .zip(&self.internal_noise)
                .map(|(e, n)| e.max(BAND_ENERGY_FLOOR) + n)
                .collect();
            let e2 = self.spread(&e_f);
            for i in 0..z {
                band_energy[[u, i]] = e_f[i];
                unsmeared[[u, i]] = e2[i];
                let a = self.time_spread[i];
                smeared_state[i] = a * smeared_state[i] + (1.0 - a) * e2[i];
                let e = smeared_state[i].max(e2[i]);
                excitation[[u, i]] = e;
                mask[[u, i]] = e * self.mask_gain[i];

                let a = self.modulation_smoothing[i];
                let p = e2[i].powf(0.3);
                let diff = if u == 0 { 0.0 } else { (p - prev_pow[i]).abs() };
                deriv_state[i] = a * deriv_state[i] + (1.0 - a) * frame_rate * diff;
                level_state[i] = a * level_state[i] + (1.0 - a) * p;
                prev_pow[i] = p;
                modulation[[u, i]] = deriv_state[i] / (1.0 + level_state[i] / 0.3);
                average_loudness[[u, i]] = level_state[i];
            }
            loudness.push(self.total_loudness(excitation.row(u).as_slice().unwrap_or(&[])));
        }

        Ok(ExcitationPatterns {
            sample_rate: self.sample_rate,
            stft: self.stft,
            bands: self.bands.clone(),
            power,
            weighted,
            band_energy,
            unsmeared,
            excitation,
            mask,
            modulation,
            average_loudness,
            loudness,
        })
    }
}
