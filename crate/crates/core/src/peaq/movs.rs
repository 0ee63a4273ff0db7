//! Pattern processing and the basic model output variables.

use ndarray::{Array2, ArrayView1};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::ear::{internal_noise, smoothing_coefficient, ExcitationPatterns};
use crate::error::{Error, Result};
use crate::features::bandwidth::reference_and_test_bandwidth;

/// TotalNMR reported when the error signal is (numerically) absent.
pub const TOTAL_NMR_FLOOR_DB: f64 = -100.0;
/// Band NMR level above which a frame counts as distorted, dB.
pub const REL_DIST_THRESHOLD_DB: f64 = 1.5;
/// Averaging starts once both signals exceed this loudness, sone.
pub const LOUDNESS_THRESHOLD: f64 = 0.1;
/// Frames at the start ignored by the modulation and noise-loudness averages.
pub const AVERAGING_DELAY_SECS: f64 = 0.5;
/// Lag count of the error-harmonic-structure autocorrelation.
pub const EHS_LAGS: usize = 256;

const WIN_MOD_DIFF_LEN: usize = 4;

/// The eleven basic model output variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovSet {
    pub win_mod_diff1: f64,
    pub avg_mod_diff1: f64,
    pub avg_mod_diff2: f64,
    pub rms_noise_loud: f64,
    pub bandwidth_ref: f64,
    pub bandwidth_test: f64,
    pub total_nmr: f64,
    pub rel_dist_frames: f64,
    pub mfpd: f64,
    pub adb: f64,
    pub ehs: f64,
}

impl MovSet {
    pub fn values(&self) -> [f64; 11] {
        [
            self.win_mod_diff1,
            self.avg_mod_diff1,
            self.avg_mod_diff2,
            self.rms_noise_loud,
            self.bandwidth_ref,
            self.bandwidth_test,
            self.total_nmr,
            self.rel_dist_frames,
            self.mfpd,
            self.adb,
            self.ehs,
        ]
    }
}

/// Level- and pattern-adapted excitations, `[frame, band]`.
#[derive(Debug, Clone)]
pub struct AdaptedPatterns {
    pub reference: Array2<f64>,
    pub test: Array2<f64>,
}

pub fn adapt_patterns(r: &ExcitationPatterns, t: &ExcitationPatterns) -> AdaptedPatterns {
    let (frames, z) = r.excitation.dim();
    let period = r.frame_period();
    let a: Vec<f64> = r
        .bands
        .centre
        .iter()
        .map(|&f| smoothing_coefficient(f, 0.050, 0.008, period))
        .collect();
    let mut p_r = vec![0.0; z];
    let mut p_t = vec![0.0; z];
    let mut num = vec![0.0; z];
    let mut den = vec![0.0; z];
    let mut pc_r = vec![0.0; z];
    let mut pc_t = vec![0.0; z];
    let mut out_r = Array2::zeros((frames, z));
    let mut out_t = Array2::zeros((frames, z));
    let mut el_r = vec![0.0; z];
    let mut el_t = vec![0.0; z];
    let mut ratio_r = vec![0.0; z];
    let mut ratio_t = vec![0.0; z];

    for u in 0..frames {
        let er = r.excitation.row(u);
        let et = t.excitation.row(u);
        let (mut cross, mut test_sum) = (0.0, 0.0);
        for k in 0..z {
            p_r[k] = a[k] * p_r[k] + (1.0 - a[k]) * er[k];
            p_t[k] = a[k] * p_t[k] + (1.0 - a[k]) * et[k];
            cross += (p_t[k] * p_r[k]).sqrt();
            test_sum += p_t[k];
        }
        let cl = if test_sum > 0.0 { (cross / test_sum).powi(2) } else { 1.0 };
        for k in 0..z {
            if cl > 1.0 {
                el_r[k] = er[k] / cl;
                el_t[k] = et[k];
            } else {
                el_r[k] = er[k];
                el_t[k] = et[k] * cl;
            }
            num[k] = a[k] * num[k] + el_t[k] * el_r[k];
            den[k] = a[k] * den[k] + el_r[k] * el_r[k];
            if num[k] >= den[k] {
                ratio_r[k] = 1.0;
                ratio_t[k] = if num[k] > 0.0 { den[k] / num[k] } else { 1.0 };
            } else {
                ratio_r[k] = num[k] / den[k];
                ratio_t[k] = 1.0;
            }
        }
        for k in 0..z {
            let lo = k.saturating_sub(3);
            let hi = (k + 4).min(z - 1);
            let m = (hi - lo + 1) as f64;
            let mean_r: f64 = ratio_r[lo..=hi].iter().sum::<f64>() / m;
            let mean_t: f64 = ratio_t[lo..=hi].iter().sum::<f64>() / m;
            pc_r[k] = a[k] * pc_r[k] + (1.0 - a[k]) * mean_r;
            pc_t[k] = a[k] * pc_t[k] + (1.0 - a[k]) * mean_t;
            out_r[[u, k]] = el_r[k] * pc_r[k];
            out_t[[u, k]] = el_t[k] * pc_t[k];
        }
    }
    AdaptedPatterns {
        reference: out_r,
        test: out_t,
    }
}

/// First frame used by the modulation and noise-loudness averages.
///
/// Falls back to frame 0 when the signals are too short or too quiet to
/// leave any frame after the loudness check and the start-up delay.
pub fn averaging_start(r: &ExcitationPatterns, t: &ExcitationPatterns) -> usize {
    let frames = r.frame_count();
    let loud = (0..frames)
        .find(|&u| r.loudness[u] > LOUDNESS_THRESHOLD && t.loudness[u] > LOUDNESS_THRESHOLD)
        .unwrap_or(0);
    let delay = (AVERAGING_DELAY_SECS / r.frame_period()).ceil() as usize;
    let start = loud.max(delay);
    if start < frames {
        start
    } else {
        0
    }
}

/// Per-frame modulation differences `(ModDiff1, ModDiff2, weight)`.
fn modulation_differences(
    r: &ExcitationPatterns,
    t: &ExcitationPatterns,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (frames, z) = r.modulation.dim();
    let noise_pow: Vec<f64> = r
        .bands
        .centre
        .iter()
        .map(|&f| internal_noise(f).powf(0.3))
        .collect();
    let mut d1 = Vec::with_capacity(frames);
    let mut d2 = Vec::with_capacity(frames);
    let mut w = Vec::with_capacity(frames);
    for u in 0..frames {
        let (mut s1, mut s2, mut sw) = (0.0, 0.0, 0.0);
        for k in 0..z {
            let mr = r.modulation[[u, k]];
            let mt = t.modulation[[u, k]];
            let diff = (mt - mr).abs();
            s1 += diff / (1.0 + mr);
            let neg = if mt > mr { 1.0 } else { 0.1 };
            s2 += neg * diff / (0.01 + mr);
            let level = r.average_loudness[[u, k]];
            sw += level / (level + 100.0 * noise_pow[k]);
        }
        d1.push(100.0 / z as f64 * s1);
        d2.push(100.0 / z as f64 * s2);
        w.push(sw);
    }
    (d1, d2, w)
}

fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        return 0.0;
    }
    values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / wsum
}

/// Sliding four-frame average of `sqrt(ModDiff1)`, combined as a 4-norm.
pub fn windowed_average(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let len = WIN_MOD_DIFF_LEN.min(values.len());
    let roots: Vec<f64> = values.iter().map(|v| v.sqrt()).collect();
    let windows: Vec<f64> = roots
        .windows(len)
        .map(|w| (w.iter().sum::<f64>() / len as f64).powi(4))
        .collect();
    (windows.iter().sum::<f64>() / windows.len() as f64).sqrt()
}

/// Noise loudness per frame, sone.
pub fn noise_loudness(
    r: &ExcitationPatterns,
    t: &ExcitationPatterns,
    adapted: &AdaptedPatterns,
) -> Vec<f64> {
    let (frames, z) = r.excitation.dim();
    let threshold: Vec<f64> = r
        .bands
        .centre
        .iter()
        .map(|&f| super::ear::threshold_excitation(f))
        .collect();
    (0..frames)
        .map(|u| {
            let sum: f64 = (0..z)
                .map(|k| {
                    let s_t = 0.15 * t.modulation[[u, k]] + 0.5;
                    let s_r = 0.15 * r.modulation[[u, k]] + 0.5;
                    let ep_t = adapted.test[[u, k]];
                    let ep_r = adapted.reference[[u, k]];
                    let excess = (s_t * ep_t - s_r * ep_r).max(0.0);
                    if excess == 0.0 {
                        return 0.0;
                    }
                    let beta = if ep_r > 0.0 {
                        (-1.5 * (ep_t - ep_r) / ep_r).exp()
                    } else {
                        0.0
                    };
                    let et = threshold[k];
                    (et / s_t).powf(0.23)
                        * ((1.0 + excess / (et + s_r * ep_r * beta)).powf(0.23) - 1.0)
                })
                .sum();
            (24.0 / z as f64 * sum).max(0.0)
        })
        .collect()
}

/// Noise-to-mask ratio per frame and band, linear.
///
/// The noise pattern is the grouped squared difference of weighted
/// magnitudes; the mask comes from the reference.
pub fn noise_to_mask(
    model: &super::EarModel,
    r: &ExcitationPatterns,
    t: &ExcitationPatterns,
) -> Array2<f64> {
    let (frames, z) = r.mask.dim();
    let mut nmr = Array2::zeros((frames, z));
    for u in 0..frames {
        let diff: Vec<f64> = r
            .weighted
            .row(u)
            .iter()
            .zip(t.weighted.row(u))
            .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
            .collect();
        let noise = model.group(ArrayView1::from(&diff));
        for k in 0..z {
            nmr[[u, k]] = noise[k] / r.mask[[u, k]];
        }
    }
    nmr
}

/// `10·log10` of the mean band-averaged NMR, floored.
pub fn total_nmr(nmr: &Array2<f64>) -> f64 {
    let mean = nmr.mean().unwrap_or(0.0);
    if mean > 0.0 {
        (10.0 * mean.log10()).max(TOTAL_NMR_FLOOR_DB)
    } else {
        TOTAL_NMR_FLOOR_DB
    }
}

/// Fraction of frames whose loudest band NMR exceeds 1.5 dB.
pub fn rel_dist_frames(nmr: &Array2<f64>) -> f64 {
    let frames = nmr.nrows();
    if frames == 0 {
        return 0.0;
    }
    let limit = 10f64.powf(REL_DIST_THRESHOLD_DB / 10.0);
    let count = nmr
        .rows()
        .into_iter()
        .filter(|row| row.iter().any(|&v| v > limit))
        .count();
    count as f64 / frames as f64
}

/// Single-channel detection probability and step count per frame.
pub fn detection_probability(r: &ExcitationPatterns, t: &ExcitationPatterns) -> (Vec<f64>, Vec<f64>) {
    let (frames, z) = r.excitation.dim();
    let mut p = Vec::with_capacity(frames);
    let mut q = Vec::with_capacity(frames);
    for u in 0..frames {
        let mut miss = 1.0;
        let mut steps = 0.0;
        for k in 0..z {
            let lr = 10.0 * r.excitation[[u, k]].log10();
            let lt = 10.0 * t.excitation[[u, k]].log10();
            let l = 0.3 * lr.max(lt) + 0.7 * lt;
            let s = if l > 0.0 {
                5.95072 * (6.39468 / l).powf(1.71332) + 9.01033e-11 * l.powi(4)
                    + 5.05622e-6 * l.powi(3)
                    - 0.00102438 * l * l
                    + 0.0550197 * l
                    - 0.198719
            } else {
                1e30
            };
            let e = lt - lr;
            let b = if e > 0.0 { 4.0 } else { 6.0 };
            let a = 10f64.powf(2f64.log10().log10() / b) / s;
            let pc = 1.0 - 10f64.powf(-(a * e).powf(b));
            miss *= 1.0 - pc;
            steps += e.trunc().abs() / s;
        }
        p.push(1.0 - miss);
        q.push(steps);
    }
    (p, q)
}

/// Maximum filtered detection probability.
pub fn mfpd(p: &[f64], frame_period: f64) -> f64 {
    let r = frame_period / (1024.0 / 48000.0);
    let c0 = 0.9f64.powf(r);
    let c1 = 0.99f64.powf(r);
    let mut smoothed = 0.0;
    let mut peak: f64 = 0.0;
    for &v in p {
        smoothed = (1.0 - c0) * v + c0 * smoothed;
        peak = (peak * c1).max(smoothed);
    }
    peak
}

/// Average distorted block.
pub fn adb(p: &[f64], q: &[f64]) -> f64 {
    let (count, total) = p
        .iter()
        .zip(q)
        .filter(|(pv, _)| **pv > 0.5)
        .fold((0usize, 0.0), |(n, s), (_, qv)| (n + 1, s + qv));
    if count == 0 {
        0.0
    } else if total > 0.0 {
        (total / count as f64).log10()
    } else {
        -0.5
    }
}

/// Windowed frame energy below which both signals count as silent, for
/// full-scale ±1 material.
pub const EHS_ENERGY_THRESHOLD: f64 = 5.6e-6;

fn frame_energy(power: ArrayView1<f64>, frame_size: usize) -> f64 {
    let last = power.len() - 1;
    let sum: f64 = power
        .iter()
        .enumerate()
        .map(|(k, p)| if k == 0 || k == last { *p } else { 2.0 * p })
        .sum();
    sum / frame_size as f64
}

/// Error harmonic structure.
pub fn ehs(r: &ExcitationPatterns, t: &ExcitationPatterns) -> f64 {
    let m = EHS_LAGS;
    let bins = r.weighted.ncols();
    if bins < 2 * m {
        return 0.0;
    }
    let window: Vec<f64> = (0..m)
        .map(|i| 0.81649658 * 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / (m - 1) as f64).cos()))
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(m);
    let n = r.stft.frame_size;
    let mut total = 0.0;
    let mut used = 0usize;
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for u in 0..r.frame_count() {
        if frame_energy(r.power.row(u), n) < EHS_ENERGY_THRESHOLD
            && frame_energy(t.power.row(u), n) < EHS_ENERGY_THRESHOLD
        {
            continue;
        }
        used += 1;
        let d: Vec<f64> = (0..2 * m)
            .map(|k| {
                let pr = r.weighted[[u, k]];
                let pt = t.weighted[[u, k]];
                if pr == pt {
                    0.0
                } else {
                    (pt.max(1e-30) / pr.max(1e-30)).ln()
                }
            })
            .collect();
        let e0: f64 = d[..m].iter().map(|v| v * v).sum();
        let mut corr = vec![0.0; m];
        let mut ei: f64 = e0;
        for (i, c) in corr.iter_mut().enumerate() {
            if i > 0 {
                ei += d[i + m - 1].powi(2) - d[i - 1].powi(2);
            }
            let denom = (e0 * ei.max(0.0)).sqrt();
            if denom > 0.0 {
                *c = d[..m].iter().zip(&d[i..i + m]).map(|(a, b)| a * b).sum::<f64>() / denom;
            }
        }
        let mean = corr.iter().sum::<f64>() / m as f64;
        for i in 0..m {
            buf[i] = Complex64::new(window[i] * (corr[i] - mean), 0.0);
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..=m / 2].iter().map(|c| (c / m as f64).norm_sqr()).collect();
        let mut k = 1;
        while k + 1 < power.len() && power[k + 1] < power[k] {
            k += 1;
        }
        total += power[k..].iter().cloned().fold(0.0, f64::max);
    }
    if used == 0 {
        0.0
    } else {
        1000.0 * total / used as f64
    }
}

/// Computes the eleven MOVs from two identically configured pattern sets.
pub fn compute_movs(
    model: &super::EarModel,
    r: &ExcitationPatterns,
    t: &ExcitationPatterns,
) -> Result<MovSet> {
    if r.excitation.dim() != t.excitation.dim() || r.power.dim() != t.power.dim() {
        return Err(Error::DimensionMismatch {
            expected: r.frame_count(),
            got: t.frame_count(),
        });
    }
    let start = averaging_start(r, t);
    let (d1, d2, w) = modulation_differences(r, t);
    let win_mod_diff1 = windowed_average(&d1[start..]);
    let avg_mod_diff1 = weighted_mean(&d1[start..], &w[start..]);
    let avg_mod_diff2 = weighted_mean(&d2[start..], &w[start..]);

    let adapted = adapt_patterns(r, t);
    let nl = noise_loudness(r, t, &adapted);
    let tail = &nl[start..];
    let rms_noise_loud = (tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt();

    let bin_hz = r.sample_rate as f64 / r.stft.frame_size as f64;
    let (bandwidth_ref, bandwidth_test) = reference_and_test_bandwidth(&r.power, &t.power, bin_hz)?;

    let nmr = noise_to_mask(model, r, t);
    let (p, q) = detection_probability(r, t);

    Ok(MovSet {
        win_mod_diff1,
        avg_mod_diff1,
        avg_mod_diff2,
        rms_noise_loud,
        bandwidth_ref,
        bandwidth_test,
        total_nmr: total_nmr(&nmr),
        rel_dist_frames: rel_dist_frames(&nmr),
        mfpd: mfpd(&p, r.frame_period()),
        adb: adb(&p, &q),
        ehs: ehs(r, t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windowed_average_of_constant() {
        assert!((windowed_average(&[4.0; 10]) - 4.0).abs() < 1e-12);
        assert!((windowed_average(&[9.0, 9.0]) - 9.0).abs() < 1e-12);
        assert_eq!(windowed_average(&[]), 0.0);
    }

    #[test]
    fn rel_dist_counts_frames() {
        let mut nmr = Array2::zeros((4, 3));
        nmr[[1, 2]] = 2.0;
        nmr[[3, 0]] = 1.2;
        // 1.5 dB is about 1.413 linear, so only frame 1 qualifies.
        assert_eq!(rel_dist_frames(&nmr), 0.25);
    }

    #[test]
    fn nmr_floor() {
        assert_eq!(total_nmr(&Array2::zeros((3, 3))), TOTAL_NMR_FLOOR_DB);
        assert!((total_nmr(&Array2::from_elem((2, 2), 10.0)) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn adb_cases() {
        assert_eq!(adb(&[0.1, 0.2], &[1.0, 1.0]), 0.0);
        assert_eq!(adb(&[0.9], &[0.0]), -0.5);
        assert!((adb(&[0.9, 0.9, 0.1], &[5.0, 15.0, 100.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mfpd_tracks_sustained_detection() {
        assert_eq!(mfpd(&[0.0; 20], 1024.0 / 48000.0), 0.0);
        let v = mfpd(&[1.0; 200], 1024.0 / 48000.0);
        assert!(v > 0.99 && v <= 1.0);
    }
}
