//! Phase-progression features.
//!
//! Each bin's phase is first mapped into (0, 2π], then lifted by whole turns
//! so that it strictly increases from frame to frame. The lifted reference and
//! test tracks are brought to a common frame count, the longer one scaled by
//! β, and the weighted absolute difference summarises how far the test's
//! phase evolution strays from the reference.

use std::f64::consts::TAU;

use ndarray::{Array2, Zip};

use crate::error::{Error, Result};
use crate::spectral::{interpolate_frames, Spectrogram, TimeScaleRatio};
use crate::stats;

/// Maps an angle in (-π, π] into (0, 2π].
pub fn positive_angle(angle: f64) -> f64 {
    if angle > 0.0 {
        angle
    } else {
        angle + TAU
    }
}

/// Positive-mapped phase plus the whole turns added to each element.
#[derive(Debug, Clone, PartialEq)]
pub struct UnwrappedPhase {
    /// Phase after mapping into (0, 2π].
    pub base: Array2<f64>,
    /// Number of 2π turns added to each element.
    pub turns: Array2<u64>,
    /// `base + 2π·turns`, strictly increasing along frames in every bin.
    pub values: Array2<f64>,
}

/// Smallest `p >= 0` with `base + 2π·p > previous`.
fn turns_above(base: f64, previous: f64) -> u64 {
    let mut p = if base > previous {
        0
    } else {
        ((previous - base) / TAU).floor() as u64 + 1
    };
    while base + TAU * p as f64 <= previous {
        p += 1;
    }
    while p > 0 && base + TAU * (p - 1) as f64 > previous {
        p -= 1;
    }
    p
}

/// Lifts a `[frame, bin]` phase matrix into strictly increasing tracks.
pub fn unwrap_phase(phase: &Array2<f64>) -> UnwrappedPhase {
    let base = phase.mapv(positive_angle);
    let (frames, bins) = base.dim();
    let mut turns = Array2::<u64>::zeros((frames, bins));
    let mut values = base.clone();
    for k in 0..bins {
        for u in 1..frames {
            let p = turns_above(base[[u, k]], values[[u - 1, k]]);
            turns[[u, k]] = p;
            values[[u, k]] = base[[u, k]] + TAU * p as f64;
        }
    }
    UnwrappedPhase {
        base,
        turns,
        values,
    }
}

/// Strictly increasing per-bin phase tracks; see [`unwrap_phase`].
pub fn unwrap_phase_monotonic(phase: &Array2<f64>) -> Array2<f64> {
    unwrap_phase(phase).values
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phasiness {
    pub mph_nw: f64,
    pub mph_mw: f64,
    pub sph_nw: f64,
    pub sph_mw: f64,
}

fn mean_and_spread(diff: &Array2<f64>) -> (f64, f64) {
    let overall = diff.mean().unwrap_or(0.0);
    let per_frame: Vec<f64> = diff
        .rows()
        .into_iter()
        .map(|row| row.mean().unwrap_or(0.0))
        .collect();
    (overall, stats::std_dev(&per_frame))
}

/// Unweighted and magnitude-weighted phase-progression differences.
///
/// When the test has at least as many frames as the reference, the test's
/// lifted phase is interpolated to the reference length and multiplied by β:
/// `Δφ = W·(φ_R − β·φ̃_T)` with `W = |X_R| / max|X_R|`. Otherwise the roles
/// swap: `Δφ = W·(β·φ̃_R − φ_T)` with `W = |X_T| / max|X_T|`.
pub fn phasiness(
    reference: &Spectrogram,
    test: &Spectrogram,
    beta: TimeScaleRatio,
) -> Result<Phasiness> {
    if reference.bin_count() != test.bin_count() {
        return Err(Error::DimensionMismatch {
            expected: reference.bin_count(),
            got: test.bin_count(),
        });
    }
    let (ur, ut) = (reference.frame_count(), test.frame_count());
    if ur < 2 || ut < 2 {
        return Err(Error::DegenerateFrames(format!(
            "phasiness needs two frames per signal, got {ur} and {ut}"
        )));
    }
    let b = beta.value();
    let fit = |phase: Array2<f64>, target: usize| -> Result<Array2<f64>> {
        if phase.nrows() == target {
            Ok(phase)
        } else {
            interpolate_frames(&phase, target)
        }
    };
    let ref_phase = unwrap_phase_monotonic(&reference.phases());
    let test_phase = unwrap_phase_monotonic(&test.phases());

    let (diff, weight_mag) = if ut >= ur {
        let scaled = fit(test_phase, ur)?;
        let mut d = ref_phase;
        Zip::from(&mut d)
            .and(&scaled)
            .for_each(|r, &t| *r = (*r - b * t).abs());
        (d, reference.magnitudes())
    } else {
        let scaled = fit(ref_phase, ut)?;
        let mut d = test_phase;
        Zip::from(&mut d)
            .and(&scaled)
            .for_each(|t, &r| *t = (b * r - *t).abs());
        (d, test.magnitudes())
    };

    let peak = weight_mag.iter().cloned().fold(0.0_f64, f64::max);
    let mut weighted = diff.clone();
    if peak > 0.0 {
        Zip::from(&mut weighted)
            .and(&weight_mag)
            .for_each(|d, &w| *d *= w / peak);
    } else {
        weighted.fill(0.0);
    }

    let (mph_nw, sph_nw) = mean_and_spread(&diff);
    let (mph_mw, sph_mw) = mean_and_spread(&weighted);
    Ok(Phasiness {
        mph_nw,
        mph_mw,
        sph_nw,
        sph_mw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn constant_phase_climbs_one_turn_per_frame() {
        let p = Array2::from_elem((3, 1), FRAC_PI_2);
        let out = unwrap_phase_monotonic(&p);
        assert_eq!(
            out.column(0).to_vec(),
            vec![FRAC_PI_2, FRAC_PI_2 + TAU, FRAC_PI_2 + 2.0 * TAU]
        );
    }

    #[test]
    fn negative_then_positive_phase() {
        let p = Array2::from_shape_vec((2, 1), vec![-FRAC_PI_2, FRAC_PI_2]).unwrap();
        let out = unwrap_phase_monotonic(&p);
        assert!((out[[0, 0]] - 3.0 * FRAC_PI_2).abs() < 1e-15);
        assert!((out[[1, 0]] - 5.0 * FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn zero_and_pi_map_into_upper_range() {
        assert_eq!(positive_angle(0.0), TAU);
        assert_eq!(positive_angle(PI), PI);
        assert_eq!(positive_angle(-PI), PI);
    }

    #[test]
    fn first_frame_passes_through() {
        let p = Array2::from_shape_vec((2, 2), vec![0.3, -0.3, 0.1, 0.2]).unwrap();
        let u = unwrap_phase(&p);
        assert_eq!(u.values[[0, 0]], 0.3);
        assert_eq!(u.values[[0, 1]], -0.3 + TAU);
        assert_eq!(u.turns[[0, 0]], 0);
    }

    #[test]
    fn turns_are_minimal() {
        assert_eq!(turns_above(1.0, 0.5), 0);
        assert_eq!(turns_above(1.0, 1.0), 1);
        assert_eq!(turns_above(1.0, 1.0 + 3.0 * TAU), 4);
    }
}
