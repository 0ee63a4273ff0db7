//! Spectral-envelope similarity from cubic fits of normalized frame spectra.

use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::linalg::LeastSquares;
use crate::spectral::{time_instance_frames, Anchor, StftParams, TimeScaleRatio};

/// Least-squares cubic over normalized bin positions `k / (N/2)`.
pub struct CubicEnvelope {
    solver: LeastSquares,
    /// Evaluation abscissa: `N/2` points spanning [0, 1].
    grid: Vec<f64>,
}

impl CubicEnvelope {
    pub fn new(frame_size: usize) -> Result<Self> {
        let half = frame_size / 2;
        if half < 4 {
            return Err(Error::InvalidParameter(format!(
                "frame size {frame_size} too small for a cubic fit"
            )));
        }
        let design: Vec<f64> = (0..=half)
            .flat_map(|k| {
                let x = k as f64 / half as f64;
                [1.0, x, x * x, x * x * x]
            })
            .collect();
        let solver = LeastSquares::new(&design, half + 1, 4)?;
        let grid = (0..half).map(|j| j as f64 / (half - 1) as f64).collect();
        Ok(Self { solver, grid })
    }

    /// Cubic coefficients `[c0, c1, c2, c3]` fitted to one spectrum.
    pub fn fit(&self, spectrum: &[f64]) -> [f64; 4] {
        let c = self.solver.solve(spectrum);
        [c[0], c[1], c[2], c[3]]
    }

    /// The fitted cubic without its intercept, sampled on the grid.
    pub fn curve(&self, coeffs: &[f64; 4]) -> Vec<f64> {
        self.grid
            .iter()
            .map(|&x| x * (coeffs[1] + x * (coeffs[2] + x * coeffs[3])))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSimilarity {
    /// Mean absolute difference of the reference and test envelope curves.
    pub ssmad: f64,
    /// Mean signed difference, reference minus test.
    pub ssmd: f64,
}

/// Per-frame normalized magnitude, or `None` for a silent frame.
fn normalized(row: impl Iterator<Item = f64>) -> Option<Vec<f64>> {
    let mags: Vec<f64> = row.collect();
    let peak = mags.iter().cloned().fold(0.0_f64, f64::max);
    (peak > 0.0).then(|| mags.into_iter().map(|m| m / peak).collect())
}

/// Compares smoothed spectral envelopes of reference-anchored frame pairs.
pub fn spectral_similarity(
    reference: &AudioSignal,
    test: &AudioSignal,
    beta: TimeScaleRatio,
    params: StftParams,
) -> Result<SpectralSimilarity> {
    let (r, t) = time_instance_frames(reference, test, Anchor::Reference, beta, params)?;
    let envelope = CubicEnvelope::new(params.frame_size)?;
    let mut mad_sum = 0.0;
    let mut md_sum = 0.0;
    let mut used = 0usize;
    for (rr, tr) in r.bins.rows().into_iter().zip(t.bins.rows()) {
        let (Some(rs), Some(ts)) = (
            normalized(rr.iter().map(|c| c.norm())),
            normalized(tr.iter().map(|c| c.norm())),
        ) else {
            continue;
        };
        let rc = envelope.curve(&envelope.fit(&rs));
        let tc = envelope.curve(&envelope.fit(&ts));
        let n = rc.len() as f64;
        let diffs = rc.iter().zip(&tc).map(|(a, b)| a - b);
        let (abs_sum, sum) = diffs.fold((0.0, 0.0), |(s_abs, s), d| (s_abs + d.abs(), s + d));
        mad_sum += abs_sum / n;
        md_sum += sum / n;
        used += 1;
    }
    if used == 0 {
        return Err(Error::DegenerateFrames(
            "every frame pair contains a silent frame".into(),
        ));
    }
    Ok(SpectralSimilarity {
        ssmad: mad_sum / used as f64,
        ssmd: md_sum / used as f64,
    })
}
