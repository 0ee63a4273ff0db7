//! Short-time spectra and reference/test alignment.
//!
//! Time-scaled audio never has the same length as its reference, so every
//! frame-by-frame comparison first needs the two spectrograms brought to a
//! common frame count. Two strategies exist: framing both signals at the same
//! instants of the *musical* timeline (anchor modes), or linearly stretching
//! one magnitude spectrogram along time (interpolation modes).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::AudioSignal;
use crate::error::{Error, Result};

/// Frame size and hop of a short-time analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftParams {
    pub frame_size: usize,
    pub hop: usize,
}

impl StftParams {
    pub const fn new(frame_size: usize, hop: usize) -> Self {
        Self { frame_size, hop }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.frame_size.is_power_of_two() || self.frame_size < 4 {
            return Err(Error::InvalidParameter(format!(
                "frame size {} is not a power of two >= 4",
                self.frame_size
            )));
        }
        if self.hop == 0 || self.hop > self.frame_size {
            return Err(Error::InvalidParameter(format!(
                "hop {} must be in 1..={}",
                self.hop, self.frame_size
            )));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        self.frame_size / 2 + 1
    }
}

impl Default for StftParams {
    fn default() -> Self {
        Self::new(2048, 512)
    }
}

/// One-sided complex STFT, indexed `[frame, bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub bins: Array2<Complex64>,
    pub frame_size: usize,
    /// Nominal hop of this signal's frames in samples.
    pub hop: usize,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn frame_count(&self) -> usize {
        self.bins.nrows()
    }

    pub fn bin_count(&self) -> usize {
        self.bins.ncols()
    }

    pub fn magnitudes(&self) -> Array2<f64> {
        self.bins.mapv(|c| c.norm())
    }

    /// Phase angles in (-π, π].
    pub fn phases(&self) -> Array2<f64> {
        self.bins.mapv(|c| c.arg())
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate as f64 / self.frame_size as f64
    }
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect()
}

/// Windowed FFT of single frames at arbitrary start positions.
pub struct FrameAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
}

impl FrameAnalyzer {
    pub fn new(frame_size: usize) -> Self {
        Self::with_window(hann_window(frame_size))
    }

    pub fn with_window(window: Vec<f64>) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(window.len());
        Self { fft, window }
    }

    pub fn frame_size(&self) -> usize {
        self.window.len()
    }

    /// Spectrum of the frame starting at `start`; samples past the end are zero.
    pub fn spectrum_at(&self, samples: &[f64], start: usize) -> Vec<Complex64> {
        let n = self.window.len();
        let mut buf: Vec<Complex64> = (0..n)
            .map(|i| {
                let x = samples.get(start + i).copied().unwrap_or(0.0);
                Complex64::new(x * self.window[i], 0.0)
            })
            .collect();
        self.fft.process(&mut buf);
        buf.truncate(n / 2 + 1);
        buf
    }
}

/// Whether a frame starting at `start` belongs to a signal of length `len`.
///
/// Frames are kept until the one that covers the final sample; that last frame
/// may run past the end and is zero-padded.
fn frame_in_bounds(start: usize, len: usize, params: StftParams) -> bool {
    start == 0 || start + params.frame_size < len + params.hop
}

/// Number of uniformly spaced frames for a signal of `len` samples.
pub fn uniform_frame_count(len: usize, params: StftParams) -> usize {
    if len < params.frame_size {
        return 0;
    }
    1 + (len - params.frame_size).div_ceil(params.hop)
}

fn frames_at(
    analyzer: &FrameAnalyzer,
    signal: &AudioSignal,
    starts: &[usize],
    params: StftParams,
    nominal_hop: usize,
) -> Spectrogram {
    let mut bins = Array2::zeros((starts.len(), params.bin_count()));
    for (u, &start) in starts.iter().enumerate() {
        let spec = analyzer.spectrum_at(&signal.samples, start);
        bins.row_mut(u)
            .iter_mut()
            .zip(spec)
            .for_each(|(dst, src)| *dst = src);
    }
    Spectrogram {
        bins,
        frame_size: params.frame_size,
        hop: nominal_hop,
        sample_rate: signal.sample_rate,
    }
}

/// Hann-windowed STFT with uniform hop. The last partial frame is zero-padded.
pub fn stft(signal: &AudioSignal, params: StftParams) -> Result<Spectrogram> {
    params.validate()?;
    let count = uniform_frame_count(signal.len(), params);
    if count == 0 {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            frame_size: params.frame_size,
        });
    }
    let starts: Vec<usize> = (0..count).map(|u| u * params.hop).collect();
    debug_assert!(starts
        .iter()
        .all(|&s| frame_in_bounds(s, signal.len(), params)));
    let analyzer = FrameAnalyzer::new(params.frame_size);
    Ok(frames_at(&analyzer, signal, &starts, params, params.hop))
}

/// Playback-speed ratio between reference and test.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct TimeScaleRatio(f64);

impl TimeScaleRatio {
    pub fn new(beta: f64) -> Result<Self> {
        if beta.is_finite() && beta > 0.0 {
            Ok(Self(beta))
        } else {
            Err(Error::InvalidParameter(format!(
                "time-scale ratio {beta} must be positive"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Length ratio `len(ref) / len(test)`.
    pub fn from_lengths(reference: usize, test: usize) -> Result<Self> {
        Self::new(reference as f64 / test as f64)
    }
}

impl fmt::Display for TimeScaleRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Returns the supplied ratio, or the ratio of truncated lengths.
pub fn estimate_beta(
    reference: &AudioSignal,
    test: &AudioSignal,
    known: Option<f64>,
) -> Result<TimeScaleRatio> {
    match known {
        Some(beta) => TimeScaleRatio::new(beta),
        None => TimeScaleRatio::from_lengths(reference.len(), test.len()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    Reference,
    Test,
}

/// Frame start positions of both signals at matching time instances.
///
/// The anchored signal is framed at a uniform hop; frame `u` of the other
/// signal starts at `round(u·β·hop)` (test anchor) or `round(u·hop/β)`
/// (reference anchor). Enumeration stops at the first frame that falls
/// outside either signal.
pub fn time_instance_starts(
    ref_len: usize,
    test_len: usize,
    anchor: Anchor,
    beta: TimeScaleRatio,
    params: StftParams,
) -> Vec<(usize, usize)> {
    let hop = params.hop as f64;
    let mut starts = Vec::new();
    for u in 0.. {
        let anchored = u * params.hop;
        let other = match anchor {
            Anchor::Test => (u as f64 * beta.value() * hop).round() as usize,
            Anchor::Reference => (u as f64 * hop / beta.value()).round() as usize,
        };
        let (r, t) = match anchor {
            Anchor::Test => (other, anchored),
            Anchor::Reference => (anchored, other),
        };
        if !frame_in_bounds(r, ref_len, params) || !frame_in_bounds(t, test_len, params) {
            break;
        }
        starts.push((r, t));
    }
    starts
}

/// Frames reference and test at identical time instances of the source material.
pub fn time_instance_frames(
    reference: &AudioSignal,
    test: &AudioSignal,
    anchor: Anchor,
    beta: TimeScaleRatio,
    params: StftParams,
) -> Result<(Spectrogram, Spectrogram)> {
    params.validate()?;
    let anchored = match anchor {
        Anchor::Reference => reference,
        Anchor::Test => test,
    };
    if anchored.len() < params.frame_size {
        return Err(Error::SignalTooShort {
            len: anchored.len(),
            frame_size: params.frame_size,
        });
    }
    let pairs = time_instance_starts(reference.len(), test.len(), anchor, beta, params);
    if pairs.is_empty() {
        return Err(Error::DegenerateFrames(
            "no frame pair lies inside both signals".into(),
        ));
    }
    let ref_starts: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let test_starts: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let scaled_hop = |factor: f64| ((params.hop as f64 * factor).round() as usize).max(1);
    let (ref_hop, test_hop) = match anchor {
        Anchor::Reference => (params.hop, scaled_hop(1.0 / beta.value())),
        Anchor::Test => (scaled_hop(beta.value()), params.hop),
    };
    let analyzer = FrameAnalyzer::new(params.frame_size);
    Ok((
        frames_at(&analyzer, reference, &ref_starts, params, ref_hop),
        frames_at(&analyzer, test, &test_starts, params, test_hop),
    ))
}

/// Linearly resamples every column of `matrix` along the frame axis.
///
/// Output row `j` sits at position `j·(U-1)/(target-1)` of the input.
pub fn interpolate_frames(matrix: &Array2<f64>, target_frames: usize) -> Result<Array2<f64>> {
    let frames = matrix.nrows();
    if frames < 2 || target_frames < 2 {
        return Err(Error::DegenerateFrames(format!(
            "cannot interpolate {frames} frames to {target_frames}"
        )));
    }
    let mut out = Array2::zeros((target_frames, matrix.ncols()));
    let last = frames - 1;
    for (j, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let pos = (j * last) as f64 / (target_frames - 1) as f64;
        let i0 = (pos.floor() as usize).min(last);
        let frac = pos - i0 as f64;
        if i0 == last || frac == 0.0 {
            row.assign(&matrix.row(i0));
        } else {
            let a = matrix.row(i0);
            let b = matrix.row(i0 + 1);
            row.iter_mut()
                .zip(a.iter().zip(b.iter()))
                .for_each(|(o, (&x, &y))| *o = x + frac * (y - x));
        }
    }
    Ok(out)
}

/// Magnitude-only interpolation of a spectrogram along time.
pub fn interpolate_spectrogram(spec: &Spectrogram, target_frames: usize) -> Result<Array2<f64>> {
    interpolate_frames(&spec.magnitudes(), target_frames)
}

/// Reference/test alignment strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMode {
    AnchorRef,
    AnchorTest,
    InterpLongest,
    InterpShortest,
    InterpRef,
    #[default]
    InterpTest,
}

impl AlignmentMode {
    pub const ALL: [AlignmentMode; 6] = [
        AlignmentMode::AnchorRef,
        AlignmentMode::AnchorTest,
        AlignmentMode::InterpLongest,
        AlignmentMode::InterpShortest,
        AlignmentMode::InterpRef,
        AlignmentMode::InterpTest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AlignmentMode::AnchorRef => "anchor_ref",
            AlignmentMode::AnchorTest => "anchor_test",
            AlignmentMode::InterpLongest => "interp_longest",
            AlignmentMode::InterpShortest => "interp_shortest",
            AlignmentMode::InterpRef => "interp_ref",
            AlignmentMode::InterpTest => "interp_test",
        }
    }

    pub fn anchor(self) -> Option<Anchor> {
        match self {
            AlignmentMode::AnchorRef => Some(Anchor::Reference),
            AlignmentMode::AnchorTest => Some(Anchor::Test),
            _ => None,
        }
    }
}

impl fmt::Display for AlignmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlignmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let normalized = s.trim().to_ascii_lowercase().replace("_to_", "_");
        AlignmentMode::ALL
            .into_iter()
            .find(|m| m.name() == normalized)
            .ok_or_else(|| Error::Parse(format!("unknown alignment mode '{s}'")))
    }
}

/// Aligns two spectrograms to a common frame count.
///
/// Interpolation modes stretch at most one of the inputs. Anchor modes expect
/// spectrograms already produced by [`time_instance_frames`] and only check
/// that their lengths agree.
pub fn align(
    ref_spec: &Spectrogram,
    test_spec: &Spectrogram,
    mode: AlignmentMode,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (ur, ut) = (ref_spec.frame_count(), test_spec.frame_count());
    let target = match mode {
        AlignmentMode::AnchorRef | AlignmentMode::AnchorTest => {
            if ur != ut {
                return Err(Error::DegenerateFrames(format!(
                    "anchored spectrograms differ in length ({ur} vs {ut})"
                )));
            }
            ur
        }
        AlignmentMode::InterpLongest => ur.max(ut),
        AlignmentMode::InterpShortest => ur.min(ut),
        AlignmentMode::InterpRef => ur,
        AlignmentMode::InterpTest => ut,
    };
    let fit = |spec: &Spectrogram| {
        if spec.frame_count() == target {
            Ok(spec.magnitudes())
        } else {
            interpolate_spectrogram(spec, target)
        }
    };
    Ok((fit(ref_spec)?, fit(test_spec)?))
}

/// Framing plus alignment from time-domain signals.
pub fn align_signals(
    reference: &AudioSignal,
    test: &AudioSignal,
    mode: AlignmentMode,
    beta: TimeScaleRatio,
    params: StftParams,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (r, t) = match mode.anchor() {
        Some(anchor) => time_instance_frames(reference, test, anchor, beta, params)?,
        None => (stft(reference, params)?, stft(test, params)?),
    };
    align(&r, &t, mode)
}
