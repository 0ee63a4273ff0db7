//! PEAQ Basic: FFT ear model and the eleven basic model output variables.

pub mod ear;
pub mod movs;

use crate::audio::AudioSignal;
use crate::error::Result;
use crate::spectral::{align_signals, stft, AlignmentMode, StftParams, TimeScaleRatio};

pub use ear::{CriticalBands, EarModel, ExcitationPatterns};
pub use movs::{compute_movs, MovSet, TOTAL_NMR_FLOOR_DB};

/// Framing of the ear model: 2048-sample Hann frames at 50% overlap.
pub const PEAQ_STFT: StftParams = StftParams::new(2048, 1024);

/// Runs the ear model on a whole signal without any time alignment.
pub fn ear_model_fft(signal: &AudioSignal) -> Result<ExcitationPatterns> {
    let spec = stft(signal, PEAQ_STFT)?;
    EarModel::new(signal.sample_rate, PEAQ_STFT)?.process(&spec.magnitudes())
}

/// MOVs of a prepared pair after aligning the spectra with `mode`.
pub fn peaq_movs(
    reference: &AudioSignal,
    test: &AudioSignal,
    beta: TimeScaleRatio,
    mode: AlignmentMode,
) -> Result<MovSet> {
    let model = EarModel::new(reference.sample_rate, PEAQ_STFT)?;
    let (ref_mag, test_mag) = align_signals(reference, test, mode, beta, PEAQ_STFT)?;
    let r = model.process(&ref_mag)?;
    let t = model.process(&test_mag)?;
    compute_movs(&model, &r, &t)
}
