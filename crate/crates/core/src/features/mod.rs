//! Features aimed at time-scale modification artefacts.

pub mod bandwidth;
pub mod hpss;
pub mod levels;
pub mod onset;
pub mod phase;
pub mod similarity;

use serde::{Deserialize, Serialize};

use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::spectral::{align_signals, stft, AlignmentMode, StftParams, TimeScaleRatio};

pub use bandwidth::bandwidth_test_new;
pub use hpss::{hps_percussive, hps_transient_ratio, hpss, HpssParams};
pub use levels::{dm, ser, SER_CAP_DB};
pub use onset::{
    onset_envelope, peak_delta, pick_peaks, transient_ratio, OnsetEnvelope,
};
pub use phase::{phasiness, unwrap_phase, unwrap_phase_monotonic, Phasiness};
pub use similarity::{spectral_similarity, SpectralSimilarity};

/// Analysis settings for the artefact features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsmConfig {
    /// STFT used by SER, D_M, phasiness, spectral similarity and onsets.
    pub stft: StftParams,
    /// STFT used for the stand-alone test bandwidth.
    pub bandwidth_stft: StftParams,
    pub hpss: HpssParams,
}

impl Default for TsmConfig {
    fn default() -> Self {
        Self {
            stft: StftParams::new(2048, 512),
            bandwidth_stft: StftParams::new(2048, 1024),
            hpss: HpssParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsmFeatureSet {
    pub ser: f64,
    pub dm: f64,
    pub mph_nw: f64,
    pub mph_mw: f64,
    pub sph_nw: f64,
    pub sph_mw: f64,
    pub ssmad: f64,
    pub ssmd: f64,
    pub peak_delta: f64,
    pub tr_rat: f64,
    pub hps_tr_rat: f64,
    pub bandwidth_test_new: f64,
}

/// Features plus notes about fallbacks taken while computing them.
#[derive(Debug, Clone, PartialEq)]
pub struct TsmAnalysis {
    pub features: TsmFeatureSet,
    pub diagnostics: Vec<String>,
}

/// Computes every artefact feature for a prepared, truncated pair.
pub fn tsm_features(
    reference: &AudioSignal,
    test: &AudioSignal,
    beta: TimeScaleRatio,
    mode: AlignmentMode,
    config: &TsmConfig,
) -> Result<TsmAnalysis> {
    let mut diagnostics = Vec::new();

    let (ref_mag, test_mag) = align_signals(reference, test, mode, beta, config.stft)
        .map_err(|e| e.in_feature("alignment"))?;
    let ser = levels::ser(&ref_mag, &test_mag).map_err(|e| e.in_feature("SER"))?;
    let dm = levels::dm(&ref_mag, &test_mag).map_err(|e| e.in_feature("DM"))?;

    let ref_spec = stft(reference, config.stft).map_err(|e| e.in_feature("phasiness"))?;
    let test_spec = stft(test, config.stft).map_err(|e| e.in_feature("phasiness"))?;
    let ph = phasiness(&ref_spec, &test_spec, beta).map_err(|e| e.in_feature("phasiness"))?;

    let ss = spectral_similarity(reference, test, beta, config.stft)
        .map_err(|e| e.in_feature("spectral_similarity"))?;

    let ref_env = onset_envelope(reference, config.stft).map_err(|e| e.in_feature("onsets"))?;
    let test_env = onset_envelope(test, config.stft).map_err(|e| e.in_feature("onsets"))?;
    let delta = peak_delta(&ref_env, &test_env, reference.sample_rate, reference.len());
    let tr_rat = match onset::transient_ratio_checked(&ref_env, &test_env) {
        Some(v) => v,
        None => {
            diagnostics.push("transient_ratio: no selected peaks, using neutral 1".into());
            onset::NEUTRAL_TRANSIENT_RATIO
        }
    };

    let hps_tr_rat = hps_transient_ratio(reference, test, config.hpss)
        .map_err(|e| e.in_feature("hpsep_transient_ratio"))?;

    let bw_spec = stft(test, config.bandwidth_stft)
        .map_err(|e| e.in_feature("BandwidthTestB_New"))?;
    let bandwidth_test_new =
        bandwidth_test_new(&bw_spec).map_err(|e| e.in_feature("BandwidthTestB_New"))?;

    let features = TsmFeatureSet {
        ser,
        dm,
        mph_nw: ph.mph_nw,
        mph_mw: ph.mph_mw,
        sph_nw: ph.sph_nw,
        sph_mw: ph.sph_mw,
        ssmad: ss.ssmad,
        ssmd: ss.ssmd,
        peak_delta: delta,
        tr_rat,
        hps_tr_rat,
        bandwidth_test_new,
    };
    check_finite(&features)?;
    Ok(TsmAnalysis {
        features,
        diagnostics,
    })
}

fn check_finite(f: &TsmFeatureSet) -> Result<()> {
    let named = [
        ("SER", f.ser),
        ("DM", f.dm),
        ("MPhNW", f.mph_nw),
        ("MPhMW", f.mph_mw),
        ("SPhNW", f.sph_nw),
        ("SPhMW", f.sph_mw),
        ("SSMAD", f.ssmad),
        ("SSMD", f.ssmd),
        ("peak_delta", f.peak_delta),
        ("transient_ratio", f.tr_rat),
        ("hpsep_transient_ratio", f.hps_tr_rat),
        ("BandwidthTestB_New", f.bandwidth_test_new),
    ];
    match named.iter().find(|(_, v)| !v.is_finite()) {
        Some((name, v)) => Err(Error::NonFinite(format!("{name} = {v}"))),
        None => Ok(()),
    }
}
