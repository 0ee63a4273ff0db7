//! Per-pair feature extraction and the labelled feature table.

pub mod manifest;
pub mod scaler;
pub mod table;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{load_pair, AudioSignal};
use crate::error::{Error, Result};
use crate::features::{tsm_features, TsmConfig, TsmFeatureSet};
use crate::peaq::{peaq_movs, MovSet};
use crate::spectral::{estimate_beta, AlignmentMode};

pub use manifest::{read_manifest, ManifestRow};
pub use scaler::{scale_target, unscale_target, Scaler};
pub use table::{FeatureRow, FeatureTable, FileClass, Labels, Subset, Target};

/// Version tag written to feature tables and model files.
pub const SCHEMA_VERSION: &str = "omoq-features-v1";

pub const FEATURE_COUNT: usize = 23;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "WinModDiff1B",
    "AvgModDiff1B",
    "AvgModDiff2B",
    "RmsNoiseLoudB",
    "BandwidthRefB",
    "BandwidthTestB",
    "BandwidthTestB_New",
    "TotalNMRB",
    "RelDistFramesB",
    "MFPDB",
    "ADBB",
    "EHSB",
    "SER",
    "DM",
    "MPhNW",
    "SPhNW",
    "MPhMW",
    "SPhMW",
    "SSMAD",
    "SSMD",
    "peak_delta",
    "transient_ratio",
    "hpsep_transient_ratio",
];

/// Position of a feature in [`FEATURE_NAMES`].
pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

/// The 23 features of one pair in schema order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    pub fn from_parts(movs: &MovSet, tsm: &TsmFeatureSet) -> Self {
        Self([
            movs.win_mod_diff1,
            movs.avg_mod_diff1,
            movs.avg_mod_diff2,
            movs.rms_noise_loud,
            movs.bandwidth_ref,
            movs.bandwidth_test,
            tsm.bandwidth_test_new,
            movs.total_nmr,
            movs.rel_dist_frames,
            movs.mfpd,
            movs.adb,
            movs.ehs,
            tsm.ser,
            tsm.dm,
            tsm.mph_nw,
            tsm.sph_nw,
            tsm.mph_mw,
            tsm.sph_mw,
            tsm.ssmad,
            tsm.ssmd,
            tsm.peak_delta,
            tsm.tr_rat,
            tsm.hps_tr_rat,
        ])
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.0[i])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Settings that determine the feature values of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub alignment: AlignmentMode,
    pub tsm: TsmConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub features: FeatureVector,
    pub beta: f64,
    pub diagnostics: Vec<String>,
}

/// Features of a prepared, truncated pair.
///
/// `beta` overrides the length ratio when given.
pub fn extract_prepared(
    reference: &AudioSignal,
    test: &AudioSignal,
    beta: Option<f64>,
    config: &ExtractionConfig,
) -> Result<Extraction> {
    let beta = estimate_beta(reference, test, beta)?;
    let tsm = tsm_features(reference, test, beta, config.alignment, &config.tsm)?;
    let movs = peaq_movs(reference, test, beta, config.alignment).map_err(|e| e.in_feature("PEAQ"))?;
    if let Some(v) = movs.values().iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("PEAQ MOV = {v}")).in_feature("PEAQ"));
    }
    Ok(Extraction {
        features: FeatureVector::from_parts(&movs, &tsm.features),
        beta: beta.value(),
        diagnostics: tsm.diagnostics,
    })
}

/// Loads, prepares and truncates a pair of files, then extracts features.
pub fn extract_features(
    ref_path: impl AsRef<Path>,
    test_path: impl AsRef<Path>,
    beta: Option<f64>,
    config: &ExtractionConfig,
) -> Result<Extraction> {
    let (r, t) = load_pair(ref_path, test_path)?;
    extract_prepared(&r, &t, beta, config)
}

/// Controls for extracting a whole manifest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    /// Worker threads; 0 lets the pool decide.
    pub jobs: usize,
    /// Replaces every manifest β when set.
    pub beta_override: Option<f64>,
    pub include_references: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            jobs: 0,
            beta_override: None,
            include_references: true,
        }
    }
}

/// A manifest row that could not be turned into features.
#[derive(Debug)]
pub struct RowFailure {
    /// Index into the manifest, or `None` for an appended reference row.
    pub index: Option<usize>,
    pub ref_path: String,
    pub test_path: String,
    pub error: Error,
}

#[derive(Debug)]
pub struct ExtractionReport {
    pub table: FeatureTable,
    pub failures: Vec<RowFailure>,
}

fn row_from(m: &ManifestRow, ex: Extraction, alignment: AlignmentMode) -> FeatureRow {
    FeatureRow {
        ref_id: m.ref_id.clone(),
        test_id: m.test_id.clone(),
        method: m.method.clone(),
        beta: ex.beta,
        class: m.class,
        subset: m.subset,
        alignment,
        augmented: false,
        features: ex.features,
        labels: m.labels,
    }
}

/// Reference-as-test rows with every label set to 5, one per distinct
/// training reference.
pub fn reference_rows(manifest: &[ManifestRow]) -> Vec<ManifestRow> {
    let mut seen = std::collections::HashSet::new();
    manifest
        .iter()
        .filter(|m| m.subset == Subset::Train && seen.insert(m.ref_path.clone()))
        .map(|m| ManifestRow {
            subset: Subset::Train,
            ref_path: m.ref_path.clone(),
            test_path: m.ref_path.clone(),
            ref_id: m.ref_id.clone(),
            test_id: m.ref_id.clone(),
            method: table::REFERENCE_METHOD.to_string(),
            beta: Some(1.0),
            labels: Labels::all(5.0),
            class: m.class,
        })
        .collect()
}

/// Appends augmentation rows for the given references.
pub fn include_references(
    table: &mut FeatureTable,
    references: &[ManifestRow],
    config: &ExtractionConfig,
) -> Result<()> {
    for m in references {
        let ex = extract_features(&m.ref_path, &m.ref_path, Some(1.0), config)?;
        let mut row = row_from(m, ex, config.alignment);
        row.augmented = true;
        table.rows.push(row);
    }
    Ok(())
}

/// Extracts every manifest row in parallel, keeping manifest order.
pub fn extract_manifest(
    manifest: &[ManifestRow],
    config: &ExtractionConfig,
    options: ExtractOptions,
) -> Result<ExtractionReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let refs = if options.include_references {
        reference_rows(manifest)
    } else {
        Vec::new()
    };
    let jobs: Vec<(Option<usize>, &ManifestRow)> = manifest
        .iter()
        .enumerate()
        .map(|(i, m)| (Some(i), m))
        .chain(refs.iter().map(|m| (None, m)))
        .collect();

    let results: Vec<_> = pool.install(|| {
        jobs.par_iter()
            .map(|(index, m)| {
                let beta = options.beta_override.or(m.beta);
                let out = extract_features(&m.ref_path, &m.test_path, beta, config);
                match &out {
                    Ok(ex) => {
                        for d in &ex.diagnostics {
                            log::warn!("{} vs {}: {d}", m.ref_id, m.test_id);
                        }
                        log::info!("extracted {}", m.test_id);
                    }
                    Err(e) => log::error!("{} vs {}: {e}", m.ref_id, m.test_id),
                }
                (*index, *m, out)
            })
            .collect()
    });

    let mut table = FeatureTable::default();
    let mut failures = Vec::new();
    for (index, m, out) in results {
        match out {
            Ok(ex) => {
                let mut row = row_from(m, ex, config.alignment);
                row.augmented = index.is_none();
                table.rows.push(row);
            }
            Err(error) => failures.push(RowFailure {
                index,
                ref_path: m.ref_id.clone(),
                test_path: m.test_id.clone(),
                error,
            }),
        }
    }
    Ok(ExtractionReport { table, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_ordered() {
        let set: std::collections::HashSet<_> = FEATURE_NAMES.iter().collect();
        assert_eq!(set.len(), FEATURE_COUNT);
        assert_eq!(feature_index("WinModDiff1B"), Some(0));
        assert_eq!(feature_index("SER"), Some(12));
        assert_eq!(feature_index("hpsep_transient_ratio"), Some(22));
    }

    #[test]
    fn vector_layout_follows_names() {
        let movs = MovSet {
            win_mod_diff1: 0.0,
            avg_mod_diff1: 1.0,
            avg_mod_diff2: 2.0,
            rms_noise_loud: 3.0,
            bandwidth_ref: 4.0,
            bandwidth_test: 5.0,
            total_nmr: 7.0,
            rel_dist_frames: 8.0,
            mfpd: 9.0,
            adb: 10.0,
            ehs: 11.0,
        };
        let tsm = TsmFeatureSet {
            bandwidth_test_new: 6.0,
            ser: 12.0,
            dm: 13.0,
            mph_nw: 14.0,
            sph_nw: 15.0,
            mph_mw: 16.0,
            sph_mw: 17.0,
            ssmad: 18.0,
            ssmd: 19.0,
            peak_delta: 20.0,
            tr_rat: 21.0,
            hps_tr_rat: 22.0,
        };
        let v = FeatureVector::from_parts(&movs, &tsm);
        for (i, x) in v.0.iter().enumerate() {
            assert_eq!(*x, i as f64);
        }
        assert_eq!(v.get("MPhMW"), Some(16.0));
    }
}
