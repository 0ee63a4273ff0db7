//! Trained model files: training from a feature table, prediction, and
//! multi-seed runs.

use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{self, to_matrix, Dataset, EpochRecord, ModelParams, TrainConfig, TrainHistory};
use crate::pipeline::{
    scale_target, unscale_target, ExtractionConfig, FeatureRow, FeatureTable, FeatureVector, Scaler,
    Subset, Target, FEATURE_NAMES, SCHEMA_VERSION,
};

/// Everything needed to score new pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub schema_version: String,
    pub feature_names: Vec<String>,
    pub extraction: ExtractionConfig,
    pub target: Target,
    pub include_references: bool,
    pub train_config: TrainConfig,
    pub initialization: String,
    pub scaler: Scaler,
    pub params: ModelParams,
    pub selected_epoch: usize,
    pub epochs_trained: usize,
    pub selected: EpochRecord,
}

impl Model {
    pub fn check_schema(&self) -> Result<()> {
        let names: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        if self.schema_version != SCHEMA_VERSION || names != FEATURE_NAMES {
            return Err(Error::SchemaMismatch {
                expected: SCHEMA_VERSION.into(),
                found: self.schema_version.clone(),
            });
        }
        Ok(())
    }

    /// Objective score on the [1, 5] scale.
    pub fn predict(&self, features: &FeatureVector) -> Result<f64> {
        self.check_schema()?;
        let x = self.scaler.transform(features.as_slice())?;
        Ok(unscale_target(self.params.forward_one(&x)?))
    }

    pub fn predict_batch(&self, rows: &[FeatureVector]) -> Result<Vec<f64>> {
        rows.iter().map(|f| self.predict(f)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        model.check_schema()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Table-level training options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub target: Target,
    pub include_references: bool,
    pub net: TrainConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            target: Target::Smos,
            include_references: true,
            net: TrainConfig::default(),
        }
    }
}

fn labelled<'a>(
    rows: impl Iterator<Item = (usize, &'a FeatureRow)>,
    target: Target,
) -> Result<(Vec<&'a FeatureRow>, Vec<f64>)> {
    let mut kept = Vec::new();
    let mut labels = Vec::new();
    for (i, row) in rows {
        let label = row.labels.get(target).ok_or_else(|| Error::MissingLabel {
            label: target.name().into(),
            row: i,
        })?;
        kept.push(row);
        labels.push(label);
    }
    Ok((kept, labels))
}

fn dataset(rows: &[&FeatureRow], labels: &[f64], scaler: &Scaler) -> Result<Dataset> {
    let scaled: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| scaler.transform(r.features.as_slice()))
        .collect::<Result<_>>()?;
    Ok(Dataset {
        x: to_matrix(&scaled, scaler.dim())?,
        y: labels.iter().map(|&l| scale_target(l)).collect::<Array1<f64>>(),
    })
}

/// Trains one network on the train subset, scoring the test subset.
///
/// Rows of the evaluation subset are ignored. Reference-as-test rows are
/// used only when `include_references` is set.
pub fn train_table(
    table: &FeatureTable,
    extraction: ExtractionConfig,
    settings: &TrainSettings,
) -> Result<(Model, TrainHistory)> {
    let train_rows = table
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.subset == Subset::Train && (settings.include_references || !r.augmented));
    let (train_rows, train_labels) = labelled(train_rows, settings.target)?;
    if train_rows.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let test_rows = table
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.subset == Subset::Test && !r.augmented);
    let (test_rows, test_labels) = labelled(test_rows, settings.target)?;

    let features: Vec<&[f64]> = train_rows.iter().map(|r| r.features.as_slice()).collect();
    let scaler = Scaler::fit(&features, &FEATURE_NAMES)?;
    let train_set = dataset(&train_rows, &train_labels, &scaler)?;
    let test_set = dataset(&test_rows, &test_labels, &scaler)?;
    let test = (!test_set.is_empty()).then_some(&test_set);

    let outcome = net::train(&train_set, test, &settings.net)?;
    let model = Model {
        schema_version: SCHEMA_VERSION.into(),
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        extraction,
        target: settings.target,
        include_references: settings.include_references,
        train_config: settings.net.clone(),
        initialization: net::INITIALIZATION.into(),
        scaler,
        params: outcome.params,
        selected_epoch: outcome.selected_epoch,
        epochs_trained: outcome.history.len(),
        selected: outcome.history[outcome.selected_epoch],
    };
    Ok((model, outcome.history))
}

pub fn write_history(history: &[EpochRecord], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    w.write_record([
        "epoch", "loss_train", "loss_val", "loss_test", "rho_train", "rho_val", "rho_test", "distance",
    ])
    .map_err(|e| Error::Parse(e.to_string()))?;
    for h in history {
        w.write_record([
            h.epoch.to_string(),
            h.loss_train.to_string(),
            h.loss_val.to_string(),
            opt(h.loss_test),
            h.rho_train.to_string(),
            h.rho_val.to_string(),
            opt(h.rho_test),
            h.distance.to_string(),
        ])
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<history>", e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub model_path: PathBuf,
    pub selected_epoch: usize,
    pub epochs_trained: usize,
    pub record: EpochRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub seeds: Vec<SeedResult>,
    /// Index into `seeds` of the smallest overall distance.
    pub best: usize,
}

impl TrainSummary {
    pub fn best_seed(&self) -> &SeedResult {
        &self.seeds[self.best]
    }

    pub fn write_to(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            "seed", "model", "selected_epoch", "epochs_trained", "distance", "loss_train", "loss_val",
            "loss_test", "rho_train", "rho_val", "rho_test", "best",
        ])
        .map_err(|e| Error::Parse(e.to_string()))?;
        for (i, s) in self.seeds.iter().enumerate() {
            let r = &s.record;
            w.write_record([
                s.seed.to_string(),
                s.model_path.display().to_string(),
                s.selected_epoch.to_string(),
                s.epochs_trained.to_string(),
                r.distance.to_string(),
                r.loss_train.to_string(),
                r.loss_val.to_string(),
                opt(r.loss_test),
                r.rho_train.to_string(),
                r.rho_val.to_string(),
                opt(r.rho_test),
                (i == self.best).to_string(),
            ])
            .map_err(|e| Error::Parse(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("<summary>", e))
    }
}

/// Trains one model per seed, writing `model_seed<N>.json`,
/// `history_seed<N>.csv` and `summary.csv` into `out_dir`.
pub fn train_seeds(
    table: &FeatureTable,
    extraction: ExtractionConfig,
    settings: &TrainSettings,
    seeds: RangeInclusive<u64>,
    out_dir: &Path,
) -> Result<TrainSummary> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut results = Vec::new();
    for seed in seeds {
        let mut s = settings.clone();
        s.net.seed = seed;
        let (model, history) = train_table(table, extraction, &s)?;
        let model_path = out_dir.join(format!("model_seed{seed}.json"));
        model.save(&model_path)?;
        let hist_path = out_dir.join(format!("history_seed{seed}.csv"));
        let file = std::fs::File::create(&hist_path).map_err(|e| Error::io(&hist_path, e))?;
        write_history(&history, std::io::BufWriter::new(file))?;
        log::info!(
            "seed {seed}: epoch {} of {}, D = {:.4}",
            model.selected_epoch,
            model.epochs_trained,
            model.selected.distance
        );
        results.push(SeedResult {
            seed,
            model_path,
            selected_epoch: model.selected_epoch,
            epochs_trained: model.epochs_trained,
            record: model.selected,
        });
    }
    if results.is_empty() {
        return Err(Error::InvalidParameter("empty seed range".into()));
    }
    let distances: Vec<f64> = results.iter().map(|r| r.record.distance).collect();
    let best = net::select_epoch(&distances).expect("non-empty");
    let summary = TrainSummary { seeds: results, best };
    let path = out_dir.join("summary.csv");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    summary.write_to(std::io::BufWriter::new(file))?;
    Ok(summary)
}
