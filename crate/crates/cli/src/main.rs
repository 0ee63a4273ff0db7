mod args;

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use serde::Deserialize;

use args::{Cli, Command, EvaluateArgs, ExtractionFlags, FeaturesArgs, PredictArgs, TrainArgs};
use omoq_core::model::{train_seeds, Model, TrainSettings};
use omoq_core::pipeline::{
    extract_features, extract_manifest, read_manifest, ExtractOptions, ExtractionConfig, FeatureTable,
};
use omoq_core::report::{self, ScoredRow};
use omoq_core::spectral::StftParams;
use omoq_core::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(Error),
    RowsFailed(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Core(e) if e.is_numeric() => EXIT_NUMERIC,
            Failure::Core(_) | Failure::RowsFailed(_) => EXIT_DATA,
        }
    }
}

/// Settings file layout; every section is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Settings {
    extraction: ExtractionConfig,
    train: TrainSettings,
    jobs: Option<usize>,
}

fn load_settings(path: Option<&Path>) -> Result<Settings, Failure> {
    let Some(path) = path else {
        return Ok(Settings::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn apply_extraction(flags: &ExtractionFlags, config: &mut ExtractionConfig) -> Result<(), Failure> {
    if let Some(a) = flags.alignment {
        config.alignment = a;
    }
    let stft = StftParams::new(
        flags.frame_size.unwrap_or(config.tsm.stft.frame_size),
        flags.hop.unwrap_or(config.tsm.stft.hop),
    );
    stft.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    config.tsm.stft = stft;
    Ok(())
}

fn check_beta(beta: Option<f64>) -> Result<(), Failure> {
    match beta {
        Some(b) if !(b > 0.0 && b.is_finite()) => Err(Failure::Usage(format!("--beta {b} must be positive"))),
        _ => Ok(()),
    }
}

fn report_failures(failures: &[omoq_core::pipeline::RowFailure], skip: bool) -> Result<(), Failure> {
    for f in failures {
        let row = f.index.map(|i| format!("row {}", i + 1)).unwrap_or_else(|| "reference row".into());
        let level = if skip { "warning" } else { "error" };
        eprintln!("{level}: {row} ({} vs {}): {}", f.ref_path, f.test_path, f.error);
    }
    if !failures.is_empty() && !skip {
        if let Some(numeric) = failures.iter().find(|f| f.error.is_numeric()) {
            return Err(Failure::Core(Error::NonFinite(numeric.error.to_string())));
        }
        return Err(Failure::RowsFailed(failures.len()));
    }
    Ok(())
}

fn cmd_features(a: FeaturesArgs, settings: Settings) -> Result<(), Failure> {
    let mut config = settings.extraction;
    apply_extraction(&a.extraction, &mut config)?;
    check_beta(a.run.beta)?;
    let manifest = read_manifest(&a.manifest)?;
    let options = ExtractOptions {
        jobs: a.run.jobs.or(settings.jobs).unwrap_or(0),
        beta_override: a.run.beta,
        include_references: a.refs.value().unwrap_or(settings.train.include_references),
    };
    let report = extract_manifest(&manifest, &config, options)?;
    report_failures(&report.failures, a.run.skip_errors)?;
    report.table.write(&a.out)?;
    println!(
        "wrote {} rows to {} ({} failed)",
        report.table.len(),
        a.out.display(),
        report.failures.len()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs, settings: Settings) -> Result<(), Failure> {
    let mut train = settings.train;
    if let Some(t) = a.target {
        train.target = t;
    }
    if let Some(v) = a.refs.value() {
        train.include_references = v;
    }
    if let Some(e) = a.epochs {
        train.net.epochs = e;
    }
    if let Some(s) = a.selection {
        train.net.selection = s;
    }
    train.net.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let table = FeatureTable::read(&a.table)?;
    let extraction = table
        .rows
        .first()
        .map(|r| ExtractionConfig {
            alignment: r.alignment,
            ..settings.extraction
        })
        .unwrap_or(settings.extraction);
    let summary = train_seeds(&table, extraction, &train, a.seeds, &a.out)?;
    for s in &summary.seeds {
        println!(
            "seed {:>3}  epoch {:>4}/{:<4}  D {:.4}  rmse_te {}  pcc_te {}",
            s.seed,
            s.selected_epoch,
            s.epochs_trained,
            s.record.distance,
            s.record.loss_test.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
            s.record.rho_test.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
        );
    }
    let best = summary.best_seed();
    println!("best seed {} ({})", best.seed, best.model_path.display());
    Ok(())
}

fn score_manifest(
    model: &Model,
    manifest_path: &Path,
    run: &args::RunFlags,
    jobs: Option<usize>,
) -> Result<Vec<ScoredRow>, Failure> {
    let manifest = read_manifest(manifest_path)?;
    let options = ExtractOptions {
        jobs: run.jobs.or(jobs).unwrap_or(0),
        beta_override: run.beta,
        include_references: false,
    };
    let report = extract_manifest(&manifest, &model.extraction, options)?;
    report_failures(&report.failures, run.skip_errors)?;
    report
        .table
        .rows
        .iter()
        .map(|r| {
            Ok(ScoredRow {
                ref_id: r.ref_id.clone(),
                test_id: r.test_id.clone(),
                method: r.method.clone(),
                beta: r.beta,
                class: r.class,
                omos: model.predict(&r.features)?,
            })
        })
        .collect()
}

fn cmd_predict(a: PredictArgs, settings: Settings) -> Result<(), Failure> {
    check_beta(a.run.beta)?;
    let model = Model::load(&a.model)?;
    match (&a.reference, &a.test, &a.manifest) {
        (Some(r), Some(t), None) => {
            let ex = extract_features(r, t, a.run.beta, &model.extraction)?;
            for d in &ex.diagnostics {
                log::warn!("{d}");
            }
            println!("{:.3}", model.predict(&ex.features)?);
            Ok(())
        }
        (None, None, Some(m)) => {
            let rows = score_manifest(&model, m, &a.run, settings.jobs)?;
            let mut out = std::io::stdout().lock();
            for r in &rows {
                let _ = writeln!(out, "{}\t{:.3}", r.test_id, r.omos);
            }
            if let Some(path) = &a.out {
                let file = std::fs::File::create(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                report::write_results(&rows, std::io::BufWriter::new(file))?;
            }
            Ok(())
        }
        _ => Err(Failure::Usage("give either --ref and --test, or --manifest".into())),
    }
}

fn cmd_evaluate(a: EvaluateArgs, settings: Settings) -> Result<(), Failure> {
    check_beta(a.run.beta)?;
    let rows = match (&a.results, &a.manifest, &a.model) {
        (Some(path), None, None) => {
            let file = std::fs::File::open(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            report::read_results(file)?
        }
        (None, Some(m), Some(model)) => {
            let model = Model::load(model)?;
            score_manifest(&model, m, &a.run, settings.jobs)?
        }
        _ => return Err(Failure::Usage("give either --results, or --manifest with --model".into())),
    };
    let rep = report::evaluate(&rows);
    rep.write_all(&a.out)?;
    print!("{}", rep.render_table());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let settings = load_settings(cli.config.as_deref())?;
    match cli.command {
        Command::Features(a) => cmd_features(a, settings),
        Command::Train(a) => cmd_train(a, settings),
        Command::Predict(a) => cmd_predict(a, settings),
        Command::Evaluate(a) => cmd_evaluate(a, settings),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.exit_code() == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_USAGE)
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("usage error: {msg}"),
                Failure::Core(e) => eprintln!("error: {e}"),
                Failure::RowsFailed(n) => eprintln!("error: {n} row(s) failed; rerun with --skip-errors to keep going"),
            }
            ExitCode::from(f.exit_code())
        }
    }
}
