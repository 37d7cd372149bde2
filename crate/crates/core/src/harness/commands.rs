//! The generate, train, verify and report pipelines.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig, InitStrategy, ModelSpec};
use super::dataset::{column_names, read_dataset, write_dataset, DatasetManifest};
use super::report::{
    aggregate_rows, evaluate, verdicts, write_aggregate, write_trace, Report, Summary, TrainingSummary,
    REPORT_SCHEMA_VERSION,
};
use super::HarnessError;
use crate::learning::{em_mixture, em_mixture_from, fit_ppca, fit_sbn, fit_sbn_from, Fit, RNG_ALGORITHM};
use crate::model::{GenerativeModel, Structure};

pub const DATASET_FILE: &str = "data.csv";
pub const MANIFEST_FILE: &str = "data.manifest.json";
pub const MODEL_FILE: &str = "model.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const TRAIN_REPORT_FILE: &str = "report.json";
pub const VERIFY_REPORT_FILE: &str = "verify.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const AGGREGATE_FILE: &str = "report.csv";

/// Progress lines on stderr unless quiet.
#[derive(Debug, Clone, Copy, Default)]
pub struct Progress {
    pub quiet: bool,
}

impl Progress {
    pub fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

/// The contents of `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SavedModel {
    pub schema_version: u32,
    pub run_id: String,
    pub model: ModelSpec,
}

fn tool_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::internal(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

fn synthetic(model: &GenerativeModel, seed: u64, n: usize) -> Result<Vec<Vec<f64>>, HarnessError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok(model.sample_joint(&mut rng, n)?.observations)
}

/// Observations named by the config. Synthetic data is regenerated from the
/// configured model and seed, which reproduces the bytes `generate` writes.
pub fn load_data(config: &ExperimentConfig) -> Result<Vec<Vec<f64>>, HarnessError> {
    let model = config.model.build()?;
    let data = match &config.data {
        DataSource::Synthetic { seed, n } => synthetic(&model, *seed, *n)?,
        DataSource::File { path } => read_dataset(path)?,
    };
    let family = model.noise().family;
    for (i, x) in data.iter().enumerate() {
        family
            .check_support(x)
            .map_err(|e| HarnessError::config(format!("observation {i}: {e}")))?;
    }
    Ok(data)
}

/// Samples the configured model and writes `data.csv` plus its manifest.
pub fn run_generate(config: &ExperimentConfig, out: &Path, progress: Progress) -> Result<PathBuf, HarnessError> {
    let DataSource::Synthetic { seed, n } = config.data else {
        return Err(HarnessError::config("generate needs a synthetic data source"));
    };
    let model = config.model.build()?;
    let data = synthetic(&model, seed, n)?;
    ensure_dir(out)?;
    let path = out.join(DATASET_FILE);
    let family = model.noise().family;
    write_dataset(&path, &family, &data)?;
    let manifest = DatasetManifest {
        schema_version: REPORT_SCHEMA_VERSION,
        seed,
        n,
        rng_algorithm: RNG_ALGORITHM.to_string(),
        prior_family: model.prior().family.name().to_string(),
        noise_family: family.name().to_string(),
        columns: column_names(family.data_dim()),
        ground_truth: config.model.clone(),
        tool_version: tool_version(),
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    progress.note(format!("wrote {n} observations to {}", path.display()));
    Ok(path)
}

fn train_fit(config: &ExperimentConfig, model: &GenerativeModel, data: &[Vec<f64>]) -> Result<Fit, HarnessError> {
    let t = &config.training;
    let fit = match (model.structure(), config.init) {
        (Structure::Mixture { .. }, InitStrategy::Default) => em_mixture(model, data, t)?,
        (Structure::Mixture { .. }, InitStrategy::Model) => em_mixture_from(model, data, t)?,
        (Structure::Sbn { .. }, InitStrategy::Default) => fit_sbn(model, data, t)?,
        (Structure::Sbn { .. }, InitStrategy::Model) => fit_sbn_from(model, data, t)?,
        (Structure::Ppca { latent_dim, .. }, InitStrategy::Default) => fit_ppca(data, *latent_dim, t)?.em,
        (_, init) => {
            return Err(HarnessError::config(format!(
                "training a {} model with init '{}' is not supported",
                config.model.kind_name(),
                serde_json::to_string(&init).unwrap_or_default().trim_matches('"')
            )))
        }
    };
    Ok(fit)
}

fn report(
    command: &str,
    config: &ExperimentConfig,
    model_source: String,
    model: &GenerativeModel,
    data: &[Vec<f64>],
    training: Option<TrainingSummary>,
) -> Result<Report, HarnessError> {
    let spec = ModelSpec::from_model(model)
        .ok_or_else(|| HarnessError::internal("model has no serializable form"))?;
    let evaluation = evaluate(model, data, &config.verification)?;
    let verdicts = verdicts(&evaluation, &config.verification, training.as_ref());
    Ok(Report {
        schema_version: REPORT_SCHEMA_VERSION,
        tool_version: tool_version(),
        command: command.to_string(),
        run_id: config.run_id(),
        config: config.clone(),
        model_source,
        model: spec,
        training,
        evaluation,
        verdicts,
    })
}

fn note_verdicts(progress: Progress, r: &Report) {
    for v in &r.verdicts {
        let value = v.value.map_or(String::new(), |x| format!(" {x:.3e}"));
        let reason = v.reason.as_deref().map_or(String::new(), |s| format!(" ({s})"));
        progress.note(format!("  {}: {:?}{value}{reason}", v.name, v.status));
    }
}

/// Trains, then writes `model.json`, `trace.csv`, `report.json` and
/// `summary.json`. A run that hits the iteration cap is not an error.
pub fn run_train(config: &ExperimentConfig, out: &Path, progress: Progress) -> Result<Report, HarnessError> {
    let template = config.model.build()?;
    let data = load_data(config)?;
    progress.note(format!("training {} on {} observations", config.run_id(), data.len()));
    let fit = train_fit(config, &template, &data)?;
    ensure_dir(out)?;
    let run_id = config.run_id();
    write_trace(&out.join(TRACE_FILE), &run_id, &fit.trace)?;
    let summary = TrainingSummary::from_trace(&fit.trace);
    progress.note(format!(
        "stopped after {} iterations, converged={}",
        summary.iterations, summary.converged
    ));
    let r = report("train", config, "trained".into(), &fit.model, &data, Some(summary))?;
    write_json(
        &out.join(MODEL_FILE),
        &SavedModel {
            schema_version: REPORT_SCHEMA_VERSION,
            run_id,
            model: r.model.clone(),
        },
    )?;
    write_json(&out.join(TRAIN_REPORT_FILE), &r)?;
    write_json(&out.join(SUMMARY_FILE), &Summary::from_report(&r))?;
    note_verdicts(progress, &r);
    Ok(r)
}

/// Verifies a saved model (`model_path`, else `out/model.json`), or the
/// configured model when neither exists, and writes `verify.json`.
pub fn run_verify(
    config: &ExperimentConfig,
    out: &Path,
    model_path: Option<&Path>,
    progress: Progress,
) -> Result<Report, HarnessError> {
    let default_path = out.join(MODEL_FILE);
    let path = model_path.map(Path::to_path_buf).or_else(|| default_path.exists().then_some(default_path));
    let (model, source) = match path {
        Some(path) => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| HarnessError::config(format!("cannot read model {}: {e}", path.display())))?;
            let saved: SavedModel = serde_json::from_str(&text).map_err(|e| {
                HarnessError::config(format!("{} line {} column {}: {e}", path.display(), e.line(), e.column()))
            })?;
            (saved.model.build()?, path.display().to_string())
        }
        None => (config.model.build()?, "config".to_string()),
    };
    let data = load_data(config)?;
    progress.note(format!("verifying {} model from {source}", config.run_id()));
    let r = report("verify", config, source, &model, &data, None)?;
    ensure_dir(out)?;
    write_json(&out.join(VERIFY_REPORT_FILE), &r)?;
    note_verdicts(progress, &r);
    Ok(r)
}

/// Aggregates trace files into `out/report.csv`, or stdout without `out`.
pub fn run_report(traces: &[PathBuf], out: Option<&Path>, progress: Progress) -> Result<usize, HarnessError> {
    let paths: Vec<&Path> = traces.iter().map(PathBuf::as_path).collect();
    let rows = aggregate_rows(&paths)?;
    match out {
        Some(dir) => {
            ensure_dir(dir)?;
            let path = dir.join(AGGREGATE_FILE);
            let file = std::fs::File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
            write_aggregate(file, &rows)?;
            progress.note(format!("wrote {} rows to {}", rows.len(), path.display()));
        }
        None => write_aggregate(std::io::stdout().lock(), &rows)?,
    }
    Ok(rows.len())
}
