//! Reports, verdicts, trace CSV files and the aggregate table.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelSpec, VerificationConfig};
use super::dataset::format_value;
use super::HarnessError;
use crate::criterion::{check_criterion, CriterionGrid, CriterionReport};
use crate::family::BaseMeasure;
use crate::learning::{grad_norm_all_params, ppca_stationary_loglik, StopReason, TrainingTrace, TraceRecord};
use crate::model::{GenerativeModel, ModelKind};
use crate::objective::{elbo_terms, exact_posterior, log_marginal_likelihood, pseudo_elbo_terms, ObjectiveReport};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const NOT_APPLICABLE: &str = "NA";

pub const TRACE_COLUMNS: [&str; 11] = [
    "run_id",
    "iteration",
    "elbo",
    "entropy_sum",
    "gap",
    "relative_gap",
    "pseudo_elbo",
    "pseudo_entropy_sum",
    "pseudo_gap",
    "grad_norm",
    "wall_time",
];

/// Columns of the table written by `report`, one row per run.
pub const AGGREGATE_COLUMNS: [&str; 10] = [
    "run_id",
    "records",
    "final_iteration",
    "final_elbo",
    "final_entropy_sum",
    "final_gap",
    "final_relative_gap",
    "final_pseudo_gap",
    "final_grad_norm",
    "wall_time",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Pass,
    Fail,
    Skipped,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// Passes when `value < threshold`.
    Below,
    /// Passes when `value <= threshold`.
    AtMost,
}

impl Comparison {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparison::Below => value < threshold,
            Comparison::AtMost => value <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub status: VerdictStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
    /// For gap checks: whether the gradient norm was below its tolerance.
    /// A measured verdict with `premise_met = false` is informative only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub premise_met: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Verdict {
    pub fn measured(name: &str, value: f64, threshold: f64, comparison: Comparison) -> Self {
        let status = if comparison.holds(value, threshold) {
            VerdictStatus::Pass
        } else {
            VerdictStatus::Fail
        };
        Verdict {
            name: name.into(),
            status,
            value: Some(value),
            threshold: Some(threshold),
            comparison: Some(comparison),
            premise_met: None,
            reason: None,
        }
    }

    fn unmeasured(name: &str, status: VerdictStatus, reason: &str) -> Self {
        Verdict {
            name: name.into(),
            status,
            value: None,
            threshold: None,
            comparison: None,
            premise_met: None,
            reason: Some(reason.into()),
        }
    }

    fn with_premise(mut self, met: bool, grad_norm: f64, tol: f64) -> Self {
        self.premise_met = Some(met);
        if !met {
            self.reason = Some(format!(
                "stationarity premise not met: gradient norm {grad_norm:.3e} >= {tol:.1e}"
            ));
        }
        self
    }

    /// The status implied by the embedded numbers, if any.
    pub fn recomputed(&self) -> Option<VerdictStatus> {
        let (v, t, c) = (self.value?, self.threshold?, self.comparison?);
        Some(if c.holds(v, t) {
            VerdictStatus::Pass
        } else {
            VerdictStatus::Fail
        })
    }

    /// Counts as a failure of the run: measured, failing and with its premise.
    pub fn is_asserted_failure(&self) -> bool {
        self.status == VerdictStatus::Fail && self.premise_met != Some(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub converged: bool,
    pub stop_reason: StopReason,
    pub iterations: usize,
    pub records: usize,
    pub final_grad_norm: Option<f64>,
    pub rng_algorithm: String,
    pub wall_time: f64,
}

impl TrainingSummary {
    pub fn from_trace(trace: &TrainingTrace) -> Self {
        TrainingSummary {
            converged: trace.converged,
            stop_reason: trace.stop_reason,
            iterations: trace.iterations,
            records: trace.records.len(),
            final_grad_norm: trace.final_grad_norm(),
            rng_algorithm: trace.rng_algorithm.clone(),
            wall_time: trace.last().map_or(0.0, |r| r.wall_time),
        }
    }
}

/// Numbers measured on one model and dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n: usize,
    pub objective: ObjectiveReport,
    pub pseudo_objective: ObjectiveReport,
    pub grad_norm: f64,
    pub log_marginal_likelihood: f64,
    /// Whether prior and noise both have constant base measures, which the
    /// standard entropy-sum identity needs.
    pub constant_base_measures: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ppca_closed_form: Option<f64>,
    pub criterion: CriterionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub run_id: String,
    pub config: ExperimentConfig,
    pub model_source: String,
    pub model: ModelSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingSummary>,
    pub evaluation: Evaluation,
    pub verdicts: Vec<Verdict>,
}

impl Report {
    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }
}

/// Short machine-readable summary written next to the full report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub run_id: String,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    pub elbo: f64,
    pub relative_gap: f64,
    pub pseudo_relative_gap: f64,
    pub grad_norm: f64,
    pub criterion_passes: bool,
    pub verdicts: BTreeMap<String, VerdictStatus>,
}

impl Summary {
    pub fn from_report(r: &Report) -> Self {
        Summary {
            run_id: r.run_id.clone(),
            command: r.command.clone(),
            converged: r.training.as_ref().map(|t| t.converged),
            iterations: r.training.as_ref().map(|t| t.iterations),
            elbo: r.evaluation.objective.elbo,
            relative_gap: r.evaluation.objective.relative_gap,
            pseudo_relative_gap: r.evaluation.pseudo_objective.relative_gap,
            grad_norm: r.evaluation.grad_norm,
            criterion_passes: r.evaluation.criterion.passes,
            verdicts: r.verdicts.iter().map(|v| (v.name.clone(), v.status)).collect(),
        }
    }
}

/// Measures the objective, gradient, likelihood and criterion at the exact
/// posterior of `model`.
pub fn evaluate(model: &GenerativeModel, data: &[Vec<f64>], cfg: &VerificationConfig) -> Result<Evaluation, HarnessError> {
    let q = exact_posterior(model, data)?;
    let objective = elbo_terms(model, data, &q)?;
    let pseudo_objective = pseudo_elbo_terms(model, data, &q)?;
    let grad_norm = grad_norm_all_params(model, data, &q)?;
    let log_marginal_likelihood = log_marginal_likelihood(model, data)?;
    let ppca_closed_form = match model.kind() {
        ModelKind::Ppca => {
            let lg = model.linear_gaussian().expect("p-PCA model");
            Some(ppca_stationary_loglik(&lg.weights, lg.noise_vars[0])?)
        }
        _ => None,
    };
    let grid = CriterionGrid::with_sizes(model, cfg.criterion_seed, cfg.grid_points, cfg.z_samples);
    let criterion = check_criterion(model, &grid.psi, &grid.theta, &grid.z, cfg.criterion_threshold)?;
    Ok(Evaluation {
        n: data.len(),
        objective,
        pseudo_objective,
        grad_norm,
        log_marginal_likelihood,
        constant_base_measures: [model.prior().family, model.noise().family]
            .iter()
            .all(|f| f.base_measure() == BaseMeasure::UnitConstant),
        ppca_closed_form,
        criterion,
    })
}

pub const CRITERION: &str = "parameterization_criterion";
pub const ENTROPY_GAP: &str = "entropy_sum_gap";
pub const PSEUDO_GAP: &str = "pseudo_entropy_sum_gap";
pub const TIGHTNESS: &str = "elbo_tightness";
pub const PPCA_CLOSED_FORM: &str = "ppca_closed_form";

/// Verdicts from an evaluation. The gap checks require the criterion, and
/// when a training trace is given, convergence.
pub fn verdicts(e: &Evaluation, cfg: &VerificationConfig, training: Option<&TrainingSummary>) -> Vec<Verdict> {
    let c = &e.criterion;
    let mut out = vec![Verdict::measured(
        CRITERION,
        c.prior_residual.max(c.noise_residual),
        c.threshold,
        Comparison::Below,
    )];
    let premise = e.grad_norm < cfg.grad_norm_tol;
    let not_converged = training.is_some_and(|t| !t.converged);
    let gated = |name: &str, value: f64, tol: f64, needs_criterion: bool| {
        if not_converged {
            Verdict::unmeasured(name, VerdictStatus::NotApplicable, "training did not converge")
        } else if needs_criterion && !c.passes {
            Verdict::unmeasured(name, VerdictStatus::Skipped, "criterion not satisfied")
        } else {
            Verdict::measured(name, value, tol, Comparison::AtMost).with_premise(premise, e.grad_norm, cfg.grad_norm_tol)
        }
    };
    out.push(if e.constant_base_measures {
        gated(ENTROPY_GAP, e.objective.relative_gap, cfg.gap_tol, true)
    } else {
        Verdict::unmeasured(ENTROPY_GAP, VerdictStatus::NotApplicable, "base measure is not constant")
    });
    out.push(gated(PSEUDO_GAP, e.pseudo_objective.relative_gap, cfg.pseudo_gap_tol, true));
    out.push(Verdict::measured(
        TIGHTNESS,
        (e.objective.elbo - e.log_marginal_likelihood).abs(),
        cfg.tightness_tol,
        Comparison::AtMost,
    ));
    out.push(match e.ppca_closed_form {
        Some(closed) => gated(
            PPCA_CLOSED_FORM,
            (e.log_marginal_likelihood - closed).abs(),
            cfg.closed_form_tol,
            false,
        ),
        None => Verdict::unmeasured(PPCA_CLOSED_FORM, VerdictStatus::NotApplicable, "model is not p-PCA"),
    });
    out
}

fn optional(value: Option<f64>) -> String {
    value.map_or_else(|| NOT_APPLICABLE.to_string(), |v| format_value(v, false))
}

pub fn write_trace(path: &Path, run_id: &str, trace: &TrainingTrace) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::io(path, e))?;
    w.write_record(TRACE_COLUMNS).map_err(|e| HarnessError::io(path, e))?;
    for r in &trace.records {
        let f = |v: f64| format_value(v, false);
        w.write_record([
            run_id.to_string(),
            r.iteration.to_string(),
            f(r.elbo),
            f(r.entropy_sum),
            f(r.gap),
            f(r.relative_gap),
            f(r.pseudo_elbo),
            f(r.pseudo_entropy_sum),
            f(r.pseudo_gap),
            optional(r.grad_norm),
            f(r.wall_time),
        ])
        .map_err(|e| HarnessError::io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// A trace file: its run id (if it has rows) and records.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub run_id: Option<String>,
    pub records: Vec<TraceRecord>,
}

pub fn read_trace(path: &Path) -> Result<TraceFile, HarnessError> {
    let schema = |msg: String| HarnessError::config(format!("{}: {msg}", path.display()));
    let file = File::open(path).map_err(|e| schema(format!("cannot open trace: {e}")))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers().map_err(|e| schema(e.to_string()))?.clone();
    if header.iter().ne(TRACE_COLUMNS) {
        return Err(schema(format!("trace header {:?} does not match {:?}", header.iter().collect::<Vec<_>>(), TRACE_COLUMNS)));
    }
    let mut run_id: Option<String> = None;
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| schema(e.to_string()))?;
        let number = |k: usize| -> Result<f64, HarnessError> {
            row[k]
                .parse::<f64>()
                .map_err(|_| schema(format!("row {}: column {} is not a number", i + 1, TRACE_COLUMNS[k])))
        };
        match &run_id {
            Some(id) if id != &row[0] => {
                return Err(schema(format!("row {}: run id '{}' differs from '{id}'", i + 1, &row[0])))
            }
            None => run_id = Some(row[0].to_string()),
            _ => {}
        }
        records.push(TraceRecord {
            iteration: row[1]
                .parse()
                .map_err(|_| schema(format!("row {}: iteration is not an integer", i + 1)))?,
            elbo: number(2)?,
            entropy_sum: number(3)?,
            gap: number(4)?,
            relative_gap: number(5)?,
            pseudo_elbo: number(6)?,
            pseudo_entropy_sum: number(7)?,
            pseudo_gap: number(8)?,
            grad_norm: if &row[9] == NOT_APPLICABLE { None } else { Some(number(9)?) },
            wall_time: number(10)?,
        });
    }
    Ok(TraceFile { run_id, records })
}

/// One aggregate row per trace file. An empty trace is keyed by its path
/// and gets not-applicable markers; duplicate run ids are an error.
pub fn aggregate_rows(paths: &[&Path]) -> Result<Vec<Vec<String>>, HarnessError> {
    if paths.is_empty() {
        return Err(HarnessError::config("report needs at least one trace file"));
    }
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for path in paths {
        let trace = read_trace(path)?;
        let id = trace.run_id.clone().unwrap_or_else(|| path.display().to_string());
        if !seen.insert(id.clone()) {
            return Err(HarnessError::config(format!("duplicate run id '{id}' in {}", path.display())));
        }
        let row = match trace.records.last() {
            Some(last) => {
                let grad = trace.records.iter().rev().find_map(|r| r.grad_norm);
                let f = |v: f64| format_value(v, false);
                vec![
                    id,
                    trace.records.len().to_string(),
                    last.iteration.to_string(),
                    f(last.elbo),
                    f(last.entropy_sum),
                    f(last.gap),
                    f(last.relative_gap),
                    f(last.pseudo_gap),
                    optional(grad),
                    f(last.wall_time),
                ]
            }
            None => {
                let mut row = vec![id, "0".to_string()];
                row.resize(AGGREGATE_COLUMNS.len(), NOT_APPLICABLE.to_string());
                row
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_aggregate(out: impl Write, rows: &[Vec<String>]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| HarnessError::internal(format!("writing aggregate table: {e}"));
    w.write_record(AGGREGATE_COLUMNS).map_err(err)?;
    for row in rows {
        w.write_record(row).map_err(err)?;
    }
    w.flush().map_err(|e| HarnessError::internal(format!("writing aggregate table: {e}")))
}
