//! Experiment configuration files.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::criterion::{DEFAULT_GRID_POINTS, DEFAULT_THRESHOLD, DEFAULT_Z_SAMPLES};
use crate::family::Family;
use crate::learning::TrainingConfig;
use crate::model::{
    make_ef_mixture, make_ppca, make_rigid_sbn, make_sbn, make_sbn_without_offsets, make_simple_fa, GenerativeModel,
    Structure,
};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// A serializable model: kind plus every parameter needed to rebuild it.
/// Matrices are given as lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    EfMixture {
        family: Family,
        weights: Vec<f64>,
        params: Vec<Vec<f64>>,
    },
    Ppca {
        weights: Vec<Vec<f64>>,
        mean: Vec<f64>,
        noise_var: f64,
        #[serde(default = "unit")]
        prior_var: f64,
    },
    SimpleFa {
        weights: Vec<Vec<f64>>,
        noise_vars: Vec<f64>,
        #[serde(default = "unit")]
        prior_var: f64,
    },
    Sbn {
        priors: Vec<f64>,
        weights: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offsets: Option<Vec<f64>>,
    },
    RigidSbn { prior: f64, v: f64 },
}

fn unit() -> f64 {
    1.0
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, HarnessError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(HarnessError::config(format!("{what} must be a non-empty rectangular list of rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ModelSpec {
    pub fn build(&self) -> Result<GenerativeModel, HarnessError> {
        let model = match self {
            ModelSpec::EfMixture { family, weights, params } => make_ef_mixture(*family, weights, params),
            ModelSpec::Ppca {
                weights,
                mean,
                noise_var,
                prior_var,
            } => make_ppca(
                &matrix_from_rows(weights, "model.weights")?,
                &DVector::from_column_slice(mean),
                *noise_var,
                *prior_var,
            ),
            ModelSpec::SimpleFa {
                weights,
                noise_vars,
                prior_var,
            } => make_simple_fa(&matrix_from_rows(weights, "model.weights")?, noise_vars, *prior_var),
            ModelSpec::Sbn {
                priors,
                weights,
                offsets,
            } => {
                let w = matrix_from_rows(weights, "model.weights")?;
                match offsets {
                    Some(o) => make_sbn(priors, &w, o),
                    None => make_sbn_without_offsets(priors, &w),
                }
            }
            ModelSpec::RigidSbn { prior, v } => make_rigid_sbn(*prior, *v),
        };
        model.map_err(|e| HarnessError::config(format!("model: {e}")))
    }

    /// The inverse of [`ModelSpec::build`]; `None` for custom models.
    pub fn from_model(model: &GenerativeModel) -> Option<ModelSpec> {
        Some(match model.structure() {
            Structure::Mixture { component, .. } => ModelSpec::EfMixture {
                family: *component,
                weights: model.mixture_weights()?,
                params: model.mixture_components()?,
            },
            Structure::Ppca { .. } => {
                let lg = model.linear_gaussian()?;
                ModelSpec::Ppca {
                    weights: rows_of(&lg.weights),
                    mean: lg.offset.iter().copied().collect(),
                    noise_var: lg.noise_vars[0],
                    prior_var: lg.prior_var,
                }
            }
            Structure::SimpleFa { .. } => {
                let lg = model.linear_gaussian()?;
                ModelSpec::SimpleFa {
                    weights: rows_of(&lg.weights),
                    noise_vars: lg.noise_vars.iter().copied().collect(),
                    prior_var: lg.prior_var,
                }
            }
            Structure::Sbn { .. } => {
                let parts = model.sbn_parts()?;
                ModelSpec::Sbn {
                    priors: parts.priors,
                    weights: rows_of(&parts.weights),
                    offsets: parts.offsets,
                }
            }
            Structure::RigidSbn => ModelSpec::RigidSbn {
                prior: model.psi()[0],
                v: model.theta()[0],
            },
            Structure::Custom(_) => return None,
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ModelSpec::EfMixture { .. } => "ef_mixture",
            ModelSpec::Ppca { .. } => "ppca",
            ModelSpec::SimpleFa { .. } => "simple_fa",
            ModelSpec::Sbn { .. } => "sbn",
            ModelSpec::RigidSbn { .. } => "rigid_sbn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic { seed: u64, n: usize },
    File { path: PathBuf },
}

/// Starting point for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// k-means++ for mixtures, small random weights for SBNs, random W for p-PCA.
    #[default]
    Default,
    /// Start EM at the configured model parameters.
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerificationConfig {
    pub criterion_threshold: f64,
    pub criterion_seed: u64,
    pub grid_points: usize,
    pub z_samples: usize,
    /// Bound on `|ELBO - entropy sum| / max(1, |ELBO|)`.
    pub gap_tol: f64,
    pub pseudo_gap_tol: f64,
    /// Stationarity premise: the gap verdicts are asserted only below this.
    pub grad_norm_tol: f64,
    pub tightness_tol: f64,
    pub closed_form_tol: f64,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        VerificationConfig {
            criterion_threshold: DEFAULT_THRESHOLD,
            criterion_seed: 0,
            grid_points: DEFAULT_GRID_POINTS,
            z_samples: DEFAULT_Z_SAMPLES,
            gap_tol: 1e-6,
            pseudo_gap_tol: 1e-6,
            grad_norm_tol: 1e-7,
            tightness_tol: 1e-9,
            closed_form_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("efgen-out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    pub model: ModelSpec,
    pub data: DataSource,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub init: InitStrategy,
    #[serde(default)]
    pub verification: VerificationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            HarnessError::config(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| HarnessError::config(format!("{}: {}", path.display(), e.message())))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(HarnessError::config(format!(
                "schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.training
            .validate()
            .map_err(|e| HarnessError::config(format!("training: {e}")))?;
        let v = &self.verification;
        let tolerances = [
            ("criterion_threshold", v.criterion_threshold),
            ("gap_tol", v.gap_tol),
            ("pseudo_gap_tol", v.pseudo_gap_tol),
            ("grad_norm_tol", v.grad_norm_tol),
            ("tightness_tol", v.tightness_tol),
            ("closed_form_tol", v.closed_form_tol),
        ];
        for (name, value) in tolerances {
            if !(value > 0.0) {
                return Err(HarnessError::config(format!("verification.{name} must be positive, got {value}")));
            }
        }
        if v.grid_points == 0 {
            return Err(HarnessError::config("verification.grid_points must be at least 1"));
        }
        self.model.build()?;
        Ok(())
    }

    /// Replaces every seed in the config.
    pub fn override_seed(&mut self, seed: u64) {
        if let DataSource::Synthetic { seed: s, .. } = &mut self.data {
            *s = seed;
        }
        self.training.seed = seed;
    }

    /// Resolves a relative dataset path against the config file's directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let DataSource::File { path } = &mut self.data {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    pub fn run_id(&self) -> String {
        self.run_id.clone().unwrap_or_else(|| self.model.kind_name().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GMM: &str = r#"{
        "schema_version": 1,
        "model": {"kind": "ef_mixture", "family": {"name": "gaussian_scalar_var", "dim": 1},
                  "weights": [0.4, 0.6], "params": [[-3.0, 1.0], [3.0, 0.5]]},
        "data": {"synthetic": {"seed": 7, "n": 500}}
    }"#;

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::from_json(GMM).unwrap();
        assert_eq!(c.data, DataSource::Synthetic { seed: 7, n: 500 });
        assert_eq!(c.training, TrainingConfig::default());
        assert_eq!(c.run_id(), "ef_mixture");
    }

    #[test]
    fn rejects_unknown_keys_with_position() {
        let text = GMM.replace("\"schema_version\": 1,", "\"schema_version\": 1, \"bogus\": 3,");
        let e = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(e.message().contains("bogus") && e.message().contains("line"), "{e}");
        let text = GMM.replace("\"n\": 500", "\"n\": 500, \"extra\": 1");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn rejects_two_sources_and_bad_version() {
        let text = GMM.replace(
            r#"{"synthetic": {"seed": 7, "n": 500}}"#,
            r#"{"synthetic": {"seed": 7, "n": 500}, "file": {"path": "x.csv"}}"#,
        );
        assert!(ExperimentConfig::from_json(&text).is_err());
        let text = GMM.replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn model_spec_round_trip() {
        let spec = ModelSpec::Sbn {
            priors: vec![0.3, 0.6],
            weights: vec![vec![1.0, -1.0], vec![0.5, 2.0], vec![0.0, 0.25]],
            offsets: Some(vec![0.1, 0.2, -0.3]),
        };
        let model = spec.build().unwrap();
        assert_eq!(ModelSpec::from_model(&model).unwrap(), spec);
        let spec = ModelSpec::Ppca {
            weights: vec![vec![1.0], vec![2.0], vec![-1.0]],
            mean: vec![0.0, 1.0, 2.0],
            noise_var: 0.5,
            prior_var: 1.0,
        };
        assert_eq!(ModelSpec::from_model(&spec.build().unwrap()).unwrap(), spec);
    }
}
