//! Problem configuration: one JSON document describing inputs, correlation,
//! model, analysis settings and output.

use std::collections::HashSet;
use std::path::PathBuf;

use corrsens::estimators::{Method, MIN_MATRIX_COMBINATION_N};
use corrsens::marginals::MarginalDistribution;
use corrsens::models::{ModelEvaluator, ModelKind};
use corrsens::nataf::NatafModel;
use corrsens::sampling::Space;
use corrsens::surrogate::BasisSpec;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub variables: Vec<VariableConfig>,
    #[serde(default)]
    pub correlation: Option<CorrelationConfig>,
    pub model: ModelKind,
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableConfig {
    pub name: String,
    pub marginal: MarginalDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationConfig {
    pub matrix: Vec<Vec<f64>>,
    #[serde(default = "original_space")]
    pub space: Space,
}

fn original_space() -> Space {
    Space::Original
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub n_subsets: Option<usize>,
    #[serde(default)]
    pub basis: BasisSpec,
}

fn default_methods() -> Vec<Method> {
    vec![Method::MatrixCombination, Method::SubsetAveraging]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("corrsens-output")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: ProblemConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid configuration: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let m = self.dim();
        if m == 0 {
            return Err(CliError::config(
                "variables",
                "at least one variable is required",
            ));
        }
        let mut seen = HashSet::new();
        for (k, v) in self.variables.iter().enumerate() {
            let field = format!("variables[{k}].name");
            if v.name.trim().is_empty() {
                return Err(CliError::config(&field, "must not be empty"));
            }
            if v.name.contains([',', '/', '\\', '"', '\n']) {
                return Err(CliError::config(
                    &field,
                    format!("{:?} contains a reserved character", v.name),
                ));
            }
            if !seen.insert(v.name.as_str()) {
                return Err(CliError::config(
                    &field,
                    format!("duplicate name {:?}", v.name),
                ));
            }
        }
        if let Some(c) = &self.correlation {
            validate_matrix(&c.matrix, m)?;
        }
        self.validate_model()?;
        self.validate_analysis()?;
        if self.output.formats.is_empty() {
            return Err(CliError::config(
                "output.formats",
                "at least one format is required",
            ));
        }
        Ok(())
    }

    fn validate_model(&self) -> Result<(), CliError> {
        let m = self.dim();
        match &self.model {
            ModelKind::Additive { coefficients, .. }
            | ModelKind::AdditiveNoisy { coefficients, .. } => {
                if coefficients.len() != m {
                    return Err(CliError::config(
                        "model.coefficients",
                        format!("expected {m} coefficients, found {}", coefficients.len()),
                    ));
                }
                if let Some(k) = coefficients.iter().position(|c| !c.is_finite()) {
                    return Err(CliError::config(
                        &format!("model.coefficients[{k}]"),
                        "must be finite",
                    ));
                }
                if let ModelKind::AdditiveNoisy { noise_std, .. } = &self.model {
                    if !(noise_std.is_finite() && *noise_std >= 0.0) {
                        return Err(CliError::config(
                            "model.noise_std",
                            "must be finite and non-negative",
                        ));
                    }
                }
            }
            ModelKind::CoupledNonlinear | ModelKind::Ishigami { .. } => {
                if m != 3 {
                    return Err(CliError::config(
                        "model.type",
                        format!("this model takes 3 inputs, but {m} variables are configured"),
                    ));
                }
            }
            ModelKind::External { command, .. } => {
                if command.trim().is_empty() {
                    return Err(CliError::config("model.command", "must not be empty"));
                }
            }
        }
        Ok(())
    }

    fn validate_analysis(&self) -> Result<(), CliError> {
        let a = &self.analysis;
        if a.methods.is_empty() {
            return Err(CliError::config(
                "analysis.methods",
                "at least one method is required",
            ));
        }
        if a.n < 2 {
            return Err(CliError::config("analysis.n", "must be at least 2"));
        }
        if a.methods.contains(&Method::MatrixCombination) && a.n < MIN_MATRIX_COMBINATION_N {
            return Err(CliError::config(
                "analysis.n",
                format!(
                    "matrix_combination needs n >= {MIN_MATRIX_COMBINATION_N}, got {}",
                    a.n
                ),
            ));
        }
        if a.methods.contains(&Method::Regression) {
            let p = a.basis.term_count(self.dim());
            if a.n <= p {
                return Err(CliError::config(
                    "analysis.n",
                    format!(
                        "regression basis has {p} terms, so n must exceed {p}, got {}",
                        a.n
                    ),
                ));
            }
        }
        if let Some(k) = a.n_subsets {
            if k < 2 || a.n < 2 * k {
                return Err(CliError::config(
                    "analysis.n_subsets",
                    format!("must be at least 2 and at most n/2, got {k}"),
                ));
            }
        }
        Ok(())
    }

    pub fn correlation_matrix(&self) -> (DMatrix<f64>, Space) {
        let m = self.dim();
        match &self.correlation {
            Some(c) => (DMatrix::from_fn(m, m, |i, j| c.matrix[i][j]), c.space),
            None => (DMatrix::identity(m, m), Space::Original),
        }
    }

    pub fn nataf(&self) -> Result<NatafModel, CliError> {
        let (corr, space) = self.correlation_matrix();
        let names = self.variables.iter().map(|v| v.name.clone()).collect();
        let marginals = self.variables.iter().map(|v| v.marginal).collect();
        NatafModel::build_named(names, marginals, &corr, space).map_err(CliError::from)
    }

    pub fn model(&self) -> Result<ModelEvaluator, CliError> {
        ModelEvaluator::new(self.model.clone(), self.dim()).map_err(CliError::from)
    }
}

fn validate_matrix(matrix: &[Vec<f64>], m: usize) -> Result<(), CliError> {
    if matrix.len() != m {
        return Err(CliError::config(
            "correlation.matrix",
            format!("expected {m} rows, found {}", matrix.len()),
        ));
    }
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != m {
            return Err(CliError::config(
                &format!("correlation.matrix[{i}]"),
                format!("expected {m} entries, found {}", row.len()),
            ));
        }
    }
    for i in 0..m {
        for j in 0..m {
            let v = matrix[i][j];
            let field = format!("correlation[{i}][{j}]");
            if !v.is_finite() {
                return Err(CliError::config(&field, "must be finite"));
            }
            if i == j {
                if v != 1.0 {
                    return Err(CliError::config(
                        &field,
                        format!("diagonal entries must be 1, got {v}"),
                    ));
                }
            } else if !(v.abs() < 1.0) {
                return Err(CliError::config(
                    &field,
                    format!("must lie in (-1, 1), got {v}"),
                ));
            } else if v != matrix[j][i] {
                return Err(CliError::config(
                    &field,
                    format!("matrix is not symmetric ({v} vs {})", matrix[j][i]),
                ));
            }
        }
    }
    Ok(())
}
