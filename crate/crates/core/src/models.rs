//! Model functions: the additive, noisy additive, coupled nonlinear and
//! Ishigami test functions, plus an external process evaluator.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::process::{Command, Stdio};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginals::MarginalDistribution;
use crate::nataf::NatafModel;
use crate::sampling::{format_f64, SampleMatrix, Space};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelKind {
    /// `β₀ + Σ βₖ xₖ`
    Additive {
        #[serde(default)]
        intercept: f64,
        coefficients: Vec<f64>,
    },
    /// Additive model plus `N(0, σ_ε²)` noise drawn from
    /// `(noise_seed, row index)`, so row `r` of every matrix gets the same draw.
    AdditiveNoisy {
        #[serde(default)]
        intercept: f64,
        coefficients: Vec<f64>,
        noise_std: f64,
        noise_seed: u64,
    },
    /// `x₁ + 2x₁² + x₂ + x₃ + x₂x₃`
    CoupledNonlinear,
    /// `sin x₁ + a sin² x₂ + b x₃⁴ sin x₁`
    Ishigami { a: f64, b: f64 },
    /// Batch protocol: input CSV on stdin, one response per line on stdout.
    External {
        command: String,
        #[serde(default)]
        args: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluator {
    pub kind: ModelKind,
    pub input_dim: usize,
}

impl ModelEvaluator {
    pub fn new(kind: ModelKind, input_dim: usize) -> Result<Self> {
        let fixed = match &kind {
            ModelKind::Additive { coefficients, .. }
            | ModelKind::AdditiveNoisy { coefficients, .. } => Some(coefficients.len()),
            ModelKind::CoupledNonlinear | ModelKind::Ishigami { .. } => Some(3),
            ModelKind::External { .. } => None,
        };
        if let Some(expected) = fixed {
            if expected != input_dim {
                return Err(Error::DimensionMismatch {
                    expected,
                    found: input_dim,
                });
            }
        }
        if input_dim == 0 {
            return Err(Error::InvalidParameter(
                "model needs at least one input".into(),
            ));
        }
        if let ModelKind::AdditiveNoisy { noise_std, .. } = &kind {
            if !(noise_std.is_finite() && *noise_std >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "noise_std must be finite and non-negative, got {noise_std}"
                )));
            }
        }
        if let ModelKind::External { command, .. } = &kind {
            if command.trim().is_empty() {
                return Err(Error::InvalidParameter("external command is empty".into()));
            }
        }
        Ok(Self { kind, input_dim })
    }

    pub fn additive(coefficients: Vec<f64>) -> Self {
        let m = coefficients.len();
        Self {
            kind: ModelKind::Additive {
                intercept: 0.0,
                coefficients,
            },
            input_dim: m,
        }
    }

    pub fn additive_noisy(coefficients: Vec<f64>, noise_std: f64, noise_seed: u64) -> Self {
        let m = coefficients.len();
        Self {
            kind: ModelKind::AdditiveNoisy {
                intercept: 0.0,
                coefficients,
                noise_std,
                noise_seed,
            },
            input_dim: m,
        }
    }

    pub fn coupled_nonlinear() -> Self {
        Self {
            kind: ModelKind::CoupledNonlinear,
            input_dim: 3,
        }
    }

    pub fn ishigami(a: f64, b: f64) -> Self {
        Self {
            kind: ModelKind::Ishigami { a, b },
            input_dim: 3,
        }
    }

    pub fn external(command: impl Into<String>, args: Vec<String>, input_dim: usize) -> Self {
        Self {
            kind: ModelKind::External {
                command: command.into(),
                args,
            },
            input_dim,
        }
    }

    /// Evaluates every row of an original-space sample matrix.
    pub fn evaluate(&self, x: &SampleMatrix) -> Result<Vec<f64>> {
        x.expect_space(Space::Original)?;
        if x.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: x.ncols(),
            });
        }
        let y = match &self.kind {
            ModelKind::External { command, args } => run_external(command, args, x)?,
            kind => (0..x.nrows())
                .into_par_iter()
                .map(|r| eval_row(kind, r, &x.row(r)))
                .collect(),
        };
        if let Some(r) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::ModelEvaluation {
                row: Some(r),
                message: format!("non-finite response {}", y[r]),
            });
        }
        Ok(y)
    }
}

fn linear(intercept: f64, coefficients: &[f64], x: &[f64]) -> f64 {
    coefficients
        .iter()
        .zip(x)
        .fold(intercept, |acc, (b, v)| acc + b * v)
}

fn eval_row(kind: &ModelKind, row: usize, x: &[f64]) -> f64 {
    match kind {
        ModelKind::Additive {
            intercept,
            coefficients,
        } => linear(*intercept, coefficients, x),
        ModelKind::AdditiveNoisy {
            intercept,
            coefficients,
            noise_std,
            noise_seed,
        } => {
            let mut rng = ChaCha20Rng::seed_from_u64(*noise_seed);
            rng.set_stream(row as u64);
            let e: f64 = rng.sample(StandardNormal);
            linear(*intercept, coefficients, x) + noise_std * e
        }
        ModelKind::CoupledNonlinear => x[0] + 2.0 * x[0] * x[0] + x[1] + x[2] + x[1] * x[2],
        ModelKind::Ishigami { a, b } => {
            let s1 = x[0].sin();
            let s2 = x[1].sin();
            s1 + a * s2 * s2 + b * x[2].powi(4) * s1
        }
        ModelKind::External { .. } => unreachable!("external models are evaluated in batch"),
    }
}

fn external_error(message: impl Into<String>) -> Error {
    Error::ModelEvaluation {
        row: None,
        message: message.into(),
    }
}

fn external_input(x: &SampleMatrix) -> String {
    let m = x.ncols();
    let mut out = String::with_capacity(x.nrows() * m * 24 + 8 * m);
    let header: Vec<String> = (1..=m).map(|j| format!("x{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..x.nrows() {
        for j in 0..m {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_f64(x.get(i, j)));
        }
        out.push('\n');
    }
    out
}

fn run_external(command: &str, args: &[String], x: &SampleMatrix) -> Result<Vec<f64>> {
    let mut child = Command::new(command)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| external_error(format!("cannot start `{command}`: {e}")))?;

    let input = external_input(x);
    let mut stdin = child.stdin.take().expect("stdin is piped");
    let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
    let mut stderr = child.stderr.take().expect("stderr is piped");
    let err_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });
    let mut stdout = String::new();
    child
        .stdout
        .take()
        .expect("stdout is piped")
        .read_to_string(&mut stdout)
        .map_err(|e| external_error(format!("reading output of `{command}`: {e}")))?;
    let status = child
        .wait()
        .map_err(|e| external_error(format!("waiting for `{command}`: {e}")))?;
    let write_result = writer.join().expect("stdin writer panicked");
    let stderr_text = err_reader.join().unwrap_or_default();

    if !status.success() {
        let detail = stderr_text.trim();
        return Err(external_error(format!(
            "`{command}` exited with {status}{}{detail}",
            if detail.is_empty() { "" } else { ": " }
        )));
    }
    if let Err(e) = write_result {
        return Err(external_error(format!("writing input to `{command}`: {e}")));
    }

    let lines: Vec<&str> = stdout.lines().collect();
    if lines.len() != x.nrows() {
        return Err(external_error(format!(
            "`{command}` returned {} lines for {} rows",
            lines.len(),
            x.nrows()
        )));
    }
    lines
        .iter()
        .enumerate()
        .map(|(r, line)| {
            line.trim()
                .parse::<f64>()
                .map_err(|_| Error::ModelEvaluation {
                    row: Some(r),
                    message: format!("cannot parse response {line:?}"),
                })
        })
        .collect()
}

/// Correlated and uncorrelated indices of one variable; first-order and
/// total-effect values coincide for an additive model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdditiveIndices {
    pub s_corr: f64,
    pub s_uncorr: f64,
}

/// Closed-form indices of `β₀ + β₁X₁ + β₂X₂ + β₃X₃` with normal inputs of
/// standard deviations `sigmas`, `X₁` independent and `corr(X₂, X₃) = rho`.
pub fn additive_analytic_indices(
    betas: [f64; 3],
    sigmas: [f64; 3],
    rho: f64,
) -> [AdditiveIndices; 3] {
    let a = [
        betas[0] * sigmas[0],
        betas[1] * sigmas[1],
        betas[2] * sigmas[2],
    ];
    let v1 = a[0] * a[0];
    let v2c = (a[1] + rho * a[2]).powi(2);
    let v3c = (a[2] + rho * a[1]).powi(2);
    let v2u = (1.0 - rho * rho) * a[1] * a[1];
    let v3u = (1.0 - rho * rho) * a[2] * a[2];
    let v = v1 + v2c + v3u;
    [
        AdditiveIndices {
            s_corr: v1 / v,
            s_uncorr: v1 / v,
        },
        AdditiveIndices {
            s_corr: v2c / v,
            s_uncorr: v2u / v,
        },
        AdditiveIndices {
            s_corr: v3c / v,
            s_uncorr: v3u / v,
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstTotal {
    pub first: f64,
    pub total: f64,
}

/// Closed-form indices of the Ishigami function with independent
/// `Uniform(−π, π)` inputs.
pub fn ishigami_analytic_indices(a: f64, b: f64) -> [FirstTotal; 3] {
    let pi4 = PI.powi(4);
    let pi8 = PI.powi(8);
    let v1 = 0.5 * (1.0 + b * pi4 / 5.0).powi(2);
    let v2 = a * a / 8.0;
    let v13 = 8.0 * b * b * pi8 / 225.0;
    let v = v1 + v2 + v13;
    [
        FirstTotal {
            first: v1 / v,
            total: (v1 + v13) / v,
        },
        FirstTotal {
            first: v2 / v,
            total: v2 / v,
        },
        FirstTotal {
            first: 0.0,
            total: v13 / v,
        },
    ]
}

/// Inputs of the additive and coupled test models: `X₁, X₂ ~ N(0, 1)`,
/// `X₃ ~ N(0, 2²)`, with `corr(X₂, X₃) = rho`.
pub fn additive_inputs(rho: f64) -> Result<NatafModel> {
    let marginals = vec![
        MarginalDistribution::normal(0.0, 1.0)?,
        MarginalDistribution::normal(0.0, 1.0)?,
        MarginalDistribution::normal(0.0, 2.0)?,
    ];
    let corr = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, rho, 0.0, rho, 1.0]);
    NatafModel::build(marginals, &corr, Space::Original)
}

/// Three `Uniform(−π, π)` inputs with original-space correlations given as
/// 0-based `(i, j, rho)` pairs.
pub fn ishigami_inputs(pairs: &[(usize, usize, f64)]) -> Result<NatafModel> {
    let marginals = vec![MarginalDistribution::uniform(-PI, PI)?; 3];
    let mut corr = DMatrix::identity(3, 3);
    for &(i, j, r) in pairs {
        corr[(i, j)] = r;
        corr[(j, i)] = r;
    }
    NatafModel::build(marginals, &corr, Space::Original)
}
