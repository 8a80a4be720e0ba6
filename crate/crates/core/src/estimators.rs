//! Monte Carlo estimators: the matrix-combination first-order and total
//! effect formulas, subset averaging, and the full analysis pipeline.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomp::{c_corr_standard, c_uncorr_standard};
use crate::error::{Error, Result};
use crate::linalg::{dot, mean, variance};
use crate::models::ModelEvaluator;
use crate::nataf::NatafModel;
use crate::sampling::{format_f64, generate_ab, RngSpec, SampleMatrix};
use crate::surrogate::{
    coefficient_indices, fit, regression_indices, BasisSpec, CoefficientIndices, RegressionIndices,
};

/// Smallest sample size accepted for the matrix-combination estimators.
pub const MIN_MATRIX_COMBINATION_N: usize = 100;

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "estimators need at least 2 samples, got {}",
            a.len()
        )));
    }
    Ok(())
}

/// `(y_Aᵀy_C − n ȳ_A²) / (y_Aᵀy_A − n ȳ_A²)`
fn centered_ratio(y_ref: &[f64], y_c: &[f64], what: &str) -> Result<f64> {
    check_pair(y_ref, y_c)?;
    let n = y_ref.len() as f64;
    let m = mean(y_ref);
    let shift = n * m * m;
    let den = dot(y_ref, y_ref) - shift;
    if !(den > 0.0) {
        return Err(Error::ZeroVariance(what.into()));
    }
    Ok((dot(y_ref, y_c) - shift) / den)
}

/// First-order index from responses on `A` and on the recombined matrix.
pub fn sobol_first_order(y_a: &[f64], y_c: &[f64]) -> Result<f64> {
    centered_ratio(y_a, y_c, "responses of matrix A")
}

/// Total-effect index from responses on `B` and on the recombined matrix.
pub fn sobol_total_effect(y_b: &[f64], y_c: &[f64]) -> Result<f64> {
    Ok(1.0 - centered_ratio(y_b, y_c, "responses of matrix B")?)
}

/// `round(√n)` clamped to `[10, n/20]`, and never below 2.
pub fn default_n_subsets(n: usize) -> usize {
    let k = (n as f64).sqrt().round() as usize;
    k.max(10).min(n / 20).max(2)
}

/// Samples sorted by one input and cut into contiguous bins of equal size
/// (sizes differ by at most one).
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetAverages {
    /// Row indices in ascending order of the input.
    pub order: Vec<usize>,
    /// Bin `k` covers `order[bounds[k]..bounds[k + 1]]`.
    pub bounds: Vec<usize>,
    pub means: Vec<f64>,
}

impl SubsetAverages {
    /// Bin mean for every row, in original row order.
    pub fn mean_per_row(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.order.len()];
        for (k, w) in self.bounds.windows(2).enumerate() {
            for &r in &self.order[w[0]..w[1]] {
                out[r] = self.means[k];
            }
        }
        out
    }
}

pub fn subset_averages(x: &[f64], y: &[f64], n_subsets: usize) -> Result<SubsetAverages> {
    check_pair(x, y)?;
    let n = x.len();
    if n_subsets < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 subsets, got {n_subsets}"
        )));
    }
    if n < 2 * n_subsets {
        return Err(Error::InvalidParameter(format!(
            "{n_subsets} subsets need at least {} samples, got {n}",
            2 * n_subsets
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
    let bounds: Vec<usize> = (0..=n_subsets).map(|k| k * n / n_subsets).collect();
    let means = bounds
        .windows(2)
        .map(|w| {
            let ys: Vec<f64> = order[w[0]..w[1]].iter().map(|&r| y[r]).collect();
            mean(&ys)
        })
        .collect();
    Ok(SubsetAverages {
        order,
        bounds,
        means,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetEstimate {
    pub value: f64,
    /// Set when `y` is constant; `value` is then 0.
    pub zero_variance: bool,
}

/// First-order index as the variance of bin means over the variance of `y`.
pub fn subset_first_order(x: &[f64], y: &[f64], n_subsets: usize) -> Result<SubsetEstimate> {
    let bins = subset_averages(x, y, n_subsets)?;
    let vy = variance(y);
    if !(vy > 0.0) {
        return Ok(SubsetEstimate {
            value: 0.0,
            zero_variance: true,
        });
    }
    Ok(SubsetEstimate {
        value: variance(&bins.means) / vy,
        zero_variance: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MatrixCombination,
    SubsetAveraging,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub methods: Vec<Method>,
    /// Defaults to [`default_n_subsets`].
    pub n_subsets: Option<usize>,
    pub basis: BasisSpec,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            methods: vec![Method::MatrixCombination, Method::SubsetAveraging],
            n_subsets: None,
            basis: BasisSpec::default(),
        }
    }
}

impl AnalysisOptions {
    pub fn uses(&self, method: Method) -> bool {
        self.methods.contains(&method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableIndices {
    pub name: String,
    pub s_first_corr: Option<f64>,
    pub s_total_corr: Option<f64>,
    pub s_first_uncorr: Option<f64>,
    pub s_total_uncorr: Option<f64>,
    pub s_subset: Option<f64>,
    pub regression: Option<RegressionIndices>,
    pub coefficient: Option<CoefficientIndices>,
    /// Matrix-combination quantities outside `[−5/√n, 1 + 5/√n]`.
    pub noise_flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub n: usize,
    pub seed: u64,
    pub stream: String,
    pub methods: Vec<Method>,
    /// Variance of the responses on matrix `A`.
    pub total_variance: f64,
    pub model_evaluations: usize,
    pub n_subsets: Option<usize>,
    pub subset_zero_variance: bool,
    pub basis: Option<BasisSpec>,
    pub r_squared_full: Option<f64>,
    pub unexplained: Option<f64>,
    pub variables: Vec<VariableIndices>,
}

fn opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

impl SensitivityReport {
    pub fn variable(&self, name: &str) -> Option<&VariableIndices> {
        self.variables.iter().find(|v| v.name == name)
    }

    /// One row per variable. Regression columns are appended when the
    /// regression method ran.
    pub fn to_csv(&self) -> String {
        let regression = self.methods.contains(&Method::Regression);
        let mut out =
            String::from("name,S_first_corr,S_total_corr,S_first_uncorr,S_total_uncorr,S_subset");
        if regression {
            out.push_str(
                ",S_R_first_corr,S_R_total_corr,S_R_first_uncorr,S_R_total_uncorr,S_beta_first,S_beta_total",
            );
        }
        out.push('\n');
        for v in &self.variables {
            write!(
                out,
                "{},{},{},{},{},{}",
                v.name,
                opt(v.s_first_corr),
                opt(v.s_total_corr),
                opt(v.s_first_uncorr),
                opt(v.s_total_uncorr),
                opt(v.s_subset)
            )
            .unwrap();
            if regression {
                let r = v.regression;
                let c = v.coefficient;
                write!(
                    out,
                    ",{},{},{},{},{},{}",
                    opt(r.map(|r| r.s_first_corr)),
                    opt(r.map(|r| r.s_total_corr)),
                    opt(r.map(|r| r.s_first_uncorr)),
                    opt(r.map(|r| r.s_total_uncorr)),
                    opt(c.map(|c| c.s_first)),
                    opt(c.map(|c| c.s_total))
                )
                .unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Report together with the `A` sample and its responses.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: SensitivityReport,
    pub a: SampleMatrix,
    pub y_a: Vec<f64>,
}

/// Matrix combination and subset averaging with default settings.
pub fn analyze(
    model: &ModelEvaluator,
    nataf: &NatafModel,
    n: usize,
    rng: &RngSpec,
) -> Result<SensitivityReport> {
    Ok(run_analysis(model, nataf, n, rng, &AnalysisOptions::default())?.report)
}

struct MatrixCombination {
    first_corr: f64,
    total_corr: f64,
    first_uncorr: f64,
    total_uncorr: f64,
}

pub fn run_analysis(
    model: &ModelEvaluator,
    nataf: &NatafModel,
    n: usize,
    rng: &RngSpec,
    options: &AnalysisOptions,
) -> Result<Analysis> {
    let m = nataf.dim();
    if model.input_dim != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: model.input_dim,
        });
    }
    if options.methods.is_empty() {
        return Err(Error::InvalidParameter(
            "no analysis method selected".into(),
        ));
    }
    let use_mc = options.uses(Method::MatrixCombination);
    if use_mc && n < MIN_MATRIX_COMBINATION_N {
        return Err(Error::InvalidParameter(format!(
            "matrix combination needs n >= {MIN_MATRIX_COMBINATION_N}, got {n}"
        )));
    }

    let (a, b) = generate_ab(nataf, n, rng)?;
    let mut evaluations = n;
    let mut mc: Option<Vec<MatrixCombination>> = None;
    let y_a;
    if use_mc {
        let az = nataf.to_standard_normal(&a)?;
        let bz = nataf.to_standard_normal(&b)?;
        let rho_z = nataf.rho_z();
        let ((ya, yb), per_var) = rayon::join(
            || rayon::join(|| model.evaluate(&a), || model.evaluate(&b)),
            || {
                (0..m)
                    .into_par_iter()
                    .map(|i| -> Result<(Vec<f64>, Vec<f64>)> {
                        let cc = nataf.to_original(&c_corr_standard(&az, &bz, i, rho_z)?)?;
                        let cu = nataf.to_original(&c_uncorr_standard(&az, &bz, i, rho_z)?)?;
                        let (yc, yu) = rayon::join(|| model.evaluate(&cc), || model.evaluate(&cu));
                        Ok((yc?, yu?))
                    })
                    .collect::<Result<Vec<_>>>()
            },
        );
        let (ya, yb, per_var) = (ya?, yb?, per_var?);
        evaluations = (2 + 2 * m) * n;
        mc = Some(
            per_var
                .iter()
                .map(|(yc, yu)| {
                    Ok(MatrixCombination {
                        first_corr: sobol_first_order(&ya, yc)?,
                        total_corr: sobol_total_effect(&yb, yc)?,
                        first_uncorr: sobol_first_order(&ya, yu)?,
                        total_uncorr: sobol_total_effect(&yb, yu)?,
                    })
                })
                .collect::<Result<_>>()?,
        );
        y_a = ya;
    } else {
        y_a = model.evaluate(&a)?;
    }

    let total_variance = variance(&y_a);
    if !(total_variance > 0.0) {
        return Err(Error::ZeroVariance("model responses".into()));
    }

    let mut n_subsets = None;
    let mut subset_zero_variance = false;
    let subset: Option<Vec<f64>> = if options.uses(Method::SubsetAveraging) {
        let k = options.n_subsets.unwrap_or_else(|| default_n_subsets(n));
        n_subsets = Some(k);
        let est = (0..m)
            .map(|i| subset_first_order(a.column(i), &y_a, k))
            .collect::<Result<Vec<_>>>()?;
        subset_zero_variance = est.iter().any(|e| e.zero_variance);
        Some(est.iter().map(|e| e.value).collect())
    } else {
        None
    };

    let mut regression = None;
    let mut coefficients = None;
    if options.uses(Method::Regression) {
        let az = nataf.to_standard_normal(&a)?;
        let rep = regression_indices(&az, &y_a, options.basis, nataf)?;
        let mut surrogate = fit(&az, &y_a, options.basis)?;
        surrogate.seed = Some(rng.seed);
        coefficients = Some(coefficient_indices(&surrogate, &az)?);
        regression = Some(rep);
    }

    let eps = 5.0 / (n as f64).sqrt();
    let variables = (0..m)
        .map(|i| {
            let c = mc.as_ref().map(|v| &v[i]);
            let mut noise_flags = Vec::new();
            if let Some(c) = c {
                for (label, v) in [
                    ("S_first_corr", c.first_corr),
                    ("S_total_corr", c.total_corr),
                    ("S_first_uncorr", c.first_uncorr),
                    ("S_total_uncorr", c.total_uncorr),
                ] {
                    if v < -eps || v > 1.0 + eps {
                        noise_flags.push(label.to_string());
                    }
                }
            }
            VariableIndices {
                name: nataf.names()[i].clone(),
                s_first_corr: c.map(|c| c.first_corr),
                s_total_corr: c.map(|c| c.total_corr),
                s_first_uncorr: c.map(|c| c.first_uncorr),
                s_total_uncorr: c.map(|c| c.total_uncorr),
                s_subset: subset.as_ref().map(|s| s[i]),
                regression: regression.as_ref().map(|r| r.variables[i]),
                coefficient: coefficients.as_ref().map(|c| c[i]),
                noise_flags,
            }
        })
        .collect();

    let report = SensitivityReport {
        n,
        seed: rng.seed,
        stream: rng.stream.clone(),
        methods: options.methods.clone(),
        total_variance,
        model_evaluations: evaluations,
        n_subsets,
        subset_zero_variance,
        basis: options.uses(Method::Regression).then_some(options.basis),
        r_squared_full: regression.as_ref().map(|r| r.r_squared_full),
        unexplained: regression.as_ref().map(|r| r.unexplained),
        variables,
    };
    Ok(Analysis { report, a, y_a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginals::MarginalDistribution;
    use nalgebra::DMatrix;
    use rand::Rng;

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngSpec::new(seed, "est").rng();
        (0..n)
            .map(|_| rng.sample(rand_distr::StandardNormal))
            .collect()
    }

    #[test]
    fn first_order_limits() {
        let y = normals(10_000, 1);
        assert!((sobol_first_order(&y, &y).unwrap() - 1.0).abs() < 1e-12);
        let z = normals(10_000, 2);
        assert!(sobol_first_order(&y, &z).unwrap().abs() < 0.03);
        assert_eq!(sobol_total_effect(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn first_order_matches_formula() {
        let ya = [1.0, 2.0, 4.0];
        let yc = [0.5, 3.0, 3.5];
        let m: f64 = 7.0 / 3.0;
        let num = 0.5 + 6.0 + 14.0 - 3.0 * m * m;
        let den = 1.0 + 4.0 + 16.0 - 3.0 * m * m;
        assert!((sobol_first_order(&ya, &yc).unwrap() - num / den).abs() < 1e-14);
    }

    #[test]
    fn estimator_errors() {
        assert!(matches!(
            sobol_first_order(&[1.0, 1.0], &[0.0, 2.0]),
            Err(Error::ZeroVariance(_))
        ));
        assert!(matches!(
            sobol_total_effect(&[3.0; 4], &[0.0, 1.0, 2.0, 3.0]),
            Err(Error::ZeroVariance(_))
        ));
        assert!(sobol_first_order(&[1.0, 2.0], &[1.0]).is_err());
        assert!(sobol_first_order(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn subset_constant_response() {
        let x: Vec<f64> = (0..100).map(f64::from).collect();
        let e = subset_first_order(&x, &[2.5; 100], 10).unwrap();
        assert_eq!(
            e,
            SubsetEstimate {
                value: 0.0,
                zero_variance: true
            }
        );
    }

    #[test]
    fn subset_identity_response() {
        let x = normals(10_000, 3);
        let e = subset_first_order(&x, &x, 100).unwrap();
        assert!(e.value >= 0.99 && e.value <= 1.0, "{e:?}");
    }

    #[test]
    fn subset_bins_are_balanced() {
        let x: Vec<f64> = (0..103).rev().map(f64::from).collect();
        let y = x.clone();
        let bins = subset_averages(&x, &y, 10).unwrap();
        let sizes: Vec<usize> = bins.bounds.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(sizes.iter().all(|&s| s == 10 || s == 11));
        assert_eq!(sizes.iter().sum::<usize>(), 103);
        assert_eq!(bins.order[0], 102);
        assert!(bins.means.windows(2).all(|w| w[0] < w[1]));
        let per_row = bins.mean_per_row();
        assert_eq!(per_row[102], bins.means[0]);
        assert!(subset_first_order(&x, &y, 1).is_err());
        assert!(subset_first_order(&x, &y, 52).is_err());
    }

    #[test]
    fn default_bin_count() {
        assert_eq!(default_n_subsets(10_000), 100);
        assert_eq!(default_n_subsets(1000), 32);
        assert_eq!(default_n_subsets(100), 5);
        assert_eq!(default_n_subsets(400), 20);
        assert_eq!(default_n_subsets(250), 12);
    }

    fn additive_nataf(rho: f64) -> NatafModel {
        let marginals = vec![
            MarginalDistribution::normal(0.0, 1.0).unwrap(),
            MarginalDistribution::normal(0.0, 1.0).unwrap(),
            MarginalDistribution::normal(0.0, 2.0).unwrap(),
        ];
        let corr = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, rho, 0.0, rho, 1.0]);
        NatafModel::build(marginals, &corr, crate::sampling::Space::Original).unwrap()
    }

    #[test]
    fn analyze_additive_correlated() {
        let nataf = additive_nataf(0.8);
        let model = ModelEvaluator::additive(vec![1.0; 3]);
        let rep = analyze(&model, &nataf, 4000, &RngSpec::new(5, "unit")).unwrap();
        assert_eq!(rep.model_evaluations, 8 * 4000);
        let x2 = &rep.variables[1];
        assert!((x2.s_first_corr.unwrap() - 0.735).abs() < 0.03, "{x2:?}");
        assert!((x2.s_total_corr.unwrap() - 0.735).abs() < 0.03, "{x2:?}");
        assert!((x2.s_first_uncorr.unwrap() - 0.039).abs() < 0.03, "{x2:?}");
        assert!((x2.s_total_uncorr.unwrap() - 0.039).abs() < 0.03, "{x2:?}");
        assert!(x2.s_subset.is_some() && x2.regression.is_none());
        assert!(rep.variables.iter().all(|v| v.noise_flags.is_empty()));
    }

    #[test]
    fn analyze_is_deterministic_and_validates() {
        let nataf = additive_nataf(0.5);
        let model = ModelEvaluator::additive(vec![1.0; 3]);
        let rng = RngSpec::new(11, "unit");
        let r1 = analyze(&model, &nataf, 200, &rng).unwrap();
        let r2 = analyze(&model, &nataf, 200, &rng).unwrap();
        assert_eq!(r1.to_json(), r2.to_json());
        assert!(analyze(&model, &nataf, 99, &rng).is_err());
        let wrong = ModelEvaluator::additive(vec![1.0; 2]);
        assert!(matches!(
            analyze(&wrong, &nataf, 200, &rng),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn regression_only_analysis() {
        let nataf = additive_nataf(0.8);
        let model = ModelEvaluator::additive(vec![1.0; 3]);
        let options = AnalysisOptions {
            methods: vec![Method::Regression],
            n_subsets: None,
            basis: BasisSpec::linear(),
        };
        let out = run_analysis(&model, &nataf, 50, &RngSpec::new(1, "r"), &options).unwrap();
        assert_eq!(out.report.model_evaluations, 50);
        let x2 = &out.report.variables[1];
        assert!(x2.s_first_corr.is_none());
        assert!(x2.regression.is_some() && x2.coefficient.is_some());
        assert!(out.report.unexplained.unwrap().abs() < 1e-10);
        let csv = out.report.to_csv();
        assert!(csv.starts_with(
            "name,S_first_corr,S_total_corr,S_first_uncorr,S_total_uncorr,S_subset,S_R_first_corr"
        ));
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(1).unwrap().starts_with("x1,,,,,,"));
    }

    #[test]
    fn report_json_round_trip() {
        let nataf = additive_nataf(0.0);
        let model = ModelEvaluator::additive(vec![1.0; 3]);
        let rep = analyze(&model, &nataf, 200, &RngSpec::new(2, "json")).unwrap();
        let back: SensitivityReport = serde_json::from_str(&rep.to_json()).unwrap();
        assert_eq!(back, rep);
        let csv = rep.to_csv();
        assert_eq!(
            csv.lines().next().unwrap(),
            "name,S_first_corr,S_total_corr,S_first_uncorr,S_total_uncorr,S_subset"
        );
    }
}
