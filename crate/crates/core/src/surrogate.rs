//! Polynomial least-squares surrogates in standard normal space and the
//! regression-based sensitivity indices built on them.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::decomp::{decompose_rest, decompose_single};
use crate::error::{Error, Result};
use crate::linalg::{variance, CompensatedSum};
use crate::marginals::MarginalDistribution;
use crate::nataf::NatafModel;
use crate::sampling::{format_f64, SampleMatrix, Space};

/// Condition estimates above this are treated as numerically singular.
pub const RANK_DEFICIENT_CONDITION: f64 = 1e13;
/// Condition estimates above this are logged.
pub const WARN_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Degree {
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub degree: Degree,
    /// Include the pairwise products `zⱼ zₖ`, `j < k`.
    pub interactions: bool,
}

impl Default for BasisSpec {
    fn default() -> Self {
        Self {
            degree: Degree::Quadratic,
            interactions: true,
        }
    }
}

impl BasisSpec {
    pub fn linear() -> Self {
        Self {
            degree: Degree::Linear,
            interactions: false,
        }
    }

    pub fn quadratic(interactions: bool) -> Self {
        Self {
            degree: Degree::Quadratic,
            interactions,
        }
    }

    pub fn term_count(&self, m: usize) -> usize {
        let mut p = 1 + m;
        if self.degree == Degree::Quadratic {
            p += m;
        }
        if self.interactions {
            p += m * m.saturating_sub(1) / 2;
        }
        p
    }

    /// Constant, linear terms, squares, then products in lexicographic order.
    pub fn terms(&self, m: usize) -> Vec<Term> {
        let mut terms = vec![Term { factors: vec![] }];
        terms.extend((0..m).map(|j| Term {
            factors: vec![(j, 1)],
        }));
        if self.degree == Degree::Quadratic {
            terms.extend((0..m).map(|j| Term {
                factors: vec![(j, 2)],
            }));
        }
        if self.interactions {
            for j in 0..m {
                for k in (j + 1)..m {
                    terms.push(Term {
                        factors: vec![(j, 1), (k, 1)],
                    });
                }
            }
        }
        terms
    }
}

/// Monomial `Π z_v^e` over `(variable, exponent)` factors; empty is the constant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub factors: Vec<(usize, u32)>,
}

impl Term {
    pub fn is_constant(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn involves(&self, i: usize) -> bool {
        self.factors.iter().any(|&(v, _)| v == i)
    }

    /// Linear or pure power term in variable `i` alone.
    pub fn is_main_effect_of(&self, i: usize) -> bool {
        self.factors.len() == 1 && self.factors[0].0 == i
    }

    fn column(&self, samples: &DMatrix<f64>) -> Vec<f64> {
        let mut out = vec![1.0; samples.nrows()];
        for &(v, e) in &self.factors {
            out.iter_mut()
                .zip(samples.column(v).iter())
                .for_each(|(o, &z)| *o *= z.powi(e as i32));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialSurrogate {
    pub basis: BasisSpec,
    pub dim: usize,
    pub terms: Vec<Term>,
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
    pub condition_estimate: f64,
    /// Population variance of the training responses.
    pub response_variance: f64,
    pub n: usize,
    pub seed: Option<u64>,
}

impl PolynomialSurrogate {
    pub fn predict(&self, samples: &SampleMatrix) -> Result<Vec<f64>> {
        self.predict_terms(samples, |_| true)
    }

    /// Prediction using only the terms selected by `keep`.
    pub fn predict_terms(
        &self,
        samples: &SampleMatrix,
        keep: impl Fn(&Term) -> bool,
    ) -> Result<Vec<f64>> {
        samples.expect_space(Space::StandardNormal)?;
        if samples.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: samples.ncols(),
            });
        }
        let mut out = vec![0.0; samples.nrows()];
        for (term, &c) in self.terms.iter().zip(&self.coefficients) {
            if keep(term) {
                let col = term.column(samples.values());
                out.iter_mut().zip(col).for_each(|(o, v)| *o += c * v);
            }
        }
        Ok(out)
    }

    /// Coefficient of the linear term in variable `i`.
    pub fn linear_coefficient(&self, i: usize) -> f64 {
        self.terms
            .iter()
            .zip(&self.coefficients)
            .find(|(t, _)| t.factors == [(i, 1)])
            .map_or(0.0, |(_, &c)| c)
    }

    /// JSON with the basis, terms as `[variable, exponent]` lists (0-based
    /// variables) and coefficients at 17 significant digits.
    pub fn to_json(&self) -> String {
        let mut out = String::from("{\n");
        writeln!(
            out,
            "  \"basis\": {},",
            serde_json::to_string(&self.basis).expect("basis serializes")
        )
        .unwrap();
        writeln!(out, "  \"dim\": {},", self.dim).unwrap();
        let terms: Vec<String> = self
            .terms
            .iter()
            .map(|t| {
                let f: Vec<String> = t
                    .factors
                    .iter()
                    .map(|(v, e)| format!("[{v}, {e}]"))
                    .collect();
                format!("[{}]", f.join(", "))
            })
            .collect();
        writeln!(out, "  \"terms\": [{}],", terms.join(", ")).unwrap();
        let coefs: Vec<String> = self.coefficients.iter().map(|&c| format_f64(c)).collect();
        writeln!(out, "  \"coefficients\": [{}],", coefs.join(", ")).unwrap();
        writeln!(out, "  \"r_squared\": {},", format_f64(self.r_squared)).unwrap();
        writeln!(
            out,
            "  \"condition_estimate\": {},",
            format_f64(self.condition_estimate)
        )
        .unwrap();
        writeln!(out, "  \"n\": {},", self.n).unwrap();
        match self.seed {
            Some(s) => writeln!(out, "  \"seed\": {s}").unwrap(),
            None => writeln!(out, "  \"seed\": null").unwrap(),
        }
        out.push('}');
        out
    }
}

struct LeastSquares {
    coefficients: Vec<f64>,
    r_squared: f64,
    condition: f64,
}

fn check_response(samples: &SampleMatrix, y: &[f64]) -> Result<()> {
    if y.len() != samples.nrows() {
        return Err(Error::DimensionMismatch {
            expected: samples.nrows(),
            found: y.len(),
        });
    }
    if let Some(r) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "response at row {r} is not finite"
        )));
    }
    Ok(())
}

fn total_sum_of_squares(y: &[f64]) -> f64 {
    variance(y) * y.len() as f64
}

fn least_squares(values: &DMatrix<f64>, terms: &[Term], y: &[f64]) -> Result<LeastSquares> {
    let n = values.nrows();
    let p = terms.len();
    if n <= p {
        return Err(Error::InvalidParameter(format!(
            "{p} basis terms need more than {p} samples, got {n}"
        )));
    }
    let mut design = DMatrix::<f64>::zeros(n, p);
    for (c, term) in terms.iter().enumerate() {
        design.column_mut(c).copy_from_slice(&term.column(values));
    }
    let qr = design.clone().qr();
    let r = qr.r();
    let sv = r.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if !(condition <= RANK_DEFICIENT_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    if condition > WARN_CONDITION {
        log::warn!("ill-conditioned regression design (condition estimate {condition:.3e})");
    }
    let mut rhs = DVector::from_column_slice(y);
    qr.q_tr_mul(&mut rhs);
    let rhs = rhs.rows(0, p).into_owned();
    let beta = r
        .solve_upper_triangular(&rhs)
        .ok_or(Error::RankDeficient { condition })?;

    let fitted = &design * &beta;
    let mut sse = CompensatedSum::default();
    for (yi, fi) in y.iter().zip(fitted.iter()) {
        sse.add((yi - fi) * (yi - fi));
    }
    let sst = total_sum_of_squares(y);
    if !(sst > 0.0) {
        return Err(Error::ZeroVariance("regression response".into()));
    }
    Ok(LeastSquares {
        coefficients: beta.iter().copied().collect(),
        r_squared: 1.0 - sse.value() / sst,
        condition,
    })
}

/// Least-squares polynomial fit on standard normal samples, by Householder QR.
pub fn fit(samples: &SampleMatrix, y: &[f64], basis: BasisSpec) -> Result<PolynomialSurrogate> {
    samples.expect_space(Space::StandardNormal)?;
    check_response(samples, y)?;
    let terms = basis.terms(samples.ncols());
    let ls = least_squares(samples.values(), &terms, y)?;
    Ok(PolynomialSurrogate {
        basis,
        dim: samples.ncols(),
        terms,
        coefficients: ls.coefficients,
        r_squared: ls.r_squared,
        condition_estimate: ls.condition,
        response_variance: variance(y),
        n: samples.nrows(),
        seed: None,
    })
}

/// Columns a reduced model is fitted on.
#[derive(Debug, Clone, Copy)]
pub enum ColumnSource<'a> {
    AsIs,
    /// Parts of all columns independent of `Zᵢ`.
    UncorrColumnOf {
        i: usize,
        rho_z: &'a DMatrix<f64>,
    },
    /// Column `i` replaced by its residual given the other variables.
    RestResidualOf {
        i: usize,
        rho_z: &'a DMatrix<f64>,
    },
}

/// R² against `y` of the model that drops every term involving `exclude`.
pub fn r_squared_reduced(
    samples: &SampleMatrix,
    y: &[f64],
    basis: BasisSpec,
    exclude: &[usize],
    column_source: ColumnSource<'_>,
) -> Result<f64> {
    samples.expect_space(Space::StandardNormal)?;
    check_response(samples, y)?;
    let m = samples.ncols();
    if let Some(&bad) = exclude.iter().find(|&&v| v >= m) {
        return Err(Error::InvalidParameter(format!(
            "excluded variable {bad} out of range for {m} variables"
        )));
    }
    let terms: Vec<Term> = basis
        .terms(m)
        .into_iter()
        .filter(|t| !exclude.iter().any(|&v| t.involves(v)))
        .collect();
    if terms.iter().all(Term::is_constant) {
        return Err(Error::InvalidParameter(
            "exclusion leaves no non-constant basis term".into(),
        ));
    }
    let prepared;
    let values = match column_source {
        ColumnSource::AsIs => samples.values(),
        ColumnSource::UncorrColumnOf { i, rho_z } => {
            prepared = decompose_single(samples, i, rho_z)?.1;
            prepared.values()
        }
        ColumnSource::RestResidualOf { i, rho_z } => {
            let residual = decompose_rest(samples, i, rho_z)?.1;
            let mut v = samples.values().clone();
            v.column_mut(i).copy_from(&residual.values().column(i));
            prepared = samples.with_values(v, Space::StandardNormal);
            prepared.values()
        }
    };
    Ok(least_squares(values, &terms, y)?.r_squared)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionIndices {
    pub s_first_corr: f64,
    pub s_total_corr: f64,
    pub s_first_uncorr: f64,
    pub s_total_uncorr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub variables: Vec<RegressionIndices>,
    pub r_squared_full: f64,
    /// `1 − R²` of the full basis.
    pub unexplained: f64,
}

fn standard_normal_samples(samples: &SampleMatrix, nataf: &NatafModel) -> Result<SampleMatrix> {
    match samples.space() {
        Space::StandardNormal => Ok(samples.clone()),
        Space::Original => nataf.to_standard_normal(samples),
    }
}

/// Correlated and uncorrelated first-order and total indices from reduced
/// model R² values. Original-space samples are transformed first.
pub fn regression_indices(
    samples: &SampleMatrix,
    y: &[f64],
    basis: BasisSpec,
    nataf: &NatafModel,
) -> Result<RegressionReport> {
    let z = standard_normal_samples(samples, nataf)?;
    let m = z.ncols();
    if m != nataf.dim() {
        return Err(Error::DimensionMismatch {
            expected: nataf.dim(),
            found: m,
        });
    }
    let rho_z = nataf.rho_z();
    let full = r_squared_reduced(&z, y, basis, &[], ColumnSource::AsIs)?;
    let mut variables = Vec::with_capacity(m);
    for i in 0..m {
        let others: Vec<usize> = (0..m).filter(|&k| k != i).collect();
        let first_corr = r_squared_reduced(&z, y, basis, &others, ColumnSource::AsIs)?;
        let first_uncorr = r_squared_reduced(
            &z,
            y,
            basis,
            &others,
            ColumnSource::RestResidualOf { i, rho_z },
        )?;
        let (rest_plain, rest_uncorr) = if m == 1 {
            (0.0, 0.0)
        } else {
            (
                r_squared_reduced(&z, y, basis, &[i], ColumnSource::AsIs)?,
                r_squared_reduced(
                    &z,
                    y,
                    basis,
                    &[i],
                    ColumnSource::UncorrColumnOf { i, rho_z },
                )?,
            )
        };
        variables.push(RegressionIndices {
            s_first_corr: first_corr,
            s_total_corr: full - rest_uncorr,
            s_first_uncorr: first_uncorr,
            s_total_uncorr: full - rest_plain,
        });
    }
    Ok(RegressionReport {
        variables,
        r_squared_full: full,
        unexplained: 1.0 - full,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientIndices {
    pub s_first: f64,
    pub s_total: f64,
}

/// Indices from the fitted coefficients: the variance of `Zᵢ`'s own linear
/// and quadratic terms, and one minus the variance of the surrogate without
/// any term involving `Zᵢ`, both over `samples` and relative to the variance
/// of the training responses. Values outside `[0, 1]` are possible.
pub fn coefficient_indices(
    surrogate: &PolynomialSurrogate,
    samples: &SampleMatrix,
) -> Result<Vec<CoefficientIndices>> {
    let vy = surrogate.response_variance;
    if !(vy > 0.0) {
        return Err(Error::ZeroVariance("regression response".into()));
    }
    (0..surrogate.dim)
        .map(|i| {
            let own = surrogate.predict_terms(samples, |t| t.is_main_effect_of(i))?;
            let rest = surrogate.predict_terms(samples, |t| !t.involves(i))?;
            Ok(CoefficientIndices {
                s_first: variance(&own) / vy,
                s_total: 1.0 - variance(&rest) / vy,
            })
        })
        .collect()
}

/// Variance contribution `βᵢ² σ_{Xᵢ}²` of a linear term, with the standard
/// normal coefficient converted to original units through the slope of the
/// marginal transform at the median. Exact for normal marginals.
pub fn effective_variance(
    surrogate: &PolynomialSurrogate,
    i: usize,
    marginal: &MarginalDistribution,
) -> f64 {
    let beta = surrogate.linear_coefficient(i) / marginal.slope_at_median();
    beta * beta * marginal.std_dev().powi(2)
}
