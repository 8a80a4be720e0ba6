//! Nataf joint distribution: given marginals plus a correlation matrix in
//! either original or standard normal space, find the consistent standard
//! normal correlation matrix `C_ZZ` and its triangular factor.
//!
//! The correlation integral
//!
//! ```text
//! ρ_x = ∫∫ g_i(z_i) g_j(z_j) φ₂(z_i, z_j; ρ_z) dz_i dz_j,   g(z) = (F⁻¹(Φ(z)) − μ) / σ
//! ```
//!
//! is evaluated after the substitution `z_j = ρ_z z_i + √(1 − ρ_z²) u`, which
//! turns the bivariate density into a product of independent standard normal
//! weights, so a tensor Gauss–Hermite rule applies directly.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::cholesky;
use crate::marginals::MarginalDistribution;
use crate::sampling::{default_names, SampleMatrix, Space};

/// Gauss–Hermite order per dimension.
pub const QUADRATURE_ORDER: usize = 32;
/// Largest admissible `|ρ_z|`.
pub const MAX_ABS_RHO_Z: f64 = 0.999_999;

const ROOT_TOL: f64 = 1e-10;
const ROOT_MAX_ITER: usize = 200;

/// Nodes and weights for `E[f(Z)]`, `Z ~ N(0, 1)`: `Σ w_k f(z_k)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Newton iteration on the orthonormal Hermite recurrence, then rescaled
    /// from the `e^{-x²}` weight to the standard normal density.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1);
        const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
        let n = order;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let half = n.div_ceil(2);
        let mut z = 0.0f64;
        for i in 0..half {
            z = match i {
                0 => {
                    let nn = (2 * n + 1) as f64;
                    nn.sqrt() - 1.85575 * nn.powf(-1.0 / 6.0)
                }
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = PIM4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            x[n / 2] = 0.0;
        }
        let sqrt_pi = std::f64::consts::PI.sqrt();
        Self {
            nodes: x.iter().map(|v| v * std::f64::consts::SQRT_2).collect(),
            weights: w.iter().map(|v| v / sqrt_pi).collect(),
        }
    }

    pub fn default_rule() -> &'static GaussHermite {
        static RULE: OnceLock<GaussHermite> = OnceLock::new();
        RULE.get_or_init(|| GaussHermite::new(QUADRATURE_ORDER))
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }
}

fn standardized(d: &MarginalDistribution) -> impl Fn(f64) -> f64 + '_ {
    let (mu, sd) = (d.mean(), d.std_dev());
    move |z| (d.from_standard_normal(z) - mu) / sd
}

/// Original-space correlation implied by `rho_z`, with an explicit rule.
pub fn correlation_integral(
    di: &MarginalDistribution,
    dj: &MarginalDistribution,
    rho_z: f64,
    rule: &GaussHermite,
) -> f64 {
    if rho_z == 0.0 {
        return 0.0;
    }
    let gi = standardized(di);
    let gj = standardized(dj);
    let s = (1.0 - rho_z * rho_z).sqrt();
    let mut total = 0.0;
    for (&za, &wa) in rule.nodes.iter().zip(&rule.weights) {
        let ga = gi(za);
        let inner: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&u, &wb)| wb * gj(rho_z * za + s * u))
            .sum();
        total += wa * ga * inner;
    }
    total
}

/// `ρ(X_i, X_j)` for a standard normal correlation `rho_z`.
pub fn rho_x_from_rho_z(
    di: &MarginalDistribution,
    dj: &MarginalDistribution,
    rho_z: f64,
) -> Result<f64> {
    if !(rho_z.abs() < 1.0) {
        return Err(Error::Domain(format!("|rho_z| must be < 1, got {rho_z}")));
    }
    if di.is_normal() && dj.is_normal() {
        return Ok(rho_z);
    }
    Ok(correlation_integral(
        di,
        dj,
        rho_z,
        GaussHermite::default_rule(),
    ))
}

/// Inverts [`rho_x_from_rho_z`] by bracketed bisection with secant steps.
pub fn rho_z_from_rho_x(
    di: &MarginalDistribution,
    dj: &MarginalDistribution,
    rho_x: f64,
) -> Result<f64> {
    if !(rho_x.abs() < 1.0) {
        return Err(Error::Domain(format!("|rho_x| must be < 1, got {rho_x}")));
    }
    if rho_x == 0.0 {
        return Ok(0.0);
    }
    if di.is_normal() && dj.is_normal() {
        return Ok(rho_x);
    }
    let f = |r: f64| correlation_integral(di, dj, r, GaussHermite::default_rule()) - rho_x;

    // |ρ_x| ≤ |ρ_z| for the families in scope, so start on the target's side of
    // zero and fall back to the full admissible interval.
    let (mut lo, mut hi) = if rho_x > 0.0 {
        (0.0, MAX_ABS_RHO_Z)
    } else {
        (-MAX_ABS_RHO_Z, 0.0)
    };
    let (mut f_lo, mut f_hi) = (f(lo), f(hi));
    if f_lo * f_hi > 0.0 {
        lo = -MAX_ABS_RHO_Z;
        hi = MAX_ABS_RHO_Z;
        f_lo = f(lo);
        f_hi = f(hi);
        if f_lo * f_hi > 0.0 {
            return Err(Error::Convergence(format!(
                "target correlation {rho_x} not attainable: bracket [{lo}, {hi}] maps to [{:.6}, {:.6}]",
                f_lo + rho_x,
                f_hi + rho_x
            )));
        }
    }

    let (mut x_prev, mut f_prev) = (lo, f_lo);
    let (mut x_cur, mut f_cur) = (hi, f_hi);
    for iter in 0..ROOT_MAX_ITER {
        let secant = x_cur - f_cur * (x_cur - x_prev) / (f_cur - f_prev);
        // every third step bisects so the bracket keeps shrinking geometrically
        let candidate = if iter % 3 != 2 && secant.is_finite() && secant > lo && secant < hi {
            secant
        } else {
            0.5 * (lo + hi)
        };
        let fc = f(candidate);
        x_prev = x_cur;
        f_prev = f_cur;
        x_cur = candidate;
        f_cur = fc;
        if fc == 0.0 {
            return Ok(candidate);
        }
        if (fc < 0.0) == (f_lo < 0.0) {
            lo = candidate;
            f_lo = fc;
        } else {
            hi = candidate;
        }
        let step = (x_cur - x_prev).abs();
        if hi - lo < ROOT_TOL || (step < ROOT_TOL && fc.abs() < 1e-12) {
            return Ok(x_cur);
        }
    }
    Err(Error::Convergence(format!(
        "no convergence after {ROOT_MAX_ITER} iterations for target {rho_x}"
    )))
}

/// Which space a user-supplied correlation matrix refers to.
pub use crate::sampling::Space as CorrelationSpace;

/// Marginals plus consistent original- and standard-normal-space correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct NatafModel {
    names: Vec<String>,
    marginals: Vec<MarginalDistribution>,
    rho_x: DMatrix<f64>,
    rho_z: DMatrix<f64>,
    chol: DMatrix<f64>,
}

fn validate_correlation(corr: &DMatrix<f64>, m: usize) -> Result<()> {
    if corr.nrows() != m || corr.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: corr.nrows().max(corr.ncols()),
        });
    }
    for i in 0..m {
        if corr[(i, i)] != 1.0 {
            return Err(Error::InvalidParameter(format!(
                "correlation[{i}][{i}] must be 1, got {}",
                corr[(i, i)]
            )));
        }
        for j in (i + 1)..m {
            let (a, b) = (corr[(i, j)], corr[(j, i)]);
            if !(a.abs() < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "correlation[{i}][{j}] must lie in (-1, 1), got {a}"
                )));
            }
            if (a - b).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "correlation[{i}][{j}] = {a} differs from correlation[{j}][{i}] = {b}"
                )));
            }
        }
    }
    Ok(())
}

impl NatafModel {
    pub fn build(
        marginals: Vec<MarginalDistribution>,
        corr: &DMatrix<f64>,
        space: Space,
    ) -> Result<Self> {
        let names = default_names(marginals.len());
        Self::build_named(names, marginals, corr, space)
    }

    pub fn build_named(
        names: Vec<String>,
        marginals: Vec<MarginalDistribution>,
        corr: &DMatrix<f64>,
        space: Space,
    ) -> Result<Self> {
        let m = marginals.len();
        if m == 0 {
            return Err(Error::InvalidParameter(
                "at least one variable is required".into(),
            ));
        }
        if names.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: names.len(),
            });
        }
        validate_correlation(corr, m)?;

        let mut rho_x = DMatrix::<f64>::identity(m, m);
        let mut rho_z = DMatrix::<f64>::identity(m, m);
        for i in 0..m {
            for j in (i + 1)..m {
                let given = 0.5 * (corr[(i, j)] + corr[(j, i)]);
                let (rx, rz) = match space {
                    Space::Original => {
                        let rz = rho_z_from_rho_x(&marginals[i], &marginals[j], given)?;
                        (given, rz)
                    }
                    Space::StandardNormal => (
                        rho_x_from_rho_z(&marginals[i], &marginals[j], given)?,
                        given,
                    ),
                };
                if rz.abs() > MAX_ABS_RHO_Z {
                    return Err(Error::NotPositiveDefinite {
                        minor: j + 1,
                        detail: format!("|rho_z[{i}][{j}]| = {} exceeds {MAX_ABS_RHO_Z}", rz.abs()),
                    });
                }
                rho_x[(i, j)] = rx;
                rho_x[(j, i)] = rx;
                rho_z[(i, j)] = rz;
                rho_z[(j, i)] = rz;
            }
        }
        let chol = cholesky(&rho_z)?;
        Ok(Self {
            names,
            marginals,
            rho_x,
            rho_z,
            chol,
        })
    }

    /// All variables independent.
    pub fn independent(marginals: Vec<MarginalDistribution>) -> Result<Self> {
        let m = marginals.len();
        Self::build(marginals, &DMatrix::identity(m, m), Space::StandardNormal)
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn marginals(&self) -> &[MarginalDistribution] {
        &self.marginals
    }

    pub fn rho_x(&self) -> &DMatrix<f64> {
        &self.rho_x
    }

    pub fn rho_z(&self) -> &DMatrix<f64> {
        &self.rho_z
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn is_independent(&self) -> bool {
        self.rho_z == DMatrix::identity(self.dim(), self.dim())
    }

    fn check_columns(&self, samples: &SampleMatrix) -> Result<()> {
        if samples.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: samples.ncols(),
            });
        }
        Ok(())
    }

    /// Elementwise `F⁻¹(Φ(z))` per column.
    pub fn to_original(&self, samples: &SampleMatrix) -> Result<SampleMatrix> {
        samples.expect_space(Space::StandardNormal)?;
        self.check_columns(samples)?;
        let mut values = samples.values().clone();
        for (j, d) in self.marginals.iter().enumerate() {
            values
                .column_mut(j)
                .iter_mut()
                .for_each(|v| *v = d.from_standard_normal(*v));
        }
        SampleMatrix::new(values, Space::Original, samples.column_names().to_vec())
    }

    /// Elementwise `Φ⁻¹(F(x))` per column.
    pub fn to_standard_normal(&self, samples: &SampleMatrix) -> Result<SampleMatrix> {
        samples.expect_space(Space::Original)?;
        self.check_columns(samples)?;
        let mut values = samples.values().clone();
        for (j, d) in self.marginals.iter().enumerate() {
            for v in values.column_mut(j).iter_mut() {
                *v = d.to_standard_normal(*v)?;
            }
        }
        Ok(SampleMatrix::from_parts_unchecked(
            values,
            Space::StandardNormal,
            samples.column_names().to_vec(),
        ))
    }
}
