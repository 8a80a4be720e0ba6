//! Decomposition of standard normal samples into the part explained linearly
//! by other variables and the uncorrelated remainder, and the recombined
//! matrices `C̃ᵢᶜ` and `C̃ᵢᵘ` that keep the original joint distribution.
//!
//! Everything here works in standard normal space with the model's
//! correlation matrix `C_ZZ`; original-space matrices are transformed first.
//!
//! * With respect to a single variable `Zᵢ`: `Z_jᶜ = ρ(Zᵢ, Z_j)·Zᵢ`.
//! * With respect to the rest `Z₋ᵢ`: `Zᵢᶜ = Σ_{k≠i} β_k Z_k` with
//!   `β = C₋ᵢ₋ᵢ⁻¹ ρ₋ᵢ,ᵢ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, symmetric_condition};
use crate::nataf::NatafModel;
use crate::sampling::{SampleMatrix, Space};

/// Largest condition number accepted for `C₋ᵢ₋ᵢ`.
pub const MAX_CONDITION: f64 = 1e12;

/// Regression coefficients of `Zᵢ` on the remaining standard normal variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionCoefficients {
    pub index: usize,
    /// `β_{Zᵢ,j}` for `j ≠ i`, in variable order.
    pub beta: Vec<f64>,
    /// Always zero in standard normal space.
    pub intercept: f64,
}

impl DecompositionCoefficients {
    /// Coefficients spread over all `m` positions, with zero at `index`.
    pub fn full(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.beta.len() + 1);
        out.extend_from_slice(&self.beta[..self.index]);
        out.push(0.0);
        out.extend_from_slice(&self.beta[self.index..]);
        out
    }
}

fn check_square(rho_z: &DMatrix<f64>, i: usize) -> Result<usize> {
    let m = rho_z.nrows();
    if rho_z.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: rho_z.ncols(),
        });
    }
    if i >= m {
        return Err(Error::InvalidParameter(format!(
            "variable index {i} out of range for {m} variables"
        )));
    }
    Ok(m)
}

/// `β = C₋ᵢ₋ᵢ⁻¹ ρ₋ᵢ,ᵢ` from the predefined standard normal correlations.
pub fn beta_coefficients(rho_z: &DMatrix<f64>, i: usize) -> Result<DecompositionCoefficients> {
    let m = check_square(rho_z, i)?;
    let rest: Vec<usize> = (0..m).filter(|&k| k != i).collect();
    if rest.is_empty() {
        return Ok(DecompositionCoefficients {
            index: i,
            beta: Vec::new(),
            intercept: 0.0,
        });
    }
    let sub = DMatrix::from_fn(rest.len(), rest.len(), |a, b| rho_z[(rest[a], rest[b])]);
    let rhs = DVector::from_iterator(rest.len(), rest.iter().map(|&k| rho_z[(k, i)]));
    let condition = symmetric_condition(&sub);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::NotPositiveDefinite {
            minor: rest.len(),
            detail: format!(
                "correlation matrix of the variables other than {} has condition estimate {condition:.3e}",
                i + 1
            ),
        });
    }
    let l = cholesky(&sub)?;
    let beta = cholesky_solve(&l, &rhs);
    Ok(DecompositionCoefficients {
        index: i,
        beta: beta.iter().copied().collect(),
        intercept: 0.0,
    })
}

fn check_samples(samples: &SampleMatrix, rho_z: &DMatrix<f64>, i: usize) -> Result<usize> {
    samples.expect_space(Space::StandardNormal)?;
    let m = check_square(rho_z, i)?;
    if samples.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: samples.ncols(),
        });
    }
    Ok(m)
}

fn split(samples: &SampleMatrix, correlated: DMatrix<f64>) -> (SampleMatrix, SampleMatrix) {
    let uncorrelated = samples.values() - &correlated;
    (
        samples.with_values(correlated, Space::StandardNormal),
        samples.with_values(uncorrelated, Space::StandardNormal),
    )
}

/// Parts of every column that are correlated with / independent of column `i`.
///
/// Column `j` of the correlated part is `ρ(Zᵢ, Z_j)·Mᵢ`; column `i` is copied
/// unchanged, so column `i` of the uncorrelated part vanishes.
pub fn decompose_single(
    samples: &SampleMatrix,
    i: usize,
    rho_z: &DMatrix<f64>,
) -> Result<(SampleMatrix, SampleMatrix)> {
    let m = check_samples(samples, rho_z, i)?;
    let n = samples.nrows();
    let base = samples.column(i);
    let mut correlated = DMatrix::<f64>::zeros(n, m);
    for j in 0..m {
        let col = correlated.column_mut(j);
        if j == i {
            col.into_iter().zip(base).for_each(|(c, &v)| *c = v);
        } else {
            let r = rho_z[(i, j)];
            col.into_iter().zip(base).for_each(|(c, &v)| *c = r * v);
        }
    }
    Ok(split(samples, correlated))
}

/// Part of column `i` explained by the other columns, and its residual.
///
/// Columns `j ≠ i` of the correlated part equal the input, so only column `i`
/// of the uncorrelated part is nonzero.
pub fn decompose_rest(
    samples: &SampleMatrix,
    i: usize,
    rho_z: &DMatrix<f64>,
) -> Result<(SampleMatrix, SampleMatrix)> {
    check_samples(samples, rho_z, i)?;
    let beta = beta_coefficients(rho_z, i)?.full();
    let mut correlated = samples.values().clone();
    let predicted = predict(samples, &beta);
    correlated.column_mut(i).copy_from_slice(&predicted);
    Ok(split(samples, correlated))
}

fn predict(samples: &SampleMatrix, beta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; samples.nrows()];
    for (k, &b) in beta.iter().enumerate() {
        if b != 0.0 {
            out.iter_mut()
                .zip(samples.column(k))
                .for_each(|(o, &v)| *o += b * v);
        }
    }
    out
}

fn check_pair(a: &SampleMatrix, b: &SampleMatrix, i: usize) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            found: b.ncols(),
        });
    }
    b.expect_space(a.space())?;
    if i >= a.ncols() {
        return Err(Error::InvalidParameter(format!(
            "variable index {i} out of range for {} variables",
            a.ncols()
        )));
    }
    Ok(())
}

/// Classic recombination: `B` with its column `i` taken from `A`.
/// Only meaningful for independent inputs.
pub fn build_c_classic(a: &SampleMatrix, b: &SampleMatrix, i: usize) -> Result<SampleMatrix> {
    check_pair(a, b, i)?;
    let mut values = b.values().clone();
    values.column_mut(i).copy_from(&a.values().column(i));
    Ok(b.with_values(values, b.space()))
}

/// `C̃ᵢᶜ = Bᵘ'ᶻⁱ + Aᶜ'ᶻⁱ` on standard normal matrices.
pub fn c_corr_standard(
    a: &SampleMatrix,
    b: &SampleMatrix,
    i: usize,
    rho_z: &DMatrix<f64>,
) -> Result<SampleMatrix> {
    check_pair(a, b, i)?;
    let (a_corr, _) = decompose_single(a, i, rho_z)?;
    let (_, b_unc) = decompose_single(b, i, rho_z)?;
    let values = b_unc.values() + a_corr.values();
    Ok(b.with_values(values, Space::StandardNormal))
}

/// `C̃ᵢᵘ = Aᵘ'ᶻ⁻ⁱ + Bᶜ'ᶻ⁻ⁱ` on standard normal matrices.
pub fn c_uncorr_standard(
    a: &SampleMatrix,
    b: &SampleMatrix,
    i: usize,
    rho_z: &DMatrix<f64>,
) -> Result<SampleMatrix> {
    check_pair(a, b, i)?;
    let (_, a_unc) = decompose_rest(a, i, rho_z)?;
    let (b_corr, _) = decompose_rest(b, i, rho_z)?;
    let values = a_unc.values() + b_corr.values();
    Ok(b.with_values(values, Space::StandardNormal))
}

/// Recombined matrix for the correlated indices of variable `i`.
///
/// Column `i` and every part correlated with it come from `A`; the parts of
/// the other variables independent of `Zᵢ` come from `B`.
pub fn build_c_corr(
    a: &SampleMatrix,
    b: &SampleMatrix,
    i: usize,
    nataf: &NatafModel,
) -> Result<SampleMatrix> {
    a.expect_space(Space::Original)?;
    b.expect_space(Space::Original)?;
    let az = nataf.to_standard_normal(a)?;
    let bz = nataf.to_standard_normal(b)?;
    nataf.to_original(&c_corr_standard(&az, &bz, i, nataf.rho_z())?)
}

/// Recombined matrix for the uncorrelated indices of variable `i`.
///
/// The residual of `Zᵢ` given the other variables comes from `A`; everything
/// else, including the prediction of `Zᵢ` from the others, comes from `B`.
pub fn build_c_uncorr(
    a: &SampleMatrix,
    b: &SampleMatrix,
    i: usize,
    nataf: &NatafModel,
) -> Result<SampleMatrix> {
    a.expect_space(Space::Original)?;
    b.expect_space(Space::Original)?;
    let az = nataf.to_standard_normal(a)?;
    let bz = nataf.to_standard_normal(b)?;
    nataf.to_original(&c_uncorr_standard(&az, &bz, i, nataf.rho_z())?)
}
