//! Sample matrices, seeded random streams, Latin Hypercube sampling in
//! independent standard normal space and generation of the paired matrices
//! `A` and `B` consumed by the estimators.
//!
//! Correlation is imposed by mapping each independent LHS row `z` to `L·z`
//! with the triangular factor of the standard normal correlation matrix. This
//! keeps the joint law exact but only the first column stays strictly
//! stratified.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::distr::Open01;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginals::std_normal;
use crate::nataf::NatafModel;

/// The space a [`SampleMatrix`] lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Original,
    StandardNormal,
}

/// `n × m` realizations of the input vector, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    values: DMatrix<f64>,
    space: Space,
    column_names: Vec<String>,
}

pub fn default_names(m: usize) -> Vec<String> {
    (1..=m).map(|j| format!("x{j}")).collect()
}

impl SampleMatrix {
    pub fn new(values: DMatrix<f64>, space: Space, column_names: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidParameter(
                "sample matrix needs at least one row and one column".into(),
            ));
        }
        if column_names.len() != values.ncols() {
            return Err(Error::DimensionMismatch {
                expected: values.ncols(),
                found: column_names.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite entry at row {}, column {}",
                pos % values.nrows(),
                pos / values.nrows()
            )));
        }
        Ok(Self {
            values,
            space,
            column_names,
        })
    }

    /// Builds from row slices with default column names `x1..xm`.
    pub fn from_rows(rows: &[Vec<f64>], space: Space) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: bad.len(),
            });
        }
        let values = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
        Self::new(values, space, default_names(m))
    }

    pub(crate) fn from_parts_unchecked(
        values: DMatrix<f64>,
        space: Space,
        column_names: Vec<String>,
    ) -> Self {
        Self {
            values,
            space,
            column_names,
        }
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.values.nrows();
        &self.values.as_slice()[j * n..(j + 1) * n]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn expect_space(&self, expected: Space) -> Result<()> {
        if self.space != expected {
            return Err(Error::SpaceMismatch {
                expected,
                found: self.space,
            });
        }
        Ok(())
    }

    pub(crate) fn with_values(&self, values: DMatrix<f64>, space: Space) -> Self {
        Self {
            values,
            space,
            column_names: self.column_names.clone(),
        }
    }

    /// CSV with a header of column names, 17 significant digits per value and
    /// `\n` line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.nrows() * self.ncols() * 24);
        out.push_str(&self.column_names.join(","));
        out.push('\n');
        for i in 0..self.nrows() {
            for j in 0..self.ncols() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{}", format_f64(self.values[(i, j)])).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, space: Space) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidParameter("empty CSV".into()))?;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let m = names.len();
        let mut data = Vec::new();
        let mut n = 0;
        for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidParameter(format!("CSV line {}: {e}", k + 2)))?;
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: row.len(),
                });
            }
            data.extend(row);
            n += 1;
        }
        let values = DMatrix::from_row_slice(n, m, &data);
        Self::new(values, space, names)
    }
}

/// 17 significant decimal digits, enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Seed plus a stream label. Equal specs give bit-identical draws.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: String,
}

impl RngSpec {
    pub fn new(seed: u64, stream: impl Into<String>) -> Self {
        Self {
            seed,
            stream: stream.into(),
        }
    }

    /// A child stream label `"<stream>/<label>"` under the same seed.
    pub fn substream(&self, label: &str) -> Self {
        let stream = if self.stream.is_empty() {
            label.to_string()
        } else {
            format!("{}/{label}", self.stream)
        };
        Self {
            seed: self.seed,
            stream,
        }
    }

    /// ChaCha20 keyed by the seed, with the stream label selecting one of its
    /// 2⁶⁴ independent streams.
    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(fnv1a(self.stream.as_bytes()));
        rng
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Latin Hypercube sample of `m` independent standard normal variables.
///
/// Each column holds exactly one draw per probability stratum
/// `((k + u) / n)`, mapped through Φ⁻¹ and shuffled independently.
pub fn lhs_independent_standard_normal(n: usize, m: usize, rng: &RngSpec) -> Result<SampleMatrix> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "LHS needs n >= 2, got {n}"
        )));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("LHS needs m >= 1".into()));
    }
    let mut gen = rng.rng();
    let mut values = DMatrix::<f64>::zeros(n, m);
    let mut column = vec![0.0; n];
    for j in 0..m {
        for (k, v) in column.iter_mut().enumerate() {
            let u: f64 = gen.sample(Open01);
            *v = std_normal::quantile((k as f64 + u) / n as f64);
        }
        column.shuffle(&mut gen);
        values.column_mut(j).copy_from_slice(&column);
    }
    Ok(SampleMatrix::from_parts_unchecked(
        values,
        Space::StandardNormal,
        default_names(m),
    ))
}

/// Maps every row `z` to `L·z`.
pub fn impose_correlation(samples: &SampleMatrix, chol: &DMatrix<f64>) -> Result<SampleMatrix> {
    samples.expect_space(Space::StandardNormal)?;
    let m = samples.ncols();
    if chol.nrows() != m || chol.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: chol.nrows(),
        });
    }
    if (0..m).any(|i| ((i + 1)..m).any(|j| chol[(i, j)] != 0.0)) {
        return Err(Error::InvalidParameter(
            "correlation factor must be lower triangular".into(),
        ));
    }
    let values = samples.values() * chol.transpose();
    Ok(samples.with_values(values, Space::StandardNormal))
}

/// Two independent matrices drawn from the joint distribution described by
/// `nataf`, using the sub-streams `"A"` and `"B"` of `rng`.
pub fn generate_ab(
    nataf: &NatafModel,
    n: usize,
    rng: &RngSpec,
) -> Result<(SampleMatrix, SampleMatrix)> {
    let draw = |label: &str| -> Result<SampleMatrix> {
        let z = lhs_independent_standard_normal(n, nataf.dim(), &rng.substream(label))?;
        let z = impose_correlation(&z, nataf.chol())?;
        let z = SampleMatrix::from_parts_unchecked(
            z.into_values(),
            Space::StandardNormal,
            nataf.names().to_vec(),
        );
        nataf.to_original(&z)
    };
    let (a, b) = rayon::join(|| draw("A"), || draw("B"));
    Ok((a?, b?))
}
