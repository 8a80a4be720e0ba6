//! Marginal distribution families and the elementwise map between a variable's
//! original space and standard normal space, `z = Φ⁻¹(F(x))` and `x = F⁻¹(Φ(z))`.
//!
//! Normal and lognormal marginals use their exact affine / logarithmic maps so
//! the round trip is exact up to rounding. Uniform marginals go through Φ and
//! Φ⁻¹, evaluated on whichever tail keeps full relative precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities handed to Φ⁻¹ are clamped to this band.
pub const PROBABILITY_CLAMP: f64 = 1e-16;

/// Standard normal distribution helpers.
///
/// Φ follows Cody's rational Chebyshev approximation and Φ⁻¹ Wichura's
/// AS 241 (PPND16); both hold close to full double precision.
pub mod std_normal {
    use super::PROBABILITY_CLAMP;

    const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

    pub fn pdf(z: f64) -> f64 {
        FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
    }

    /// Returns `(Φ(x), 1 − Φ(x))`, each accurate in its own tail.
    pub fn cdf_both(x: f64) -> (f64, f64) {
        const A: [f64; 5] = [
            2.235_252_035_460_683_9e0,
            1.610_282_310_685_558_8e2,
            1.067_689_485_460_370_9e3,
            1.815_498_125_334_356_1e4,
            6.568_233_791_820_745e-2,
        ];
        const B: [f64; 4] = [
            4.720_258_190_468_824e1,
            9.760_985_517_377_767e2,
            1.026_093_220_861_897_8e4,
            4.550_778_933_502_673e4,
        ];
        const C: [f64; 9] = [
            3.989_415_120_881_346_7e-1,
            8.883_149_794_388_376,
            9.350_665_613_217_786e1,
            5.972_702_763_948_003e2,
            2.494_537_585_290_372_7e3,
            6.848_190_450_536_283e3,
            1.160_265_143_764_735e4,
            9.842_714_838_383_978e3,
            1.076_557_677_372_019_2e-8,
        ];
        const D: [f64; 8] = [
            2.226_668_804_432_811_6e1,
            2.353_879_017_826_25e2,
            1.519_377_599_407_554_8e3,
            6.485_558_298_266_761e3,
            1.861_557_164_088_51e4,
            3.490_095_272_114_598e4,
            3.891_200_328_609_327e4,
            1.968_542_967_685_999e4,
        ];
        const P: [f64; 6] = [
            2.158_985_340_579_57e-1,
            1.274_011_611_602_473_6e-1,
            2.223_527_787_064_980_7e-2,
            1.421_619_193_227_893_5e-3,
            2.911_287_495_116_879_2e-5,
            2.307_344_176_494_017_3e-2,
        ];
        const Q: [f64; 5] = [
            1.284_260_096_144_911_2,
            4.682_382_124_808_651e-1,
            6.598_813_786_892_855e-2,
            3.782_396_332_027_582_4e-3,
            7.297_515_550_839_662e-5,
        ];

        if x.is_nan() {
            return (f64::NAN, f64::NAN);
        }
        let y = x.abs();
        // Gaussian factor split so that exp(-y²/2) keeps relative accuracy
        let gauss = |v: f64| {
            let vsq = (v * 16.0).trunc() / 16.0;
            let del = (v - vsq) * (v + vsq);
            (-vsq * vsq * 0.5).exp() * (-del * 0.5).exp()
        };
        if y <= 0.674_489_75 {
            let (mut xnum, mut xden) = (0.0, 0.0);
            if y > 1.11e-16 {
                let xsq = x * x;
                xnum = A[4] * xsq;
                xden = xsq;
                for i in 0..3 {
                    xnum = (xnum + A[i]) * xsq;
                    xden = (xden + B[i]) * xsq;
                }
            }
            let t = x * (xnum + A[3]) / (xden + B[3]);
            return (0.5 + t, 0.5 - t);
        }
        let tail = if y <= 32f64.sqrt() {
            let mut xnum = C[8] * y;
            let mut xden = y;
            for i in 0..7 {
                xnum = (xnum + C[i]) * y;
                xden = (xden + D[i]) * y;
            }
            gauss(y) * (xnum + C[7]) / (xden + D[7])
        } else if y < 40.0 {
            let xsq = 1.0 / (y * y);
            let mut xnum = P[5] * xsq;
            let mut xden = xsq;
            for i in 0..4 {
                xnum = (xnum + P[i]) * xsq;
                xden = (xden + Q[i]) * xsq;
            }
            let t = xsq * (xnum + P[4]) / (xden + Q[4]);
            gauss(y) * (FRAC_1_SQRT_2PI - t) / y
        } else {
            0.0
        };
        if x > 0.0 {
            (1.0 - tail, tail)
        } else {
            (tail, 1.0 - tail)
        }
    }

    /// Φ(z).
    pub fn cdf(z: f64) -> f64 {
        cdf_both(z).0
    }

    /// 1 − Φ(z), accurate in the upper tail.
    pub fn sf(z: f64) -> f64 {
        cdf_both(z).1
    }

    /// Φ⁻¹(p), with `p` clamped to `[1e-16, 1 − 1e-16]`.
    pub fn quantile(p: f64) -> f64 {
        let p = p.clamp(PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP);
        let q = p - 0.5;
        if q.abs() <= 0.425 {
            let r = 0.180_625 - q * q;
            return q
                * (((((((r * 2_509.080_928_730_122_7 + 33_430.575_583_588_13) * r
                    + 67_265.770_927_008_7)
                    * r
                    + 45_921.953_931_549_87)
                    * r
                    + 13_731.693_765_509_461)
                    * r
                    + 1_971.590_950_306_551_3)
                    * r
                    + 133.141_667_891_784_38)
                    * r
                    + 3.387_132_872_796_366_5)
                / (((((((r * 5_226.495_278_852_546 + 28_729.085_735_721_943) * r
                    + 39_307.895_800_092_71)
                    * r
                    + 21_213.794_301_586_597)
                    * r
                    + 5_394.196_021_424_751)
                    * r
                    + 687.187_007_492_057_9)
                    * r
                    + 42.313_330_701_600_91)
                    * r
                    + 1.0);
        }
        let mut r = if q < 0.0 { p } else { 1.0 - p };
        r = (-r.ln()).sqrt();
        let val = if r <= 5.0 {
            r -= 1.6;
            (((((((r * 7.745_450_142_783_414e-4 + 2.272_384_498_926_918_4e-2) * r
                + 2.417_807_251_774_506e-1)
                * r
                + 1.270_458_252_452_368_4)
                * r
                + 3.647_848_324_763_204_5)
                * r
                + 5.769_497_221_460_691)
                * r
                + 4.630_337_846_156_545)
                * r
                + 1.423_437_110_749_683_5)
                / (((((((r * 1.050_750_071_644_416_9e-9 + 5.475_938_084_995_345e-4) * r
                    + 1.519_866_656_361_645_7e-2)
                    * r
                    + 1.481_039_764_274_800_8e-1)
                    * r
                    + 6.897_673_349_851e-1)
                    * r
                    + 1.676_384_830_183_803_8)
                    * r
                    + 2.053_191_626_637_759)
                    * r
                    + 1.0)
        } else {
            r -= 5.0;
            (((((((r * 2.010_334_399_292_288_1e-7 + 2.711_555_568_743_487_6e-5) * r
                + 1.242_660_947_388_078_4e-3)
                * r
                + 2.653_218_952_657_612_4e-2)
                * r
                + 2.965_605_718_285_049e-1)
                * r
                + 1.784_826_539_917_291_3)
                * r
                + 5.463_784_911_164_114)
                * r
                + 6.657_904_643_501_103)
                / (((((((r * 2.044_263_103_389_939_7e-15 + 1.421_511_758_316_446e-7) * r
                    + 1.846_318_317_510_054_8e-5)
                    * r
                    + 7.868_691_311_456_133e-4)
                    * r
                    + 1.487_536_129_085_061_5e-2)
                    * r
                    + 1.369_298_809_227_358e-1)
                    * r
                    + 5.998_322_065_558_879e-1)
                    * r
                    + 1.0)
        };
        if q < 0.0 {
            -val
        } else {
            val
        }
    }

    /// Φ⁻¹(1 − q) computed from the upper-tail probability `q`.
    pub fn quantile_upper(q: f64) -> f64 {
        -quantile(q)
    }
}

/// Parameters of a supported marginal family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Normal {
        mean: f64,
        std_dev: f64,
    },
    Uniform {
        lower: f64,
        upper: f64,
    },
    /// `mu` and `sigma` are the mean and standard deviation of `ln X`.
    Lognormal {
        mu: f64,
        sigma: f64,
    },
}

/// A validated marginal law of one input variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Family", into = "Family")]
pub struct MarginalDistribution {
    family: Family,
}

impl TryFrom<Family> for MarginalDistribution {
    type Error = Error;

    fn try_from(family: Family) -> Result<Self> {
        Self::new(family)
    }
}

impl From<MarginalDistribution> for Family {
    fn from(d: MarginalDistribution) -> Self {
        d.family
    }
}

impl MarginalDistribution {
    pub fn new(family: Family) -> Result<Self> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match family {
            Family::Normal { mean, std_dev } => {
                if !finite(&[mean, std_dev]) || std_dev <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "normal marginal needs finite mean and std_dev > 0, got ({mean}, {std_dev})"
                    )));
                }
            }
            Family::Uniform { lower, upper } => {
                if !finite(&[lower, upper]) || upper <= lower {
                    return Err(Error::InvalidParameter(format!(
                        "uniform marginal needs lower < upper, got ({lower}, {upper})"
                    )));
                }
            }
            Family::Lognormal { mu, sigma } => {
                if !finite(&[mu, sigma]) || sigma <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "lognormal marginal needs finite mu and sigma > 0, got ({mu}, {sigma})"
                    )));
                }
            }
        }
        Ok(Self { family })
    }

    pub fn normal(mean: f64, std_dev: f64) -> Result<Self> {
        Self::new(Family::Normal { mean, std_dev })
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        Self::new(Family::Uniform { lower, upper })
    }

    pub fn lognormal(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(Family::Lognormal { mu, sigma })
    }

    pub fn standard_normal() -> Self {
        Self {
            family: Family::Normal {
                mean: 0.0,
                std_dev: 1.0,
            },
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn is_normal(&self) -> bool {
        matches!(self.family, Family::Normal { .. })
    }

    pub fn mean(&self) -> f64 {
        match self.family {
            Family::Normal { mean, .. } => mean,
            Family::Uniform { lower, upper } => 0.5 * (lower + upper),
            Family::Lognormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
        }
    }

    pub fn std_dev(&self) -> f64 {
        match self.family {
            Family::Normal { std_dev, .. } => std_dev,
            Family::Uniform { lower, upper } => (upper - lower) / 12f64.sqrt(),
            Family::Lognormal { mu, sigma } => {
                let s2 = sigma * sigma;
                (s2.exp_m1() * (2.0 * mu + s2).exp()).sqrt()
            }
        }
    }

    pub fn median(&self) -> f64 {
        match self.family {
            Family::Normal { mean, .. } => mean,
            Family::Uniform { lower, upper } => 0.5 * (lower + upper),
            Family::Lognormal { mu, .. } => mu.exp(),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self.family {
            Family::Normal { mean, std_dev } => std_normal::pdf((x - mean) / std_dev) / std_dev,
            Family::Uniform { lower, upper } => {
                if (lower..=upper).contains(&x) {
                    1.0 / (upper - lower)
                } else {
                    0.0
                }
            }
            Family::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    std_normal::pdf((x.ln() - mu) / sigma) / (sigma * x)
                }
            }
        }
    }

    /// Cumulative distribution function; total on the real line.
    pub fn cdf(&self, x: f64) -> f64 {
        match self.family {
            Family::Normal { mean, std_dev } => std_normal::cdf((x - mean) / std_dev),
            Family::Uniform { lower, upper } => {
                if x <= lower {
                    0.0
                } else if x >= upper {
                    1.0
                } else {
                    (x - lower) / (upper - lower)
                }
            }
            Family::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    std_normal::cdf((x.ln() - mu) / sigma)
                }
            }
        }
    }

    /// Quantile function. Fails with [`Error::Domain`] unless `0 < p < 1`.
    pub fn inv_cdf(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("probability {p} outside (0, 1)")));
        }
        Ok(match self.family {
            Family::Normal { mean, std_dev } => mean + std_dev * std_normal::quantile(p),
            Family::Uniform { lower, upper } => lower + (upper - lower) * p,
            Family::Lognormal { mu, sigma } => (mu + sigma * std_normal::quantile(p)).exp(),
        })
    }

    /// `Φ⁻¹(F(x))`. Fails with [`Error::Domain`] when `x` lies outside the support.
    pub fn to_standard_normal(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("non-finite value {x}")));
        }
        match self.family {
            Family::Normal { mean, std_dev } => Ok((x - mean) / std_dev),
            Family::Uniform { lower, upper } => {
                if x < lower || x > upper {
                    return Err(Error::Domain(format!(
                        "{x} outside uniform support [{lower}, {upper}]"
                    )));
                }
                let width = upper - lower;
                let p = (x - lower) / width;
                if p <= 0.5 {
                    Ok(std_normal::quantile(p))
                } else {
                    Ok(std_normal::quantile_upper((upper - x) / width))
                }
            }
            Family::Lognormal { mu, sigma } => {
                if x <= 0.0 {
                    return Err(Error::Domain(format!(
                        "{x} outside lognormal support (0, inf)"
                    )));
                }
                Ok((x.ln() - mu) / sigma)
            }
        }
    }

    /// `F⁻¹(Φ(z))`.
    pub fn from_standard_normal(&self, z: f64) -> f64 {
        match self.family {
            Family::Normal { mean, std_dev } => mean + std_dev * z,
            Family::Uniform { lower, upper } => {
                let width = upper - lower;
                if z <= 0.0 {
                    lower + width * std_normal::cdf(z)
                } else {
                    upper - width * std_normal::sf(z)
                }
            }
            Family::Lognormal { mu, sigma } => (mu + sigma * z).exp(),
        }
    }

    /// `dx/dz` of [`Self::from_standard_normal`] at `z = 0`.
    pub fn slope_at_median(&self) -> f64 {
        std_normal::pdf(0.0) / self.pdf(self.median())
    }
}
