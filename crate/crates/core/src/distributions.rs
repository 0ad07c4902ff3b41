//! Scalar distributions used as modality marginals: Normal, Exponential,
//! Beta and Gamma.
//!
//! A [`DistributionSpec`] is validated once at construction; evaluation
//! methods never re-check parameters.

use std::f64::consts::{PI, SQRT_2};

use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::{beta as sbeta, gamma as sgamma};

use crate::error::{Error, Result};

/// Parameterization of a scalar family. Use the constructors on
/// [`DistributionSpec`] to obtain validated values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    Normal { mean: f64, variance: f64 },
    Exponential { rate: f64 },
    Beta { a: f64, b: f64 },
    Gamma { shape: f64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Family", into = "Family")]
pub struct DistributionSpec {
    family: Family,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite and > 0, got {v}")))
    }
}

impl TryFrom<Family> for DistributionSpec {
    type Error = Error;

    fn try_from(family: Family) -> Result<Self> {
        match family {
            Family::Normal { mean, variance } => {
                if !mean.is_finite() {
                    return Err(Error::InvalidParameter(format!("normal mean {mean}")));
                }
                positive("normal variance", variance)?;
            }
            Family::Exponential { rate } => positive("exponential rate", rate)?,
            Family::Beta { a, b } => {
                positive("beta a", a)?;
                positive("beta b", b)?;
            }
            Family::Gamma { shape, scale } => {
                positive("gamma shape", shape)?;
                positive("gamma scale", scale)?;
            }
        }
        Ok(Self { family })
    }
}

impl From<DistributionSpec> for Family {
    fn from(spec: DistributionSpec) -> Self {
        spec.family
    }
}

impl DistributionSpec {
    pub fn normal(mean: f64, variance: f64) -> Result<Self> {
        Family::Normal { mean, variance }.try_into()
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Family::Exponential { rate }.try_into()
    }

    pub fn beta(a: f64, b: f64) -> Result<Self> {
        Family::Beta { a, b }.try_into()
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        Family::Gamma { shape, scale }.try_into()
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn mean(&self) -> f64 {
        match self.family {
            Family::Normal { mean, .. } => mean,
            Family::Exponential { rate } => 1.0 / rate,
            Family::Beta { a, b } => a / (a + b),
            Family::Gamma { shape, scale } => shape * scale,
        }
    }

    pub fn variance(&self) -> f64 {
        match self.family {
            Family::Normal { variance, .. } => variance,
            Family::Exponential { rate } => 1.0 / (rate * rate),
            Family::Beta { a, b } => a * b / ((a + b) * (a + b) * (a + b + 1.0)),
            Family::Gamma { shape, scale } => shape * scale * scale,
        }
    }

    /// Closed support interval `(lower, upper)`.
    pub fn support(&self) -> (f64, f64) {
        match self.family {
            Family::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Family::Exponential { .. } | Family::Gamma { .. } => (0.0, f64::INFINITY),
            Family::Beta { .. } => (0.0, 1.0),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Log density; `-inf` outside the support.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match self.family {
            Family::Normal { mean, variance } => {
                let d = x - mean;
                -0.5 * (d * d / variance + (2.0 * PI * variance).ln())
            }
            Family::Exponential { rate } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * x
                }
            }
            Family::Beta { a, b } => {
                if !(0.0..=1.0).contains(&x) {
                    return f64::NEG_INFINITY;
                }
                let lx = if a == 1.0 { 0.0 } else { (a - 1.0) * x.ln() };
                let l1x = if b == 1.0 { 0.0 } else { (b - 1.0) * (-x).ln_1p() };
                let norm = if b == 1.0 {
                    a.ln()
                } else if a == 1.0 {
                    b.ln()
                } else {
                    -sbeta::ln_beta(a, b)
                };
                lx + l1x + norm
            }
            Family::Gamma { shape, scale } => {
                if x < 0.0 {
                    return f64::NEG_INFINITY;
                }
                if x == 0.0 {
                    return if shape < 1.0 {
                        f64::INFINITY
                    } else if shape == 1.0 {
                        -scale.ln()
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                (shape - 1.0) * x.ln() - x / scale - sgamma::ln_gamma(shape) - shape * scale.ln()
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.family {
            Family::Normal { mean, variance } => std_normal_cdf((x - mean) / variance.sqrt()),
            Family::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Family::Beta { a, b } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else if b == 1.0 {
                    x.powf(a)
                } else if a == 1.0 {
                    -(b * (-x).ln_1p()).exp_m1()
                } else {
                    sbeta::beta_reg(a, b, x)
                }
            }
            Family::Gamma { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    sgamma::gamma_lr(shape, x / scale)
                }
            }
        }
    }

    /// Inverse cdf for `u` strictly inside `(0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("quantile argument {u} not in (0, 1)")));
        }
        Ok(match self.family {
            Family::Normal { mean, variance } => mean + variance.sqrt() * std_normal_quantile(u),
            Family::Exponential { rate } => -(-u).ln_1p() / rate,
            Family::Beta { a, b } => {
                if b == 1.0 {
                    u.powf(1.0 / a)
                } else if a == 1.0 {
                    -((-u).ln_1p() / b).exp_m1()
                } else {
                    let start = sbeta::inv_beta_reg(a, b, u).clamp(1e-300, 1.0 - 1e-16);
                    self.polish_quantile(u, start, 0.0, 1.0)
                }
            }
            Family::Gamma { shape, scale } => {
                let z = std_normal_quantile(u);
                let wh = 1.0 - 1.0 / (9.0 * shape) + z / (3.0 * shape.sqrt());
                let start = if wh > 0.0 && shape >= 0.5 {
                    shape * wh * wh * wh
                } else {
                    (u * sgamma::gamma(shape + 1.0)).powf(1.0 / shape)
                };
                scale * self_std_gamma(shape).polish_quantile(u, start.max(1e-300), 0.0, f64::INFINITY)
            }
        })
    }

    /// Safeguarded Newton iteration on `cdf(x) = u` inside `(lo, hi)`.
    fn polish_quantile(&self, u: f64, start: f64, mut lo: f64, mut hi: f64) -> f64 {
        let mut x = start;
        if hi.is_infinite() {
            let mut probe = x.max(1.0);
            while self.cdf(probe) < u {
                lo = probe;
                probe *= 2.0;
            }
            hi = probe;
        }
        for _ in 0..200 {
            let f = self.cdf(x) - u;
            if f == 0.0 {
                return x;
            }
            if f < 0.0 {
                lo = lo.max(x);
            } else {
                hi = hi.min(x);
            }
            let dens = self.pdf(x);
            let newton = if dens > 0.0 && dens.is_finite() { x - f / dens } else { f64::NAN };
            let next = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() || hi - lo <= f64::EPSILON * hi {
                return next;
            }
            x = next;
        }
        x
    }

    /// Draw one value. Gamma uses the Marsaglia–Tsang squeeze for shape >= 1
    /// and the `U^(1/shape)` boost below that.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            Family::Normal { mean, variance } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + variance.sqrt() * z
            }
            Family::Exponential { rate } => {
                let u: f64 = rng.sample(Open01);
                -u.ln() / rate
            }
            Family::Beta { a, b } => {
                if b == 1.0 {
                    let u: f64 = rng.sample(Open01);
                    u.powf(1.0 / a)
                } else if a == 1.0 {
                    let u: f64 = rng.sample(Open01);
                    1.0 - u.powf(1.0 / b)
                } else {
                    let x = standard_gamma(a, rng);
                    let y = standard_gamma(b, rng);
                    x / (x + y)
                }
            }
            Family::Gamma { shape, scale } => scale * standard_gamma(shape, rng),
        }
    }
}

fn self_std_gamma(shape: f64) -> DistributionSpec {
    DistributionSpec { family: Family::Gamma { shape, scale: 1.0 } }
}

/// Gamma(shape, 1) variate.
pub fn standard_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let boost: f64 = rng.sample(Open01);
        return standard_gamma(shape + 1.0, rng) * boost.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * z;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u: f64 = rng.sample(Open01);
        let z2 = z * z;
        if u < 1.0 - 0.0331 * z2 * z2 || u.ln() < 0.5 * z2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

pub fn std_normal_ln_pdf(z: f64) -> f64 {
    -0.5 * (z * z + (2.0 * PI).ln())
}

/// Standard normal quantile: rational approximation (relative error ~1e-9)
/// followed by one Newton step against the erfc-based cdf.
pub fn std_normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -std_normal_quantile(1.0 - p);
    }
    let x = normal_quantile_rational(p);
    let err = std_normal_cdf(x) - p;
    x - err / std_normal_ln_pdf(x).exp()
}

#[allow(clippy::excessive_precision)]
fn normal_quantile_rational(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}
