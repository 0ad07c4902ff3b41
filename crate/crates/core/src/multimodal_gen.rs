//! Hypothesis-conditional generators for dependent two-modality data.
//!
//! Indices within a modality vector are independent draws; dependence lives
//! only between the modalities at the same index. Both concrete constructions
//! make the modalities independent under H0.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detectors::MarginalPair;
use crate::distributions::{standard_gamma, DistributionSpec};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    pub const BOTH: [Hypothesis; 2] = [Hypothesis::H0, Hypothesis::H1];

    pub fn index(self) -> usize {
        match self {
            Hypothesis::H0 => 0,
            Hypothesis::H1 => 1,
        }
    }
}

/// Case I: Gaussian and exponential modalities. Under H1 the exponential
/// channel is `x1^2 + w^2` with `w` an independent copy of `x1`, so its rate is
/// fixed at `1 / (2 sigma1_sq)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaseIParams {
    pub sigma0_sq: f64,
    pub sigma1_sq: f64,
    pub lambda0: f64,
}

impl Default for CaseIParams {
    /// σ0² = 5, σ1² = 5.1, 1/λ0 = 10.
    fn default() -> Self {
        Self { sigma0_sq: 5.0, sigma1_sq: 5.1, lambda0: 0.1 }
    }
}

impl CaseIParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma0_sq", self.sigma0_sq),
            ("sigma1_sq", self.sigma1_sq),
            ("lambda0", self.lambda0),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("case I {name} = {v}")));
            }
        }
        Ok(())
    }

    pub fn lambda1(&self) -> f64 {
        1.0 / (2.0 * self.sigma1_sq)
    }
}

/// Case II: exponential and beta modalities. Under H1 the beta channel is
/// `u / (u + x1)` with `u ~ Gamma(alpha1, 1/lambda1)`, which has a
/// `Beta(alpha1, 1)` marginal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaseIIParams {
    pub lambda0: f64,
    pub lambda1: f64,
    pub a0: f64,
    pub alpha1: f64,
}

impl Default for CaseIIParams {
    /// 1/λ0 = 10, 1/λ1 = 10.2, a0 = 9.8, α1 = 10.
    fn default() -> Self {
        Self { lambda0: 0.1, lambda1: 1.0 / 10.2, a0: 9.8, alpha1: 10.0 }
    }
}

impl CaseIIParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda0", self.lambda0),
            ("lambda1", self.lambda1),
            ("a0", self.a0),
            ("alpha1", self.alpha1),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("case II {name} = {v}")));
            }
        }
        Ok(())
    }

    pub fn a1(&self) -> f64 {
        self.alpha1
    }

    /// Gamma scale of the H1 mixing variable.
    pub fn theta1(&self) -> f64 {
        1.0 / self.lambda1
    }
}

/// `L x N` block of samples, row `j` holding modality `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBlock {
    values: Vec<f64>,
    modalities: usize,
    n: usize,
    pub hypothesis: Hypothesis,
    pub seed: u64,
}

impl SampleBlock {
    pub fn from_rows(rows: Vec<Vec<f64>>, hypothesis: Hypothesis, seed: u64) -> Result<Self> {
        let modalities = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if modalities == 0 || n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("rows must be non-empty and equal length".into()));
        }
        Ok(Self { values: rows.concat(), modalities, n, hypothesis, seed })
    }

    pub fn modalities(&self) -> usize {
        self.modalities
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row(&self, modality: usize) -> &[f64] {
        &self.values[modality * self.n..(modality + 1) * self.n]
    }

    /// Modality-1 / modality-2 pairs at each index.
    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.row(0).iter().copied().zip(self.row(1).iter().copied())
    }
}

/// Draws the joint value of all modalities at a single index.
pub trait JointSampler: Sync {
    fn modalities(&self) -> usize;

    fn sample_index<R: Rng + ?Sized>(&self, hypothesis: Hypothesis, rng: &mut R, out: &mut [f64]);
}

/// Fill an `L x n` block with independent per-index draws.
pub fn generate<S: JointSampler>(
    sampler: &S,
    hypothesis: Hypothesis,
    n: usize,
    seed: u64,
) -> Result<SampleBlock> {
    let mut rng = rng_from_seed(seed);
    generate_with(sampler, hypothesis, n, seed, &mut rng)
}

fn generate_with<S: JointSampler>(
    sampler: &S,
    hypothesis: Hypothesis,
    n: usize,
    seed: u64,
    rng: &mut SimRng,
) -> Result<SampleBlock> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample length must be >= 1".into()));
    }
    let l = sampler.modalities();
    if l < 2 {
        return Err(Error::InvalidParameter("generators need at least two modalities".into()));
    }
    let mut values = vec![0.0; l * n];
    let mut scratch = vec![0.0; l];
    for i in 0..n {
        sampler.sample_index(hypothesis, rng, &mut scratch);
        for (j, v) in scratch.iter().enumerate() {
            values[j * n + i] = *v;
        }
    }
    Ok(SampleBlock { values, modalities: l, n, hypothesis, seed })
}

impl JointSampler for CaseIParams {
    fn modalities(&self) -> usize {
        2
    }

    fn sample_index<R: Rng + ?Sized>(&self, hypothesis: Hypothesis, rng: &mut R, out: &mut [f64]) {
        use rand::distr::Open01;
        use rand_distr::StandardNormal;
        match hypothesis {
            Hypothesis::H0 => {
                let z: f64 = rng.sample(StandardNormal);
                let u: f64 = rng.sample(Open01);
                out[0] = self.sigma0_sq.sqrt() * z;
                out[1] = -u.ln() / self.lambda0;
            }
            Hypothesis::H1 => {
                let sd = self.sigma1_sq.sqrt();
                let x1 = sd * rng.sample::<f64, _>(StandardNormal);
                let w = sd * rng.sample::<f64, _>(StandardNormal);
                out[0] = x1;
                out[1] = x1 * x1 + w * w;
            }
        }
    }
}

impl JointSampler for CaseIIParams {
    fn modalities(&self) -> usize {
        2
    }

    fn sample_index<R: Rng + ?Sized>(&self, hypothesis: Hypothesis, rng: &mut R, out: &mut [f64]) {
        use rand::distr::Open01;
        match hypothesis {
            Hypothesis::H0 => {
                let u1: f64 = rng.sample(Open01);
                let u2: f64 = rng.sample(Open01);
                out[0] = -u1.ln() / self.lambda0;
                out[1] = u2.powf(1.0 / self.a0);
            }
            Hypothesis::H1 => {
                let u1: f64 = rng.sample(Open01);
                let x1 = -u1.ln() / self.lambda1;
                let mix = self.theta1() * standard_gamma(self.alpha1, rng);
                out[0] = x1;
                out[1] = mix / (mix + x1);
            }
        }
    }
}

pub fn sample_case1(params: &CaseIParams, hypothesis: Hypothesis, n: usize, seed: u64) -> Result<SampleBlock> {
    params.validate()?;
    generate(params, hypothesis, n, seed)
}

pub fn sample_case2(params: &CaseIIParams, hypothesis: Hypothesis, n: usize, seed: u64) -> Result<SampleBlock> {
    params.validate()?;
    generate(params, hypothesis, n, seed)
}

/// One of the two concrete dependence constructions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Case {
    Case1(CaseIParams),
    Case2(CaseIIParams),
}

impl Case {
    pub fn preset(number: u8) -> Result<Self> {
        match number {
            1 => Ok(Case::Case1(CaseIParams::default())),
            2 => Ok(Case::Case2(CaseIIParams::default())),
            other => Err(Error::Config(format!("unknown case {other}; expected 1 or 2"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Case::Case1(p) => p.validate(),
            Case::Case2(p) => p.validate(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Case::Case1(_) => "case1",
            Case::Case2(_) => "case2",
        }
    }

    /// Per-modality marginals under each hypothesis.
    pub fn marginals(&self) -> Result<Vec<MarginalPair>> {
        Ok(match self {
            Case::Case1(p) => vec![
                MarginalPair::new(
                    DistributionSpec::normal(0.0, p.sigma0_sq)?,
                    DistributionSpec::normal(0.0, p.sigma1_sq)?,
                ),
                MarginalPair::new(
                    DistributionSpec::exponential(p.lambda0)?,
                    DistributionSpec::exponential(p.lambda1())?,
                ),
            ],
            Case::Case2(p) => vec![
                MarginalPair::new(
                    DistributionSpec::exponential(p.lambda0)?,
                    DistributionSpec::exponential(p.lambda1)?,
                ),
                MarginalPair::new(DistributionSpec::beta(p.a0, 1.0)?, DistributionSpec::beta(p.a1(), 1.0)?),
            ],
        })
    }
}

impl JointSampler for Case {
    fn modalities(&self) -> usize {
        2
    }

    fn sample_index<R: Rng + ?Sized>(&self, hypothesis: Hypothesis, rng: &mut R, out: &mut [f64]) {
        match self {
            Case::Case1(p) => p.sample_index(hypothesis, rng, out),
            Case::Case2(p) => p.sample_index(hypothesis, rng, out),
        }
    }
}
