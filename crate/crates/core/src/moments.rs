//! First and second moments of the uncompressed data under each hypothesis.
//!
//! Indices are independent, so every `N x N` covariance block between two
//! modalities is diagonal and is stored as its length-`N` diagonal.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multimodal_gen::{generate, CaseIParams, CaseIIParams, Hypothesis, JointSampler};
use crate::rng::{mix_seed, SeedDomain};

/// Moments under one hypothesis. `mean[j]` is the length-`N` mean of modality
/// `j`; `cov[j][k]` is the diagonal of the `(j, k)` covariance block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisMoments {
    pub mean: Vec<Vec<f64>>,
    pub cov: Vec<Vec<Vec<f64>>>,
}

impl HypothesisMoments {
    fn check(&self, l: usize, n: usize, label: &str) -> Result<()> {
        let dims_ok = self.mean.len() == l
            && self.mean.iter().all(|m| m.len() == n)
            && self.cov.len() == l
            && self.cov.iter().all(|row| row.len() == l && row.iter().all(|d| d.len() == n));
        if !dims_ok {
            return Err(Error::DimensionMismatch(format!("{label}: expected {l} modalities of length {n}")));
        }
        for j in 0..l {
            for i in 0..n {
                let v = self.cov[j][j][i];
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "{label}: variance of modality {j} at index {i} is {v}"
                    )));
                }
            }
            for k in 0..j {
                if self.cov[j][k] != self.cov[k][j] {
                    return Err(Error::InvalidParameter(format!(
                        "{label}: block ({j},{k}) differs from block ({k},{j})"
                    )));
                }
            }
        }
        // Each index carries an L x L covariance that must be PSD.
        for i in 0..n {
            let local = DMatrix::from_fn(l, l, |j, k| self.cov[j][k][i]);
            let scale = local.diagonal().max();
            let min_eig = SymmetricEigen::new(local).eigenvalues.min();
            if min_eig < -1e-12 * scale {
                return Err(Error::InvalidParameter(format!(
                    "{label}: index {i} cross-covariance is not positive semidefinite"
                )));
            }
        }
        Ok(())
    }

    fn homogeneous(mean: &[f64], cov: &[Vec<f64>], n: usize) -> Self {
        Self {
            mean: mean.iter().map(|&m| vec![m; n]).collect(),
            cov: cov.iter().map(|row| row.iter().map(|&c| vec![c; n]).collect()).collect(),
        }
    }
}

/// β⁰, β¹, D⁰, D¹ for `L` modalities of length `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MomentModelRepr", into = "MomentModelRepr")]
pub struct MomentModel {
    modalities: usize,
    n: usize,
    h0: HypothesisMoments,
    h1: HypothesisMoments,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentModelRepr {
    modalities: usize,
    n: usize,
    h0: HypothesisMoments,
    h1: HypothesisMoments,
}

impl TryFrom<MomentModelRepr> for MomentModel {
    type Error = Error;

    fn try_from(r: MomentModelRepr) -> Result<Self> {
        MomentModel::new(r.modalities, r.n, r.h0, r.h1)
    }
}

impl From<MomentModel> for MomentModelRepr {
    fn from(m: MomentModel) -> Self {
        Self { modalities: m.modalities, n: m.n, h0: m.h0, h1: m.h1 }
    }
}

impl MomentModel {
    pub fn new(modalities: usize, n: usize, h0: HypothesisMoments, h1: HypothesisMoments) -> Result<Self> {
        if modalities == 0 || n == 0 {
            return Err(Error::DimensionMismatch("empty moment model".into()));
        }
        h0.check(modalities, n, "H0")?;
        h1.check(modalities, n, "H1")?;
        Ok(Self { modalities, n, h0, h1 })
    }

    pub fn modalities(&self) -> usize {
        self.modalities
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn hypothesis(&self, h: Hypothesis) -> &HypothesisMoments {
        match h {
            Hypothesis::H0 => &self.h0,
            Hypothesis::H1 => &self.h1,
        }
    }

    pub fn mean(&self, h: Hypothesis, modality: usize) -> &[f64] {
        &self.hypothesis(h).mean[modality]
    }

    pub fn cov_block(&self, h: Hypothesis, j: usize, k: usize) -> &[f64] {
        &self.hypothesis(h).cov[j][k]
    }

    /// Stacked `LN` mean vector.
    pub fn dense_mean(&self, h: Hypothesis) -> DVector<f64> {
        DVector::from_iterator(
            self.modalities * self.n,
            self.hypothesis(h).mean.iter().flatten().copied(),
        )
    }

    /// Dense `LN x LN` covariance. Only intended for small instances.
    pub fn dense_cov(&self, h: Hypothesis) -> DMatrix<f64> {
        let n = self.n;
        let m = self.hypothesis(h);
        let mut out = DMatrix::zeros(self.modalities * n, self.modalities * n);
        for j in 0..self.modalities {
            for k in 0..self.modalities {
                for i in 0..n {
                    out[(j * n + i, k * n + i)] = m.cov[j][k][i];
                }
            }
        }
        out
    }
}

/// Analytic moments for Case I. The cross blocks vanish because
/// `Cov(X, X² + W²) = E[X³] = 0` for a centred Gaussian.
pub fn case1_moments(params: &CaseIParams, n: usize) -> Result<MomentModel> {
    params.validate()?;
    let build = |var: f64, rate: f64| {
        HypothesisMoments::homogeneous(&[0.0, 1.0 / rate], &[vec![var, 0.0], vec![0.0, 1.0 / (rate * rate)]], n)
    };
    MomentModel::new(
        2,
        n,
        build(params.sigma0_sq, params.lambda0),
        build(params.sigma1_sq, params.lambda1()),
    )
}

/// Analytic moments for Case II.
///
/// Under H1 write `U = S·B` and `X1 = S·(1 − B)` with `S ~ Gamma(a1 + 1, θ1)`
/// independent of `B ~ Beta(a1, 1)`; then `X2 = B` and
/// `Cov(X1, X2) = −E[S]·Var(B) = −a1·θ1 / ((a1 + 1)(a1 + 2))`.
pub fn case2_moments(params: &CaseIIParams, n: usize) -> Result<MomentModel> {
    params.validate()?;
    let beta_mean = |a: f64| a / (a + 1.0);
    let beta_var = |a: f64| a / ((a + 1.0) * (a + 1.0) * (a + 2.0));
    let (a0, a1, theta1) = (params.a0, params.a1(), params.theta1());
    let h0 = HypothesisMoments::homogeneous(
        &[1.0 / params.lambda0, beta_mean(a0)],
        &[vec![1.0 / (params.lambda0 * params.lambda0), 0.0], vec![0.0, beta_var(a0)]],
        n,
    );
    let cross = -a1 * theta1 / ((a1 + 1.0) * (a1 + 2.0));
    let h1 = HypothesisMoments::homogeneous(
        &[theta1, beta_mean(a1)],
        &[vec![theta1 * theta1, cross], vec![cross, beta_var(a1)]],
        n,
    );
    MomentModel::new(2, n, h0, h1)
}

/// Monte Carlo estimate of the moments of a generator under one hypothesis,
/// with standard errors. The covariance estimate is dense and unstructured.
#[derive(Debug, Clone)]
pub struct MomentEstimate {
    pub modalities: usize,
    pub n: usize,
    pub trials: usize,
    pub mean: DVector<f64>,
    pub mean_se: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub cov_se: DMatrix<f64>,
}

impl MomentEstimate {
    /// Project onto the block-diagonal structure (diagonal of each block).
    pub fn structured(&self) -> HypothesisMoments {
        let (l, n) = (self.modalities, self.n);
        HypothesisMoments {
            mean: (0..l).map(|j| self.mean.rows(j * n, n).iter().copied().collect()).collect(),
            cov: (0..l)
                .map(|j| (0..l).map(|k| (0..n).map(|i| self.cov[(j * n + i, k * n + i)]).collect()).collect())
                .collect(),
        }
    }

    /// Largest `|estimate − expected| / SE` over every structured entry.
    pub fn max_z_score(&self, expected: &HypothesisMoments) -> f64 {
        let (l, n) = (self.modalities, self.n);
        let mut worst: f64 = 0.0;
        for j in 0..l {
            for i in 0..n {
                let r = j * n + i;
                worst = worst.max((self.mean[r] - expected.mean[j][i]).abs() / self.mean_se[r]);
                for k in 0..l {
                    let c = k * n + i;
                    worst = worst.max((self.cov[(r, c)] - expected.cov[j][k][i]).abs() / self.cov_se[(r, c)]);
                }
            }
        }
        worst
    }
}

/// Two-pass Monte Carlo moment estimate. Trial `t` uses the seed
/// `mix_seed(seed, [Moments, hypothesis, t])`, so both passes see identical data.
pub fn mc_moments<S: JointSampler>(
    sampler: &S,
    hypothesis: Hypothesis,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    if trials < 2 {
        return Err(Error::InsufficientData("moment estimation needs at least 2 trials".into()));
    }
    let l = sampler.modalities();
    let dim = l * n;
    let trial_seed = |t: usize| mix_seed(seed, &[SeedDomain::Moments.tag(), hypothesis.index() as u64, t as u64]);
    let flat = |t: usize| -> Result<Vec<f64>> {
        let block = generate(sampler, hypothesis, n, trial_seed(t))?;
        Ok((0..l).flat_map(|j| block.row(j).to_vec()).collect())
    };

    let mut mean = DVector::zeros(dim);
    for t in 0..trials {
        for (m, v) in mean.iter_mut().zip(flat(t)?) {
            *m += v;
        }
    }
    mean /= trials as f64;

    let mut s2 = DMatrix::<f64>::zeros(dim, dim);
    let mut s4 = DMatrix::<f64>::zeros(dim, dim);
    for t in 0..trials {
        let d: Vec<f64> = flat(t)?.iter().zip(mean.iter()).map(|(v, m)| v - m).collect();
        for a in 0..dim {
            for b in 0..dim {
                let p = d[a] * d[b];
                s2[(a, b)] += p;
                s4[(a, b)] += p * p;
            }
        }
    }
    let tf = trials as f64;
    let cov = &s2 / (tf - 1.0);
    let mut cov_se = DMatrix::zeros(dim, dim);
    let mut mean_se = DVector::zeros(dim);
    for a in 0..dim {
        if cov[(a, a)] <= 0.0 {
            return Err(Error::Degenerate(format!("zero sample variance at coordinate {a}")));
        }
        mean_se[a] = (cov[(a, a)] / tf).sqrt();
        for b in 0..dim {
            let m2 = s2[(a, b)] / tf;
            cov_se[(a, b)] = ((s4[(a, b)] / tf - m2 * m2).max(0.0) / tf).sqrt();
        }
    }
    Ok(MomentEstimate { modalities: l, n, trials, mean, mean_se, cov, cov_se })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case1_structure() {
        let m = case1_moments(&CaseIParams::default(), 4).unwrap();
        assert!(m.cov_block(Hypothesis::H1, 0, 0).iter().all(|&v| v == 5.1));
        assert!(m.cov_block(Hypothesis::H1, 0, 1).iter().all(|&v| v == 0.0));
        assert!(m.cov_block(Hypothesis::H0, 0, 1).iter().all(|&v| v == 0.0));
        assert!(m.mean(Hypothesis::H1, 1).iter().all(|&v| (v - 10.2).abs() < 1e-12));
        assert!(m.mean(Hypothesis::H0, 0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn case2_structure() {
        let m = case2_moments(&CaseIIParams::default(), 3).unwrap();
        for &v in m.cov_block(Hypothesis::H1, 0, 1) {
            assert!((v - (-10.0 * 10.2 / (11.0 * 12.0))).abs() < 1e-12);
            assert!((v + 0.77273).abs() < 1e-5);
        }
        for &v in m.cov_block(Hypothesis::H1, 1, 1) {
            assert!((v - 10.0 / (121.0 * 12.0)).abs() < 1e-15);
            assert!((v - 0.0068871).abs() < 1e-7);
        }
        assert!(m.cov_block(Hypothesis::H0, 1, 0).iter().all(|&v| v == 0.0));
        // Per-index PSD check with the presets.
        let c = m.cov_block(Hypothesis::H1, 0, 1)[0].abs();
        let bound = (m.cov_block(Hypothesis::H1, 0, 0)[0] * m.cov_block(Hypothesis::H1, 1, 1)[0]).sqrt();
        assert!(c <= bound);
        // sqrt(104.04 * 0.0068871) = 0.84648.
        assert!((bound - 0.84648).abs() < 1e-5, "{bound}");
    }

    #[test]
    fn rejects_inconsistent_models() {
        let good = case2_moments(&CaseIIParams::default(), 2).unwrap();
        let mut h1 = good.hypothesis(Hypothesis::H1).clone();
        h1.cov[0][1] = vec![-20.0; 2];
        h1.cov[1][0] = vec![-20.0; 2];
        let err = MomentModel::new(2, 2, good.hypothesis(Hypothesis::H0).clone(), h1.clone());
        assert!(err.is_err(), "non-PSD cross block must be rejected");

        h1.cov[0][1] = vec![-0.5; 2];
        assert!(MomentModel::new(2, 2, good.hypothesis(Hypothesis::H0).clone(), h1).is_err());

        let mut h0 = good.hypothesis(Hypothesis::H0).clone();
        h0.mean[0].push(1.0);
        assert!(MomentModel::new(2, 2, h0, good.hypothesis(Hypothesis::H1).clone()).is_err());
    }

    #[test]
    fn json_round_trip_validates() {
        let m = case1_moments(&CaseIParams::default(), 3).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: MomentModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let tampered = s.replacen("5.1", "-5.1", 1);
        assert!(serde_json::from_str::<MomentModel>(&tampered).is_err());
    }

    #[test]
    fn dense_views() {
        let m = case2_moments(&CaseIIParams::default(), 2).unwrap();
        let c = m.dense_cov(Hypothesis::H1);
        assert_eq!(c.shape(), (4, 4));
        assert_eq!(c[(0, 2)], c[(2, 0)]);
        assert_eq!(c[(0, 3)], 0.0);
        assert_eq!(m.dense_mean(Hypothesis::H0).len(), 4);
    }

    #[test]
    fn mc_estimate_exponential_variance() {
        let est = mc_moments(&CaseIIParams::default(), Hypothesis::H0, 1, 200_000, 3).unwrap();
        let z = (est.cov[(0, 0)] - 100.0).abs() / est.cov_se[(0, 0)];
        assert!(z < 3.0, "z = {z}");
        let zc = est.cov[(0, 1)].abs() / est.cov_se[(0, 1)];
        assert!(zc < 3.0, "cross z = {zc}");
    }

    #[test]
    fn mc_requires_trials() {
        assert!(mc_moments(&CaseIParams::default(), Hypothesis::H0, 1, 1, 3).is_err());
    }
}
