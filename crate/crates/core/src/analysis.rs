//! ROC estimation, KL divergences and the compressed-versus-copula regime rule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copulas::CopulaSpec;
use crate::detectors::{copula_term, MarginalPair};
use crate::distributions::{DistributionSpec, Family};
use crate::error::{Error, Result};
use crate::moments::MomentModel;
use crate::multimodal_gen::{generate, Hypothesis, JointSampler};
use crate::projection::{push_moments, CompressedMoments, ProjectionSet};
use crate::rng::{mix_seed, SeedDomain};

pub mod quadrature {
    //! Adaptive Simpson integration on finite intervals.

    use crate::error::{Error, Result};

    const PANELS: usize = 64;
    const MAX_DEPTH: u32 = 48;

    /// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
    pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
        if !(a.is_finite() && b.is_finite() && a <= b) {
            return Err(Error::Quadrature(format!("bad interval [{a}, {b}]")));
        }
        if a == b {
            return Ok(0.0);
        }
        let h = (b - a) / PANELS as f64;
        let mut total = 0.0;
        for p in 0..PANELS {
            let lo = a + p as f64 * h;
            let hi = if p + 1 == PANELS { b } else { lo + h };
            let mid = 0.5 * (lo + hi);
            let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
            let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
            total += step(&f, lo, hi, flo, fmid, fhi, whole, tol / PANELS as f64, MAX_DEPTH)?;
        }
        if !total.is_finite() {
            return Err(Error::Quadrature("integral is not finite".into()));
        }
        Ok(total)
    }

    #[allow(clippy::too_many_arguments)]
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if !delta.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand near {m}")));
        }
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(Error::Quadrature(format!("tolerance {tol:e} not reached near {m}")));
        }
        Ok(step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
            + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub pf: f64,
    pub pd: f64,
}

/// Empirical ROC: one point per distinct pooled score, from `(0, 0)` to `(1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub n0: usize,
    pub n1: usize,
}

/// Sweep the threshold down through the pooled scores. A score `s` is declared
/// H1 at threshold `t` when `s >= t`.
pub fn roc(scores_h0: &[f64], scores_h1: &[f64]) -> Result<RocCurve> {
    if scores_h0.is_empty() || scores_h1.is_empty() {
        return Err(Error::InsufficientData("ROC needs scores under both hypotheses".into()));
    }
    if scores_h0.iter().chain(scores_h1).any(|s| s.is_nan()) {
        return Err(Error::Domain("NaN score".into()));
    }
    let mut pooled: Vec<(f64, bool)> = scores_h0
        .iter()
        .map(|&s| (s, false))
        .chain(scores_h1.iter().map(|&s| (s, true)))
        .collect();
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (n0, n1) = (scores_h0.len(), scores_h1.len());
    let mut points = vec![RocPoint { pf: 0.0, pd: 0.0 }];
    let (mut fp, mut tp) = (0usize, 0usize);
    let mut i = 0;
    while i < pooled.len() {
        let s = pooled[i].0;
        while i < pooled.len() && pooled[i].0 == s {
            if pooled[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { pf: fp as f64 / n0 as f64, pd: tp as f64 / n1 as f64 });
    }
    let auc = trapezoid(&points);
    Ok(RocCurve { points, auc, n0, n1 })
}

fn trapezoid(points: &[RocPoint]) -> f64 {
    points.windows(2).map(|w| (w[1].pf - w[0].pf) * 0.5 * (w[1].pd + w[0].pd)).sum()
}

impl RocCurve {
    /// Detection probability at false-alarm rate `pf`, interpolating linearly
    /// between adjacent points; on a vertical run the largest Pd is returned.
    pub fn pd_at_pf(&self, pf: f64) -> f64 {
        let pf = pf.clamp(0.0, 1.0);
        let idx = self.points.partition_point(|p| p.pf <= pf);
        let last = &self.points[idx - 1];
        if last.pf == pf || idx == self.points.len() {
            return last.pd;
        }
        let next = &self.points[idx];
        last.pd + (next.pd - last.pd) * (pf - last.pf) / (next.pf - last.pf)
    }

    /// Recompute the trapezoidal area from the stored points.
    pub fn trapezoid_auc(&self) -> f64 {
        trapezoid(&self.points)
    }
}

/// `KL(N(μ⁰, C⁰) ‖ N(μ¹, C¹))`. The trace term is `‖L₁⁻¹ L₀‖²_F` and the mean
/// term `‖L₁⁻¹ Δμ‖²`, so no inverse is formed.
pub fn kl_gaussian(cm: &CompressedMoments) -> f64 {
    let l0 = cm.cholesky(Hypothesis::H0).l();
    let l1 = cm.cholesky(Hypothesis::H1).l_dirty();
    let trace = l1
        .solve_lower_triangular(&l0)
        .expect("Cholesky factor has a positive diagonal")
        .norm_squared();
    let delta = cm.mean(Hypothesis::H1) - cm.mean(Hypothesis::H0);
    let maha = cm.whiten(Hypothesis::H1, &delta).norm_squared();
    let kl = 0.5
        * (trace + maha - cm.dim() as f64 + cm.log_det(Hypothesis::H1) - cm.log_det(Hypothesis::H0));
    kl.max(0.0)
}

/// Compressed-domain KL divergence `D(f0 ‖ f1)` under the Gaussian approximation.
pub fn kl_compressed_gaussian(model: &MomentModel, proj: &ProjectionSet) -> Result<f64> {
    Ok(kl_gaussian(&push_moments(model, proj)?))
}

/// `KL(f0 ‖ f1)` in closed form where one is available, else by quadrature.
pub fn kl_divergence(f0: &DistributionSpec, f1: &DistributionSpec) -> Result<f64> {
    match (f0.family(), f1.family()) {
        (Family::Normal { mean: m0, variance: v0 }, Family::Normal { mean: m1, variance: v1 }) => {
            Ok(0.5 * (v0 / v1 + (m1 - m0) * (m1 - m0) / v1 - 1.0 + (v1 / v0).ln()))
        }
        (Family::Exponential { rate: l0 }, Family::Exponential { rate: l1 }) => {
            Ok((l0 / l1).ln() + l1 / l0 - 1.0)
        }
        // E[ln X] = −1/a0 for X ~ Beta(a0, 1).
        (Family::Beta { a: a0, b: b0 }, Family::Beta { a: a1, b: b1 }) if *b0 == 1.0 && *b1 == 1.0 => {
            Ok((a0 / a1).ln() - (a0 - a1) / a0)
        }
        _ => kl_by_quadrature(f0, f1),
    }
}

/// Numerical `∫ f0 ln(f0 / f1)` over the bulk of `f0`'s support.
pub fn kl_by_quadrature(f0: &DistributionSpec, f1: &DistributionSpec) -> Result<f64> {
    let (lo, hi) = match *f0.family() {
        Family::Normal { mean, variance } => {
            let sd = variance.sqrt();
            (mean - 40.0 * sd, mean + 40.0 * sd)
        }
        Family::Exponential { rate } => (0.0, 60.0 / rate),
        Family::Gamma { shape, scale } => (0.0, (shape + 60.0 * shape.sqrt() + 60.0) * scale),
        Family::Beta { .. } => (0.0, 1.0),
    };
    let integrand = |x: f64| {
        let l0 = f0.ln_pdf(x);
        if l0 == f64::NEG_INFINITY {
            return 0.0;
        }
        l0.exp() * (l0 - f1.ln_pdf(x))
    };
    let kl = quadrature::integrate(integrand, lo, hi, 1e-12)?;
    if kl.is_infinite() {
        return Err(Error::Quadrature("f0 is not absolutely continuous w.r.t. f1".into()));
    }
    Ok(kl)
}

/// Product-approach KL divergence `N · Σ_l KL(f0_l ‖ f1_l)`.
pub fn kl_marginal_product(marginals: &[MarginalPair], n: usize) -> Result<f64> {
    let mut per_index = 0.0;
    for pair in marginals {
        per_index += kl_divergence(&pair.h0, &pair.h1)?;
    }
    Ok(n as f64 * per_index)
}

pub const MIN_UPSILON_TRIALS: usize = 10_000;

/// Monte Carlo estimate of `E[Σ_n log c1(u¹_1n, u¹_2n) | H0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpsilonEstimate {
    pub value: f64,
    pub se: f64,
    pub n: usize,
    pub trials: usize,
    pub clamps: u64,
}

impl UpsilonEstimate {
    pub fn per_index(&self) -> f64 {
        self.value / self.n as f64
    }

    pub fn per_index_se(&self) -> f64 {
        self.se / self.n as f64
    }
}

/// H0 blocks come from `sampler`; copula arguments use the H1 marginals.
pub fn estimate_upsilon<S: JointSampler>(
    c1: &CopulaSpec,
    sampler: &S,
    marginals: &[MarginalPair],
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<UpsilonEstimate> {
    if trials < MIN_UPSILON_TRIALS {
        return Err(Error::InsufficientData(format!(
            "Upsilon estimation needs at least {MIN_UPSILON_TRIALS} trials, got {trials}"
        )));
    }
    if marginals.len() != 2 || sampler.modalities() != 2 {
        return Err(Error::Unsupported("Upsilon is defined for two modalities".into()));
    }
    if c1.is_independence() {
        return Ok(UpsilonEstimate { value: 0.0, se: 0.0, n, trials, clamps: 0 });
    }
    let per_trial: Vec<(f64, u32)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = mix_seed(seed, &[SeedDomain::Upsilon.tag(), t as u64]);
            let block = generate(sampler, Hypothesis::H0, n, s)?;
            let mut clamps = 0;
            let total = block
                .pairs()
                .map(|(a, b)| copula_term(c1, &marginals[0].h1, &marginals[1].h1, a, b, &mut clamps))
                .sum::<f64>();
            Ok((total, clamps))
        })
        .collect::<Result<_>>()?;
    let tf = trials as f64;
    let mean = per_trial.iter().map(|p| p.0).sum::<f64>() / tf;
    let var = per_trial.iter().map(|p| (p.0 - mean) * (p.0 - mean)).sum::<f64>() / (tf - 1.0);
    let clamps = per_trial.iter().map(|p| p.1 as u64).sum();
    Ok(UpsilonEstimate { value: mean, se: (var / tf).sqrt(), n, trials, clamps })
}

/// Outcome of comparing compressed-domain detection against copula fusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    pub d_cg: f64,
    pub d_up: f64,
    pub upsilon: f64,
    pub upsilon_se: Option<f64>,
    /// `upsilon > d_up − d_cg`.
    pub regime_compressed_preferred: bool,
    /// `|upsilon − (d_up − d_cg)| < 2·SE`.
    pub inconclusive: bool,
}

pub fn regime_decision(upsilon: f64, d_up: f64, d_cg: f64) -> KlReport {
    KlReport {
        d_cg,
        d_up,
        upsilon,
        upsilon_se: None,
        regime_compressed_preferred: upsilon > d_up - d_cg,
        inconclusive: false,
    }
}

pub fn regime_decision_with_se(upsilon: f64, upsilon_se: f64, d_up: f64, d_cg: f64) -> KlReport {
    KlReport {
        upsilon_se: Some(upsilon_se),
        inconclusive: (upsilon - (d_up - d_cg)).abs() < 2.0 * upsilon_se,
        ..regime_decision(upsilon, d_up, d_cg)
    }
}
