//! Bivariate copula densities, Kendall-tau parameter maps and fitting.

use std::cmp::Ordering;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::{beta::inv_beta_reg, gamma::ln_gamma};

use crate::distributions::std_normal_quantile;
use crate::error::{Error, Result};

/// Arguments are clamped into `[UNIT_CLAMP, 1 − UNIT_CLAMP]` before density evaluation.
pub const UNIT_CLAMP: f64 = 1e-10;

/// Largest correlation magnitude a fit may return.
pub const MAX_ABS_RHO: f64 = 0.9999;

/// Largest Kendall tau used when inverting to Archimedean parameters.
pub const MAX_TAU: f64 = 0.9999;

pub const DEFAULT_STUDENT_T_DOF: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CopulaFamily {
    Independence,
    Gaussian,
    #[serde(alias = "t")]
    StudentT,
    Gumbel,
    Clayton,
}

impl CopulaFamily {
    pub const FUSION: [CopulaFamily; 4] =
        [CopulaFamily::Gaussian, CopulaFamily::StudentT, CopulaFamily::Gumbel, CopulaFamily::Clayton];

    pub fn name(self) -> &'static str {
        match self {
            CopulaFamily::Independence => "independence",
            CopulaFamily::Gaussian => "gaussian",
            CopulaFamily::StudentT => "t",
            CopulaFamily::Gumbel => "gumbel",
            CopulaFamily::Clayton => "clayton",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "independence" | "product" => Ok(CopulaFamily::Independence),
            "gaussian" | "normal" => Ok(CopulaFamily::Gaussian),
            "t" | "student_t" | "studentt" => Ok(CopulaFamily::StudentT),
            "gumbel" => Ok(CopulaFamily::Gumbel),
            "clayton" => Ok(CopulaFamily::Clayton),
            other => Err(Error::Config(format!("unknown copula family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CopulaKind {
    Independence,
    Gaussian { rho: f64 },
    StudentT { rho: f64, nu: f64 },
    Gumbel { theta: f64 },
    Clayton { theta: f64 },
}

/// Validated bivariate copula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CopulaKind", into = "CopulaKind")]
pub struct CopulaSpec {
    kind: CopulaKind,
}

impl TryFrom<CopulaKind> for CopulaSpec {
    type Error = Error;

    fn try_from(kind: CopulaKind) -> Result<Self> {
        let ok = match kind {
            CopulaKind::Independence => true,
            CopulaKind::Gaussian { rho } => rho > -1.0 && rho < 1.0,
            CopulaKind::StudentT { rho, nu } => rho > -1.0 && rho < 1.0 && nu > 0.0 && nu.is_finite(),
            CopulaKind::Gumbel { theta } => theta >= 1.0 && theta.is_finite(),
            CopulaKind::Clayton { theta } => theta >= 0.0 && theta.is_finite(),
        };
        if !ok {
            return Err(Error::InvalidParameter(format!("copula parameters out of range: {kind:?}")));
        }
        // Clayton with theta = 0 is the independence copula.
        if let CopulaKind::Clayton { theta } = kind {
            if theta == 0.0 {
                return Ok(Self { kind: CopulaKind::Independence });
            }
        }
        Ok(Self { kind })
    }
}

impl From<CopulaSpec> for CopulaKind {
    fn from(s: CopulaSpec) -> Self {
        s.kind
    }
}

/// Clamp a marginal cdf value into the open unit interval; the flag reports
/// whether clamping changed it.
pub fn clamp_unit(u: f64) -> (f64, bool) {
    let c = u.clamp(UNIT_CLAMP, 1.0 - UNIT_CLAMP);
    (c, c != u)
}

/// Student-t quantile with `nu` degrees of freedom.
pub fn student_t_quantile(u: f64, nu: f64) -> f64 {
    if u == 0.5 {
        return 0.0;
    }
    let tail = if u < 0.5 { u } else { 1.0 - u };
    let x = inv_beta_reg(0.5 * nu, 0.5, 2.0 * tail);
    let t = (nu * (1.0 - x) / x).sqrt();
    if u < 0.5 {
        -t
    } else {
        t
    }
}

impl CopulaSpec {
    pub fn independence() -> Self {
        Self { kind: CopulaKind::Independence }
    }

    pub fn gaussian(rho: f64) -> Result<Self> {
        CopulaKind::Gaussian { rho }.try_into()
    }

    pub fn student_t(rho: f64, nu: f64) -> Result<Self> {
        CopulaKind::StudentT { rho, nu }.try_into()
    }

    pub fn gumbel(theta: f64) -> Result<Self> {
        CopulaKind::Gumbel { theta }.try_into()
    }

    pub fn clayton(theta: f64) -> Result<Self> {
        CopulaKind::Clayton { theta }.try_into()
    }

    pub fn kind(&self) -> &CopulaKind {
        &self.kind
    }

    pub fn family(&self) -> CopulaFamily {
        match self.kind {
            CopulaKind::Independence => CopulaFamily::Independence,
            CopulaKind::Gaussian { .. } => CopulaFamily::Gaussian,
            CopulaKind::StudentT { .. } => CopulaFamily::StudentT,
            CopulaKind::Gumbel { .. } => CopulaFamily::Gumbel,
            CopulaKind::Clayton { .. } => CopulaFamily::Clayton,
        }
    }

    pub fn is_independence(&self) -> bool {
        matches!(self.kind, CopulaKind::Independence)
    }

    /// Log copula density at `(u, v)`, both strictly inside `(0, 1)`.
    pub fn log_density(&self, u: f64, v: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0 && v > 0.0 && v < 1.0) {
            return Err(Error::Domain(format!("copula arguments ({u}, {v}) must lie in (0, 1)")));
        }
        Ok(self.log_density_unchecked(u, v))
    }

    pub(crate) fn log_density_unchecked(&self, u: f64, v: f64) -> f64 {
        match self.kind {
            CopulaKind::Independence => 0.0,
            CopulaKind::Gaussian { rho } => {
                let (a, b) = (std_normal_quantile(u), std_normal_quantile(v));
                let one_m = 1.0 - rho * rho;
                -0.5 * one_m.ln() - (rho * rho * (a * a + b * b) - 2.0 * rho * a * b) / (2.0 * one_m)
            }
            CopulaKind::StudentT { rho, nu } => {
                let (a, b) = (student_t_quantile(u, nu), student_t_quantile(v, nu));
                let one_m = 1.0 - rho * rho;
                let q = (a * a + b * b - 2.0 * rho * a * b) / (nu * one_m);
                ln_gamma(0.5 * (nu + 2.0)) + ln_gamma(0.5 * nu) - 2.0 * ln_gamma(0.5 * (nu + 1.0))
                    - 0.5 * one_m.ln()
                    - 0.5 * (nu + 2.0) * q.ln_1p()
                    + 0.5 * (nu + 1.0) * ((a * a / nu).ln_1p() + (b * b / nu).ln_1p())
            }
            CopulaKind::Gumbel { theta } => {
                let (x, y) = (-u.ln(), -v.ln());
                let s = x.powf(theta) + y.powf(theta);
                let a = s.powf(1.0 / theta);
                -a + x + y + (theta - 1.0) * (x.ln() + y.ln()) + (1.0 / theta - 2.0) * s.ln()
                    + (a + theta - 1.0).ln()
            }
            CopulaKind::Clayton { theta } => {
                let (lu, lv) = (u.ln(), v.ln());
                let inner = ((-theta * lu).exp_m1() + (-theta * lv).exp_m1()).ln_1p();
                theta.ln_1p() - (theta + 1.0) * (lu + lv) - (2.0 + 1.0 / theta) * inner
            }
        }
    }
}

/// Invert Kendall's tau to a family parameter.
///
/// Gaussian and t use `ρ = sin(πτ/2)`, Gumbel `θ = 1/(1 − τ)` and Clayton
/// `θ = 2τ/(1 − τ)`. Gumbel and Clayton cannot express negative dependence.
pub fn tau_to_param(family: CopulaFamily, tau: f64, student_t_dof: f64) -> Result<CopulaSpec> {
    if !(-1.0..=1.0).contains(&tau) {
        return Err(Error::Domain(format!("Kendall tau {tau} outside [-1, 1]")));
    }
    let rho = || (0.5 * PI * tau).sin().clamp(-MAX_ABS_RHO, MAX_ABS_RHO);
    let unfittable = || Error::Unfittable { family: family.name().into(), tau };
    match family {
        CopulaFamily::Independence => Ok(CopulaSpec::independence()),
        CopulaFamily::Gaussian => CopulaSpec::gaussian(rho()),
        CopulaFamily::StudentT => CopulaSpec::student_t(rho(), student_t_dof),
        CopulaFamily::Gumbel => {
            if tau < 0.0 {
                return Err(unfittable());
            }
            CopulaSpec::gumbel(1.0 / (1.0 - tau.min(MAX_TAU)))
        }
        CopulaFamily::Clayton => {
            if tau <= 0.0 {
                return Err(unfittable());
            }
            let t = tau.min(MAX_TAU);
            CopulaSpec::clayton(2.0 * t / (1.0 - t))
        }
    }
}

/// Kendall's tau-a, `(concordant − discordant) / C(n, 2)`, with ties scoring
/// zero. Knight's O(n log n) merge-sort algorithm.
pub fn empirical_kendall_tau(pairs: &[(f64, f64)]) -> Result<f64> {
    let n = pairs.len();
    if n < 2 {
        return Err(Error::InsufficientData("Kendall tau needs at least 2 pairs".into()));
    }
    if pairs.iter().any(|(x, y)| x.is_nan() || y.is_nan()) {
        return Err(Error::Domain("NaN in Kendall tau input".into()));
    }
    let mut v: Vec<(f64, f64)> = pairs.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let ties = |run_lengths: &mut dyn Iterator<Item = u64>| run_lengths.map(|t| t * (t - 1) / 2).sum::<u64>();
    let x_ties = ties(&mut run_lengths(&v, |a, b| a.0 == b.0));
    let joint_ties = ties(&mut run_lengths(&v, |a, b| a.0 == b.0 && a.1 == b.1));

    let mut ys: Vec<f64> = v.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);
    let sorted_y: Vec<(f64, f64)> = ys.iter().map(|&y| (y, 0.0)).collect();
    let y_ties = ties(&mut run_lengths(&sorted_y, |a, b| a.0 == b.0));

    let total = (n as u64) * (n as u64 - 1) / 2;
    let concordant_minus_discordant =
        total as f64 - x_ties as f64 - y_ties as f64 + joint_ties as f64 - 2.0 * swaps as f64;
    Ok(concordant_minus_discordant / total as f64)
}

fn run_lengths<'a>(
    v: &'a [(f64, f64)],
    same: impl Fn(&(f64, f64), &(f64, f64)) -> bool + 'a,
) -> impl Iterator<Item = u64> + 'a {
    let mut i = 0;
    std::iter::from_fn(move || {
        if i >= v.len() {
            return None;
        }
        let start = i;
        i += 1;
        while i < v.len() && same(&v[start], &v[i]) {
            i += 1;
        }
        Some((i - start) as u64)
    })
}

/// Sort ascending, returning the number of strict inversions.
fn merge_count(a: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = a.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (lo, hi) = a.split_at_mut(mid);
        let (blo, bhi) = buf.split_at_mut(mid);
        merge_count(lo, blo) + merge_count(hi, bhi)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if a[j].partial_cmp(&a[i]) == Some(Ordering::Less) {
            buf[k] = a[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = a[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&a[i..mid]);
    k += mid - i;
    buf[k..n].copy_from_slice(&a[j..n]);
    a.copy_from_slice(&buf[..n]);
    swaps
}

/// Fit by Kendall-tau inversion. Student-t keeps its degrees of freedom fixed.
pub fn fit_copula(family: CopulaFamily, pairs: &[(f64, f64)], student_t_dof: f64) -> Result<CopulaSpec> {
    if family == CopulaFamily::Independence {
        if pairs.is_empty() {
            return Err(Error::InsufficientData("no pairs to fit".into()));
        }
        return Ok(CopulaSpec::independence());
    }
    let tau = empirical_kendall_tau(pairs)?;
    tau_to_param(family, tau, student_t_dof)
}

/// Outcome of a fit that falls back to independence when the family cannot
/// represent the observed dependence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaFit {
    pub family: CopulaFamily,
    pub spec: CopulaSpec,
    pub tau: f64,
    pub warning: Option<String>,
}

pub fn fit_copula_or_independence(
    family: CopulaFamily,
    pairs: &[(f64, f64)],
    student_t_dof: f64,
) -> Result<CopulaFit> {
    let tau = empirical_kendall_tau(pairs)?;
    match tau_to_param(family, tau, student_t_dof) {
        Ok(spec) => Ok(CopulaFit { family, spec, tau, warning: None }),
        Err(e @ Error::Unfittable { .. }) => Ok(CopulaFit {
            family,
            spec: CopulaSpec::independence(),
            tau,
            warning: Some(format!("{e}; using the independence copula")),
        }),
        Err(e) => Err(e),
    }
}
