//! Log-likelihood-ratio scores for the three fusion strategies.
//!
//! All detectors use the convention that positive scores favour H1.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::copulas::{clamp_unit, CopulaFamily, CopulaSpec};
use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::multimodal_gen::{Hypothesis, SampleBlock};
use crate::projection::CompressedMoments;

/// Magnitude at which log-ratios are clamped.
pub const SCORE_CLAMP: f64 = 1e300;

/// Marginal of one modality under H0 and H1, shared by all indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalPair {
    pub h0: DistributionSpec,
    pub h1: DistributionSpec,
}

impl MarginalPair {
    pub fn new(h0: DistributionSpec, h1: DistributionSpec) -> Self {
        Self { h0, h1 }
    }

    pub fn get(&self, h: Hypothesis) -> &DistributionSpec {
        match h {
            Hypothesis::H0 => &self.h0,
            Hypothesis::H1 => &self.h1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Product,
    Copula(CopulaFamily),
    CompressedGaussian,
}

impl DetectorKind {
    pub fn label(&self) -> String {
        match self {
            DetectorKind::Product => "product".into(),
            DetectorKind::Copula(f) => format!("copula_{}", f.name()),
            DetectorKind::CompressedGaussian => "compressed_gaussian".into(),
        }
    }

    /// Parses `product`, `compressed_gaussian` and `copula:<family>`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "product" => Ok(DetectorKind::Product),
            "compressed_gaussian" | "compressed" => Ok(DetectorKind::CompressedGaussian),
            _ => match s.strip_prefix("copula:").or_else(|| s.strip_prefix("copula_")) {
                Some(fam) => Ok(DetectorKind::Copula(CopulaFamily::parse(fam)?)),
                None => Err(Error::Config(format!("unknown detector '{s}'"))),
            },
        }
    }

    pub fn uses_projection(&self) -> bool {
        matches!(self, DetectorKind::CompressedGaussian)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    pub detector: DetectorKind,
    /// Number of clamping events (infinite log-ratios, corner cdf values).
    pub clamps: u32,
}

impl Score {
    fn finish(value: f64, detector: DetectorKind, mut clamps: u32) -> Self {
        let value = if value.is_nan() {
            clamps += 1;
            0.0
        } else if value.abs() > SCORE_CLAMP {
            clamps += 1;
            value.clamp(-SCORE_CLAMP, SCORE_CLAMP)
        } else {
            value
        };
        Self { value, detector, clamps }
    }
}

fn check_marginals(x: &SampleBlock, marginals: &[MarginalPair]) -> Result<()> {
    if marginals.len() != x.modalities() {
        return Err(Error::DimensionMismatch(format!(
            "{} marginal pairs for {} modalities",
            marginals.len(),
            x.modalities()
        )));
    }
    Ok(())
}

fn clamped_log_ratio(pair: &MarginalPair, v: f64, clamps: &mut u32) -> f64 {
    let l1 = pair.h1.ln_pdf(v);
    let l0 = pair.h0.ln_pdf(v);
    let r = l1 - l0;
    if r.is_finite() {
        r
    } else if r.is_nan() {
        // Outside both supports.
        *clamps += 1;
        0.0
    } else {
        *clamps += 1;
        r.clamp(-SCORE_CLAMP, SCORE_CLAMP)
    }
}

/// `Σ_l Σ_n [log f1(x_nl) − log f0(x_nl)]`.
pub fn llr_product(x: &SampleBlock, marginals: &[MarginalPair]) -> Result<Score> {
    check_marginals(x, marginals)?;
    let mut clamps = 0;
    let mut total = 0.0;
    for (l, pair) in marginals.iter().enumerate() {
        for &v in x.row(l) {
            total += clamped_log_ratio(pair, v, &mut clamps);
        }
    }
    Ok(Score::finish(total, DetectorKind::Product, clamps))
}

/// Product term plus `Σ_n [log c1(u¹_1n, u¹_2n) − log c0(u⁰_1n, u⁰_2n)]`, with
/// `u^i` the marginal cdf values under hypothesis `i`.
pub fn llr_copula(x: &SampleBlock, marginals: &[MarginalPair], c1: &CopulaSpec, c0: &CopulaSpec) -> Result<Score> {
    check_marginals(x, marginals)?;
    if x.modalities() != 2 {
        return Err(Error::Unsupported(format!(
            "copula fusion is bivariate; got {} modalities",
            x.modalities()
        )));
    }
    let product = llr_product(x, marginals)?;
    let mut clamps = product.clamps;
    let mut dep = 0.0;
    for (a, b) in x.pairs() {
        dep += copula_term(c1, &marginals[0].h1, &marginals[1].h1, a, b, &mut clamps)
            - copula_term(c0, &marginals[0].h0, &marginals[1].h0, a, b, &mut clamps);
    }
    Ok(Score::finish(product.value + dep, DetectorKind::Copula(c1.family()), clamps))
}

/// `log c(F_1(a), F_2(b))` with corner clamping.
pub(crate) fn copula_term(
    c: &CopulaSpec,
    f1: &DistributionSpec,
    f2: &DistributionSpec,
    a: f64,
    b: f64,
    clamps: &mut u32,
) -> f64 {
    if c.is_independence() {
        return 0.0;
    }
    let (u, cu) = clamp_unit(f1.cdf(a));
    let (v, cv) = clamp_unit(f2.cdf(b));
    *clamps += cu as u32 + cv as u32;
    c.log_density_unchecked(u, v)
}

/// Exact Gaussian log-likelihood ratio `log N(y; μ¹, C¹) − log N(y; μ⁰, C⁰)`
/// via the cached Cholesky factors.
pub fn llr_compressed_gaussian(y: &DVector<f64>, cm: &CompressedMoments) -> Result<Score> {
    if y.len() != cm.dim() {
        return Err(Error::DimensionMismatch(format!(
            "compressed vector has length {}, moments expect {}",
            y.len(),
            cm.dim()
        )));
    }
    let q1 = cm.mahalanobis(Hypothesis::H1, y);
    let q0 = cm.mahalanobis(Hypothesis::H0, y);
    let value = -0.5 * (q1 - q0) - 0.5 * (cm.log_det(Hypothesis::H1) - cm.log_det(Hypothesis::H0));
    Ok(Score::finish(value, DetectorKind::CompressedGaussian, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multimodal_gen::Case;
    use nalgebra::DMatrix;

    fn block(rows: Vec<Vec<f64>>) -> SampleBlock {
        SampleBlock::from_rows(rows, Hypothesis::H0, 0).unwrap()
    }

    #[test]
    fn product_examples() {
        let n = DistributionSpec::normal(0.0, 5.0).unwrap();
        let same = [MarginalPair::new(n, n), MarginalPair::new(n, n)];
        let x = block(vec![vec![0.3, -1.0], vec![2.0, 0.1]]);
        assert_eq!(llr_product(&x, &same).unwrap().value, 0.0);

        let shifted = [MarginalPair::new(n, DistributionSpec::normal(0.0, 5.1).unwrap())];
        let x = block(vec![vec![0.0]]);
        let s = llr_product(&x, &shifted).unwrap().value;
        assert!((s - 0.5 * (5.0f64 / 5.1).ln()).abs() < 1e-15);
        assert!((s + 0.0099).abs() < 1e-4);
    }

    #[test]
    fn product_is_additive() {
        let m = Case::preset(2).unwrap().marginals().unwrap();
        let a = block(vec![vec![3.0, 11.0], vec![0.8, 0.95]]);
        let b = block(vec![vec![25.0], vec![0.5]]);
        let ab = block(vec![vec![3.0, 11.0, 25.0], vec![0.8, 0.95, 0.5]]);
        let sum = llr_product(&a, &m).unwrap().value + llr_product(&b, &m).unwrap().value;
        assert!((llr_product(&ab, &m).unwrap().value - sum).abs() < 1e-12);
    }

    #[test]
    fn product_clamps_support_mismatch() {
        let pair = MarginalPair::new(
            DistributionSpec::normal(0.0, 1.0).unwrap(),
            DistributionSpec::exponential(1.0).unwrap(),
        );
        let s = llr_product(&block(vec![vec![-1.0]]), &[pair]).unwrap();
        assert_eq!(s.value, -SCORE_CLAMP);
        assert_eq!(s.clamps, 1);
        let s = llr_product(&block(vec![vec![-1.0, 2.0]]), &[pair]).unwrap();
        assert!(s.value.is_finite());
    }

    #[test]
    fn copula_reduces_to_product_under_independence() {
        let m = Case::preset(2).unwrap().marginals().unwrap();
        let x = block(vec![vec![3.0, 11.0, 0.2], vec![0.8, 0.95, 0.999]]);
        let ind = CopulaSpec::independence();
        assert_eq!(llr_copula(&x, &m, &ind, &ind).unwrap().value, llr_product(&x, &m).unwrap().value);
    }

    #[test]
    fn copula_term_at_medians() {
        // Symmetric marginals identical under both hypotheses: u = (0.5, 0.5).
        let n = DistributionSpec::normal(0.0, 1.0).unwrap();
        let m = [MarginalPair::new(n, n), MarginalPair::new(n, n)];
        let x = block(vec![vec![0.0], vec![0.0]]);
        let g = CopulaSpec::gaussian(0.5).unwrap();
        let s = llr_copula(&x, &m, &g, &CopulaSpec::independence()).unwrap();
        assert!((s.value - 0.14384).abs() < 1e-5);
        assert_eq!(s.detector, DetectorKind::Copula(CopulaFamily::Gaussian));
    }

    #[test]
    fn copula_requires_two_modalities() {
        let n = DistributionSpec::normal(0.0, 1.0).unwrap();
        let m = [MarginalPair::new(n, n); 3];
        let x = block(vec![vec![0.0], vec![0.0], vec![0.0]]);
        let ind = CopulaSpec::independence();
        assert!(matches!(llr_copula(&x, &m, &ind, &ind), Err(Error::Unsupported(_))));
    }

    #[test]
    fn gaussian_scalar_example() {
        let cm = CompressedMoments::from_parts(
            [DVector::zeros(1), DVector::zeros(1)],
            [DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 2.0)],
        )
        .unwrap();
        let s = llr_compressed_gaussian(&DVector::from_element(1, 2.0), &cm).unwrap().value;
        let expected = -0.5 * 2f64.ln() + 1.0;
        assert!((s - expected).abs() < 1e-14);
        assert!((s - 0.65343).abs() < 1e-5);
    }

    #[test]
    fn gaussian_identical_hypotheses_score_zero() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let mu = DVector::from_vec(vec![1.0, -1.0]);
        let cm = CompressedMoments::from_parts([mu.clone(), mu], [c.clone(), c]).unwrap();
        let s = llr_compressed_gaussian(&DVector::from_vec(vec![5.0, 0.2]), &cm).unwrap();
        assert_eq!(s.value, 0.0);
        assert!(llr_compressed_gaussian(&DVector::zeros(3), &cm).is_err());
    }

    #[test]
    fn detector_labels_round_trip() {
        for s in ["product", "compressed_gaussian", "copula:gaussian", "copula:t", "copula:gumbel", "copula:clayton"] {
            let d = DetectorKind::parse(s).unwrap();
            assert_eq!(DetectorKind::parse(&d.label()).unwrap(), d);
        }
        assert!(DetectorKind::parse("copula:frank").is_err());
        assert!(DetectorKind::parse("magic").is_err());
    }
}
