use mmfusion::analysis::{kl_compressed_gaussian, kl_gaussian, roc};
use mmfusion::detectors::llr_compressed_gaussian;
use mmfusion::moments::{case1_moments, case2_moments, MomentModel};
use mmfusion::multimodal_gen::{generate, Case, CaseIIParams, CaseIParams, Hypothesis};
use mmfusion::projection::{draw_projection, push_moments, CompressedMoments};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn mann_whitney(h0: &[f64], h1: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &b in h1 {
        for &a in h0 {
            wins += if b > a { 1.0 } else if b == a { 0.5 } else { 0.0 };
        }
    }
    wins / (h0.len() * h1.len()) as f64
}

fn spd(dim: usize, entries: &[f64], ridge: f64) -> DMatrix<f64> {
    let b = DMatrix::from_row_slice(dim, dim, &entries[..dim * dim]);
    &b * b.transpose() + DMatrix::identity(dim, dim) * ridge
}

fn direct_log_pdf(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    // LU with one step of iterative refinement; an explicit inverse loses
    // more than the tolerance on nearly singular projections.
    let d = y - mean;
    let lu = cov.clone().lu();
    let mut x = lu.solve(&d).unwrap();
    x += lu.solve(&(&d - cov * &x)).unwrap();
    -0.5 * (d.dot(&x) + lu.determinant().ln() + y.len() as f64 * (2.0 * std::f64::consts::PI).ln())
}

fn case1(s0: f64, s1: f64, scale0: f64, n: usize) -> MomentModel {
    case1_moments(&CaseIParams { sigma0_sq: s0, sigma1_sq: s1, lambda0: 1.0 / scale0 }, n).unwrap()
}

fn case2(scale0: f64, scale1: f64, a0: f64, alpha1: f64, n: usize) -> MomentModel {
    case2_moments(
        &CaseIIParams { lambda0: 1.0 / scale0, lambda1: 1.0 / scale1, a0, alpha1 },
        n,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn auc_matches_mann_whitney(
        h0 in prop::collection::vec(-20i32..20, 1..40),
        h1 in prop::collection::vec(-20i32..20, 1..40),
    ) {
        let h0: Vec<f64> = h0.into_iter().map(f64::from).collect();
        let h1: Vec<f64> = h1.into_iter().map(f64::from).collect();
        let c = roc(&h0, &h1).unwrap();
        prop_assert!((c.auc - mann_whitney(&h0, &h1)).abs() <= 1e-12);
        prop_assert!((c.auc - c.trapezoid_auc()).abs() <= 1e-12);
        for w in c.points.windows(2) {
            prop_assert!(w[1].pf >= w[0].pf && w[1].pd >= w[0].pd);
        }
    }

    #[test]
    fn roc_invariant_under_increasing_transforms(
        h0 in prop::collection::vec(-40i32..40, 1..50),
        h1 in prop::collection::vec(-40i32..40, 1..50),
    ) {
        let h0: Vec<f64> = h0.into_iter().map(f64::from).collect();
        let h1: Vec<f64> = h1.into_iter().map(f64::from).collect();
        let base = roc(&h0, &h1).unwrap();
        let f = |x: f64| (x / 4.0).exp() + x * x * x;
        let h0t: Vec<f64> = h0.iter().map(|&x| f(x)).collect();
        let h1t: Vec<f64> = h1.iter().map(|&x| f(x)).collect();
        prop_assert_eq!(&roc(&h0t, &h1t).unwrap(), &base);
    }

    #[test]
    fn gaussian_kl_nonnegative_on_random_pairs(
        dim in 1usize..5,
        a in prop::collection::vec(-2.0f64..2.0, 16),
        b in prop::collection::vec(-2.0f64..2.0, 16),
        mu in prop::collection::vec(-3.0f64..3.0, 8),
    ) {
        let cm = CompressedMoments::from_parts(
            [DVector::from_column_slice(&mu[..dim]), DVector::from_column_slice(&mu[4..4 + dim])],
            [spd(dim, &a, 0.05), spd(dim, &b, 0.05)],
        ).unwrap();
        let kl = kl_gaussian(&cm);
        prop_assert!(kl >= 0.0);
        // Dense reference with an explicit inverse.
        let (c0, c1) = (cm.cov(Hypothesis::H0), cm.cov(Hypothesis::H1));
        let inv1 = c1.clone().try_inverse().unwrap();
        let d = cm.mean(Hypothesis::H1) - cm.mean(Hypothesis::H0);
        let reference = 0.5 * ((&inv1 * c0).trace() + (d.transpose() * &inv1 * &d)[(0, 0)] - dim as f64
            + (c1.determinant() / c0.determinant()).ln());
        prop_assert!((kl - reference.max(0.0)).abs() <= 1e-7 * reference.abs().max(1.0));
    }

    #[test]
    fn compressed_kl_nonnegative_and_nested(
        seed in any::<u64>(),
        n in 2usize..12,
        s0 in 0.5f64..8.0,
        s1 in 0.5f64..8.0,
        scale0 in 1.0f64..15.0,
        use_case2 in any::<bool>(),
    ) {
        let model = if use_case2 { case2(scale0, scale0 * 1.1, 5.0 + s0, 5.0 + s1, n) } else { case1(s0, s1, scale0, n) };
        let mut prev = -f64::INFINITY;
        for m in 1..=n {
            let kl = kl_compressed_gaussian(&model, &draw_projection(m, n, 2, seed).unwrap()).unwrap();
            prop_assert!(kl >= 0.0);
            prop_assert!(kl >= prev - 1e-9, "M = {m}: {kl} < {prev}");
            prev = kl;
        }
    }

    #[test]
    fn compressed_llr_matches_direct_density(
        seed in any::<u64>(),
        n in 1usize..3,
        m_frac in 0.0f64..1.0,
        y in prop::collection::vec(-30.0f64..30.0, 4),
        use_case2 in any::<bool>(),
    ) {
        let m = 1 + ((n as f64 * m_frac) as usize).min(n - 1);
        let model = if use_case2 { case2(10.0, 10.2, 9.8, 10.0, n) } else { case1(5.0, 5.1, 10.0, n) };
        let cm = push_moments(&model, &draw_projection(m, n, 2, seed).unwrap()).unwrap();
        let y = DVector::from_column_slice(&y[..2 * m]);
        let got = llr_compressed_gaussian(&y, &cm).unwrap().value;
        let l1 = direct_log_pdf(&y, cm.mean(Hypothesis::H1), cm.cov(Hypothesis::H1));
        let l0 = direct_log_pdf(&y, cm.mean(Hypothesis::H0), cm.cov(Hypothesis::H0));
        let want = l1 - l0;
        prop_assert!((got - want).abs() <= 1e-8 * (l1.abs() + l0.abs()), "{got} vs {want}");
    }

    #[test]
    fn compressed_llr_is_scale_invariant(seed in any::<u64>(), c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
        let case = Case::preset(2).unwrap();
        let model = case2(10.0, 10.2, 9.8, 10.0, 40);
        let proj = draw_projection(8, 40, 2, seed).unwrap();
        let scaled = proj.scaled(c);
        let x = generate(&case, Hypothesis::H1, 40, seed ^ 0x55).unwrap();
        let a = llr_compressed_gaussian(&proj.compress(&x).unwrap(), &push_moments(&model, &proj).unwrap()).unwrap();
        let b = llr_compressed_gaussian(&scaled.compress(&x).unwrap(), &push_moments(&model, &scaled).unwrap()).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-8 * a.value.abs().max(1.0), "{} vs {}", a.value, b.value);
    }
}

#[test]
fn factorization_succeeds_on_many_seeds() {
    let m1 = case1(5.0, 5.1, 10.0, 200);
    let m2 = case2(10.0, 10.2, 9.8, 10.0, 200);
    for seed in 0..100 {
        let proj = draw_projection(40, 200, 2, seed).unwrap();
        push_moments(&m1, &proj).unwrap();
        push_moments(&m2, &proj).unwrap();
    }
}

#[test]
fn coincident_moments_give_zero_kl() {
    let model = case2(10.0, 10.2, 9.8, 10.0, 30);
    let h1 = model.hypothesis(Hypothesis::H1).clone();
    let same = MomentModel::new(2, 30, h1.clone(), h1).unwrap();
    for seed in 0..10 {
        let kl = kl_compressed_gaussian(&same, &draw_projection(12, 30, 2, seed).unwrap()).unwrap();
        assert!(kl.abs() <= 1e-10, "{kl}");
    }
}
