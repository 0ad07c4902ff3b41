//! Distributional checks that need large samples.

use mmfusion::copulas::{fit_copula, CopulaFamily, CopulaKind, CopulaSpec};
use mmfusion::distributions::{std_normal_cdf, DistributionSpec};
use mmfusion::harness::{scatter_pairs, CaseSelector, ExperimentConfig};
use mmfusion::moments::case2_moments;
use mmfusion::multimodal_gen::{generate, Case, CaseIIParams, Hypothesis};
use mmfusion::projection::{draw_projection, push_moments};
use mmfusion::rng::rng_from_seed;
use rand::Rng;
use rand_distr::StandardNormal;

/// Two-sided KS critical value at the 1% level, asymptotic form.
fn ks_critical(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[test]
fn generator_marginals_pass_ks() {
    let n = 100_000;
    for case in [Case::preset(1).unwrap(), Case::preset(2).unwrap()] {
        let marginals = case.marginals().unwrap();
        for h in Hypothesis::BOTH {
            let block = generate(&case, h, n, 99 + h.index() as u64).unwrap();
            for (l, pair) in marginals.iter().enumerate() {
                let spec = pair.get(h);
                let d = ks_statistic(block.row(l).to_vec(), |x| spec.cdf(x));
                assert!(d < ks_critical(n), "{} {h:?} modality {l}: D = {d}", case.label());
            }
        }
    }
}

#[test]
fn first_compressed_coordinate_is_nearly_gaussian() {
    let (n, trials) = (1000, 10_000);
    let case = Case::preset(2).unwrap();
    let model = case2_moments(&CaseIIParams::default(), n).unwrap();
    let proj = draw_projection(1, n, 2, 3).unwrap();
    let cm = push_moments(&model, &proj).unwrap();
    for h in Hypothesis::BOTH {
        let (mu, sd) = (cm.mean(h)[0], cm.cov(h)[(0, 0)].sqrt());
        let z: Vec<f64> = (0..trials)
            .map(|t| {
                let x = generate(&case, h, n, 1_000_000 * (1 + h.index() as u64) + t as u64).unwrap();
                (proj.compress(&x).unwrap()[0] - mu) / sd
            })
            .collect();
        let d = ks_statistic(z, std_normal_cdf);
        assert!(d < ks_critical(trials), "{h:?}: D = {d}");
    }
}

fn mardia_skewness_statistic(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.0 - mx, p.1 - my);
        sxx += dx * dx / n;
        sxy += dx * dy / n;
        syy += dy * dy / n;
    }
    let det = sxx * syy - sxy * sxy;
    let (ixx, ixy, iyy) = (syy / det, -sxy / det, sxx / det);
    let d: Vec<(f64, f64)> = points.iter().map(|p| (p.0 - mx, p.1 - my)).collect();
    let mut b1 = 0.0;
    for a in &d {
        for b in &d {
            let g = a.0 * (ixx * b.0 + ixy * b.1) + a.1 * (ixy * b.0 + iyy * b.1);
            b1 += g * g * g;
        }
    }
    b1 /= n * n;
    n * b1 / 6.0
}

#[test]
fn compressed_scatter_passes_mardia_skewness() {
    // Chi-square with 4 degrees of freedom, 1% upper critical value.
    const CRITICAL: f64 = 13.277;
    for k in [1u8, 2] {
        let cfg = ExperimentConfig {
            case: Some(CaseSelector::Preset(k)),
            seed: Some(8),
            trials: 100,
            ..Default::default()
        };
        let pairs = scatter_pairs(&cfg, 1000).unwrap();
        let compressed: Vec<(f64, f64)> =
            pairs.iter().filter(|p| p.2 == "compressed").map(|p| (p.0, p.1)).collect();
        assert_eq!(compressed.len(), 1000);
        let stat = mardia_skewness_statistic(&compressed);
        assert!(stat < CRITICAL, "case {k}: {stat}");
        // The raw Case II pairs are far from Gaussian, which the statistic detects.
        if k == 2 {
            let raw: Vec<(f64, f64)> =
                pairs.iter().filter(|p| p.2 == "uncompressed").map(|p| (p.0, p.1)).collect();
            assert!(mardia_skewness_statistic(&raw) > CRITICAL);
        }
    }
}

#[test]
fn kendall_fit_agrees_with_gaussian_copula_mle() {
    let rho = 0.6;
    let mut rng = rng_from_seed(77);
    let z: Vec<(f64, f64)> = (0..10_000)
        .map(|_| {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            (a, rho * a + (1.0 - rho * rho).sqrt() * b)
        })
        .collect();
    // Ranks are unchanged by strictly increasing marginal maps.
    let observed: Vec<(f64, f64)> = z.iter().map(|&(a, b)| (a, b.exp())).collect();
    let fitted = match *fit_copula(CopulaFamily::Gaussian, &observed, 5.0).unwrap().kind() {
        CopulaKind::Gaussian { rho } => rho,
        other => panic!("{other:?}"),
    };
    let uv: Vec<(f64, f64)> = z.iter().map(|&(a, b)| (std_normal_cdf(a), std_normal_cdf(b))).collect();
    let loglik = |r: f64| {
        let c = CopulaSpec::gaussian(r).unwrap();
        uv.iter().map(|&(u, v)| c.log_density(u, v).unwrap()).sum::<f64>()
    };
    // Golden-section search for the maximum-likelihood correlation.
    let (mut lo, mut hi) = (-0.99f64, 0.99f64);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let (a, b) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if loglik(a) > loglik(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let mle = 0.5 * (lo + hi);
    assert!((mle - rho).abs() < 0.02, "MLE {mle}");
    assert!((fitted - mle).abs() < 0.02, "Kendall {fitted} vs MLE {mle}");
}

/// Composite Simpson on panels that halve towards both edges of `(eps, 1 - eps)`.
fn graded_nodes(eps: f64) -> Vec<(f64, f64)> {
    let mut edges = vec![0.5];
    let mut w = 0.25;
    while w > eps {
        edges.push(w);
        w *= 0.5;
    }
    edges.push(eps);
    edges.reverse();
    let mut right: Vec<f64> = edges.iter().rev().skip(1).map(|&e| 1.0 - e).collect();
    edges.append(&mut right);
    let sub = 16;
    let mut nodes = Vec::new();
    for win in edges.windows(2) {
        let h = (win[1] - win[0]) / sub as f64;
        for k in 0..=sub {
            let wt = if k == 0 || k == sub { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            nodes.push((win[0] + k as f64 * h, wt * h / 3.0));
        }
    }
    nodes
}

#[test]
fn copula_densities_integrate_to_one_on_graded_grid() {
    let eps = 1e-4;
    let nodes = graded_nodes(eps);
    let specs = [
        CopulaSpec::gaussian(0.3).unwrap(),
        CopulaSpec::gaussian(0.7).unwrap(),
        CopulaSpec::gaussian(-0.7).unwrap(),
        CopulaSpec::student_t(0.3, 5.0).unwrap(),
        CopulaSpec::student_t(0.7, 5.0).unwrap(),
        CopulaSpec::gumbel(1.5).unwrap(),
        CopulaSpec::gumbel(3.0).unwrap(),
        CopulaSpec::clayton(1.0).unwrap(),
        CopulaSpec::clayton(3.0).unwrap(),
    ];
    for c in specs {
        let mut total = 0.0;
        for &(u, wu) in &nodes {
            for &(v, wv) in &nodes {
                total += wu * wv * c.log_density(u, v).unwrap().exp();
            }
        }
        assert!((total - 1.0).abs() < 1e-2, "{c:?}: {total}");
    }
}

#[test]
fn exponential_quantile_sampling_agrees_with_inversion() {
    // A second route to the exponential law: quantile of uniform draws.
    let spec = DistributionSpec::exponential(0.1).unwrap();
    let mut rng = rng_from_seed(4);
    let xs: Vec<f64> = (0..50_000).map(|_| spec.quantile(rng.random_range(1e-12..1.0)).unwrap()).collect();
    assert!(ks_statistic(xs, |x| spec.cdf(x)) < ks_critical(50_000));
}
