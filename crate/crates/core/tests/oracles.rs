//! Monte Carlo samplers checked against independent deterministic oracles.

use std::f64::consts::PI;

use thicket::gff::Gff;
use thicket::green::{exact_green, q_kernel, ExitSampler};
use thicket::isomorph::{default_suite, verify_eisenbaum};
use thicket::lattice::{build_box, RateModel};
use thicket::limits::sample_tau_bank;
use thicket::rng::{Purpose, RngFactory};
use thicket::stats::{anderson_darling_normal, ks_test, Provenance, Verdict};

/// E τ at the center of [−1, 1]³ for standard Brownian motion: solve
/// ½Δu = −1 with zero boundary values by the cosine series over odd modes.
fn expected_exit_time_d3() -> f64 {
    let kmax = 301;
    let coef = |k: i64| 4.0 / (k as f64 * PI) * if (k - 1) / 2 % 2 == 0 { 1.0 } else { -1.0 };
    let mut sum = 0.0;
    for k in (1..=kmax).step_by(2) {
        for l in (1..=kmax).step_by(2) {
            for m in (1..=kmax).step_by(2) {
                let lambda = (PI / 2.0).powi(2) * (k * k + l * l + m * m) as f64;
                sum += 2.0 * coef(k) * coef(l) * coef(m) / lambda;
            }
        }
    }
    sum
}

/// P(τ > t) for standard Brownian motion started at 0 in [−1, 1].
fn survival_d1(t: f64) -> f64 {
    (0..200)
        .map(|j| {
            let n = (2 * j + 1) as f64;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * 4.0 / (n * PI) * (-n * n * PI * PI * t / 8.0).exp()
        })
        .sum()
}

#[test]
fn series_oracles_are_sane() {
    // separable lower bound: the cube exit time exceeds no single-coordinate exit
    let e = expected_exit_time_d3();
    assert!(e > 0.4 && e < 1.0, "{e}");
    assert!((survival_d1(0.0) - 1.0).abs() < 1e-2);
    assert!(survival_d1(1.0) > 0.0 && survival_d1(1.0) < 1.0);
}

#[test]
fn mean_exit_time_matches_pde_solution() {
    let oracle = expected_exit_time_d3();
    let bank = sample_tau_bank(3, 10_000, 1e-4, &RngFactory::new(11)).unwrap();
    let mean = bank.moments().mean();
    assert!(
        (mean / oracle - 1.0).abs() < 0.02,
        "E tau = {mean}, oracle {oracle}"
    );
}

#[test]
fn exit_time_law_matches_survival_series() {
    let bank = sample_tau_bank(1, 10_000, 1e-4, &RngFactory::new(12)).unwrap();
    let p_hat = bank.taus.iter().filter(|&&t| t <= 1.0).count() as f64 / bank.len() as f64;
    let p = 1.0 - survival_d1(1.0);
    assert!(
        (p_hat / p - 1.0).abs() < 0.02,
        "P(tau <= 1) = {p_hat}, series {p}"
    );
}

#[test]
fn gff_covariance_matches_green_function() {
    let b = build_box(2, 2, RateModel::UnitRate).unwrap();
    let g = exact_green(&b.graph, &b.domain).unwrap();
    let field = Gff::from_domain(&b.graph, &b.domain).unwrap();
    let n = 20_000;
    let samples = field.sample_many(n, &RngFactory::new(13), Purpose::Field);
    let m = field.len();
    for i in 0..m {
        for j in i..m {
            let cov = samples.iter().map(|s| s[i] * s[j]).sum::<f64>() / n as f64;
            let target = g.get(i, j);
            // Var(φ_i φ_j) = G_ii G_jj + G_ij²
            let se = ((g.get(i, i) * g.get(j, j) + target * target) / n as f64).sqrt();
            assert!(
                (cov - target).abs() < 5.0 * se,
                "({i},{j}): {cov} vs {target}"
            );
        }
    }
    let center = field.sites().iter().position(|&v| v == b.origin()).unwrap();
    let xs: Vec<f64> = samples.iter().map(|s| s[center]).collect();
    let a2 = anderson_darling_normal(&xs, 0.0, g.get(center, center).sqrt()).unwrap();
    assert!(a2 < 3.857, "A² = {a2}");
}

#[test]
fn ks_test_examples() {
    use rand::Rng;
    let mut rng = RngFactory::new(14).stream(Purpose::Custom(1), 0);
    let xs: Vec<f64> = (0..10_000)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let exp = |rate: f64| {
        move |x: f64| {
            if x <= 0.0 {
                0.0
            } else {
                1.0 - (-rate * x).exp()
            }
        }
    };
    let same = ks_test("exp1", &xs, exp(1.0), 0.01, Provenance::Trivial).unwrap();
    assert_eq!(same.verdict, Verdict::Pass);
    let other = ks_test("exp2", &xs, exp(2.0), 0.01, Provenance::Derived).unwrap();
    assert_eq!(other.verdict, Verdict::Fail);
    assert!(ks_test("short", &xs[..5], exp(1.0), 0.01, Provenance::Trivial).is_err());
}

#[test]
fn standard_errors_shrink_like_root_n() {
    let b = build_box(2, 1, RateModel::UnitRate).unwrap();
    let suite = default_suite(b.domain.len(), b.domain.slot(b.origin()).unwrap(), 0, 1);
    let factory = RngFactory::new(15);
    let small = verify_eisenbaum(
        &b.graph,
        &b.domain,
        b.origin(),
        1.0,
        &suite,
        10_000,
        &factory,
    )
    .unwrap();
    let large = verify_eisenbaum(
        &b.graph,
        &b.domain,
        b.origin(),
        1.0,
        &suite,
        100_000,
        &factory,
    )
    .unwrap();
    for (s, l) in small.rows.iter().zip(&large.rows) {
        let ratio = s.pooled_se() / l.pooled_se();
        assert!(
            (ratio / 10f64.sqrt() - 1.0).abs() < 0.2,
            "{}: ratio {ratio}",
            s.name
        );
    }

    let q = |n| {
        q_kernel(
            &[0.0, 0.0, 0.0],
            &[0.5, 0.0, 0.0],
            n,
            ExitSampler::WalkOnSpheres { eps: 1e-3 },
            &factory,
        )
        .unwrap()
    };
    let ratio = q(2_000).se / q(20_000).se;
    assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.2, "q ratio {ratio}");
}
