use std::f64::consts::{E, LN_2, PI};

use infocap_core::capacity::{
    beta_capacity_table, conditional_entropy, fixed_variance_capacity, gamma_mixture_marginal_density,
    learned_variance_capacity, mc_capacity_estimate, solve_noise_for_capacity, BetaChannelSpec, CapacitySource,
    ChannelSpec,
};
use infocap_core::special_math::{integrate_adaptive_scaled, QuadratureSpec, Rng};
use proptest::prelude::*;
use statrs::distribution::{Continuous, Gamma};
use statrs::function::gamma::digamma;

/// Learned-variance capacity by plain trapezoid sums in `u = ln σ²` and
/// `θ̃`, with the statrs Gamma density and digamma.
fn trapezoid_capacity_bits(beta: f64) -> f64 {
    let prior = Gamma::new(beta / 2.0 + 1.0, beta / 2.0).unwrap();
    let mean_var = (beta / 2.0 + 1.0) / (beta / 2.0);
    let (ulo, uhi, nu) = (mean_var.ln() - 40.0, mean_var.ln() + 6.0, 3000);
    let du = (uhi - ulo) / nu as f64;
    let weights: Vec<(f64, f64)> = (0..=nu)
        .map(|i| {
            let u = ulo + i as f64 * du;
            let s = u.exp();
            let end = if i == 0 || i == nu { 0.5 } else { 1.0 };
            (s + 1.0 / beta, end * du * prior.pdf(s) * s)
        })
        .collect();
    let density = |t: f64| {
        weights
            .iter()
            .map(|&(v, w)| w * (-0.5 * t * t / v).exp() / (2.0 * PI * v).sqrt())
            .sum::<f64>()
    };
    let reach = 14.0 * (1.0 + 3.0 / beta).sqrt();
    let nt = 2000;
    let dt = reach / nt as f64;
    let mut h = 0.0;
    for j in 0..=nt {
        let p = density(j as f64 * dt);
        let end = if j == 0 || j == nt { 0.5 } else { 1.0 };
        if p > 0.0 {
            h -= end * dt * p * p.ln();
        }
    }
    let (k, r) = (beta / 2.0 + 1.0, beta / 2.0);
    let cond = 0.5 * (2.0 * PI * E).ln() + 0.5 * (digamma(k) - r.ln());
    (2.0 * h - cond) / LN_2
}

#[test]
fn table_matches_published_values_and_oracle() {
    let quad = QuadratureSpec::default();
    let betas = [0.01, 0.1, 1.0, 10.0, 100.0];
    let published = [0.68, 0.65, 0.45, 0.12, 0.014];
    let rows = beta_capacity_table(&betas, &quad).unwrap();
    for ((beta, report), want) in rows.iter().zip(published) {
        assert!((report.per_dim_bits - want).abs() <= 0.01, "beta {beta}: {}", report.per_dim_bits);
        let oracle = trapezoid_capacity_bits(*beta);
        assert!((report.per_dim_bits - oracle).abs() < 1e-5, "beta {beta}: {} vs oracle {oracle}", report.per_dim_bits);
    }
    for w in rows.windows(2) {
        assert!(w[0].1.per_dim_bits > w[1].1.per_dim_bits);
    }
}

#[test]
fn increasing_beta_grid_gives_decreasing_capacity() {
    let quad = QuadratureSpec::default();
    let betas: Vec<f64> = (0..13).map(|i| 10f64.powf(-2.0 + i as f64 / 3.0)).collect();
    let rows = beta_capacity_table(&betas, &quad).unwrap();
    for w in rows.windows(2) {
        assert!(w[0].1.per_dim_bits > w[1].1.per_dim_bits, "{} -> {}", w[0].0, w[1].0);
    }
}

#[test]
fn round_trip_is_identity() {
    let mut rng = Rng::new(11);
    for _ in 0..1000 {
        let prior = (rng.uniform() * 12.0 - 6.0).exp();
        let target = 0.001 + rng.uniform() * 30.0;
        let noise = solve_noise_for_capacity(target, prior).unwrap();
        let back = fixed_variance_capacity(&ChannelSpec::new(prior, noise, 1).unwrap()).unwrap().per_dim_bits;
        assert!((back - target).abs() <= 1e-10 * target, "{prior} {target}: {back}");
    }
}

#[test]
fn conditional_entropy_routes_agree() {
    let quad = QuadratureSpec::default();
    for beta in [0.01, 0.3, 1.0, 7.0, 100.0] {
        let c = conditional_entropy(&BetaChannelSpec::new(beta).unwrap(), &quad).unwrap();
        assert!((c.closed_form - c.quadrature).abs() < 1e-6, "beta {beta}: {c:?}");
    }
}

#[test]
fn marginal_is_a_density() {
    let quad = QuadratureSpec::default();
    for beta in [0.1f64, 1.0, 10.0] {
        let sd = (1.0 + 3.0 / beta).sqrt();
        let mass = integrate_adaptive_scaled(
            |t| gamma_mixture_marginal_density(t, beta, &quad).unwrap(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            sd,
            &quad,
        )
        .unwrap();
        assert!((mass.value - 1.0).abs() < 1e-6, "beta {beta}: {}", mass.value);
        for i in 0..200 {
            let t = -40.0 + 0.4 * i as f64;
            assert!(gamma_mixture_marginal_density(t, beta, &quad).unwrap() >= 0.0);
        }
    }
}

#[test]
fn fixed_mc_converges_at_root_n() {
    let exact = 0.5;
    let source = CapacitySource::Fixed(ChannelSpec::new(1.0, 1.0, 1).unwrap());
    let mut errs = vec![];
    for (i, n) in [10_000usize, 100_000, 1_000_000].into_iter().enumerate() {
        let est = mc_capacity_estimate(&source, n, &mut Rng::new(500 + i as u64)).unwrap();
        assert!((est.bits - exact).abs() < 3.5 * est.std_err_bits, "n {n}: {est:?}");
        errs.push(est.std_err_bits);
    }
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 10f64.sqrt()).abs() < 0.2, "standard error ratio {ratio}");
    }
}

#[test]
fn beta_mc_agrees_with_quadrature() {
    let quad = QuadratureSpec::default();
    let spec = BetaChannelSpec::new(1.0).unwrap();
    let exact = learned_variance_capacity(&spec, &quad).unwrap().per_dim_bits;
    let est = mc_capacity_estimate(&CapacitySource::Beta(spec), 20_000, &mut Rng::new(9)).unwrap();
    assert!((est.bits - exact).abs() < 3.5 * est.std_err_bits, "{est:?} vs {exact}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn capacity_is_monotone(p in 1e-3f64..1e3, s in 1e-3f64..1e3, f in 1.01f64..10.0) {
        let c = |p, s| fixed_variance_capacity(&ChannelSpec::new(p, s, 1).unwrap()).unwrap().per_dim_bits;
        prop_assert!(c(p * f, s) > c(p, s));
        prop_assert!(c(p, s * f) < c(p, s));
    }

    #[test]
    fn total_scales_with_dims(p in 1e-2f64..1e2, s in 1e-2f64..1e2, d in 1usize..1000) {
        let r = fixed_variance_capacity(&ChannelSpec::new(p, s, d).unwrap()).unwrap();
        prop_assert!((r.total_bits - r.per_dim_bits * d as f64).abs() <= 1e-12 * r.total_bits);
        prop_assert!((r.per_dim_bits * LN_2 - r.per_dim_nats).abs() <= 1e-15 * r.per_dim_nats.max(1.0));
    }
}
