use infocap_core::special_math::{
    digamma, gamma_log_density, integrate_adaptive, log_gamma, sample_gamma, sample_standard_normal, QuadratureSpec, Rng,
};
use infocap_core::Error;
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Gamma};
use statrs::function::gamma::{digamma as sr_digamma, ln_gamma as sr_ln_gamma};

#[test]
fn recurrences_hold_on_random_points() {
    let mut rng = Rng::new(7);
    for _ in 0..1000 {
        let x = 0.01 + rng.uniform() * 99.99;
        let dpsi = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
        assert!((dpsi - 1.0 / x).abs() < 1e-10, "psi recurrence at {x}");
        let dlg = log_gamma(x + 1.0).unwrap() - log_gamma(x).unwrap();
        assert!((dlg - x.ln()).abs() < 1e-10, "lgamma recurrence at {x}");
    }
}

#[test]
fn agrees_with_statrs() {
    let mut rng = Rng::new(8);
    for _ in 0..500 {
        let x = (rng.uniform() * 6.0 - 3.0).exp();
        let lg = log_gamma(x).unwrap();
        assert!((lg - sr_ln_gamma(x)).abs() <= 1e-12 * lg.abs().max(1.0), "lgamma {x}");
        if x >= 0.01 {
            assert!((digamma(x).unwrap() - sr_digamma(x)).abs() < 1e-10, "digamma {x}");
        }
    }
}

#[test]
fn domain_errors() {
    for x in [0.0, -1.0, f64::NAN] {
        assert!(matches!(log_gamma(x), Err(Error::Domain { .. })));
        assert!(matches!(digamma(x), Err(Error::Domain { .. })));
    }
    assert!(sample_gamma(&mut Rng::new(0), 0.0, 1.0, 3).is_err());
    assert!(sample_gamma(&mut Rng::new(0), 1.0, -1.0, 3).is_err());
}

#[test]
fn normal_draw_moments() {
    let xs = sample_standard_normal(&mut Rng::new(42), 100_000);
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() < 0.02 && (var - 1.0).abs() < 0.02, "{mean} {var}");
    assert!(sample_standard_normal(&mut Rng::new(42), 0).is_empty());
}

/// Gamma CDF through the substitution `u = x^k`, which turns the density
/// into a smooth integrand even for shape below one.
fn gamma_cdf_increments(sorted: &[f64], shape: f64, rate: f64, quad: &QuadratureSpec) -> Vec<f64> {
    let log_norm = shape * rate.ln() - log_gamma(shape).unwrap() - shape.ln();
    let f = |u: f64| (log_norm - rate * u.powf(1.0 / shape)).exp();
    let mut cdf = Vec::with_capacity(sorted.len());
    let mut acc = 0.0;
    let mut prev = 0.0;
    for &x in sorted {
        let u = x.powf(shape);
        acc += integrate_adaptive(f, prev, u, quad).unwrap().value;
        prev = u;
        cdf.push(acc);
    }
    cdf
}

#[test]
fn gamma_draws_pass_ks() {
    let n = 100_000;
    let crit = 1.95 / (n as f64).sqrt();
    let quad = QuadratureSpec::default();
    for (i, &(shape, rate)) in [(1.5, 0.5), (0.7, 2.0), (51.0, 50.0), (1.0, 1.0)].iter().enumerate() {
        let mut xs = sample_gamma(&mut Rng::new(100 + i as u64), shape, rate, n).unwrap();
        xs.sort_by(f64::total_cmp);
        let cdf = gamma_cdf_increments(&xs, shape, rate, &quad);
        let oracle = Gamma::new(shape, rate).unwrap();
        let mut d: f64 = 0.0;
        for (j, (&x, &c)) in xs.iter().zip(&cdf).enumerate() {
            d = d.max((j + 1) as f64 / n as f64 - c).max(c - j as f64 / n as f64);
            if j % 997 == 0 {
                assert!((c - oracle.cdf(x)).abs() < 1e-8, "cdf at {x}: {c} vs {}", oracle.cdf(x));
            }
        }
        assert!(d < crit, "shape {shape} rate {rate}: D = {d}");
    }
}

#[test]
fn gamma_means() {
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let m = mean(sample_gamma(&mut Rng::new(1), 1.5, 0.5, 100_000).unwrap());
    assert!((m - 3.0).abs() < 0.05, "{m}");
    let m = mean(sample_gamma(&mut Rng::new(2), 1.0, 1.0, 100_000).unwrap());
    assert!((m - 1.0).abs() < 0.03, "{m}");
}

#[test]
fn gamma_density_normalizes() {
    let quad = QuadratureSpec::default();
    for &(k, r) in &[(1.5, 0.5), (3.0, 2.0), (51.0, 50.0)] {
        let v = integrate_adaptive(|x| gamma_log_density(x, k, r).exp(), 0.0, 200.0, &quad).unwrap();
        assert!((v.value - 1.0).abs() < 1e-8, "{k} {r}: {}", v.value);
    }
}

fn poly_gauss(coef: &[f64], m: f64, s: f64) -> impl Fn(f64) -> f64 + '_ {
    move |x| {
        let p = coef.iter().rev().fold(0.0, |acc, c| acc * x + c);
        p * (-0.5 * ((x - m) / s).powi(2)).exp()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadrature_is_linear(
        cf in proptest::collection::vec(-2.0f64..2.0, 1..5),
        cg in proptest::collection::vec(-2.0f64..2.0, 1..5),
        mf in -2.0f64..2.0, mg in -2.0f64..2.0,
        sf in 0.3f64..1.0, sg in 0.3f64..1.0,
        a in -3.0f64..3.0, b in -3.0f64..3.0,
    ) {
        let quad = QuadratureSpec::default();
        let f = poly_gauss(&cf, mf, sf);
        let g = poly_gauss(&cg, mg, sg);
        let i_f = integrate_adaptive(&f, f64::NEG_INFINITY, f64::INFINITY, &quad).unwrap().value;
        let i_g = integrate_adaptive(&g, f64::NEG_INFINITY, f64::INFINITY, &quad).unwrap().value;
        let i_fg = integrate_adaptive(|x| a * f(x) + b * g(x), f64::NEG_INFINITY, f64::INFINITY, &quad).unwrap().value;
        let lin = a * i_f + b * i_g;
        let tol = |v: f64| quad.abs_tol.max(quad.rel_tol * v.abs());
        let combined = tol(i_fg) + a.abs() * tol(i_f) + b.abs() * tol(i_g);
        prop_assert!((i_fg - lin).abs() <= 2.0 * combined, "{} vs {}", i_fg, lin);
    }

    #[test]
    fn streams_replay(seed in any::<u64>(), n in 0usize..64) {
        let a = sample_standard_normal(&mut Rng::new(seed), n);
        let b = sample_standard_normal(&mut Rng::new(seed), n);
        prop_assert_eq!(a, b);
        let mut p = Rng::new(seed);
        let mut q = Rng::new(seed);
        let (c1, c2) = (p.fork(), q.fork());
        prop_assert_eq!(c1, c2);
    }
}
