use infocap_core::autodiff::{check_gradients, Tape, Tensor};
use infocap_core::capacity::solve_noise_for_capacity;
use infocap_core::mean_field::{
    analytic_prior_logdensity_check, assemble_objective, fixed_variance_regularizer, gaussian_kl_standard,
    learned_variance_regularizer, noisy_model_objective, regularizer_value, NoiseMode, ParamVars, Prior,
    VariationalParam,
};
use infocap_core::models::{build_model, classifier_loss, classifier_mean_log_likelihood_plain, ModelSpec, NoiseSpec};
use infocap_core::special_math::Rng;
use proptest::prelude::*;

fn learned_block(mu: Vec<f64>, lv: Vec<f64>) -> VariationalParam {
    let mut p = VariationalParam::learned(Tensor::vector(mu));
    p.noise = NoiseMode::Learned {
        log_variance: Tensor::vector(lv),
    };
    p
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
}

#[test]
fn dual_paths_are_bit_identical() {
    for seed in 0..100u64 {
        let mut rng = Rng::new(seed);
        let d = 2 + rng.below(6) as usize;
        let h = 1 + rng.below(8) as usize;
        let c = 2 + rng.below(4) as usize;
        let prior_var = (rng.uniform() * 4.0 - 2.0).exp();
        let (noise, prior) = match rng.below(4) {
            0 => (NoiseSpec::Zero, Prior::ImproperUniform),
            1 => (NoiseSpec::Fixed { variance: rng.uniform() }, Prior::ImproperUniform),
            2 => (NoiseSpec::Fixed { variance: rng.uniform() }, Prior::Gaussian { variance: prior_var }),
            _ => (NoiseSpec::CapacityBits(0.05 + 8.0 * rng.uniform()), Prior::Gaussian { variance: prior_var }),
        };
        let spec = ModelSpec::classifier(vec![d, h, c], noise, prior);
        let model = build_model(&spec, &mut rng).unwrap();
        let n = 1 + rng.below(6) as usize;
        let x = Tensor::matrix(n, d, (0..n * d).map(|_| rng.standard_normal()).collect()).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(c as u64) as usize).collect();
        let n_train = n + rng.below(100) as usize;
        let n_noise = 1 + rng.below(3) as usize;
        let noise_seed = rng.next_u64();

        let mut tape = Tape::new();
        let vars = model.register(&mut tape);
        let tape_obj = classifier_loss(&mut tape, &model, &vars, &x, &labels, n_train, n_noise, &mut Rng::new(noise_seed))
            .unwrap()
            .value;
        let plain = noisy_model_objective(
            &model.param_blocks(),
            n_noise,
            1.0 / n_train as f64,
            &mut Rng::new(noise_seed),
            |ws, _| classifier_mean_log_likelihood_plain(ws, &x, &labels),
        )
        .unwrap();
        assert_eq!(tape_obj.total.to_bits(), plain.total.to_bits(), "seed {seed}");
        assert_eq!(tape_obj.regularizer.to_bits(), plain.regularizer.to_bits(), "seed {seed}");
        assert_eq!(
            tape_obj.expected_log_likelihood.to_bits(),
            plain.expected_log_likelihood.to_bits(),
            "seed {seed}"
        );
    }
}

#[test]
fn unit_beta_regularizer_tracks_negative_kl() {
    let mut rng = Rng::new(3);
    let k = 5;
    let diffs: Vec<f64> = (0..100)
        .map(|_| {
            let mu: Vec<f64> = (0..k).map(|_| 2.0 * rng.standard_normal()).collect();
            let lv: Vec<f64> = (0..k).map(|_| 1.5 * rng.standard_normal()).collect();
            let neg_kl: f64 = -mu.iter().zip(&lv).map(|(m, l)| gaussian_kl_standard(*m, l.exp())).sum::<f64>();
            regularizer_value(&learned_block(mu, lv), 1.0).unwrap() - neg_kl
        })
        .collect();
    assert!(variance(&diffs) < 1e-20, "{}", variance(&diffs));
    assert!((diffs[0] + k as f64).abs() < 1e-12);
}

#[test]
fn prior_logdensity_differs_by_a_constant() {
    for beta in [1.0, 0.5] {
        let mut rng = Rng::new(4);
        let diffs: Vec<f64> = (0..100)
            .map(|_| {
                let mu: Vec<f64> = (0..3).map(|_| rng.standard_normal()).collect();
                let var: Vec<f64> = (0..3).map(|_| 0.1 + 2.0 * rng.uniform()).collect();
                let lv: Vec<f64> = var.iter().map(|v| v.ln()).collect();
                let reg = regularizer_value(&learned_block(mu.clone(), lv), beta).unwrap();
                analytic_prior_logdensity_check(&mu, &var, beta).unwrap() - reg
            })
            .collect();
        assert!(variance(&diffs) < 1e-20, "beta {beta}: {}", variance(&diffs));
    }
}

#[test]
fn regularizer_gradients() {
    for seed in 0..20u64 {
        let mut rng = Rng::new(seed);
        let mu = Tensor::vector((0..4).map(|_| rng.standard_normal()).collect());
        let lv = Tensor::vector((0..4).map(|_| rng.standard_normal()).collect());
        let prior_var = 0.2 + rng.uniform();
        let fixed = VariationalParam::fixed(mu.clone(), 0.3, Prior::Gaussian { variance: prior_var }).unwrap();
        let r = check_gradients(
            std::slice::from_ref(&mu),
            |t, v| {
                let pv = ParamVars {
                    mean: v[0],
                    log_variance: None,
                };
                fixed_variance_regularizer(t, &fixed, &pv)
            },
            1e-5,
            1e-6,
            1e-10,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
        let learned = learned_block(mu.data().to_vec(), lv.data().to_vec());
        let beta = 0.1 + 3.0 * rng.uniform();
        let r = check_gradients(
            &[mu.clone(), lv.clone()],
            |t, v| {
                let pv = ParamVars {
                    mean: v[0],
                    log_variance: Some(v[1]),
                };
                learned_variance_regularizer(t, &learned, &pv, beta)
            },
            1e-5,
            1e-6,
            1e-10,
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }
}

#[test]
fn capacity_linkage_up_to_fifty_bits() {
    let mut rng = Rng::new(6);
    for i in 0..500 {
        let bits = if i == 0 { 50.0 } else { 50.0 * rng.uniform_pos() };
        let prior = (rng.uniform() * 6.0 - 3.0).exp();
        let p = VariationalParam::for_capacity(Tensor::vector(vec![0.5]), bits, prior).unwrap();
        let back = p.capacity_bits().unwrap();
        assert!((back - bits).abs() <= 1e-9 * bits, "{bits} {prior}: {back}");
    }
}

#[test]
fn samples_have_the_block_moments() {
    let n = 100_000;
    let var = solve_noise_for_capacity(1.0, 1.0).unwrap();
    let p = VariationalParam::fixed(Tensor::vector(vec![0.7; n]), var, Prior::ImproperUniform).unwrap();
    let s = p.sample(&mut Rng::new(12));
    let m = s.data().iter().sum::<f64>() / n as f64;
    assert!((m - 0.7).abs() < 5.0 * (var / n as f64).sqrt(), "{m}");
    assert!((variance(s.data()) - var).abs() < 0.02 * var);

    let lp = learned_block(vec![-0.3; n], vec![0.5f64.ln(); n]);
    let s = lp.sample(&mut Rng::new(13));
    let m = s.data().iter().sum::<f64>() / n as f64;
    assert!((m + 0.3).abs() < 5.0 * (0.5 / n as f64).sqrt(), "{m}");
    assert!((variance(s.data()) - 0.5).abs() < 0.01);
}

#[test]
fn zero_variance_means_no_noise() {
    let p = VariationalParam::fixed(Tensor::vector(vec![1.0, 2.0]), 0.0, Prior::ImproperUniform).unwrap();
    assert_eq!(p.sample(&mut Rng::new(0)), p.mean);
    assert_eq!(p.capacity_bits(), None);
}

proptest! {
    #[test]
    fn fixed_regularizer_shrinks_with_prior_variance(
        mu in proptest::collection::vec(-5.0f64..5.0, 1..6),
        s in 0.01f64..100.0,
        f in 1.001f64..10.0,
    ) {
        prop_assume!(mu.iter().any(|m| m.abs() > 1e-3));
        let r = |v: f64| {
            let p = VariationalParam::fixed(Tensor::vector(mu.clone()), 0.1, Prior::Gaussian { variance: v }).unwrap();
            regularizer_value(&p, 1.0).unwrap().abs()
        };
        prop_assert!(r(s * f) < r(s));
    }

    #[test]
    fn objective_total_is_likelihood_plus_scaled_regularizer(
        mu in proptest::collection::vec(-2.0f64..2.0, 1..5),
        reg_scale in 0.001f64..2.0,
        n_noise in 1usize..5,
        seed in any::<u64>(),
    ) {
        let p = VariationalParam::for_capacity(Tensor::vector(mu.clone()), 2.0, 1.0).unwrap();
        let mut tape = Tape::new();
        let vars = [p.register(&mut tape)];
        let obj = assemble_objective(&mut tape, std::slice::from_ref(&p), &vars, 1.0, n_noise, reg_scale, &mut Rng::new(seed), |t, th, _| {
            let sq = t.square(th[0])?;
            t.sum(sq)
        }).unwrap();
        prop_assert_eq!(obj.value.total, obj.value.expected_log_likelihood + obj.value.regularizer);
        let want = regularizer_value(&p, 1.0).unwrap() * reg_scale;
        prop_assert_eq!(obj.value.regularizer, want);
        prop_assert_eq!(tape.item(obj.total), obj.value.total);
    }
}
