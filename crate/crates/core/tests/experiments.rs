use std::path::PathBuf;

use infocap_core::autodiff::{Tape, Tensor};
use infocap_core::data::{synthetic_blobs, Dataset};
use infocap_core::experiments::{
    aggregate, evaluate, run_single, run_sweep, train, ExperimentConfig, Optimizer, OptimizerKind, OptimizerSpec,
    RunRecord, RunStatus, SweepAxis, SweepSpec, TrainConfig,
};
use infocap_core::mean_field::Prior;
use infocap_core::models::{build_model, ModelSpec, NoiseSpec};
use infocap_core::special_math::Rng;

fn mnist(train: bool) -> Dataset {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-5k");
    Dataset::load_mnist_dir(&dir, train).unwrap()
}

/// Solves `a·x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

#[test]
fn sgd_reaches_least_squares_optimum() {
    let mut rng = Rng::new(1);
    let (n, d) = (40, 3);
    let x: Vec<f64> = (0..n * d).map(|_| rng.standard_normal()).collect();
    let y: Vec<f64> = (0..n).map(|i| x[i * d] - 2.0 * x[i * d + 2] + 0.5 + 0.3 * rng.standard_normal()).collect();

    // normal equations with an intercept column
    let row = |i: usize| -> Vec<f64> { x[i * d..(i + 1) * d].iter().cloned().chain([1.0]).collect() };
    let mut ata = vec![vec![0.0; d + 1]; d + 1];
    let mut aty = vec![0.0; d + 1];
    for i in 0..n {
        let r = row(i);
        for a in 0..=d {
            aty[a] += r[a] * y[i];
            for b in 0..=d {
                ata[a][b] += r[a] * r[b];
            }
        }
    }
    let optimum = solve(ata, aty);

    let spec = OptimizerSpec {
        kind: OptimizerKind::Sgd,
        learning_rate: 0.1,
        ..OptimizerSpec::default()
    };
    let mut opt = Optimizer::new(spec, &[d, 1]);
    let (mut w, mut b) = (vec![0.0; d], vec![0.0]);
    let xt = Tensor::matrix(n, d, x.clone()).unwrap();
    let yt = Tensor::vector(y.clone());
    for _ in 0..1000 {
        let mut t = Tape::new();
        let wv = t.param(Tensor::matrix(d, 1, w.clone()).unwrap());
        let bv = t.param(Tensor::vector(b.clone()));
        let xv = t.constant(xt.clone());
        let z = t.matmul(xv, wv).unwrap();
        let z = t.add_bias(z, bv).unwrap();
        let pred = t.sum_rows(z).unwrap();
        let yv = t.constant(yt.clone());
        let r = t.sub(pred, yv).unwrap();
        let sq = t.square(r).unwrap();
        let loss = t.mean(sq).unwrap();
        t.backward(loss).unwrap();
        let gw = t.grad(wv).unwrap().to_vec();
        let gb = t.grad(bv).unwrap().to_vec();
        opt.step(&mut [&mut w, &mut b], &[&gw, &gb]);
    }
    for (got, want) in w.iter().chain(&b).zip(&optimum) {
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
    }
}

fn blob_config(noise: NoiseSpec, prior: Prior, epochs: usize) -> ExperimentConfig {
    let mut train = TrainConfig::default();
    train.optimizer.epochs = epochs;
    train.optimizer.batch_size = 16;
    train.optimizer.learning_rate = 1e-2;
    train.eval_noise_samples = 4;
    ExperimentConfig {
        model: ModelSpec::classifier(vec![4, 8, 3], noise, prior),
        train,
        train_size: None,
        hidden_width: 8,
    }
}

fn blobs() -> (Dataset, Dataset) {
    (
        synthetic_blobs(&mut Rng::new(10), 20, 3, 4, 3.0).unwrap(),
        synthetic_blobs(&mut Rng::new(11), 20, 3, 4, 3.0).unwrap(),
    )
}

fn metric_bits(r: &RunRecord) -> Vec<u64> {
    r.epochs
        .iter()
        .flat_map(|e| {
            [e.train.ll, e.test.ll, e.train.elbo_noisy, e.test.elbo_mean, e.objective, e.test.accuracy.unwrap_or(-1.0)]
        })
        .map(f64::to_bits)
        .collect()
}

#[test]
fn zero_learning_rate_freezes_metrics() {
    let (tr, te) = blobs();
    for (noise, prior) in [
        (NoiseSpec::Zero, Prior::ImproperUniform),
        (NoiseSpec::CapacityBits(2.0), Prior::Gaussian { variance: 1.0 }),
    ] {
        let mut cfg = blob_config(noise, prior, 5);
        cfg.train.optimizer.learning_rate = 0.0;
        let rec = run_single(&cfg, &tr, &te, 3).unwrap();
        let first = rec.epochs[0];
        for e in &rec.epochs {
            assert_eq!(e.test.elbo_mean, first.test.elbo_mean);
            assert_eq!(e.train.accuracy, first.train.accuracy);
            if noise == NoiseSpec::Zero {
                assert_eq!(e.test.ll, first.test.ll);
                assert_eq!(e.train.elbo_noisy, first.train.elbo_noisy);
            }
        }
    }
}

#[test]
fn same_seed_same_record() {
    let (tr, te) = blobs();
    for (noise, prior) in [
        (NoiseSpec::CapacityBits(3.0), Prior::Gaussian { variance: 1.0 }),
        (NoiseSpec::Learned { beta: 1.0 }, Prior::Gaussian { variance: 1.0 }),
    ] {
        let cfg = blob_config(noise, prior, 4);
        let a = run_single(&cfg, &tr, &te, 42).unwrap();
        let b = run_single(&cfg, &tr, &te, 42).unwrap();
        let c = run_single(&cfg, &tr, &te, 43).unwrap();
        assert_eq!(metric_bits(&a), metric_bits(&b));
        assert_eq!(a.config_digest, b.config_digest);
        assert_ne!(metric_bits(&a), metric_bits(&c));
        assert_eq!(a.epochs.len(), 4);
    }
}

#[test]
fn sweep_bookkeeping() {
    let (tr, te) = blobs();
    let spec = SweepSpec {
        axis: SweepAxis::CapacityBits,
        values: vec![0.1, 1.0, 10.0],
        repeats: 2,
        base: blob_config(NoiseSpec::Zero, Prior::Gaussian { variance: 1.0 }, 2),
        base_seed: 5,
        jobs: 1,
    };
    let recs = run_sweep(&spec, &tr, &te).unwrap();
    assert_eq!(recs.len(), 6);
    let count = recs[0].parameter_count;
    assert_eq!(count, 4 * 8 + 8 + 8 * 3 + 3);
    for (i, r) in recs.iter().enumerate() {
        assert_eq!(r.run_id, i);
        assert_eq!(r.axis_value, spec.values[i / 2]);
        assert_eq!(r.repeat, i % 2);
        assert!(r.is_ok());
        let bits = r.capacity_bits_per_param.unwrap();
        assert!((bits - r.axis_value).abs() < 1e-12 * r.axis_value);
        assert_eq!(r.capacity_bits_total.unwrap(), bits * count as f64);
        assert_eq!(r.epochs.len(), 2);
    }
    assert_ne!(recs[0].seed, recs[1].seed);
    assert_ne!(recs[0].config_digest, recs[2].config_digest);

    let parallel = run_sweep(&SweepSpec { jobs: 3, ..spec.clone() }, &tr, &te).unwrap();
    for (a, b) in recs.iter().zip(&parallel) {
        assert_eq!((a.seed, a.run_id), (b.seed, b.run_id));
        assert_eq!(metric_bits(a), metric_bits(b));
    }
}

#[test]
fn aggregation_over_five_repeats() {
    let (tr, te) = blobs();
    let spec = SweepSpec {
        axis: SweepAxis::PriorVariance,
        values: vec![0.5, 2.0],
        repeats: 5,
        base: blob_config(NoiseSpec::CapacityBits(4.0), Prior::Gaussian { variance: 1.0 }, 2),
        base_seed: 8,
        jobs: 1,
    };
    let recs = run_sweep(&spec, &tr, &te).unwrap();
    let metric = |r: &RunRecord| r.final_metrics().map(|e| e.test.ll);
    let agg = aggregate(&recs, metric);
    assert_eq!(agg.len(), 2);
    for (a, chunk) in agg.iter().zip(recs.chunks(5)) {
        assert_eq!(a.count, 5);
        let xs: Vec<f64> = chunk.iter().map(|r| metric(r).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / 5.0;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((a.mean - mean).abs() < 1e-12 && (a.std - std).abs() < 1e-12);
    }
}

#[test]
fn failed_runs_are_kept() {
    let (tr, te) = blobs();
    let spec = SweepSpec {
        axis: SweepAxis::DatasetSize,
        values: vec![10.0, 500.0],
        repeats: 1,
        base: blob_config(NoiseSpec::Zero, Prior::ImproperUniform, 1),
        base_seed: 1,
        jobs: 1,
    };
    let recs = run_sweep(&spec, &tr, &te).unwrap();
    assert_eq!(recs.len(), 2);
    assert!(recs[0].is_ok());
    assert!(matches!(&recs[1].status, RunStatus::Failed(msg) if msg.contains("500")));
    assert!(aggregate(&recs, |r| r.final_metrics().map(|e| e.test.ll))[1].count == 0);
}

#[test]
fn invalid_sweeps_are_rejected() {
    let (tr, te) = blobs();
    let base = blob_config(NoiseSpec::Zero, Prior::ImproperUniform, 1);
    for (axis, values) in [
        (SweepAxis::CapacityBits, vec![]),
        (SweepAxis::CapacityBits, vec![-1.0]),
        (SweepAxis::Depth, vec![1.5]),
        (SweepAxis::Beta, vec![0.0]),
    ] {
        let spec = SweepSpec {
            axis,
            values,
            repeats: 1,
            base: base.clone(),
            base_seed: 0,
            jobs: 1,
        };
        assert!(run_sweep(&spec, &tr, &te).is_err());
    }
}

#[test]
fn untrained_classifier_is_at_chance() {
    let test = mnist(false);
    let spec = ModelSpec::classifier(vec![784, 128, 128, 10], NoiseSpec::Zero, Prior::ImproperUniform);
    let model = build_model(&spec, &mut Rng::new(0)).unwrap();
    let m = evaluate(&model, &test, &mut Rng::new(1), 1).unwrap();
    assert!((m.ll + 10f64.ln()).abs() < 0.2, "{}", m.ll);
    // evaluation leaves the model alone
    let again = evaluate(&model, &test, &mut Rng::new(1), 1).unwrap();
    assert_eq!(format!("{m:?}"), format!("{again:?}"));
}

#[test]
fn more_noise_draws_shrink_the_spread() {
    let test = mnist(false).take_first(200).unwrap();
    let spec = ModelSpec::classifier(vec![784, 32, 10], NoiseSpec::CapacityBits(2.0), Prior::Gaussian { variance: 1.0 });
    let model = build_model(&spec, &mut Rng::new(2)).unwrap();
    let spread = |draws: usize| {
        let lls: Vec<f64> = (0..40)
            .map(|i| evaluate(&model, &test, &mut Rng::new(100 + i), draws).unwrap().ll)
            .collect();
        let m = lls.iter().sum::<f64>() / lls.len() as f64;
        (lls.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (lls.len() - 1) as f64).sqrt()
    };
    let one = evaluate(&model, &test, &mut Rng::new(1), 1).unwrap();
    let many = evaluate(&model, &test, &mut Rng::new(1), 64).unwrap();
    assert_eq!(one.elbo_mean, many.elbo_mean);
    assert_eq!(one.accuracy, many.accuracy);
    let ratio = spread(1) / spread(64);
    assert!((5.0..13.0).contains(&ratio), "spread ratio {ratio}");
    // the reported standard error tracks the observed spread
    assert!((many.ll_std_err / spread(64) - 1.0).abs() < 0.5);
}

#[test]
fn step_budget_sets_epochs() {
    let mut cfg = TrainConfig::default();
    cfg.optimizer.batch_size = 20;
    cfg.step_budget = Some(100);
    assert_eq!(cfg.epochs_for(200), 10);
    assert_eq!(cfg.epochs_for(50), 34);
    assert_eq!(cfg.epochs_for(1000), 2);
    cfg.step_budget = None;
    assert_eq!(cfg.epochs_for(7), cfg.optimizer.epochs);
}

#[test]
fn divergence_is_reported() {
    let (tr, te) = blobs();
    let mut model = build_model(
        &ModelSpec::classifier(vec![4, 8, 3], NoiseSpec::Zero, Prior::ImproperUniform),
        &mut Rng::new(0),
    )
    .unwrap();
    model.params_mut()[3].mean.data_mut()[0] = f64::NAN;
    let err = train(&mut model, &tr, &te, &TrainConfig::default(), &mut Rng::new(0)).unwrap_err();
    assert!(err.to_string().contains("epoch 0"), "{err}");
}
