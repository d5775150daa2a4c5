use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::mean_field::{NoiseMode, ParamVars};
use crate::models::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 200,
            batch_size: 50,
        }
    }
}

impl OptimizerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning_rate must be >= 0, got {}", self.learning_rate)));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) {
            return Err(Error::Config(format!("adam_beta1 must lie in (0, 1), got {}", self.beta1)));
        }
        if !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(Error::Config(format!("adam_beta2 must lie in (0, 1), got {}", self.beta2)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("adam_epsilon must be positive, got {}", self.epsilon)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// First-order optimizer over flat parameter slots. Minimizes.
#[derive(Debug, Clone)]
pub struct Optimizer {
    spec: OptimizerSpec,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec, slot_sizes: &[usize]) -> Self {
        let zeros = || slot_sizes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        let adam = spec.kind == OptimizerKind::Adam;
        Self {
            spec,
            m: if adam { zeros() } else { vec![] },
            v: if adam { zeros() } else { vec![] },
            t: 0,
        }
    }

    /// Slot sizes of a model: each block's mean, then its log-variance if learned.
    pub fn slots_of(model: &Model) -> Vec<usize> {
        let mut sizes = vec![];
        for p in model.params() {
            sizes.push(p.len());
            if p.is_learned() {
                sizes.push(p.len());
            }
        }
        sizes
    }

    pub fn for_model(spec: OptimizerSpec, model: &Model) -> Self {
        Self::new(spec, &Self::slots_of(model))
    }

    /// One update of every slot in order.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        self.t += 1;
        let lr = self.spec.learning_rate;
        match self.spec.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (x, d) in p.iter_mut().zip(*g) {
                        *x -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (self.spec.beta1, self.spec.beta2, self.spec.epsilon);
                let c1 = 1.0 - b1.powi(self.t);
                let c2 = 1.0 - b2.powi(self.t);
                for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for i in 0..p.len() {
                        let d = g[i];
                        m[i] = b1 * m[i] + (1.0 - b1) * d;
                        v[i] = b2 * v[i] + (1.0 - b2) * d * d;
                        p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                    }
                }
            }
        }
    }

    /// Applies the gradients held by `tape` (of the loss to minimize) to the model.
    pub fn step_model(&mut self, model: &mut Model, tape: &Tape, vars: &[ParamVars]) -> Result<()> {
        let mut grads: Vec<Vec<f64>> = Vec::new();
        for v in vars {
            grads.push(tape.grad(v.mean).ok_or(Error::StaleTape)?.to_vec());
            if let Some(lv) = v.log_variance {
                grads.push(tape.grad(lv).ok_or(Error::StaleTape)?.to_vec());
            }
        }
        let mut slots: Vec<&mut [f64]> = Vec::new();
        for p in model.params_mut() {
            slots.push(p.mean.data_mut());
            if let NoiseMode::Learned { log_variance } = &mut p.noise {
                slots.push(log_variance.data_mut());
            }
        }
        let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        if slots.len() != grad_refs.len() {
            return Err(Error::Mode("model blocks and tape handles disagree".into()));
        }
        self.step(&mut slots, &grad_refs);
        Ok(())
    }
}
