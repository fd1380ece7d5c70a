//! Per-coordinate AdaGrad and SGD with momentum and inverse-time decay.

use crate::error::{Error, Result};
use crate::nnet::{GradientSet, Network};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    AdaGrad,
    SgdMomentum,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::AdaGrad => "adagrad",
            OptimizerKind::SgdMomentum => "sgd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "adagrad" => Some(OptimizerKind::AdaGrad),
            "sgd" => Some(OptimizerKind::SgdMomentum),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Initial AdaGrad accumulator value.
    pub accumulator_init: f64,
    pub momentum: f64,
    /// Inverse-time decay rate applied per step.
    pub decay: f64,
}

impl OptimizerConfig {
    pub fn adagrad(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::AdaGrad,
            learning_rate,
            accumulator_init: 0.1,
            momentum: 0.9,
            decay: 0.001,
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::SgdMomentum,
            ..Self::adagrad(learning_rate)
        }
    }

    pub fn with_scaled_lr(mut self, ratio: f64) -> Self {
        self.learning_rate *= ratio;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("optim.lr", "must be positive"));
        }
        if !(self.accumulator_init >= 0.0 && self.accumulator_init.is_finite()) {
            return Err(Error::invalid("optim.acc_init", "must be nonnegative"));
        }
        if self.kind == OptimizerKind::AdaGrad && self.accumulator_init == 0.0 {
            return Err(Error::invalid(
                "optim.acc_init",
                "AdaGrad needs a positive accumulator start",
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("optim.momentum", "must lie in [0, 1)"));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return Err(Error::invalid("optim.decay", "must be nonnegative"));
        }
        Ok(())
    }

    /// SGD learning rate after `step` updates: `lr / (1 + decay * step)`.
    pub fn decayed_lr(&self, step: u64) -> f64 {
        self.learning_rate / (1.0 + self.decay * step as f64)
    }

    pub fn label(&self) -> String {
        format!("{} {}", self.kind.as_str(), self.learning_rate)
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adagrad(0.1)
    }
}

/// Per-parameter optimizer memory plus the global step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<S> {
    kind: OptimizerKind,
    /// Squared-gradient sums (AdaGrad) or velocities (SGD).
    slots: Vec<S>,
    step: u64,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(param_count: usize, cfg: &OptimizerConfig) -> Self {
        let fill = match cfg.kind {
            OptimizerKind::AdaGrad => S::of(cfg.accumulator_init),
            OptimizerKind::SgdMomentum => S::zero(),
        };
        OptimizerState {
            kind: cfg.kind,
            slots: vec![fill; param_count],
            step: 0,
        }
    }

    pub fn for_network(net: &Network<S>, cfg: &OptimizerConfig) -> Self {
        Self::new(net.param_count(), cfg)
    }

    pub fn slots(&self) -> &[S] {
        &self.slots
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    fn check(&self, params: usize, grads: usize, kind: OptimizerKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::invalid("optim.kind", "state built for another optimizer"));
        }
        for got in [params, grads] {
            if got != self.slots.len() {
                return Err(Error::Shape {
                    expected: self.slots.len(),
                    got,
                });
            }
        }
        Ok(())
    }
}

/// `acc += g^2; w -= lr * g / sqrt(acc)` per coordinate.
pub fn adagrad_step<S: Scalar>(
    state: &mut OptimizerState<S>,
    params: &mut [S],
    grads: &[S],
    cfg: &OptimizerConfig,
) -> Result<()> {
    state.check(params.len(), grads.len(), OptimizerKind::AdaGrad)?;
    let lr = S::of(cfg.learning_rate);
    for ((w, acc), &g) in params.iter_mut().zip(&mut state.slots).zip(grads) {
        if g == S::zero() {
            continue;
        }
        *acc += g * g;
        *w -= lr * g / acc.sqrt();
    }
    state.step += 1;
    Ok(())
}

/// `v = momentum * v - lr_t * g; w += v` with `lr_t` the decayed rate.
pub fn sgd_momentum_step<S: Scalar>(
    state: &mut OptimizerState<S>,
    params: &mut [S],
    grads: &[S],
    cfg: &OptimizerConfig,
) -> Result<()> {
    state.check(params.len(), grads.len(), OptimizerKind::SgdMomentum)?;
    let lr = S::of(cfg.decayed_lr(state.step));
    let m = S::of(cfg.momentum);
    for ((w, v), &g) in params.iter_mut().zip(&mut state.slots).zip(grads) {
        *v = m * *v - lr * g;
        *w += *v;
    }
    state.step += 1;
    Ok(())
}

pub fn step<S: Scalar>(
    state: &mut OptimizerState<S>,
    net: &mut Network<S>,
    grads: &GradientSet<S>,
    cfg: &OptimizerConfig,
) -> Result<()> {
    match cfg.kind {
        OptimizerKind::AdaGrad => adagrad_step(state, net.params_mut(), grads.values(), cfg),
        OptimizerKind::SgdMomentum => {
            sgd_momentum_step(state, net.params_mut(), grads.values(), cfg)
        }
    }
}
