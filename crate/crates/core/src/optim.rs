//! SGD with momentum and L2 weight decay, plus the step learning-rate schedule.
//!
//! One step with learning rate `lr`:
//!
//! ```text
//! g' = g + weight_decay * p
//! v  = momentum * v + g'
//! p  = p - lr * v
//! ```
//!
//! The velocity starts at zero, so the first step is plain SGD on `g'`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self { momentum: 0.9, weight_decay: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sgd<F> {
    pub config: SgdConfig,
    velocity: Vec<F>,
}

impl<F: Real> Sgd<F> {
    pub fn new(config: SgdConfig, num_params: usize) -> Self {
        Self { config, velocity: vec![F::zero(); num_params] }
    }

    pub fn velocity(&self) -> &[F] {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut [F], grads: &[F], lr: f64) -> Result<()> {
        if params.len() != self.velocity.len() || grads.len() != params.len() {
            return Err(Error::contract(format!(
                "optimizer holds {} slots, got {} params and {} grads",
                self.velocity.len(),
                params.len(),
                grads.len()
            )));
        }
        let (mu, wd, lr) = (F::lit(self.config.momentum), F::lit(self.config.weight_decay), F::lit(lr));
        for ((p, &g), v) in params.iter_mut().zip(grads).zip(self.velocity.iter_mut()) {
            *v = mu * *v + (g + wd * *p);
            *p -= lr * *v;
        }
        Ok(())
    }
}

/// Step schedule: `base_lr` divided by 10 once for every milestone `≤ iteration`.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub milestones: Vec<usize>,
}

impl LrSchedule {
    pub fn new(base_lr: f64, milestones: Vec<usize>) -> Result<Self> {
        if !(base_lr.is_finite() && base_lr >= 0.0) {
            return Err(Error::contract(format!("learning rate {base_lr} must be finite and non-negative")));
        }
        if milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::contract("lr milestones must be strictly increasing"));
        }
        Ok(Self { base_lr, milestones })
    }

    pub fn lr_at(&self, iteration: usize) -> f64 {
        let drops = self.milestones.iter().filter(|&&m| m <= iteration).count();
        (0..drops).fold(self.base_lr, |lr, _| lr / 10.0)
    }
}
