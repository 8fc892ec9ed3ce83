//! Adam with bias correction. Frozen parameters get no moment accumulators
//! and are never touched by a step.

use crate::error::{Error, Result};
use crate::tensor::{Parameter, Real};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

struct Slot<F> {
    name: String,
    m: Vec<F>,
    v: Vec<F>,
}

pub struct Adam<F: Real = f32> {
    cfg: AdamConfig,
    step: u64,
    slots: Vec<Slot<F>>,
}

impl<F: Real> Adam<F> {
    /// Builds moment accumulators for every non-frozen parameter, in order.
    pub fn new(params: &[&Parameter<F>], cfg: AdamConfig) -> Self {
        let slots = params
            .iter()
            .filter(|p| !p.frozen())
            .map(|p| Slot {
                name: p.name().to_string(),
                m: vec![F::zero(); p.numel()],
                v: vec![F::zero(); p.numel()],
            })
            .collect();
        Adam { cfg, step: 0, slots }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over the same parameter list the optimizer was built from.
    pub fn step(&mut self, params: &[&Parameter<F>], lr: f64) -> Result<()> {
        self.step += 1;
        let b1 = F::c(self.cfg.beta1);
        let b2 = F::c(self.cfg.beta2);
        let eps = F::c(self.cfg.eps);
        let corr1 = F::one() - F::c(self.cfg.beta1.powi(self.step as i32));
        let corr2 = F::one() - F::c(self.cfg.beta2.powi(self.step as i32));
        let lr = F::c(lr);

        let mut slot_iter = self.slots.iter_mut();
        for p in params {
            if p.frozen() {
                continue;
            }
            let slot = slot_iter.next().ok_or_else(|| {
                Error::Contract("optimizer saw more parameters than it was built with".into())
            })?;
            if slot.name != p.name() {
                return Err(Error::Contract(format!(
                    "optimizer slot {} does not match parameter {}",
                    slot.name,
                    p.name()
                )));
            }
            let grad = match p.grad() {
                Some(g) => g,
                None => continue, // unreached parameter: nothing to apply
            };
            let mut data = p.data_vec();
            for i in 0..data.len() {
                let g = grad[i];
                slot.m[i] = b1 * slot.m[i] + (F::one() - b1) * g;
                slot.v[i] = b2 * slot.v[i] + (F::one() - b2) * g * g;
                let m_hat = slot.m[i] / corr1;
                let v_hat = slot.v[i] / corr2;
                data[i] = data[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
            p.set_data(data);
        }
        if slot_iter.next().is_some() {
            return Err(Error::Contract(
                "optimizer saw fewer parameters than it was built with".into(),
            ));
        }
        Ok(())
    }
}
