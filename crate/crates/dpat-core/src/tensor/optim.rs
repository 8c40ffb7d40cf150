//! Adam and the cosine learning-rate schedule.

use std::collections::BTreeMap;

use super::Parameter;

/// Cosine annealing from `lr_max` at step 0 to `lr_min` at step `total`.
/// Monotone nonincreasing over `0..=total`.
pub fn cosine_lr(step: usize, total: usize, lr_max: f64, lr_min: f64) -> f64 {
    if total == 0 {
        return lr_min;
    }
    let t = (step.min(total)) as f64 / total as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
}

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam with bias correction. First/second moment state is keyed by
/// parameter name, so the set of parameters must stay stable across steps.
pub struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: u64,
    state: BTreeMap<String, Moments>,
}

impl Adam {
    pub fn new() -> Adam {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            state: BTreeMap::new(),
        }
    }

    /// One update over `params` at rate `lr`. Parameters without an
    /// accumulated gradient are skipped.
    pub fn step(&mut self, params: &mut [&mut Parameter], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for p in params.iter_mut() {
            let Some(grad) = p.grad() else { continue };
            let slot = self.state.entry(p.name().to_string()).or_insert_with(|| Moments {
                m: vec![0.0; grad.len()],
                v: vec![0.0; grad.len()],
            });
            let mut data = p.tensor().data().to_vec();
            for i in 0..grad.len() {
                slot.m[i] = self.beta1 * slot.m[i] + (1.0 - self.beta1) * grad[i];
                slot.v[i] = self.beta2 * slot.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                let m_hat = slot.m[i] / bc1;
                let v_hat = slot.v[i] / bc2;
                data[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            p.set_data(data).expect("parameter shape is stable");
        }
    }
}

impl Default for Adam {
    fn default() -> Self {
        Adam::new()
    }
}
