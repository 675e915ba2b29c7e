use alloc::vec;
use alloc::vec::Vec;

use crate::model::{Model, Parameterized};

/// Adaptive-moment optimizer with bias correction.
///
/// Parameters that received no gradient in the last backward pass are left
/// alone, including their moment estimates and step counts.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    slots: Vec<Slot>,
}

#[derive(Debug, Clone, Default)]
struct Slot {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            slots: Vec::new(),
        }
    }

    pub fn step(&mut self, model: &mut Model, lr: f64) {
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let slots = &mut self.slots;
        let mut index = 0;
        model.visit_mut(&mut |p| {
            if slots.len() <= index {
                slots.push(Slot::default());
            }
            let slot = &mut slots[index];
            index += 1;
            if !p.learnable() || !p.touched {
                return;
            }
            if slot.m.len() != p.len() {
                slot.m = vec![0.0; p.len()];
                slot.v = vec![0.0; p.len()];
            }
            slot.t += 1;
            let c1 = 1.0 - libm::pow(b1, slot.t as f64);
            let c2 = 1.0 - libm::pow(b2, slot.t as f64);
            for ((w, &g), (m, v)) in p
                .value
                .iter_mut()
                .zip(&p.grad)
                .zip(slot.m.iter_mut().zip(slot.v.iter_mut()))
            {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= lr * (*m / c1) / (libm::sqrt(*v / c2) + eps);
            }
        });
    }
}
