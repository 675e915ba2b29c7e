//! Finite-difference oracle for backpropagated gradients.
//!
//! Leaky ReLU and max-pooling make the loss piecewise smooth. A central
//! difference whose stencil straddles a kink says nothing about the
//! derivative at the centre, so every entry is also differenced at half the
//! step: a smooth stencil gives two estimates that agree to O(h^2), a kink
//! makes them disagree at first order. Such entries are reported separately
//! and left out of the comparison.

use super::{params, with_param};
use landmark_core::model::{Model, Scope};
use landmark_core::tensor::Tensor;
use landmark_core::train::{bce_grad, bce_loss};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GroupCheck {
    pub name: String,
    /// `||analytic - numeric|| / max(||analytic||, ||numeric||)` over the
    /// compared entries.
    pub rel_error: f64,
    pub compared: usize,
    pub kinked: usize,
}

fn loss(model: &mut Model, x: &Tensor, y: &Tensor, domain: usize) -> f64 {
    let p = model.forward(x, domain).unwrap();
    bce_loss(&p, y)
}

#[allow(clippy::too_many_arguments)]
fn central(model: &mut Model, group: usize, i: usize, orig: f64, h: f64, x: &Tensor, y: &Tensor, d: usize) -> f64 {
    with_param(model, group, |q| q.value[i] = orig + h);
    let up = loss(model, x, y, d);
    with_param(model, group, |q| q.value[i] = orig - h);
    let down = loss(model, x, y, d);
    with_param(model, group, |q| q.value[i] = orig);
    (up - down) / (2.0 * h)
}

/// Checks every learnable group used by a batch of `domain`: the 8 entries
/// with the largest analytic gradient plus up to 16 random ones.
pub fn check(model: &mut Model, x: &Tensor, y: &Tensor, domain: usize, seed: u64) -> Vec<GroupCheck> {
    model.zero_grad();
    let pred = model.forward(x, domain).unwrap();
    model.backward(&bce_grad(&pred, y));
    let snapshot = params(model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (gi, p) in snapshot.iter().enumerate() {
        let used = matches!(p.scope, Scope::Shared) || p.scope == Scope::Domain(domain);
        if !p.learnable() || !used {
            continue;
        }
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&a, &b| p.grad[b].abs().total_cmp(&p.grad[a].abs()));
        let mut entries: Vec<usize> = order.into_iter().take(8).collect();
        for i in sample(&mut rng, p.len(), p.len().min(16)) {
            if !entries.contains(&i) {
                entries.push(i);
            }
        }
        let scale = p.grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
        let (mut compared, mut kinked) = (0, 0);
        for &i in &entries {
            let orig = p.value[i];
            let numeric = central(model, gi, i, orig, STEP, x, y, domain);
            let half = central(model, gi, i, orig, STEP / 2.0, x, y, domain);
            if (numeric - half).abs() > 1e-6 * scale.max(numeric.abs()).max(1e-12) {
                kinked += 1;
                continue;
            }
            let analytic = p.grad[i];
            diff += (analytic - numeric).powi(2);
            na += analytic * analytic;
            nn += numeric * numeric;
            compared += 1;
        }
        let denom = na.sqrt().max(nn.sqrt());
        out.push(GroupCheck {
            name: p.name.clone(),
            rel_error: if denom == 0.0 { 0.0 } else { diff.sqrt() / denom },
            compared,
            kinked,
        });
    }
    out
}
