use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Which domains a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Shared,
    Domain(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Convolution kernel inside the backbone (local or global network).
    ConvWeight,
    /// Convolution bias inside the backbone.
    ConvBias,
    /// Final per-domain 1x1 projection to landmark channels.
    HeadWeight,
    HeadBias,
    NormScale,
    NormShift,
    /// Normalization running statistics (not learnable).
    RunningMean,
    RunningVar,
}

/// A named array of scalars plus its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub scope: Scope,
    pub role: Role,
    /// Set when a backward pass wrote into `grad` since the last reset.
    pub touched: bool,
}

impl Param {
    pub fn new(name: String, shape: Vec<usize>, fill: f64, scope: Scope, role: Role) -> Self {
        let len = shape.iter().product();
        Self {
            name,
            shape,
            value: vec![fill; len],
            grad: vec![0.0; len],
            scope,
            role,
            touched: false,
        }
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
    pub fn uniform<R: Rng + ?Sized>(
        name: String,
        shape: Vec<usize>,
        fan_in: usize,
        scope: Scope,
        role: Role,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::new(name, shape, 0.0, scope, role);
        let bound = 1.0 / libm::sqrt(fan_in.max(1) as f64);
        for v in &mut p.value {
            *v = rng.random_range(-bound..bound);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn learnable(&self) -> bool {
        !matches!(self.role, Role::RunningMean | Role::RunningVar)
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        self.touched = false;
    }

    /// Gradient buffer, flagged as written.
    pub fn grad_mut(&mut self) -> &mut [f64] {
        self.touched = true;
        &mut self.grad
    }

    /// Values alongside the gradient buffer, flagged as written.
    pub fn split_grad(&mut self) -> (&[f64], &mut [f64]) {
        self.touched = true;
        (&self.value, &mut self.grad)
    }
}

/// Parameter name `{prefix}.{bank}` with a `:{domain_id}` suffix for
/// domain-specific parameters.
pub fn param_name(prefix: &str, bank: &str, domain: Option<&str>) -> String {
    match domain {
        Some(d) => format!("{prefix}.{bank}:{d}"),
        None => format!("{prefix}.{bank}"),
    }
}

/// Anything that owns parameters.
pub trait Parameterized {
    fn visit(&self, f: &mut dyn FnMut(&Param));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param));
}
