//! Per-domain stacks of dilated 3x3 convolutions operating at coarse scale.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::layers::{Banks, DenseBlock, DenseConv, NormSettings};
use super::param::{Param, Parameterized, Scope};
use crate::tensor::Tensor;

/// Conv+norm+activation for every dilation but the last, which is a plain
/// convolution with bias producing one logit map per landmark.
#[derive(Debug, Clone)]
pub struct DilatedStack {
    hidden: Vec<DenseBlock>,
    out: DenseConv,
}

impl DilatedStack {
    #[allow(clippy::too_many_arguments)]
    fn new<R: Rng + ?Sized>(
        domain: usize,
        domain_id: &str,
        in_channels: usize,
        width: usize,
        landmarks: usize,
        dilations: &[usize],
        slope: f64,
        norm: NormSettings,
        rng: &mut R,
    ) -> Self {
        let (last, rest) = dilations.split_last().expect("at least one dilation");
        let mut hidden = Vec::with_capacity(rest.len());
        let mut n = in_channels;
        for (i, &d) in rest.iter().enumerate() {
            let prefix = format!("global.l{i}.d{d}");
            hidden.push(DenseBlock::new(
                &prefix,
                n,
                width,
                d,
                Banks::Owned(domain, domain_id),
                slope,
                norm,
                rng,
            ));
            n = width;
        }
        let prefix = format!("global.l{}.d{last}", rest.len());
        let out = DenseConv::new(
            &prefix,
            n,
            landmarks,
            *last,
            true,
            Scope::Domain(domain),
            Some(domain_id),
            rng,
        );
        Self { hidden, out }
    }

    fn forward(&mut self, x: &Tensor) -> Tensor {
        let mut h = x.clone();
        for layer in &mut self.hidden {
            h = layer.forward(&h, 0);
        }
        self.out.forward(&h)
    }

    fn infer(&self, x: &Tensor) -> Tensor {
        let mut h = x.clone();
        for layer in &self.hidden {
            h = layer.infer(&h, 0);
        }
        self.out.infer(&h)
    }

    fn backward(&mut self, g: &Tensor) -> Tensor {
        let mut g = self.out.backward(g);
        for layer in self.hidden.iter_mut().rev() {
            g = layer.backward(&g);
        }
        g
    }

    fn conv_weight_count(&self) -> usize {
        self.hidden.iter().map(DenseBlock::conv_weight_count).sum::<usize>() + self.out.weight_count()
    }
}

impl Parameterized for DilatedStack {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.hidden.iter().for_each(|l| l.visit(f));
        self.out.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.hidden.iter_mut().for_each(|l| l.visit_mut(f));
        self.out.visit_mut(f);
    }
}

/// One [`DilatedStack`] per domain; a forward pass touches only the stack of
/// the requested domain.
#[derive(Debug, Clone)]
pub struct GlobalNet {
    stacks: Vec<DilatedStack>,
    active: Option<usize>,
}

impl GlobalNet {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new<R: Rng + ?Sized>(
        domains: &[String],
        in_channels: &[usize],
        landmarks: &[usize],
        width: usize,
        dilations: &[usize],
        slope: f64,
        norm: NormSettings,
        rng: &mut R,
    ) -> Self {
        let stacks = domains
            .iter()
            .enumerate()
            .map(|(i, id)| DilatedStack::new(i, id, in_channels[i], width, landmarks[i], dilations, slope, norm, rng))
            .collect();
        Self { stacks, active: None }
    }

    /// Coarse-scale logits, training mode.
    pub fn forward(&mut self, x: &Tensor, domain: usize) -> Tensor {
        self.active = Some(domain);
        self.stacks[domain].forward(x)
    }

    pub fn infer(&self, x: &Tensor, domain: usize) -> Tensor {
        self.stacks[domain].infer(x)
    }

    /// Returns the gradient with respect to the coarse input.
    pub fn backward(&mut self, g: &Tensor) -> Tensor {
        let d = self.active.take().expect("global backward without forward");
        self.stacks[d].backward(g)
    }

    pub fn conv_weight_count(&self) -> usize {
        self.stacks.iter().map(DilatedStack::conv_weight_count).sum()
    }
}

impl Parameterized for GlobalNet {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.stacks.iter().for_each(|s| s.visit(f));
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.stacks.iter_mut().for_each(|s| s.visit_mut(f));
    }
}

/// Receptive field (in coarse pixels) of stacked 3x3 convolutions.
pub fn receptive_field(dilations: &[usize]) -> usize {
    1 + 2 * dilations.iter().sum::<usize>()
}
