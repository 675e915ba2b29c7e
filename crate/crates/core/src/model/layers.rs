//! Trainable layers. `forward` runs in training mode and keeps what the
//! following `backward` needs; `infer` is a pure evaluation-mode pass.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::param::{param_name, Param, Parameterized, Role, Scope};
use crate::error::{Error, Result};
use crate::ops::activation::{leaky_relu_backward, leaky_relu_in_place};
use crate::ops::conv;
use crate::ops::norm::{batch_norm_backward, batch_norm_eval, batch_norm_train, NormCache};
use crate::tensor::Tensor;

/// How a layer's weights are laid out over domains.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Banks<'a> {
    /// One bank used by every domain.
    Shared,
    /// One bank per domain, selected by domain index.
    PerDomain(&'a [String]),
    /// A single bank owned by one domain.
    Owned(usize, &'a str),
}

impl<'a> Banks<'a> {
    fn entries(self) -> Vec<(Scope, Option<&'a str>)> {
        match self {
            Banks::Shared => vec![(Scope::Shared, None)],
            Banks::PerDomain(ids) => ids
                .iter()
                .enumerate()
                .map(|(i, id)| (Scope::Domain(i), Some(id.as_str())))
                .collect(),
            Banks::Owned(i, id) => vec![(Scope::Domain(i), Some(id))],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NormSettings {
    pub momentum: f64,
    pub eps: f64,
}

/// Batch normalization with one or more sets of running statistics. The
/// affine parameters are always a single set; with several statistics sets
/// each domain tracks its own running mean and variance.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    gamma: Param,
    beta: Param,
    running: Vec<[Param; 2]>,
    momentum: f64,
    eps: f64,
    cache: Option<NormCache>,
}

fn running_stats(prefix: &str, channels: usize, scope: Scope, domain: Option<&str>) -> [Param; 2] {
    let mk = |bank: &str, fill: f64, role: Role| {
        Param::new(param_name(prefix, bank, domain), vec![channels], fill, scope, role)
    };
    [
        mk("bn_mean", 0.0, Role::RunningMean),
        mk("bn_var", 1.0, Role::RunningVar),
    ]
}

impl BatchNorm {
    pub(crate) fn new(
        prefix: &str,
        channels: usize,
        scope: Scope,
        domain: Option<&str>,
        settings: NormSettings,
    ) -> Self {
        let mk = |bank: &str, fill: f64, role: Role| {
            Param::new(param_name(prefix, bank, domain), vec![channels], fill, scope, role)
        };
        Self {
            gamma: mk("bn_gamma", 1.0, Role::NormScale),
            beta: mk("bn_beta", 0.0, Role::NormShift),
            running: vec![running_stats(prefix, channels, scope, domain)],
            momentum: settings.momentum,
            eps: settings.eps,
            cache: None,
        }
    }

    /// Shared affine parameters with running statistics kept per domain.
    pub(crate) fn with_domain_stats(prefix: &str, channels: usize, domains: &[String], settings: NormSettings) -> Self {
        let mut bn = Self::new(prefix, channels, Scope::Shared, None, settings);
        bn.running = domains
            .iter()
            .enumerate()
            .map(|(i, id)| running_stats(prefix, channels, Scope::Domain(i), Some(id)))
            .collect();
        bn
    }

    fn stats_index(&self, domain: usize) -> usize {
        if self.running.len() == 1 {
            0
        } else {
            domain
        }
    }

    pub fn forward(&mut self, x: &Tensor, domain: usize) -> Tensor {
        let (y, cache) = batch_norm_train(x, &self.gamma.value, &self.beta.value, self.eps);
        let count = (x.batch() * x.plane()) as f64;
        let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
        let m = self.momentum;
        let i = self.stats_index(domain);
        let [mean, var] = &mut self.running[i];
        for (r, &v) in mean.value.iter_mut().zip(&cache.mean) {
            *r = (1.0 - m) * *r + m * v;
        }
        for (r, &v) in var.value.iter_mut().zip(&cache.var) {
            *r = (1.0 - m) * *r + m * v * unbias;
        }
        self.cache = Some(cache);
        y
    }

    pub fn infer(&self, x: &Tensor, domain: usize) -> Tensor {
        let [mean, var] = &self.running[self.stats_index(domain)];
        batch_norm_eval(
            x,
            &self.gamma.value,
            &self.beta.value,
            &mean.value,
            &var.value,
            self.eps,
        )
    }

    pub fn backward(&mut self, g: &Tensor) -> Tensor {
        let cache = self.cache.take().expect("batch norm backward without forward");
        self.gamma.touched = true;
        self.beta.touched = true;
        batch_norm_backward(g, &cache, &self.gamma.value, &mut self.gamma.grad, &mut self.beta.grad)
    }
}

impl Parameterized for BatchNorm {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.gamma);
        f(&self.beta);
        self.running.iter().flatten().for_each(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
        self.running.iter_mut().flatten().for_each(f);
    }
}

/// Per-domain channel-wise 3x3 filters followed by a shared point-wise
/// projection, batch normalization and leaky ReLU.
#[derive(Debug, Clone)]
pub struct SeparableBlock {
    in_channels: usize,
    out_channels: usize,
    depthwise: Vec<Param>,
    pointwise: Param,
    norm: BatchNorm,
    slope: f64,
    cache: Option<SeparableCache>,
}

#[derive(Debug, Clone)]
struct SeparableCache {
    input: Tensor,
    mid: Tensor,
    pre_act: Tensor,
    domain: usize,
}

impl SeparableBlock {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new<R: Rng + ?Sized>(
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
        domains: &[String],
        slope: f64,
        norm: NormSettings,
        rng: &mut R,
    ) -> Self {
        let depthwise = domains
            .iter()
            .enumerate()
            .map(|(i, id)| {
                Param::uniform(
                    param_name(prefix, "depthwise", Some(id)),
                    vec![in_channels, 9],
                    9,
                    Scope::Domain(i),
                    Role::ConvWeight,
                    rng,
                )
            })
            .collect();
        let pointwise = Param::uniform(
            param_name(prefix, "pointwise", None),
            vec![out_channels, in_channels],
            in_channels,
            Scope::Shared,
            Role::ConvWeight,
            rng,
        );
        Self {
            in_channels,
            out_channels,
            depthwise,
            pointwise,
            norm: BatchNorm::with_domain_stats(prefix, out_channels, domains, norm),
            slope,
            cache: None,
        }
    }

    /// A block named `prefix` with leaky slope 0.01 and default
    /// normalization settings.
    pub fn with_defaults<R: Rng + ?Sized>(
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
        domains: &[String],
        rng: &mut R,
    ) -> Self {
        let norm = NormSettings {
            momentum: 0.1,
            eps: 1e-5,
        };
        Self::new(prefix, in_channels, out_channels, domains, 0.01, norm, rng)
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }
    pub fn out_channels(&self) -> usize {
        self.out_channels
    }
    pub fn domains(&self) -> usize {
        self.depthwise.len()
    }
    pub fn name(&self) -> &str {
        self.pointwise.name.trim_end_matches(".pointwise")
    }

    /// Learnable convolution weights: channel-wise banks plus the point-wise bank.
    pub fn conv_weight_count(&self) -> usize {
        self.depthwise.iter().map(Param::len).sum::<usize>() + self.pointwise.len()
    }

    /// Checked training-mode forward.
    pub fn try_forward(&mut self, x: &Tensor, domain: usize) -> Result<Tensor> {
        if domain >= self.depthwise.len() {
            return Err(Error::DomainOutOfRange {
                index: domain,
                count: self.depthwise.len(),
            });
        }
        Ok(self.forward(x, domain))
    }

    pub fn forward(&mut self, x: &Tensor, domain: usize) -> Tensor {
        assert_eq!(
            x.channels(),
            self.in_channels,
            "{}: input channel mismatch",
            self.name()
        );
        let mid = conv::depthwise_forward(x, &self.depthwise[domain].value, 1);
        let proj = conv::pointwise_forward(&mid, &self.pointwise.value, self.out_channels, None);
        let pre_act = self.norm.forward(&proj, domain);
        let mut y = pre_act.clone();
        leaky_relu_in_place(&mut y, self.slope);
        self.cache = Some(SeparableCache {
            input: x.clone(),
            mid,
            pre_act,
            domain,
        });
        y
    }

    pub fn infer(&self, x: &Tensor, domain: usize) -> Tensor {
        assert_eq!(
            x.channels(),
            self.in_channels,
            "{}: input channel mismatch",
            self.name()
        );
        let mid = conv::depthwise_forward(x, &self.depthwise[domain].value, 1);
        let proj = conv::pointwise_forward(&mid, &self.pointwise.value, self.out_channels, None);
        let mut y = self.norm.infer(&proj, domain);
        leaky_relu_in_place(&mut y, self.slope);
        y
    }

    pub fn backward(&mut self, g: &Tensor) -> Tensor {
        let c = self.cache.take().expect("separable backward without forward");
        let g = leaky_relu_backward(g, &c.pre_act, self.slope);
        let g = self.norm.backward(&g);
        let (pw, pw_grad) = self.pointwise.split_grad();
        let g = conv::pointwise_backward(&c.mid, pw, &g, pw_grad, None);
        let bank = &mut self.depthwise[c.domain];
        let (dw, dw_grad) = bank.split_grad();
        conv::depthwise_backward(&c.input, dw, 1, &g, dw_grad)
    }
}

impl Parameterized for SeparableBlock {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.depthwise.iter().for_each(&mut *f);
        f(&self.pointwise);
        self.norm.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.depthwise.iter_mut().for_each(&mut *f);
        f(&mut self.pointwise);
        self.norm.visit_mut(f);
    }
}

/// A dense 3x3 (possibly dilated) convolution with optional bias.
#[derive(Debug, Clone)]
pub struct DenseConv {
    weight: Param,
    bias: Option<Param>,
    out_channels: usize,
    dilation: usize,
    input: Option<Tensor>,
}

impl DenseConv {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new<R: Rng + ?Sized>(
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
        dilation: usize,
        with_bias: bool,
        scope: Scope,
        domain: Option<&str>,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_channels * 9;
        let weight = Param::uniform(
            param_name(prefix, "conv", domain),
            vec![out_channels, in_channels, 3, 3],
            fan_in,
            scope,
            Role::ConvWeight,
            rng,
        );
        let bias = with_bias.then(|| {
            Param::uniform(
                param_name(prefix, "bias", domain),
                vec![out_channels],
                fan_in,
                scope,
                Role::ConvBias,
                rng,
            )
        });
        Self {
            weight,
            bias,
            out_channels,
            dilation,
            input: None,
        }
    }

    pub fn infer(&self, x: &Tensor) -> Tensor {
        conv::dense_forward(
            x,
            &self.weight.value,
            self.out_channels,
            self.bias.as_ref().map(|b| b.value.as_slice()),
            self.dilation,
        )
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        let y = self.infer(x);
        self.input = Some(x.clone());
        y
    }

    pub fn backward(&mut self, g: &Tensor) -> Tensor {
        let x = self.input.take().expect("conv backward without forward");
        let gb = self.bias.as_mut().map(|b| b.grad_mut());
        let (w, w_grad) = self.weight.split_grad();
        conv::dense_backward(&x, w, self.dilation, g, w_grad, gb)
    }

    pub fn weight_count(&self) -> usize {
        self.weight.len()
    }
}

impl Parameterized for DenseConv {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

/// Standard convolution + batch normalization + leaky ReLU, with one or
/// more weight banks.
#[derive(Debug, Clone)]
pub struct DenseBlock {
    in_channels: usize,
    out_channels: usize,
    convs: Vec<DenseConv>,
    norms: Vec<BatchNorm>,
    slope: f64,
    cache: Option<(Tensor, usize)>,
}

impl DenseBlock {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new<R: Rng + ?Sized>(
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
        dilation: usize,
        banks: Banks<'_>,
        slope: f64,
        norm: NormSettings,
        rng: &mut R,
    ) -> Self {
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        for (scope, domain) in banks.entries() {
            convs.push(DenseConv::new(
                prefix,
                in_channels,
                out_channels,
                dilation,
                false,
                scope,
                domain,
                rng,
            ));
            norms.push(BatchNorm::new(prefix, out_channels, scope, domain, norm));
        }
        Self {
            in_channels,
            out_channels,
            convs,
            norms,
            slope,
            cache: None,
        }
    }

    fn bank(&self, domain: usize) -> usize {
        if self.convs.len() == 1 {
            0
        } else {
            domain
        }
    }

    pub fn conv_weight_count(&self) -> usize {
        self.convs.iter().map(DenseConv::weight_count).sum()
    }

    pub fn forward(&mut self, x: &Tensor, domain: usize) -> Tensor {
        assert_eq!(x.channels(), self.in_channels, "dense block input channel mismatch");
        let b = self.bank(domain);
        let z = self.convs[b].forward(x);
        let pre_act = self.norms[b].forward(&z, 0);
        let mut y = pre_act.clone();
        leaky_relu_in_place(&mut y, self.slope);
        self.cache = Some((pre_act, b));
        y
    }

    pub fn infer(&self, x: &Tensor, domain: usize) -> Tensor {
        assert_eq!(x.channels(), self.in_channels, "dense block input channel mismatch");
        let b = self.bank(domain);
        let mut y = self.norms[b].infer(&self.convs[b].infer(x), 0);
        leaky_relu_in_place(&mut y, self.slope);
        y
    }

    pub fn backward(&mut self, g: &Tensor) -> Tensor {
        let (pre_act, b) = self.cache.take().expect("dense block backward without forward");
        let g = leaky_relu_backward(g, &pre_act, self.slope);
        let g = self.norms[b].backward(&g);
        self.convs[b].backward(&g)
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }
}

impl Parameterized for DenseBlock {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        for (c, n) in self.convs.iter().zip(&self.norms) {
            c.visit(f);
            n.visit(f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for (c, n) in self.convs.iter_mut().zip(&mut self.norms) {
            c.visit_mut(f);
            n.visit_mut(f);
        }
    }
}

/// A backbone convolution block of either kind.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Block {
    Separable(SeparableBlock),
    Dense(DenseBlock),
}

impl Block {
    pub fn forward(&mut self, x: &Tensor, domain: usize) -> Tensor {
        match self {
            Block::Separable(b) => b.forward(x, domain),
            Block::Dense(b) => b.forward(x, domain),
        }
    }
    pub fn infer(&self, x: &Tensor, domain: usize) -> Tensor {
        match self {
            Block::Separable(b) => b.infer(x, domain),
            Block::Dense(b) => b.infer(x, domain),
        }
    }
    pub fn backward(&mut self, g: &Tensor) -> Tensor {
        match self {
            Block::Separable(b) => b.backward(g),
            Block::Dense(b) => b.backward(g),
        }
    }
    pub fn conv_weight_count(&self) -> usize {
        match self {
            Block::Separable(b) => b.conv_weight_count(),
            Block::Dense(b) => b.conv_weight_count(),
        }
    }
}

impl Parameterized for Block {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        match self {
            Block::Separable(b) => b.visit(f),
            Block::Dense(b) => b.visit(f),
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        match self {
            Block::Separable(b) => b.visit_mut(f),
            Block::Dense(b) => b.visit_mut(f),
        }
    }
}

/// Per-domain 1x1 projection (with bias) to each domain's landmark count.
#[derive(Debug, Clone)]
pub struct Head {
    weights: Vec<Param>,
    biases: Vec<Param>,
    cache: Option<(Tensor, usize)>,
}

impl Head {
    pub(crate) fn new<R: Rng + ?Sized>(
        prefix: &str,
        in_channels: usize,
        out_channels: &[usize],
        domains: &[String],
        rng: &mut R,
    ) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (i, (id, &m)) in domains.iter().zip(out_channels).enumerate() {
            weights.push(Param::uniform(
                param_name(prefix, "weight", Some(id)),
                vec![m, in_channels],
                in_channels,
                Scope::Domain(i),
                Role::HeadWeight,
                rng,
            ));
            biases.push(Param::uniform(
                param_name(prefix, "bias", Some(id)),
                vec![m],
                in_channels,
                Scope::Domain(i),
                Role::HeadBias,
                rng,
            ));
        }
        Self {
            weights,
            biases,
            cache: None,
        }
    }

    fn out_channels(&self, domain: usize) -> usize {
        self.biases[domain].len()
    }

    pub fn infer(&self, x: &Tensor, domain: usize) -> Tensor {
        conv::pointwise_forward(
            x,
            &self.weights[domain].value,
            self.out_channels(domain),
            Some(&self.biases[domain].value),
        )
    }

    pub fn forward(&mut self, x: &Tensor, domain: usize) -> Tensor {
        let y = self.infer(x, domain);
        self.cache = Some((x.clone(), domain));
        y
    }

    pub fn backward(&mut self, g: &Tensor) -> Tensor {
        let (x, d) = self.cache.take().expect("head backward without forward");
        let (w, b) = (&mut self.weights[d], &mut self.biases[d]);
        let (wv, w_grad) = w.split_grad();
        conv::pointwise_backward(&x, wv, g, w_grad, Some(b.grad_mut()))
    }
}

impl Parameterized for Head {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            f(w);
            f(b);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            f(w);
            f(b);
        }
    }
}
