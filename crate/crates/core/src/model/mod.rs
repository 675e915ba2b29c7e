//! The fused local/global landmark network and its ablation baselines.
//!
//! `Gu2Net` runs a U-Net whose convolutions are separable (per-domain
//! channel-wise filters, shared point-wise filters) and a per-domain stack
//! of dilated convolutions at 1/4 resolution. Both branches are squashed to
//! `(0,1)` and multiplied pixel-wise.

mod accounting;
mod global;
mod layers;
mod local;
mod param;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use accounting::{ParamAccount, SeparableAudit};
pub use global::{receptive_field, GlobalNet};
pub use layers::{BatchNorm, Block, DenseBlock, SeparableBlock};
pub use local::{BlockKind, LocalNet};
pub use param::{Param, Parameterized, Role, Scope};

use crate::data::DomainSpec;
use crate::error::{Error, Result};
use crate::ops::activation::{sigmoid_backward, sigmoid_forward};
use crate::ops::resample::{avg_pool, avg_pool_backward, bilinear_resize, bilinear_resize_backward};
use crate::tensor::Tensor;
use layers::NormSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Local separable U-Net fused with the per-domain global network.
    Gu2net,
    /// Plain U-Net shared by all domains (ReLU activations).
    Unet,
    /// One full U-Net per domain.
    TriUnet,
    /// Local separable U-Net alone.
    LocalOnly,
    /// Global dilated network alone, fed only the downsampled image.
    GlobalOnly,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Gu2net,
        Variant::Unet,
        Variant::TriUnet,
        Variant::LocalOnly,
        Variant::GlobalOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Gu2net => "gu2net",
            Variant::Unet => "unet",
            Variant::TriUnet => "tri_unet",
            Variant::LocalOnly => "local_only",
            Variant::GlobalOnly => "global_only",
        }
    }

    fn has_local(self) -> bool {
        !matches!(self, Variant::GlobalOnly)
    }

    fn has_global(self) -> bool {
        matches!(self, Variant::Gu2net | Variant::GlobalOnly)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub domains: Vec<DomainSpec>,
    /// Number of U-Net levels.
    pub depth: usize,
    /// Channels at the top level; doubled at every level below.
    pub base_channels: usize,
    pub leaky_slope: f64,
    pub dilations: Vec<usize>,
    /// Hidden channel count of every global dilated layer.
    pub global_channels: usize,
    pub global_downsample: usize,
    pub sigma: f64,
    pub norm_momentum: f64,
    pub norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            domains: Vec::new(),
            depth: 4,
            base_channels: 32,
            leaky_slope: 0.01,
            dilations: vec![1, 2, 5, 2, 1],
            global_channels: 64,
            global_downsample: 4,
            sigma: 3.0,
            norm_momentum: 0.1,
            norm_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn with_domains(domains: Vec<DomainSpec>) -> Self {
        Self {
            domains,
            ..Self::default()
        }
    }

    pub fn local_divisor(&self) -> usize {
        1 << (self.depth.saturating_sub(1))
    }

    /// Spatial divisibility every input must satisfy.
    pub fn size_divisor(&self) -> usize {
        lcm(self.local_divisor(), self.global_downsample.max(1))
    }

    pub fn domain_ids(&self) -> Vec<String> {
        self.domains.iter().map(|d| d.domain_id.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.domains.is_empty() {
            return bad("at least one domain is required".into());
        }
        if self.depth < 2 {
            return bad(format!("depth must be at least 2, got {}", self.depth));
        }
        if self.base_channels < 4 {
            return bad(format!("base_channels must be at least 4, got {}", self.base_channels));
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return bad("dilations must be a non-empty list of positive integers".into());
        }
        if self.global_channels == 0 || self.global_downsample == 0 {
            return bad("global_channels and global_downsample must be positive".into());
        }
        if !(self.sigma > 0.0) {
            return bad("sigma must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.norm_momentum) || !(self.norm_eps > 0.0) {
            return bad("norm_momentum must lie in [0,1] and norm_eps must be positive".into());
        }
        if !(self.leaky_slope >= 0.0) {
            return bad("leaky_slope must be non-negative".into());
        }
        let divisor = self.size_divisor();
        for d in &self.domains {
            d.validate(divisor)?;
        }
        for (i, a) in self.domains.iter().enumerate() {
            if self.domains[..i].iter().any(|b| b.domain_id == a.domain_id) {
                return bad(format!("duplicate domain id `{}`", a.domain_id));
            }
        }
        Ok(())
    }
}

fn lcm(a: usize, b: usize) -> usize {
    fn gcd(a: usize, b: usize) -> usize {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    a / gcd(a, b) * b
}

/// Element-wise product of two equally shaped heatmaps.
pub fn fuse(local: &Tensor, global: &Tensor) -> Tensor {
    assert_eq!(local.shape(), global.shape(), "fuse: heatmap shapes differ");
    local.zip_map(global, |l, g| g * l)
}

#[derive(Debug, Clone)]
struct FusionCache {
    image_shape: [usize; 4],
    local_prob: Option<Tensor>,
    global_prob: Option<Tensor>,
    coarse_local_channels: usize,
}

#[derive(Debug, Clone)]
pub struct Model {
    variant: Variant,
    config: ModelConfig,
    local: Option<LocalNet>,
    global: Option<GlobalNet>,
    cache: Option<FusionCache>,
}

impl Model {
    /// Builds and randomly initializes a variant.
    pub fn build<R: Rng + ?Sized>(variant: Variant, config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let ids = config.domain_ids();
        let landmarks: Vec<usize> = config.domains.iter().map(|d| d.num_landmarks).collect();
        let in_channels = config.domains[0].in_channels;
        if config.domains.iter().any(|d| d.in_channels != in_channels) && variant.has_local() {
            return Err(Error::InvalidConfig(
                "the shared local network needs the same input channel count in every domain".into(),
            ));
        }
        let norm = NormSettings {
            momentum: config.norm_momentum,
            eps: config.norm_eps,
        };
        let local = variant.has_local().then(|| {
            let (kind, slope) = match variant {
                Variant::Unet => (BlockKind::SharedDense, 0.0),
                Variant::TriUnet => (BlockKind::PerDomainDense, config.leaky_slope),
                _ => (BlockKind::Separable, config.leaky_slope),
            };
            LocalNet::new(
                kind,
                in_channels,
                config.depth,
                config.base_channels,
                &ids,
                &landmarks,
                slope,
                norm,
                rng,
            )
        });
        let global = variant.has_global().then(|| {
            let inputs: Vec<usize> = config
                .domains
                .iter()
                .map(|d| match variant {
                    Variant::GlobalOnly => d.in_channels,
                    _ => d.in_channels + d.num_landmarks,
                })
                .collect();
            GlobalNet::new(
                &ids,
                &inputs,
                &landmarks,
                config.global_channels,
                &config.dilations,
                config.leaky_slope,
                norm,
                rng,
            )
        });
        Ok(Self {
            variant,
            config,
            local,
            global,
            cache: None,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_domains(&self) -> usize {
        self.config.domains.len()
    }

    pub fn local(&self) -> Option<&LocalNet> {
        self.local.as_ref()
    }

    /// Rejects a batch the network cannot process.
    pub fn check_input(&self, x: &Tensor, domain: usize) -> Result<()> {
        let spec = self.config.domains.get(domain).ok_or(Error::DomainOutOfRange {
            index: domain,
            count: self.config.domains.len(),
        })?;
        if x.channels() != spec.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "domain `{}` expects {} input channels, got {}",
                spec.domain_id,
                spec.in_channels,
                x.channels()
            )));
        }
        if x.batch() == 0 {
            return Err(Error::Empty("batch"));
        }
        let mut divisor = 1;
        if self.variant.has_local() {
            divisor = lcm(divisor, self.config.local_divisor());
        }
        if self.variant.has_global() {
            divisor = lcm(divisor, self.config.global_downsample);
        }
        if !x.height().is_multiple_of(divisor) || !x.width().is_multiple_of(divisor) {
            return Err(Error::Indivisible {
                height: x.height(),
                width: x.width(),
                divisor,
            });
        }
        Ok(())
    }

    /// Training-mode forward pass returning heatmaps in `(0,1)`.
    pub fn forward(&mut self, x: &Tensor, domain: usize) -> Result<Tensor> {
        self.check_input(x, domain)?;
        let k = self.config.global_downsample;
        let (h, w) = (x.height(), x.width());
        let local_prob = self.local.as_mut().map(|net| sigmoid_forward(&net.forward(x, domain)));
        let mut coarse_local_channels = 0;
        let global_prob = match &mut self.global {
            Some(net) => {
                let coarse = match &local_prob {
                    Some(l) => {
                        coarse_local_channels = l.channels();
                        Tensor::concat_channels(&avg_pool(x, k), &avg_pool(l, k))
                    }
                    None => avg_pool(x, k),
                };
                let logits = net.forward(&coarse, domain);
                Some(sigmoid_forward(&bilinear_resize(&logits, h, w)))
            }
            None => None,
        };
        let out = match (&local_prob, &global_prob) {
            (Some(l), Some(g)) => fuse(l, g),
            (Some(l), None) => l.clone(),
            (None, Some(g)) => g.clone(),
            (None, None) => unreachable!("every variant has at least one branch"),
        };
        self.cache = Some(FusionCache {
            image_shape: x.shape(),
            local_prob,
            global_prob,
            coarse_local_channels,
        });
        Ok(out)
    }

    /// Backpropagates `d loss / d output` into every parameter used by the
    /// preceding [`Model::forward`].
    pub fn backward(&mut self, grad_out: &Tensor) {
        let cache = self.cache.take().expect("backward without forward");
        let k = self.config.global_downsample;
        let [n, c, h, w] = cache.image_shape;
        let mut grad_local = cache.local_prob.as_ref().map(|_| grad_out.clone());
        if let (Some(gp), Some(net)) = (&cache.global_prob, &mut self.global) {
            let mut grad_global = grad_out.clone();
            if let (Some(lp), Some(gl)) = (&cache.local_prob, &mut grad_local) {
                *gl = grad_out.zip_map(gp, |g, v| g * v);
                grad_global = grad_out.zip_map(lp, |g, v| g * v);
            }
            let grad_up = sigmoid_backward(&grad_global, gp);
            let coarse_shape = [n, grad_up.channels(), h / k, w / k];
            let grad_logits = bilinear_resize_backward(&grad_up, coarse_shape);
            let grad_coarse = net.backward(&grad_logits);
            if let Some(gl) = &mut grad_local {
                let (_, g_local_coarse) = grad_coarse.split_channels(c);
                debug_assert_eq!(g_local_coarse.channels(), cache.coarse_local_channels);
                gl.add_assign(&avg_pool_backward(&g_local_coarse, k, gl.shape()));
            }
        }
        if let (Some(lp), Some(gl), Some(net)) = (&cache.local_prob, &grad_local, &mut self.local) {
            net.backward(&sigmoid_backward(gl, lp));
        }
    }

    /// Evaluation-mode forward pass (running normalization statistics).
    pub fn infer(&self, x: &Tensor, domain: usize) -> Result<Tensor> {
        self.check_input(x, domain)?;
        let local = match &self.local {
            Some(_) => Some(self.local_heatmap(x, domain)?),
            None => None,
        };
        Ok(match (&self.global, local) {
            (Some(_), Some(l)) => fuse(&l, &self.global_heatmap(x, Some(&l), domain)?),
            (Some(_), None) => self.global_heatmap(x, None, domain)?,
            (None, Some(l)) => l,
            (None, None) => unreachable!("every variant has at least one branch"),
        })
    }

    /// Local branch output in `(0,1)`, evaluation mode.
    pub fn local_heatmap(&self, x: &Tensor, domain: usize) -> Result<Tensor> {
        let net = self
            .local
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig(format!("variant {} has no local network", self.variant)))?;
        self.check_input(x, domain)?;
        Ok(sigmoid_forward(&net.infer(x, domain)))
    }

    /// Global branch output in `(0,1)`, evaluation mode. `local` must be
    /// given exactly when the variant fuses both branches.
    pub fn global_heatmap(&self, x: &Tensor, local: Option<&Tensor>, domain: usize) -> Result<Tensor> {
        let net = self
            .global
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig(format!("variant {} has no global network", self.variant)))?;
        self.check_input(x, domain)?;
        let k = self.config.global_downsample;
        let coarse = match local {
            Some(l) => {
                if (l.batch(), l.height(), l.width()) != (x.batch(), x.height(), x.width()) {
                    return Err(Error::ShapeMismatch(format!(
                        "image {:?} and local heatmap {:?} differ spatially",
                        x.shape(),
                        l.shape()
                    )));
                }
                Tensor::concat_channels(&avg_pool(x, k), &avg_pool(l, k))
            }
            None => avg_pool(x, k),
        };
        let expected = match self.variant {
            Variant::GlobalOnly => self.config.domains[domain].in_channels,
            _ => self.config.domains[domain].in_channels + self.config.domains[domain].num_landmarks,
        };
        if coarse.channels() != expected {
            return Err(Error::ShapeMismatch(format!(
                "global network expects {expected} input channels, got {}",
                coarse.channels()
            )));
        }
        let logits = net.infer(&coarse, domain);
        Ok(sigmoid_forward(&bilinear_resize(&logits, x.height(), x.width())))
    }

    pub fn zero_grad(&mut self) {
        self.visit_mut(&mut |p| p.zero_grad());
    }

    /// Every parameter and buffer as `(name, shape, values)`, in a stable order.
    pub fn state(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push((p.name.clone(), p.shape.clone(), p.value.clone())));
        out
    }

    /// Overwrites parameters from [`Model::state`] output of an identically
    /// configured model.
    pub fn load_state(&mut self, state: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
        let mut expected = Vec::new();
        self.visit(&mut |p| expected.push((p.name.clone(), p.shape.clone())));
        if expected.len() != state.len() {
            return Err(Error::ParamMismatch(format!(
                "model has {} arrays, state has {}",
                expected.len(),
                state.len()
            )));
        }
        for ((name, shape), (sname, sshape, values)) in expected.iter().zip(state) {
            if name != sname || shape != sshape || values.len() != shape.iter().product::<usize>() {
                return Err(Error::ParamMismatch(format!(
                    "expected `{name}` {shape:?}, found `{sname}` {sshape:?}"
                )));
            }
        }
        let mut it = state.iter();
        self.visit_mut(&mut |p| {
            let (_, _, v) = it.next().expect("length checked");
            p.value.copy_from_slice(v);
        });
        Ok(())
    }
}

impl Parameterized for Model {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        if let Some(l) = &self.local {
            l.visit(f);
        }
        if let Some(g) = &self.global {
            g.visit(f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        if let Some(l) = &mut self.local {
            l.visit_mut(f);
        }
        if let Some(g) = &mut self.global {
            g.visit_mut(f);
        }
    }
}
