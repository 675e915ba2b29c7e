//! U-Net backbone used by the local network and the U-Net baselines.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use super::layers::{Banks, Block, DenseBlock, Head, NormSettings, SeparableBlock};
use super::param::{Param, Parameterized};
use crate::ops::resample::{bilinear_resize, bilinear_resize_backward, max_pool2, max_pool2_backward};
use crate::tensor::Tensor;

/// Convolution flavour used throughout the backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Per-domain channel-wise + shared point-wise.
    Separable,
    /// Standard convolutions shared by all domains.
    SharedDense,
    /// Standard convolutions, one full copy per domain.
    PerDomainDense,
}

/// Encoder with 2x max-pool downsampling per level, decoder with bilinear
/// 2x upsampling and skip concatenation, two conv blocks per level, and a
/// per-domain 1x1 head producing logits.
#[derive(Debug, Clone)]
pub struct LocalNet {
    encoder: Vec<[Block; 2]>,
    decoder: Vec<[Block; 2]>,
    head: Head,
    cache: Option<LocalCache>,
}

#[derive(Debug, Clone)]
struct LocalCache {
    /// Max-pool routing and input shape, one per level transition.
    pools: Vec<(Vec<usize>, [usize; 4])>,
    /// Shapes entering each decoder upsampling.
    upsampled: Vec<[usize; 4]>,
    /// Channel count of each encoder level output.
    skip_channels: Vec<usize>,
}

impl LocalNet {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new<R: Rng + ?Sized>(
        kind: BlockKind,
        in_channels: usize,
        depth: usize,
        base_channels: usize,
        domains: &[String],
        landmarks: &[usize],
        slope: f64,
        norm: NormSettings,
        rng: &mut R,
    ) -> Self {
        let width = |level: usize| base_channels << level;
        let block = |prefix: String, n: usize, m: usize, rng: &mut R| match kind {
            BlockKind::Separable => Block::Separable(SeparableBlock::new(&prefix, n, m, domains, slope, norm, rng)),
            BlockKind::SharedDense => Block::Dense(DenseBlock::new(&prefix, n, m, 1, Banks::Shared, slope, norm, rng)),
            BlockKind::PerDomainDense => Block::Dense(DenseBlock::new(
                &prefix,
                n,
                m,
                1,
                Banks::PerDomain(domains),
                slope,
                norm,
                rng,
            )),
        };
        let mut encoder = Vec::with_capacity(depth);
        for level in 0..depth {
            let n = if level == 0 { in_channels } else { width(level - 1) };
            let m = width(level);
            let a = block(format!("local.enc{level}.b0"), n, m, rng);
            let b = block(format!("local.enc{level}.b1"), m, m, rng);
            encoder.push([a, b]);
        }
        let mut decoder = Vec::with_capacity(depth - 1);
        for level in 0..depth - 1 {
            let n = width(level) + width(level + 1);
            let m = width(level);
            let a = block(format!("local.dec{level}.b0"), n, m, rng);
            let b = block(format!("local.dec{level}.b1"), m, m, rng);
            decoder.push([a, b]);
        }
        let head = Head::new("local.head.out", width(0), landmarks, domains, rng);
        Self {
            encoder,
            decoder,
            head,
            cache: None,
        }
    }

    pub fn depth(&self) -> usize {
        self.encoder.len()
    }

    /// Logits, training mode.
    pub fn forward(&mut self, x: &Tensor, domain: usize) -> Tensor {
        let depth = self.encoder.len();
        let mut pools = Vec::with_capacity(depth - 1);
        let mut skips: Vec<Tensor> = Vec::with_capacity(depth);
        let mut h = x.clone();
        for level in 0..depth {
            if level > 0 {
                let prev = skips.last().expect("previous level output");
                let (pooled, arg) = max_pool2(prev);
                pools.push((arg, prev.shape()));
                h = pooled;
            }
            let [a, b] = &mut self.encoder[level];
            let t = a.forward(&h, domain);
            skips.push(b.forward(&t, domain));
        }
        let skip_channels = skips.iter().map(Tensor::channels).collect();
        let mut d = skips.pop().expect("bottom level");
        let mut upsampled = alloc::vec![[0; 4]; depth - 1];
        for level in (0..depth - 1).rev() {
            let skip = &skips[level];
            upsampled[level] = d.shape();
            let up = bilinear_resize(&d, skip.height(), skip.width());
            let cat = Tensor::concat_channels(skip, &up);
            let [a, b] = &mut self.decoder[level];
            let t = a.forward(&cat, domain);
            d = b.forward(&t, domain);
        }
        self.cache = Some(LocalCache {
            pools,
            upsampled,
            skip_channels,
        });
        self.head.forward(&d, domain)
    }

    pub fn infer(&self, x: &Tensor, domain: usize) -> Tensor {
        let depth = self.encoder.len();
        let mut skips: Vec<Tensor> = Vec::with_capacity(depth);
        let mut h = x.clone();
        for level in 0..depth {
            if level > 0 {
                h = max_pool2(skips.last().expect("previous level output")).0;
            }
            let [a, b] = &self.encoder[level];
            skips.push(b.infer(&a.infer(&h, domain), domain));
        }
        let mut d = skips.pop().expect("bottom level");
        for level in (0..depth - 1).rev() {
            let skip = &skips[level];
            let up = bilinear_resize(&d, skip.height(), skip.width());
            let [a, b] = &self.decoder[level];
            d = b.infer(&a.infer(&Tensor::concat_channels(skip, &up), domain), domain);
        }
        self.head.infer(&d, domain)
    }

    /// Backpropagates logit gradients into every block.
    pub fn backward(&mut self, grad_logits: &Tensor) {
        let cache = self.cache.take().expect("local backward without forward");
        let depth = self.encoder.len();
        let mut g = self.head.backward(grad_logits);
        let mut skip_grads: Vec<Option<Tensor>> = alloc::vec![None; depth];
        for (level, [a, b]) in self.decoder.iter_mut().enumerate() {
            let t = b.backward(&g);
            let gcat = a.backward(&t);
            let (gskip, gup) = gcat.split_channels(cache.skip_channels[level]);
            skip_grads[level] = Some(gskip);
            g = bilinear_resize_backward(&gup, cache.upsampled[level]);
        }
        // `g` is now the gradient at the bottom encoder output.
        for level in (0..depth).rev() {
            if let Some(s) = skip_grads[level].take() {
                g.add_assign(&s);
            }
            let [a, b] = &mut self.encoder[level];
            let t = b.backward(&g);
            let gin = a.backward(&t);
            if level > 0 {
                let (arg, shape) = &cache.pools[level - 1];
                g = max_pool2_backward(&gin, arg, *shape);
            }
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.encoder.iter().chain(&self.decoder).flat_map(|pair| pair.iter())
    }
}

impl Parameterized for LocalNet {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        for pair in self.encoder.iter().chain(&self.decoder) {
            pair[0].visit(f);
            pair[1].visit(f);
        }
        self.head.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        for pair in self.encoder.iter_mut().chain(&mut self.decoder) {
            pair[0].visit_mut(f);
            pair[1].visit_mut(f);
        }
        self.head.visit_mut(f);
    }
}
