//! Batch normalization over `(N, H, W)` per channel.

use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::Tensor;

/// Values kept from a training-mode forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct NormCache {
    pub normalized: Tensor,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    /// Biased batch variance.
    pub var: Vec<f64>,
}

pub fn batch_norm_train(x: &Tensor, gamma: &[f64], beta: &[f64], eps: f64) -> (Tensor, NormCache) {
    let [n, c, _, _] = x.shape();
    let count = (n * x.plane()) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let s: f64 = (0..n).map(|i| x.channel(i, ch).iter().sum::<f64>()).sum();
        mean[ch] = s / count;
        let m = mean[ch];
        let ss: f64 = (0..n)
            .map(|i| x.channel(i, ch).iter().map(|v| (v - m) * (v - m)).sum::<f64>())
            .sum();
        var[ch] = ss / count;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + eps)).collect();
    let mut normalized = Tensor::zeros(x.shape());
    let mut out = Tensor::zeros(x.shape());
    for i in 0..n {
        for ch in 0..c {
            let (m, s, g, b) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
            let src = x.channel(i, ch);
            let xn = normalized.channel_mut(i, ch);
            for (d, &v) in xn.iter_mut().zip(src) {
                *d = (v - m) * s;
            }
            let xn = normalized.channel(i, ch);
            for (o, &v) in out.channel_mut(i, ch).iter_mut().zip(xn) {
                *o = v * g + b;
            }
        }
    }
    (
        out,
        NormCache {
            normalized,
            inv_std,
            mean,
            var,
        },
    )
}

pub fn batch_norm_eval(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
    eps: f64,
) -> Tensor {
    let [n, c, _, _] = x.shape();
    let mut out = Tensor::zeros(x.shape());
    for ch in 0..c {
        let scale = gamma[ch] / libm::sqrt(running_var[ch] + eps);
        let shift = beta[ch] - running_mean[ch] * scale;
        for i in 0..n {
            for (o, &v) in out.channel_mut(i, ch).iter_mut().zip(x.channel(i, ch)) {
                *o = v * scale + shift;
            }
        }
    }
    out
}

/// Returns the input gradient and accumulates the affine parameter gradients.
pub fn batch_norm_backward(
    grad_out: &Tensor,
    cache: &NormCache,
    gamma: &[f64],
    grad_gamma: &mut [f64],
    grad_beta: &mut [f64],
) -> Tensor {
    let [n, c, _, _] = grad_out.shape();
    let count = (n * grad_out.plane()) as f64;
    let mut grad_in = Tensor::zeros(grad_out.shape());
    for ch in 0..c {
        let mut sum_g = 0.0;
        let mut sum_gx = 0.0;
        for i in 0..n {
            for (&g, &xn) in grad_out.channel(i, ch).iter().zip(cache.normalized.channel(i, ch)) {
                sum_g += g;
                sum_gx += g * xn;
            }
        }
        grad_gamma[ch] += sum_gx;
        grad_beta[ch] += sum_g;
        let k = gamma[ch] * cache.inv_std[ch] / count;
        let (mg, mgx) = (sum_g, sum_gx);
        for i in 0..n {
            let g = grad_out.channel(i, ch);
            let xn = cache.normalized.channel(i, ch);
            for ((d, &gv), &xv) in grad_in.channel_mut(i, ch).iter_mut().zip(g).zip(xn) {
                *d = k * (count * gv - mg - xv * mgx);
            }
        }
    }
    grad_in
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_mode_output_is_standardized() {
        let x = Tensor::from_vec([2, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let (y, cache) = batch_norm_train(&x, &[1.0], &[0.0], 0.0);
        assert!((cache.mean[0] - 4.5).abs() < 1e-15);
        assert!((cache.var[0] - 5.25).abs() < 1e-15);
        let mean: f64 = y.data().iter().sum::<f64>() / 8.0;
        let var: f64 = y.data().iter().map(|v| v * v).sum::<f64>() / 8.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_input_maps_to_shift() {
        let x = Tensor::filled([1, 2, 3, 3], 0.0);
        let (y, _) = batch_norm_train(&x, &[2.0, 3.0], &[0.25, -0.5], 1e-5);
        assert!(y.channel(0, 0).iter().all(|&v| v == 0.25));
        assert!(y.channel(0, 1).iter().all(|&v| v == -0.5));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let data: Vec<f64> = (0..2 * 2 * 3 * 3).map(|i| ((i as f64) * 0.77).sin()).collect();
        let x = Tensor::from_vec([2, 2, 3, 3], data);
        let weights: Vec<f64> = (0..x.data().len()).map(|i| ((i as f64) * 0.19).cos()).collect();
        let gamma = [1.3, 0.7];
        let beta = [0.1, -0.2];
        let loss = |t: &Tensor| {
            let (y, _) = batch_norm_train(t, &gamma, &beta, 1e-5);
            y.data().iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, cache) = batch_norm_train(&x, &gamma, &beta, 1e-5);
        let g = Tensor::from_vec(x.shape(), weights.clone());
        let (mut gg, mut gb) = ([0.0; 2], [0.0; 2]);
        let gx = batch_norm_backward(&g, &cache, &gamma, &mut gg, &mut gb);
        let h = 1e-6;
        for idx in 0..x.data().len() {
            let mut p = x.clone();
            p.data_mut()[idx] += h;
            let mut m = x.clone();
            m.data_mut()[idx] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            assert!(
                (fd - gx.data()[idx]).abs() < 1e-7,
                "idx {idx}: {fd} vs {}",
                gx.data()[idx]
            );
        }
    }
}
