//! Pooling and bilinear resampling.

use alloc::vec::Vec;

use crate::tensor::Tensor;

/// 2x2 max pooling; returns the pooled tensor and the flat input index of
/// each selected maximum (first maximum wins).
pub fn max_pool2(x: &Tensor) -> (Tensor, Vec<usize>) {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    let plane = h * w;
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * plane;
            let src = x.channel(i, ch);
            let dst = out.channel_mut(i, ch);
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = 2 * y * w + 2 * xx;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = (2 * y + dy) * w + 2 * xx + dx;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                    dst[y * ow + xx] = src[best];
                    arg.push(base + best);
                }
            }
        }
    }
    (out, arg)
}

pub fn max_pool2_backward(grad_out: &Tensor, argmax: &[usize], input_shape: [usize; 4]) -> Tensor {
    let mut grad_in = Tensor::zeros(input_shape);
    let gi = grad_in.data_mut();
    for (&g, &idx) in grad_out.data().iter().zip(argmax) {
        gi[idx] += g;
    }
    grad_in
}

/// Non-overlapping `k x k` average pooling.
pub fn avg_pool(x: &Tensor, k: usize) -> Tensor {
    let [n, c, h, w] = x.shape();
    let (oh, ow) = (h / k, w / k);
    let scale = 1.0 / (k * k) as f64;
    let mut out = Tensor::zeros([n, c, oh, ow]);
    for i in 0..n {
        for ch in 0..c {
            let src = x.channel(i, ch);
            let dst = out.channel_mut(i, ch);
            for y in 0..oh * k {
                let row = &src[y * w..y * w + ow * k];
                let drow = &mut dst[(y / k) * ow..(y / k + 1) * ow];
                for (ox, chunk) in row.chunks_exact(k).enumerate() {
                    drow[ox] += chunk.iter().sum::<f64>();
                }
            }
            dst.iter_mut().for_each(|v| *v *= scale);
        }
    }
    out
}

pub fn avg_pool_backward(grad_out: &Tensor, k: usize, input_shape: [usize; 4]) -> Tensor {
    let [n, c, h, w] = input_shape;
    let ow = grad_out.width();
    let oh = grad_out.height();
    let scale = 1.0 / (k * k) as f64;
    let mut grad_in = Tensor::zeros(input_shape);
    for i in 0..n {
        for ch in 0..c {
            let g = grad_out.channel(i, ch);
            let dst = grad_in.channel_mut(i, ch);
            for y in 0..(oh * k).min(h) {
                let grow = &g[(y / k) * ow..(y / k + 1) * ow];
                for xx in 0..(ow * k).min(w) {
                    dst[y * w + xx] = grow[xx / k] * scale;
                }
            }
        }
    }
    grad_in
}

/// Linear interpolation taps `(lo, hi, weight_hi)` for each output position,
/// using half-pixel centres: `src = (dst + 0.5) * in / out - 0.5`, clamped.
pub fn linear_taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    let ratio = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * ratio - 0.5).max(0.0);
            let lo = (libm::floor(src) as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            let t = if hi == lo { 0.0 } else { src - lo as f64 };
            (lo, hi, t)
        })
        .collect()
}

/// Bilinear resampling of every channel to `out_h x out_w`.
pub fn bilinear_resize(x: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let [n, c, h, w] = x.shape();
    let ty = linear_taps(h, out_h);
    let tx = linear_taps(w, out_w);
    let mut out = Tensor::zeros([n, c, out_h, out_w]);
    for i in 0..n {
        for ch in 0..c {
            let src = x.channel(i, ch);
            let dst = out.channel_mut(i, ch);
            for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
                let r0 = &src[y0 * w..(y0 + 1) * w];
                let r1 = &src[y1 * w..(y1 + 1) * w];
                let drow = &mut dst[oy * out_w..(oy + 1) * out_w];
                for (d, &(x0, x1, wx)) in drow.iter_mut().zip(&tx) {
                    let top = r0[x0] + (r0[x1] - r0[x0]) * wx;
                    let bot = r1[x0] + (r1[x1] - r1[x0]) * wx;
                    *d = top + (bot - top) * wy;
                }
            }
        }
    }
    out
}

/// Adjoint of [`bilinear_resize`].
pub fn bilinear_resize_backward(grad_out: &Tensor, input_shape: [usize; 4]) -> Tensor {
    let [n, c, h, w] = input_shape;
    let (out_h, out_w) = (grad_out.height(), grad_out.width());
    let ty = linear_taps(h, out_h);
    let tx = linear_taps(w, out_w);
    let mut grad_in = Tensor::zeros(input_shape);
    for i in 0..n {
        for ch in 0..c {
            let g = grad_out.channel(i, ch);
            let dst = grad_in.channel_mut(i, ch);
            for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
                let grow = &g[oy * out_w..(oy + 1) * out_w];
                for (&gv, &(x0, x1, wx)) in grow.iter().zip(&tx) {
                    let top = gv * (1.0 - wy);
                    let bot = gv * wy;
                    dst[y0 * w + x0] += top * (1.0 - wx);
                    dst[y0 * w + x1] += top * wx;
                    dst[y1 * w + x0] += bot * (1.0 - wx);
                    dst[y1 * w + x1] += bot * wx;
                }
            }
        }
    }
    grad_in
}
