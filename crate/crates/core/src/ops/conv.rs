//! 3x3 (optionally dilated) convolutions with zero "same" padding, in
//! channel-wise, point-wise and dense flavours.
//!
//! Kernel taps are stored row-major, so tap `t` sits at offset
//! `((t / 3) - 1, (t % 3) - 1) * dilation` from the output pixel.

use alloc::vec;
use alloc::vec::Vec;

use super::gemm;
use crate::tensor::Tensor;

#[inline]
fn tap_offset(t: usize, dilation: usize) -> (isize, isize) {
    let d = dilation as isize;
    ((t / 3) as isize * d - d, (t % 3) as isize * d - d)
}

/// Valid output range `[lo, hi)` along one axis for a source offset.
#[inline]
fn valid_range(len: usize, offset: isize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (len as isize - offset).clamp(0, len as isize) as usize;
    (lo, hi.max(lo))
}

/// `dst[y][x] += alpha * src[y + dy][x + dx]` wherever the source is in bounds.
fn shifted_axpy(dst: &mut [f64], src: &[f64], h: usize, w: usize, dy: isize, dx: isize, alpha: f64) {
    let (y0, y1) = valid_range(h, dy);
    let (x0, x1) = valid_range(w, dx);
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let sx0 = (x0 as isize + dx) as usize;
        let d = &mut dst[y * w + x0..y * w + x1];
        let s = &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
        for (o, &i) in d.iter_mut().zip(s) {
            *o += alpha * i;
        }
    }
}

/// `sum_{y,x} a[y][x] * src[y + dy][x + dx]` over in-bounds positions.
fn shifted_dot(a: &[f64], src: &[f64], h: usize, w: usize, dy: isize, dx: isize) -> f64 {
    let (y0, y1) = valid_range(h, dy);
    let (x0, x1) = valid_range(w, dx);
    let mut acc = 0.0;
    if x0 >= x1 {
        return acc;
    }
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let sx0 = (x0 as isize + dx) as usize;
        let ar = &a[y * w + x0..y * w + x1];
        let sr = &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
        acc += ar.iter().zip(sr).map(|(p, q)| p * q).sum::<f64>();
    }
    acc
}

/// Channel-wise 3x3 convolution: one filter per channel, no channel mixing.
/// `weights` has shape `[C, 9]`.
pub fn depthwise_forward(x: &Tensor, weights: &[f64], dilation: usize) -> Tensor {
    let [n, c, h, w] = x.shape();
    assert_eq!(weights.len(), c * 9, "depthwise weight/channel mismatch");
    let mut out = Tensor::zeros(x.shape());
    for i in 0..n {
        for ch in 0..c {
            let src = x.channel(i, ch);
            let dst = out.channel_mut(i, ch);
            for t in 0..9 {
                let (dy, dx) = tap_offset(t, dilation);
                shifted_axpy(dst, src, h, w, dy, dx, weights[ch * 9 + t]);
            }
        }
    }
    out
}

/// Returns the input gradient and accumulates into `grad_weights`.
pub fn depthwise_backward(
    x: &Tensor,
    weights: &[f64],
    dilation: usize,
    grad_out: &Tensor,
    grad_weights: &mut [f64],
) -> Tensor {
    let [n, c, h, w] = x.shape();
    let mut grad_in = Tensor::zeros(x.shape());
    for i in 0..n {
        for ch in 0..c {
            let g = grad_out.channel(i, ch);
            let src = x.channel(i, ch);
            for t in 0..9 {
                let (dy, dx) = tap_offset(t, dilation);
                grad_weights[ch * 9 + t] += shifted_dot(g, src, h, w, dy, dx);
            }
            let gi = grad_in.channel_mut(i, ch);
            for t in 0..9 {
                let (dy, dx) = tap_offset(t, dilation);
                shifted_axpy(gi, g, h, w, -dy, -dx, weights[ch * 9 + t]);
            }
        }
    }
    grad_in
}

/// 1x1 convolution `[M, N]` with optional per-output bias.
pub fn pointwise_forward(x: &Tensor, weights: &[f64], out_channels: usize, bias: Option<&[f64]>) -> Tensor {
    let [n, c, h, w] = x.shape();
    assert_eq!(weights.len(), out_channels * c, "pointwise weight/channel mismatch");
    let p = h * w;
    let mut out = Tensor::zeros([n, out_channels, h, w]);
    for i in 0..n {
        let dst = out.image_mut(i);
        gemm(out_channels, c, p, 1.0, weights, false, x.image(i), false, 0.0, dst);
        if let Some(b) = bias {
            for (m, plane) in dst.chunks_exact_mut(p).enumerate() {
                plane.iter_mut().for_each(|v| *v += b[m]);
            }
        }
    }
    out
}

/// Returns the input gradient; accumulates weight (and bias) gradients.
pub fn pointwise_backward(
    x: &Tensor,
    weights: &[f64],
    grad_out: &Tensor,
    grad_weights: &mut [f64],
    grad_bias: Option<&mut [f64]>,
) -> Tensor {
    let [n, c, h, w] = x.shape();
    let m = grad_out.channels();
    let p = h * w;
    let mut grad_in = Tensor::zeros(x.shape());
    for i in 0..n {
        let g = grad_out.image(i);
        gemm(m, p, c, 1.0, g, false, x.image(i), true, 1.0, grad_weights);
        gemm(c, m, p, 1.0, weights, true, g, false, 0.0, grad_in.image_mut(i));
    }
    if let Some(gb) = grad_bias {
        for i in 0..n {
            for (mm, plane) in grad_out.image(i).chunks_exact(p).enumerate() {
                gb[mm] += plane.iter().sum::<f64>();
            }
        }
    }
    grad_in
}

/// Unfolds one `[C,H,W]` image into a `[C*9, H*W]` patch matrix.
fn im2col(img: &[f64], c: usize, h: usize, w: usize, dilation: usize, cols: &mut [f64]) {
    let p = h * w;
    cols.iter_mut().for_each(|v| *v = 0.0);
    for ch in 0..c {
        let src = &img[ch * p..(ch + 1) * p];
        for t in 0..9 {
            let (dy, dx) = tap_offset(t, dilation);
            let row = &mut cols[(ch * 9 + t) * p..(ch * 9 + t + 1) * p];
            shifted_axpy(row, src, h, w, dy, dx, 1.0);
        }
    }
}

fn col2im(cols: &[f64], c: usize, h: usize, w: usize, dilation: usize, img: &mut [f64]) {
    let p = h * w;
    for ch in 0..c {
        let dst = &mut img[ch * p..(ch + 1) * p];
        for t in 0..9 {
            let (dy, dx) = tap_offset(t, dilation);
            let row = &cols[(ch * 9 + t) * p..(ch * 9 + t + 1) * p];
            shifted_axpy(dst, row, h, w, -dy, -dx, 1.0);
        }
    }
}

/// Dense 3x3 convolution, weights `[M, C*9]`.
pub fn dense_forward(
    x: &Tensor,
    weights: &[f64],
    out_channels: usize,
    bias: Option<&[f64]>,
    dilation: usize,
) -> Tensor {
    let [n, c, h, w] = x.shape();
    assert_eq!(weights.len(), out_channels * c * 9, "dense weight/channel mismatch");
    let p = h * w;
    let mut cols = vec![0.0; c * 9 * p];
    let mut out = Tensor::zeros([n, out_channels, h, w]);
    for i in 0..n {
        im2col(x.image(i), c, h, w, dilation, &mut cols);
        let dst = out.image_mut(i);
        gemm(out_channels, c * 9, p, 1.0, weights, false, &cols, false, 0.0, dst);
        if let Some(b) = bias {
            for (m, plane) in dst.chunks_exact_mut(p).enumerate() {
                plane.iter_mut().for_each(|v| *v += b[m]);
            }
        }
    }
    out
}

/// Returns the input gradient; accumulates weight (and bias) gradients.
/// Patch matrices are rebuilt from `x` rather than cached.
pub fn dense_backward(
    x: &Tensor,
    weights: &[f64],
    dilation: usize,
    grad_out: &Tensor,
    grad_weights: &mut [f64],
    grad_bias: Option<&mut [f64]>,
) -> Tensor {
    let [n, c, h, w] = x.shape();
    let m = grad_out.channels();
    let p = h * w;
    let mut cols = vec![0.0; c * 9 * p];
    let mut grad_cols: Vec<f64> = vec![0.0; c * 9 * p];
    let mut grad_in = Tensor::zeros(x.shape());
    for i in 0..n {
        im2col(x.image(i), c, h, w, dilation, &mut cols);
        let g = grad_out.image(i);
        gemm(m, p, c * 9, 1.0, g, false, &cols, true, 1.0, grad_weights);
        gemm(c * 9, m, p, 1.0, weights, true, g, false, 0.0, &mut grad_cols);
        col2im(&grad_cols, c, h, w, dilation, grad_in.image_mut(i));
    }
    if let Some(gb) = grad_bias {
        for i in 0..n {
            for (mm, plane) in grad_out.image(i).chunks_exact(p).enumerate() {
                gb[mm] += plane.iter().sum::<f64>();
            }
        }
    }
    grad_in
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct-definition convolution used as an oracle.
    fn naive_dense(x: &Tensor, wts: &[f64], m: usize, dil: usize) -> Tensor {
        let [n, c, h, w] = x.shape();
        let mut out = Tensor::zeros([n, m, h, w]);
        for i in 0..n {
            for o in 0..m {
                for y in 0..h {
                    for xx in 0..w {
                        let mut acc = 0.0;
                        for ch in 0..c {
                            for t in 0..9 {
                                let (dy, dx) = tap_offset(t, dil);
                                let sy = y as isize + dy;
                                let sx = xx as isize + dx;
                                if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                    acc +=
                                        wts[o * c * 9 + ch * 9 + t] * x.channel(i, ch)[sy as usize * w + sx as usize];
                                }
                            }
                        }
                        out.channel_mut(i, o)[y * w + xx] = acc;
                    }
                }
            }
        }
        out
    }

    fn ramp(shape: [usize; 4], k: f64) -> Tensor {
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|i| ((i as f64) * k).sin()).collect())
    }

    #[test]
    fn dense_matches_direct_definition() {
        let x = ramp([2, 3, 7, 6], 0.31);
        let wts: Vec<f64> = (0..4 * 27).map(|i| ((i as f64) * 0.17).cos()).collect();
        for dil in [1, 2, 5] {
            let fast = dense_forward(&x, &wts, 4, None, dil);
            let slow = naive_dense(&x, &wts, 4, dil);
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn depthwise_equals_dense_with_diagonal_weights() {
        let x = ramp([1, 3, 5, 5], 0.7);
        let dw: Vec<f64> = (0..27).map(|i| i as f64 * 0.1 - 1.0).collect();
        let mut dense = vec![0.0; 3 * 27];
        for ch in 0..3 {
            for t in 0..9 {
                dense[ch * 27 + ch * 9 + t] = dw[ch * 9 + t];
            }
        }
        let a = depthwise_forward(&x, &dw, 1);
        let b = dense_forward(&x, &dense, 3, None, 1);
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        // <conv(x), g> == <x, conv^T(g)> for linear maps.
        let x = ramp([2, 2, 6, 5], 0.23);
        let g = ramp([2, 3, 6, 5], 0.41);
        let wts: Vec<f64> = (0..3 * 18).map(|i| ((i as f64) * 0.29).sin()).collect();
        let y = dense_forward(&x, &wts, 3, None, 2);
        let mut gw = vec![0.0; wts.len()];
        let gx = dense_backward(&x, &wts, 2, &g, &mut gw, None);
        let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(gx.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        // Linear in the weights as well.
        let rhs_w: f64 = wts.iter().zip(&gw).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs_w).abs() < 1e-10);

        let dwts: Vec<f64> = (0..18).map(|i| ((i as f64) * 0.53).cos()).collect();
        let y = depthwise_forward(&x, &dwts, 1);
        let gd = ramp([2, 2, 6, 5], 0.13);
        let mut gdw = vec![0.0; 18];
        let gx = depthwise_backward(&x, &dwts, 1, &gd, &mut gdw);
        let lhs: f64 = y.data().iter().zip(gd.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(gx.data()).map(|(a, b)| a * b).sum();
        let rhs_w: f64 = dwts.iter().zip(&gdw).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        assert!((lhs - rhs_w).abs() < 1e-10);
    }

    #[test]
    fn pointwise_bias_and_adjoint() {
        let x = ramp([2, 3, 4, 4], 0.9);
        let wts: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let bias = [0.5, -1.0];
        let y = pointwise_forward(&x, &wts, 2, Some(&bias));
        let want = wts[3] * x.channel(1, 0)[5] + wts[4] * x.channel(1, 1)[5] + wts[5] * x.channel(1, 2)[5] - 1.0;
        assert!((y.channel(1, 1)[5] - want).abs() < 1e-12);

        let g = ramp([2, 2, 4, 4], 0.35);
        let mut gw = vec![0.0; 6];
        let mut gb = vec![0.0; 2];
        let gx = pointwise_backward(&x, &wts, &g, &mut gw, Some(&mut gb));
        let y0 = pointwise_forward(&x, &wts, 2, None);
        let lhs: f64 = y0.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(gx.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        let gsum: f64 = (0..2).map(|i| g.channel(i, 1).iter().sum::<f64>()).sum();
        assert!((gb[1] - gsum).abs() < 1e-12);
    }
}
