use crate::tensor::Tensor;

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + libm::exp(-v))
    } else {
        let e = libm::exp(v);
        e / (1.0 + e)
    }
}

pub fn sigmoid_forward(x: &Tensor) -> Tensor {
    x.map(sigmoid)
}

/// Gradient through a logistic given its *output* `y`.
pub fn sigmoid_backward(grad_out: &Tensor, y: &Tensor) -> Tensor {
    grad_out.zip_map(y, |g, s| g * s * (1.0 - s))
}

pub fn leaky_relu_in_place(x: &mut Tensor, slope: f64) {
    for v in x.data_mut() {
        if *v < 0.0 {
            *v *= slope;
        }
    }
}

/// Gradient through a leaky ReLU given its *pre-activation* input.
pub fn leaky_relu_backward(grad_out: &Tensor, pre: &Tensor, slope: f64) -> Tensor {
    grad_out.zip_map(pre, |g, v| if v < 0.0 { g * slope } else { g })
}
