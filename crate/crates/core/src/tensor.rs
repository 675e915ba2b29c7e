//! Dense NCHW tensors of `f64`.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn filled(shape: [usize; 4], value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length does not match shape {shape:?}"
        );
        Self { shape, data }
    }

    /// Stacks equally shaped `[C,H,W]` images into a batch.
    pub fn stack<'a, I>(images: I, channels: usize, height: usize, width: usize) -> Self
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let per = channels * height * width;
        let mut data = Vec::new();
        let mut n = 0;
        for img in images {
            assert_eq!(img.len(), per, "image size mismatch while stacking");
            data.extend_from_slice(img);
            n += 1;
        }
        Self::from_vec([n, channels, height, width], data)
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }
    #[inline]
    pub fn batch(&self) -> usize {
        self.shape[0]
    }
    #[inline]
    pub fn channels(&self) -> usize {
        self.shape[1]
    }
    #[inline]
    pub fn height(&self) -> usize {
        self.shape[2]
    }
    #[inline]
    pub fn width(&self) -> usize {
        self.shape[3]
    }
    #[inline]
    pub fn plane(&self) -> usize {
        self.shape[2] * self.shape[3]
    }
    #[inline]
    pub fn image_len(&self) -> usize {
        self.shape[1] * self.plane()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn image(&self, n: usize) -> &[f64] {
        let len = self.image_len();
        &self.data[n * len..(n + 1) * len]
    }
    pub fn image_mut(&mut self, n: usize) -> &mut [f64] {
        let len = self.image_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn channel(&self, n: usize, c: usize) -> &[f64] {
        let p = self.plane();
        let start = (n * self.shape[1] + c) * p;
        &self.data[start..start + p]
    }
    pub fn channel_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let p = self.plane();
        let start = (n * self.shape[1] + c) * p;
        &mut self.data[start..start + p]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape, other.shape, "zip_map shape mismatch");
        Self {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Concatenates along the channel axis: `[N,Ca,H,W] ++ [N,Cb,H,W]`.
    pub fn concat_channels(a: &Self, b: &Self) -> Self {
        let [n, ca, h, w] = a.shape;
        assert_eq!(
            (n, h, w),
            (b.shape[0], b.shape[2], b.shape[3]),
            "concat_channels shape mismatch"
        );
        let cb = b.shape[1];
        let mut data = Vec::with_capacity(n * (ca + cb) * h * w);
        for i in 0..n {
            data.extend_from_slice(a.image(i));
            data.extend_from_slice(b.image(i));
        }
        Self::from_vec([n, ca + cb, h, w], data)
    }

    /// Inverse of [`Tensor::concat_channels`]: the first `ca` channels, then the rest.
    pub fn split_channels(&self, ca: usize) -> (Self, Self) {
        let [n, c, h, w] = self.shape;
        assert!(ca <= c, "split point beyond channel count");
        let p = h * w;
        let mut a = Vec::with_capacity(n * ca * p);
        let mut b = Vec::with_capacity(n * (c - ca) * p);
        for i in 0..n {
            let img = self.image(i);
            a.extend_from_slice(&img[..ca * p]);
            b.extend_from_slice(&img[ca * p..]);
        }
        (Self::from_vec([n, ca, h, w], a), Self::from_vec([n, c - ca, h, w], b))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}
