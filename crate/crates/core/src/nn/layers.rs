//! Layer primitives: forward and backward passes.
//!
//! Activations are dynamic-rank tensors with the batch on axis 0. Image
//! tensors are NHWC. Convolutions run through an explicit im2col + matrix
//! multiply; the column matrix is rebuilt during the backward pass instead of
//! cached, trading a little compute for a much smaller working set.

use ndarray::{Array1, Array2, Array4, ArrayD, ArrayView3, Axis, Ix2, Ix4, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

/// Dynamic-rank activation/parameter tensor.
pub type Tensor<F> = ArrayD<F>;

/// Spatial padding policy, TensorFlow-style.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output spatial size = ceil(input / stride); zero padding split
    /// low/high with the extra cell on the high side.
    Same,
    /// No padding; output = (input - window) / stride + 1.
    Valid,
}

impl Padding {
    /// (output size, pad_low) for one spatial dimension.
    pub fn resolve(self, input: usize, window: usize, stride: usize) -> (usize, usize) {
        match self {
            Padding::Same => {
                let out = input.div_ceil(stride);
                let needed = ((out - 1) * stride + window).saturating_sub(input);
                (out, needed / 2)
            }
            Padding::Valid => {
                assert!(input >= window, "window {window} larger than input {input}");
                ((input - window) / stride + 1, 0)
            }
        }
    }
}

/// Trainable tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param<F: Scalar> {
    pub value: Tensor<F>,
    pub grad: Tensor<F>,
}

impl<F: Scalar> Param<F> {
    pub fn new(value: Tensor<F>) -> Self {
        let grad = Tensor::zeros(value.raw_dim());
        Self { value, grad }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }
}

/// Per-node state captured by the training forward pass for reuse in backward.
#[derive(Debug, Clone)]
pub enum Cache<F: Scalar> {
    None,
    BatchNorm {
        xhat: Tensor<F>,
        inv_std: Array1<F>,
    },
    MaxPool {
        /// Flat `iy * width + ix` input coordinate of the max, per output element.
        argmax: Vec<u32>,
    },
    Dropout {
        mask: Tensor<F>,
    },
}

#[derive(Debug, Clone)]
pub struct Conv2d<F: Scalar> {
    /// `[kh, kw, c_in, c_out]`
    pub kernel: Param<F>,
    pub bias: Option<Param<F>>,
    pub stride: usize,
    pub padding: Padding,
}

#[derive(Debug, Clone)]
pub struct DepthwiseConv2d<F: Scalar> {
    /// `[kh, kw, c]` — channel multiplier 1.
    pub kernel: Param<F>,
    pub bias: Option<Param<F>>,
    pub stride: usize,
    pub padding: Padding,
}

#[derive(Debug, Clone)]
pub struct Dense<F: Scalar> {
    /// `[d_in, d_out]`
    pub weight: Param<F>,
    pub bias: Param<F>,
}

#[derive(Debug, Clone)]
pub struct BatchNorm<F: Scalar> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
    pub moving_mean: Array1<F>,
    pub moving_var: Array1<F>,
    pub momentum: F,
    pub eps: F,
}

impl<F: Scalar> BatchNorm<F> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::ones(IxDyn(&[channels]))),
            beta: Param::new(Tensor::zeros(IxDyn(&[channels]))),
            moving_mean: Array1::zeros(channels),
            moving_var: Array1::ones(channels),
            momentum: F::fd(0.99),
            eps: F::fd(1e-3),
        }
    }
}

// ---------------------------------------------------------------------------
// im2col / col2im
// ---------------------------------------------------------------------------

/// Layout: row = (oy * out_w + ox), column = (ky * kw + kx) * c_in + c.
fn im2col<F: Scalar>(
    x: &ArrayView3<F>, // [h, w, c]
    kh: usize,
    kw: usize,
    stride: usize,
    pad_h: usize,
    pad_w: usize,
    out_h: usize,
    out_w: usize,
) -> Array2<F> {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut cols = Array2::<F>::zeros((out_h * out_w, kh * kw * c));
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("NHWC slice is contiguous");
    let cs = cols.as_slice_mut().expect("col matrix is contiguous");
    let row_len = kh * kw * c;
    for oy in 0..out_h {
        for ox in 0..out_w {
            let row = (oy * out_w + ox) * row_len;
            for ky in 0..kh {
                let iy = (oy * stride + ky) as isize - pad_h as isize;
                if iy < 0 || iy as usize >= h {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * stride + kx) as isize - pad_w as isize;
                    if ix < 0 || ix as usize >= w {
                        continue;
                    }
                    let src = (iy as usize * w + ix as usize) * c;
                    let dst = row + (ky * kw + kx) * c;
                    cs[dst..dst + c].copy_from_slice(&xs[src..src + c]);
                }
            }
        }
    }
    cols
}

/// Scatter-add the column-space gradient back into input space.
fn col2im<F: Scalar>(
    dcols: &Array2<F>,
    h: usize,
    w: usize,
    c: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad_h: usize,
    pad_w: usize,
    out_h: usize,
    out_w: usize,
) -> Array2<F> {
    // returned flat as [h*w, c] for easy reshaping by the caller
    let mut dx = Array2::<F>::zeros((h * w, c));
    // `dot` may emit a transposed-layout result; normalize before slicing
    let dcols = dcols.as_standard_layout();
    let ds = dcols.as_slice().expect("col matrix is contiguous");
    let xs = dx.as_slice_mut().expect("contiguous");
    let row_len = kh * kw * c;
    for oy in 0..out_h {
        for ox in 0..out_w {
            let row = (oy * out_w + ox) * row_len;
            for ky in 0..kh {
                let iy = (oy * stride + ky) as isize - pad_h as isize;
                if iy < 0 || iy as usize >= h {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * stride + kx) as isize - pad_w as isize;
                    if ix < 0 || ix as usize >= w {
                        continue;
                    }
                    let dst = (iy as usize * w + ix as usize) * c;
                    let src = row + (ky * kw + kx) * c;
                    for j in 0..c {
                        xs[dst + j] = xs[dst + j] + ds[src + j];
                    }
                }
            }
        }
    }
    dx
}

fn as4<F: Scalar>(x: &Tensor<F>) -> ndarray::ArrayView4<F> {
    x.view()
        .into_dimensionality::<Ix4>()
        .expect("expected NHWC tensor")
}

fn as2<F: Scalar>(x: &Tensor<F>) -> ndarray::ArrayView2<F> {
    x.view()
        .into_dimensionality::<Ix2>()
        .expect("expected (batch, features) tensor")
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

impl<F: Scalar> Conv2d<F> {
    pub fn out_shape(&self, h: usize, w: usize) -> (usize, usize, usize, usize) {
        let k = self.kernel.value.shape();
        let (oh, ph) = self.padding.resolve(h, k[0], self.stride);
        let (ow, pw) = self.padding.resolve(w, k[1], self.stride);
        (oh, ow, ph, pw)
    }

    pub fn forward(&self, x: &Tensor<F>) -> Tensor<F> {
        let x = as4(x);
        let (n, h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let k = self.kernel.value.shape();
        let (kh, kw, cout) = (k[0], k[1], k[3]);
        assert_eq!(cin, k[2], "conv input channels mismatch");
        let (oh, ow, ph, pw) = self.out_shape(h, w);
        let kmat = self
            .kernel
            .value
            .view()
            .into_shape_with_order((kh * kw * cin, cout))
            .expect("kernel contiguous");
        let mut out = Array4::<F>::zeros((n, oh, ow, cout));
        for i in 0..n {
            let cols = im2col(&x.index_axis(Axis(0), i), kh, kw, self.stride, ph, pw, oh, ow);
            let y = cols.dot(&kmat); // (oh*ow, cout)
            let mut oi = out.index_axis_mut(Axis(0), i);
            let mut oi2 = oi
                .view_mut()
                .into_shape_with_order((oh * ow, cout))
                .expect("contiguous");
            oi2.assign(&y);
        }
        if let Some(b) = &self.bias {
            let b = b.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
            out += &b;
        }
        out.into_dyn()
    }

    /// Accumulates parameter gradients, returns the input gradient.
    pub fn backward(&mut self, x: &Tensor<F>, dy: &Tensor<F>) -> Tensor<F> {
        let x = as4(x);
        let dy = as4(dy);
        let (n, h, w, cin) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let k = self.kernel.value.shape().to_vec();
        let (kh, kw, cout) = (k[0], k[1], k[3]);
        let (oh, ow, ph, pw) = self.out_shape(h, w);
        let kmat = self
            .kernel
            .value
            .view()
            .into_shape_with_order((kh * kw * cin, cout))
            .expect("kernel contiguous");
        let mut dkmat = Array2::<F>::zeros((kh * kw * cin, cout));
        let mut dx = Array4::<F>::zeros((n, h, w, cin));
        for i in 0..n {
            let cols = im2col(&x.index_axis(Axis(0), i), kh, kw, self.stride, ph, pw, oh, ow);
            let dyi = dy.index_axis(Axis(0), i);
            let dyi2 = dyi
                .view()
                .into_shape_with_order((oh * ow, cout))
                .expect("contiguous");
            dkmat += &cols.t().dot(&dyi2);
            let dcols = dyi2.dot(&kmat.t());
            let dxi = col2im(&dcols, h, w, cin, kh, kw, self.stride, ph, pw, oh, ow);
            let mut t = dx.index_axis_mut(Axis(0), i);
            let mut t2 = t
                .view_mut()
                .into_shape_with_order((h * w, cin))
                .expect("contiguous");
            t2.assign(&dxi);
        }
        {
            let mut g = self
                .kernel
                .grad
                .view_mut()
                .into_shape_with_order((kh * kw * cin, cout))
                .expect("contiguous");
            g += &dkmat;
        }
        if let Some(b) = &mut self.bias {
            let mut db = Array1::<F>::zeros(cout);
            for i in 0..n {
                let dyi = dy.index_axis(Axis(0), i);
                let dyi2 = dyi.into_shape_with_order((oh * ow, cout)).unwrap();
                db += &dyi2.sum_axis(Axis(0));
            }
            let mut g = b.grad.view_mut().into_dimensionality::<ndarray::Ix1>().unwrap();
            g += &db;
        }
        dx.into_dyn()
    }
}

// ---------------------------------------------------------------------------
// DepthwiseConv2d
// ---------------------------------------------------------------------------

impl<F: Scalar> DepthwiseConv2d<F> {
    pub fn out_shape(&self, h: usize, w: usize) -> (usize, usize, usize, usize) {
        let k = self.kernel.value.shape();
        let (oh, ph) = self.padding.resolve(h, k[0], self.stride);
        let (ow, pw) = self.padding.resolve(w, k[1], self.stride);
        (oh, ow, ph, pw)
    }

    pub fn forward(&self, x: &Tensor<F>) -> Tensor<F> {
        let x = as4(x);
        let (n, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let k = self.kernel.value.shape();
        let (kh, kw) = (k[0], k[1]);
        assert_eq!(c, k[2], "depthwise channels mismatch");
        let (oh, ow, ph, pw) = self.out_shape(h, w);
        let kern = self
            .kernel
            .value
            .view()
            .into_dimensionality::<ndarray::Ix3>()
            .unwrap();
        let mut out = Array4::<F>::zeros((n, oh, ow, c));
        for i in 0..n {
            let xi = x.index_axis(Axis(0), i);
            let xs = xi.as_slice().expect("contiguous");
            let mut oi = out.index_axis_mut(Axis(0), i);
            let os = oi.as_slice_mut().expect("contiguous");
            for oy in 0..oh {
                for ox in 0..ow {
                    let dst = (oy * ow + ox) * c;
                    for ky in 0..kh {
                        let iy = (oy * self.stride + ky) as isize - ph as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * self.stride + kx) as isize - pw as isize;
                            if ix < 0 || ix as usize >= w {
                                continue;
                            }
                            let src = (iy as usize * w + ix as usize) * c;
                            for ch in 0..c {
                                os[dst + ch] =
                                    os[dst + ch] + xs[src + ch] * kern[[ky, kx, ch]];
                            }
                        }
                    }
                }
            }
        }
        if let Some(b) = &self.bias {
            let b = b.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
            out += &b;
        }
        out.into_dyn()
    }

    pub fn backward(&mut self, x: &Tensor<F>, dy: &Tensor<F>) -> Tensor<F> {
        let x = as4(x);
        let dy = as4(dy);
        let (n, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let k = self.kernel.value.shape().to_vec();
        let (kh, kw) = (k[0], k[1]);
        let (oh, ow, ph, pw) = self.out_shape(h, w);
        let kern = self
            .kernel
            .value
            .view()
            .into_dimensionality::<ndarray::Ix3>()
            .unwrap()
            .to_owned();
        let mut dkern = ndarray::Array3::<F>::zeros((kh, kw, c));
        let mut dx = Array4::<F>::zeros((n, h, w, c));
        for i in 0..n {
            let xi = x.index_axis(Axis(0), i);
            let xs = xi.as_slice().unwrap();
            let dyi = dy.index_axis(Axis(0), i);
            let dys = dyi.as_slice().unwrap();
            let mut dxi = dx.index_axis_mut(Axis(0), i);
            let dxs = dxi.as_slice_mut().unwrap();
            for oy in 0..oh {
                for ox in 0..ow {
                    let gsrc = (oy * ow + ox) * c;
                    for ky in 0..kh {
                        let iy = (oy * self.stride + ky) as isize - ph as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * self.stride + kx) as isize - pw as isize;
                            if ix < 0 || ix as usize >= w {
                                continue;
                            }
                            let src = (iy as usize * w + ix as usize) * c;
                            for ch in 0..c {
                                let g = dys[gsrc + ch];
                                dkern[[ky, kx, ch]] = dkern[[ky, kx, ch]] + xs[src + ch] * g;
                                dxs[src + ch] = dxs[src + ch] + kern[[ky, kx, ch]] * g;
                            }
                        }
                    }
                }
            }
        }
        {
            let mut g = self
                .kernel
                .grad
                .view_mut()
                .into_dimensionality::<ndarray::Ix3>()
                .unwrap();
            g += &dkern;
        }
        if let Some(b) = &mut self.bias {
            let db = dy
                .into_shape_with_order((n * oh * ow, c))
                .unwrap()
                .sum_axis(Axis(0));
            let mut g = b.grad.view_mut().into_dimensionality::<ndarray::Ix1>().unwrap();
            g += &db;
        }
        dx.into_dyn()
    }
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

impl<F: Scalar> Dense<F> {
    pub fn forward(&self, x: &Tensor<F>) -> Tensor<F> {
        let x = as2(x);
        let w = self.weight.value.view().into_dimensionality::<Ix2>().unwrap();
        let b = self.bias.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let mut y = x.dot(&w);
        y += &b;
        y.into_dyn()
    }

    pub fn backward(&mut self, x: &Tensor<F>, dy: &Tensor<F>) -> Tensor<F> {
        let x = as2(x);
        let dy = as2(dy);
        let w = self.weight.value.view().into_dimensionality::<Ix2>().unwrap();
        {
            let dw = x.t().dot(&dy);
            let mut g = self.weight.grad.view_mut().into_dimensionality::<Ix2>().unwrap();
            g += &dw;
            let db = dy.sum_axis(Axis(0));
            let mut gb = self.bias.grad.view_mut().into_dimensionality::<ndarray::Ix1>().unwrap();
            gb += &db;
        }
        dy.dot(&w.t()).into_dyn()
    }
}

// ---------------------------------------------------------------------------
// BatchNorm (normalizes over every axis except the last)
// ---------------------------------------------------------------------------

fn channel_flat<F: Scalar>(x: &Tensor<F>) -> ndarray::ArrayView2<F> {
    let c = *x.shape().last().expect("batchnorm input has rank >= 2");
    let m = x.len() / c;
    x.view()
        .into_shape_with_order((m, c))
        .expect("contiguous activation")
}

impl<F: Scalar> BatchNorm<F> {
    pub fn forward_train(&mut self, x: &Tensor<F>) -> (Tensor<F>, Cache<F>) {
        let flat = channel_flat(x);
        let m = flat.shape()[0];
        let mf = F::fd(m as f64);
        let mean = flat.sum_axis(Axis(0)) / mf;
        let mut var = Array1::<F>::zeros(flat.shape()[1]);
        for row in flat.rows() {
            let d = &row - &mean;
            var += &(&d * &d);
        }
        var /= mf;
        let inv_std = var.mapv(|v| F::one() / (v + self.eps).sqrt());
        let gamma = self.gamma.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let beta = self.beta.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let mut xhat = flat.to_owned();
        for mut row in xhat.rows_mut() {
            row -= &mean;
            row *= &inv_std;
        }
        let mut y = xhat.clone();
        for mut row in y.rows_mut() {
            row *= &gamma;
            row += &beta;
        }
        let rho = self.momentum;
        let one_m = F::one() - rho;
        self.moving_mean = self.moving_mean.mapv(|v| v * rho) + mean.mapv(|v| v * one_m);
        self.moving_var = self.moving_var.mapv(|v| v * rho) + var.mapv(|v| v * one_m);
        let shape = x.raw_dim();
        let y = y.into_shape_with_order(shape.clone()).unwrap();
        let xhat = xhat.into_shape_with_order(shape).unwrap();
        (y, Cache::BatchNorm { xhat, inv_std })
    }

    pub fn forward_infer(&self, x: &Tensor<F>) -> Tensor<F> {
        let flat = channel_flat(x);
        let gamma = self.gamma.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let beta = self.beta.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        let inv_std = self.moving_var.mapv(|v| F::one() / (v + self.eps).sqrt());
        let scale = &gamma * &inv_std;
        let shift = &beta - &(&self.moving_mean * &scale);
        let mut y = flat.to_owned();
        for mut row in y.rows_mut() {
            row *= &scale;
            row += &shift;
        }
        y.into_shape_with_order(x.raw_dim()).unwrap().into_dyn()
    }

    pub fn backward(&mut self, cache: &Cache<F>, dy: &Tensor<F>) -> Tensor<F> {
        let Cache::BatchNorm { xhat, inv_std } = cache else {
            panic!("batchnorm backward without cache");
        };
        let dyf = channel_flat(dy);
        let xhf = channel_flat(xhat);
        let m = dyf.shape()[0];
        let mf = F::fd(m as f64);
        let gamma = self.gamma.value.view().into_dimensionality::<ndarray::Ix1>().unwrap();

        let dbeta = dyf.sum_axis(Axis(0));
        let mut dgamma = Array1::<F>::zeros(dyf.shape()[1]);
        for (dr, xr) in dyf.rows().into_iter().zip(xhf.rows()) {
            dgamma += &(&dr * &xr);
        }
        // dx = inv_std/m * (m*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
        let sum_dxhat = &dbeta * &gamma; // sum of dy*gamma per channel
        let sum_dxhat_xhat = &dgamma * &gamma;
        let mut dx = ndarray::Array2::<F>::zeros(dyf.raw_dim());
        for ((mut out, dr), xr) in dx.rows_mut().into_iter().zip(dyf.rows()).zip(xhf.rows()) {
            // per-element: (gamma*dy*m - sum_dxhat - xhat*sum_dxhat_xhat) * inv_std / m
            let dxhat = &dr * &gamma;
            let t = dxhat.mapv(|v| v * mf) - &sum_dxhat - &(&xr * &sum_dxhat_xhat);
            out.assign(&(&t * &inv_std.mapv(|v| v / mf)));
        }
        {
            let mut g = self.gamma.grad.view_mut().into_dimensionality::<ndarray::Ix1>().unwrap();
            g += &dgamma;
            let mut b = self.beta.grad.view_mut().into_dimensionality::<ndarray::Ix1>().unwrap();
            b += &dbeta;
        }
        dx.into_shape_with_order(dy.raw_dim()).unwrap().into_dyn()
    }
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

pub fn relu_forward<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    x.mapv(|v| if v > F::zero() { v } else { F::zero() })
}

pub fn relu_backward<F: Scalar>(x: &Tensor<F>, dy: &Tensor<F>) -> Tensor<F> {
    let mut dx = dy.clone();
    ndarray::Zip::from(&mut dx).and(x).for_each(|d, &v| {
        if v <= F::zero() {
            *d = F::zero();
        }
    });
    dx
}

/// Numerically stable softmax over the last axis.
pub fn softmax_forward<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let c = *x.shape().last().unwrap();
    let m = x.len() / c;
    let flat = x.view().into_shape_with_order((m, c)).unwrap();
    let mut y = flat.to_owned();
    for mut row in y.rows_mut() {
        let mx = row.iter().cloned().fold(F::neg_infinity(), F::max);
        row.mapv_inplace(|v| (v - mx).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    y.into_shape_with_order(x.raw_dim()).unwrap().into_dyn()
}

pub fn softmax_backward<F: Scalar>(y: &Tensor<F>, dy: &Tensor<F>) -> Tensor<F> {
    let c = *y.shape().last().unwrap();
    let m = y.len() / c;
    let yf = y.view().into_shape_with_order((m, c)).unwrap();
    let df = dy.view().into_shape_with_order((m, c)).unwrap();
    let mut dx = ndarray::Array2::<F>::zeros((m, c));
    for ((mut out, yr), dr) in dx.rows_mut().into_iter().zip(yf.rows()).zip(df.rows()) {
        let dot = yr.iter().zip(dr.iter()).map(|(&a, &b)| a * b).sum::<F>();
        out.assign(&(&yr * &(&dr - &ndarray::Array1::from_elem(c, dot))));
    }
    dx.into_shape_with_order(y.raw_dim()).unwrap().into_dyn()
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

pub fn max_pool_forward<F: Scalar>(
    x: &Tensor<F>,
    pool: usize,
    stride: usize,
    padding: Padding,
) -> (Tensor<F>, Cache<F>) {
    let x = as4(x);
    let (n, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (oh, ph) = padding.resolve(h, pool, stride);
    let (ow, pw) = padding.resolve(w, pool, stride);
    let mut out = Array4::<F>::zeros((n, oh, ow, c));
    let mut argmax = vec![0u32; n * oh * ow * c];
    for i in 0..n {
        let xi = x.index_axis(Axis(0), i);
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = F::neg_infinity();
                    let mut best_pos = 0u32;
                    for ky in 0..pool {
                        let iy = (oy * stride + ky) as isize - ph as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for kx in 0..pool {
                            let ix = (ox * stride + kx) as isize - pw as isize;
                            if ix < 0 || ix as usize >= w {
                                continue;
                            }
                            let v = xi[[iy as usize, ix as usize, ch]];
                            if v > best {
                                best = v;
                                best_pos = (iy as usize * w + ix as usize) as u32;
                            }
                        }
                    }
                    out[[i, oy, ox, ch]] = best;
                    argmax[((i * oh + oy) * ow + ox) * c + ch] = best_pos;
                }
            }
        }
    }
    (out.into_dyn(), Cache::MaxPool { argmax })
}

pub fn max_pool_backward<F: Scalar>(
    x_shape: &[usize],
    cache: &Cache<F>,
    dy: &Tensor<F>,
) -> Tensor<F> {
    let Cache::MaxPool { argmax } = cache else {
        panic!("maxpool backward without cache");
    };
    let dy = as4(dy);
    let (n, oh, ow, c) = (dy.shape()[0], dy.shape()[1], dy.shape()[2], dy.shape()[3]);
    let (h, w) = (x_shape[1], x_shape[2]);
    let mut dx = Array4::<F>::zeros((n, h, w, c));
    for i in 0..n {
        let mut dxi = dx.index_axis_mut(Axis(0), i);
        let ds = dxi.as_slice_mut().unwrap();
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let pos = argmax[((i * oh + oy) * ow + ox) * c + ch] as usize;
                    ds[pos * c + ch] = ds[pos * c + ch] + dy[[i, oy, ox, ch]];
                }
            }
        }
    }
    dx.into_dyn()
}

pub fn avg_pool_forward<F: Scalar>(x: &Tensor<F>, pool: usize, stride: usize) -> Tensor<F> {
    let x = as4(x);
    let (n, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (oh, _) = Padding::Valid.resolve(h, pool, stride);
    let (ow, _) = Padding::Valid.resolve(w, pool, stride);
    let inv = F::one() / F::fd((pool * pool) as f64);
    let mut out = Array4::<F>::zeros((n, oh, ow, c));
    for i in 0..n {
        let xi = x.index_axis(Axis(0), i);
        for oy in 0..oh {
            for ox in 0..ow {
                for ky in 0..pool {
                    for kx in 0..pool {
                        let iy = oy * stride + ky;
                        let ix = ox * stride + kx;
                        for ch in 0..c {
                            out[[i, oy, ox, ch]] = out[[i, oy, ox, ch]] + xi[[iy, ix, ch]] * inv;
                        }
                    }
                }
            }
        }
    }
    out.into_dyn()
}

pub fn avg_pool_backward<F: Scalar>(
    x_shape: &[usize],
    pool: usize,
    stride: usize,
    dy: &Tensor<F>,
) -> Tensor<F> {
    let dy = as4(dy);
    let (n, oh, ow, c) = (dy.shape()[0], dy.shape()[1], dy.shape()[2], dy.shape()[3]);
    let (h, w) = (x_shape[1], x_shape[2]);
    let inv = F::one() / F::fd((pool * pool) as f64);
    let mut dx = Array4::<F>::zeros((n, h, w, c));
    for i in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ky in 0..pool {
                    for kx in 0..pool {
                        let iy = oy * stride + ky;
                        let ix = ox * stride + kx;
                        for ch in 0..c {
                            dx[[i, iy, ix, ch]] = dx[[i, iy, ix, ch]] + dy[[i, oy, ox, ch]] * inv;
                        }
                    }
                }
            }
        }
    }
    dx.into_dyn()
}

pub fn global_avg_pool_forward<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let x = as4(x);
    let (n, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let inv = F::one() / F::fd((h * w) as f64);
    let mut out = Array2::<F>::zeros((n, c));
    for i in 0..n {
        let xi = x.index_axis(Axis(0), i);
        let flat = xi.into_shape_with_order((h * w, c)).unwrap();
        out.row_mut(i).assign(&(flat.sum_axis(Axis(0)) * inv));
    }
    out.into_dyn()
}

pub fn global_avg_pool_backward<F: Scalar>(x_shape: &[usize], dy: &Tensor<F>) -> Tensor<F> {
    let dy = as2(dy);
    let (n, h, w, c) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let inv = F::one() / F::fd((h * w) as f64);
    let mut dx = Array4::<F>::zeros((n, h, w, c));
    for i in 0..n {
        let row = dy.row(i);
        for iy in 0..h {
            for ix in 0..w {
                for ch in 0..c {
                    dx[[i, iy, ix, ch]] = row[ch] * inv;
                }
            }
        }
    }
    dx.into_dyn()
}

// ---------------------------------------------------------------------------
// Upsample (nearest), Dropout, shape ops
// ---------------------------------------------------------------------------

pub fn upsample_forward<F: Scalar>(x: &Tensor<F>, factor: usize) -> Tensor<F> {
    let x = as4(x);
    let (n, h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let mut out = Array4::<F>::zeros((n, h * factor, w * factor, c));
    for i in 0..n {
        for oy in 0..h * factor {
            for ox in 0..w * factor {
                for ch in 0..c {
                    out[[i, oy, ox, ch]] = x[[i, oy / factor, ox / factor, ch]];
                }
            }
        }
    }
    out.into_dyn()
}

pub fn upsample_backward<F: Scalar>(factor: usize, dy: &Tensor<F>) -> Tensor<F> {
    let dy = as4(dy);
    let (n, oh, ow, c) = (dy.shape()[0], dy.shape()[1], dy.shape()[2], dy.shape()[3]);
    let (h, w) = (oh / factor, ow / factor);
    let mut dx = Array4::<F>::zeros((n, h, w, c));
    for i in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    dx[[i, oy / factor, ox / factor, ch]] =
                        dx[[i, oy / factor, ox / factor, ch]] + dy[[i, oy, ox, ch]];
                }
            }
        }
    }
    dx.into_dyn()
}

/// Inverted dropout: surviving activations are scaled by 1/(1-rate) so
/// inference needs no correction.
pub fn dropout_forward<F: Scalar>(
    x: &Tensor<F>,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> (Tensor<F>, Cache<F>) {
    let keep = 1.0 - rate;
    let scale = F::fd(1.0 / keep);
    let mask = Tensor::from_shape_fn(x.raw_dim(), |_| {
        if rng.random_range(0.0..1.0f64) < keep {
            scale
        } else {
            F::zero()
        }
    });
    (x * &mask, Cache::Dropout { mask })
}

pub fn dropout_backward<F: Scalar>(cache: &Cache<F>, dy: &Tensor<F>) -> Tensor<F> {
    let Cache::Dropout { mask } = cache else {
        panic!("dropout backward without cache");
    };
    dy * mask
}

pub fn flatten_forward<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let n = x.shape()[0];
    let d = x.len() / n;
    x.view()
        .into_shape_with_order(IxDyn(&[n, d]))
        .unwrap()
        .to_owned()
}

pub fn reshape_forward<F: Scalar>(x: &Tensor<F>, per_sample: &[usize]) -> Tensor<F> {
    let n = x.shape()[0];
    let mut shape = vec![n];
    shape.extend_from_slice(per_sample);
    x.view()
        .into_shape_with_order(IxDyn(&shape))
        .unwrap()
        .to_owned()
}

pub fn concat_forward<F: Scalar>(inputs: &[&Tensor<F>]) -> Tensor<F> {
    let views: Vec<_> = inputs.iter().map(|t| t.view()).collect();
    let axis = Axis(inputs[0].ndim() - 1);
    ndarray::concatenate(axis, &views).expect("concat inputs shape-compatible")
}

pub fn concat_backward<F: Scalar>(inputs: &[&Tensor<F>], dy: &Tensor<F>) -> Vec<Tensor<F>> {
    let axis = Axis(dy.ndim() - 1);
    let mut out = Vec::with_capacity(inputs.len());
    let mut start = 0;
    for inp in inputs {
        let c = *inp.shape().last().unwrap();
        out.push(
            dy.slice_axis(axis, ndarray::Slice::from(start..start + c))
                .to_owned(),
        );
        start += c;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array3};
    use rand::SeedableRng;

    fn simple_conv() -> Conv2d<f64> {
        // 2x2 kernel, 1 in, 1 out, identity-ish weights
        let mut k = ArrayD::zeros(IxDyn(&[2, 2, 1, 1]));
        k[[0, 0, 0, 0]] = 1.0;
        k[[1, 1, 0, 0]] = 2.0;
        Conv2d {
            kernel: Param::new(k),
            bias: Some(Param::new(ArrayD::zeros(IxDyn(&[1])))),
            stride: 1,
            padding: Padding::Valid,
        }
    }

    #[test]
    fn conv_valid_known_values() {
        let conv = simple_conv();
        let x = Array3::from_shape_fn((3, 3, 1), |(y, x, _)| (y * 3 + x) as f64)
            .insert_axis(Axis(0))
            .into_dyn();
        let y = conv.forward(&x);
        // y[0,0] = x[0,0]*1 + x[1,1]*2 = 0 + 8 = 8
        assert_eq!(y.shape(), &[1, 2, 2, 1]);
        assert_eq!(y[[0, 0, 0, 0]], 8.0);
        assert_eq!(y[[0, 1, 1, 0]], 4.0 + 2.0 * 8.0);
    }

    #[test]
    fn same_padding_preserves_size() {
        let mut k = ArrayD::zeros(IxDyn(&[3, 3, 1, 2]));
        k[[1, 1, 0, 0]] = 1.0;
        k[[1, 1, 0, 1]] = -1.0;
        let conv = Conv2d::<f64> {
            kernel: Param::new(k),
            bias: None,
            stride: 1,
            padding: Padding::Same,
        };
        let x = ArrayD::from_elem(IxDyn(&[2, 5, 5, 1]), 3.0);
        let y = conv.forward(&x);
        assert_eq!(y.shape(), &[2, 5, 5, 2]);
        assert_eq!(y[[0, 2, 2, 0]], 3.0);
        assert_eq!(y[[0, 2, 2, 1]], -3.0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = arr2(&[[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]]).into_dyn();
        let y = softmax_forward(&x);
        let s0: f64 = y.slice(ndarray::s![0, ..]).sum();
        assert!((s0 - 1.0).abs() < 1e-12);
        assert!((y[[1, 0]] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn max_pool_routes_gradient_to_argmax() {
        let x = arr2(&[[1.0, 5.0], [2.0, 3.0]])
            .insert_axis(Axis(2))
            .insert_axis(Axis(0))
            .into_dyn();
        let (y, cache) = max_pool_forward(&x, 2, 2, Padding::Valid);
        assert_eq!(y[[0, 0, 0, 0]], 5.0);
        let dy = ArrayD::from_elem(IxDyn(&[1, 1, 1, 1]), 7.0);
        let dx = max_pool_backward(x.shape(), &cache, &dy);
        assert_eq!(dx[[0, 0, 1, 0]], 7.0);
        assert_eq!(dx[[0, 0, 0, 0]], 0.0);
    }

    #[test]
    fn dropout_infer_scale_matches_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = ArrayD::from_elem(IxDyn(&[1, 10_000]), 1.0f64);
        let (y, _) = dropout_forward(&x, 0.25, &mut rng);
        let mean = y.sum() / 10_000.0;
        assert!((mean - 1.0).abs() < 0.05, "inverted dropout keeps scale, got {mean}");
    }

    #[test]
    fn batchnorm_train_normalizes() {
        let mut bn = BatchNorm::<f64>::new(2);
        let x = arr2(&[[1.0, 10.0], [3.0, 30.0], [5.0, 50.0], [7.0, 70.0]]).into_dyn();
        let (y, _) = bn.forward_train(&x);
        let yf = y.view().into_shape_with_order((4, 2)).unwrap();
        let mean = yf.sum_axis(Axis(0)) / 4.0;
        assert!(mean.iter().all(|v| v.abs() < 1e-9));
        // eps keeps the normalized variance slightly below 1
        let var = yf.map_axis(Axis(0), |col| col.iter().map(|v| v * v).sum::<f64>() / 4.0);
        assert!(var.iter().all(|v| (*v - 1.0).abs() < 0.01), "{var:?}");
    }

    #[test]
    fn upsample_round_trip_shapes() {
        let x = ArrayD::from_shape_fn(IxDyn(&[1, 2, 2, 3]), |ix| (ix[1] + ix[2] + ix[3]) as f64);
        let y = upsample_forward(&x, 2);
        assert_eq!(y.shape(), &[1, 4, 4, 3]);
        assert_eq!(y[[0, 3, 3, 1]], x[[0, 1, 1, 1]]);
        let dx = upsample_backward(2, &y);
        assert_eq!(dx[[0, 0, 0, 0]], 4.0 * x[[0, 0, 0, 0]]);
    }

    #[test]
    fn concat_backward_splits_channels() {
        let a = ArrayD::from_elem(IxDyn(&[1, 2, 2, 2]), 1.0f64);
        let b = ArrayD::from_elem(IxDyn(&[1, 2, 2, 3]), 2.0f64);
        let y = concat_forward(&[&a, &b]);
        assert_eq!(y.shape(), &[1, 2, 2, 5]);
        let grads = concat_backward(&[&a, &b], &y);
        assert_eq!(grads[0].shape(), a.shape());
        assert_eq!(grads[1].shape(), b.shape());
        assert_eq!(grads[1][[0, 0, 0, 0]], 2.0);
    }

    #[test]
    fn dense_known_gradient() {
        let mut d = Dense::<f64> {
            weight: Param::new(arr2(&[[1.0, 0.0], [0.0, 1.0]]).into_dyn()),
            bias: Param::new(arr1(&[0.0, 0.0]).into_dyn()),
        };
        let x = arr2(&[[2.0, 3.0]]).into_dyn();
        let dy = arr2(&[[1.0, 1.0]]).into_dyn();
        let dx = d.backward(&x, &dy);
        assert_eq!(dx, arr2(&[[1.0, 1.0]]).into_dyn());
        assert_eq!(d.weight.grad[[0, 0]], 2.0);
        assert_eq!(d.weight.grad[[1, 1]], 3.0);
        assert_eq!(d.bias.grad[[0]], 1.0);
    }
}
