//! Layer definitions with forward, backward and second-order passes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::conv::{
    channel_sum_into, conv2d, conv2d_input_grad, conv2d_weight_grad_into, Padding,
};
use crate::nn::tensor::Tensor;
use crate::scalar::{matmul, MatRef, Scalar};

/// Weight initialisation standard deviation.
pub const INIT_SIGMA: f64 = 0.02;
pub const DEFAULT_LEAK: f64 = 0.2;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Infer,
}

/// Cross-correlation layer; weight `c_out × c_in × kh × kw`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: (usize, usize),
    pub padding: Padding,
}

/// Transposed convolution; weight `c_in × c_out × kh × kw`, output spatial
/// size = input size × stride.
#[derive(Clone, Debug, PartialEq)]
pub struct TConv2d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: (usize, usize),
    pub padding: Padding,
}

/// `out = input · weight + bias`; weight `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Per-channel normalisation over batch and spatial axes.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    TConv2d(TConv2d<T>),
    Dense(Dense<T>),
    BatchNorm(BatchNorm<T>),
    LeakyRelu { alpha: T },
    Sigmoid,
    /// Over the last axis.
    Softmax,
    Flatten,
    /// Reshape each batch item to the given shape.
    Reshape(Vec<usize>),
}

/// What a layer keeps from its forward pass.
#[derive(Clone, Debug)]
pub enum Cache<T> {
    Input(Tensor<T>),
    Output(Tensor<T>),
    Norm {
        xhat: Tensor<T>,
        inv_std: Vec<T>,
        batch_mean: Vec<T>,
        batch_var: Vec<T>,
        mode: Mode,
    },
    Shape(Vec<usize>),
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: Tensor::randn(&[c_out, c_in, kernel, kernel], INIT_SIGMA, rng),
            bias: Tensor::zeros(&[c_out]),
            stride: (stride, stride),
            padding,
        }
    }
}

impl<T: Scalar> TConv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: Tensor::randn(&[c_in, c_out, kernel, kernel], INIT_SIGMA, rng),
            bias: Tensor::zeros(&[c_out]),
            stride: (stride, stride),
            padding,
        }
    }

    fn out_hw(&self, input: &Tensor<T>) -> Result<(usize, usize)> {
        if input.rank() != 4 {
            return Err(Error::Shape(format!(
                "transposed conv input must be rank 4, got {:?}",
                input.shape()
            )));
        }
        Ok((input.shape()[2] * self.stride.0, input.shape()[3] * self.stride.1))
    }

    fn forward_no_bias(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let hw = self.out_hw(input)?;
        conv2d_input_grad(input, &self.weight, hw, self.stride, self.padding)
    }
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        Self {
            weight: Tensor::randn(&[n_in, n_out], INIT_SIGMA, rng),
            bias: Tensor::zeros(&[n_out]),
        }
    }

    fn dims(&self) -> (usize, usize) {
        (self.weight.shape()[0], self.weight.shape()[1])
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<usize> {
        let (n_in, _) = self.dims();
        match *input.shape() {
            [n, f] if f == n_in => Ok(n),
            ref s => Err(Error::Shape(format!(
                "dense layer expects batch × {n_in}, got {s:?}"
            ))),
        }
    }

    /// `input · weight`, without bias.
    fn apply(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.check_input(input)?;
        let (n_in, n_out) = self.dims();
        let mut out = vec![T::zero(); n * n_out];
        matmul(
            MatRef::new(input.data(), n, n_in),
            MatRef::new(self.weight.data(), n_in, n_out),
            T::zero(),
            &mut out,
        );
        Tensor::from_vec(&[n, n_out], out)
    }

    /// Adds `a^T · b` for two batch-major matrices (a weight-shaped
    /// product) into `acc`. Shapes are checked by the callers.
    fn outer_into(&self, a: &Tensor<T>, b: &Tensor<T>, acc: &mut Tensor<T>) {
        let n = a.batch();
        let (n_in, n_out) = self.dims();
        matmul(
            MatRef::new(a.data(), n, n_in).t(),
            MatRef::new(b.data(), n, n_out),
            T::one(),
            acc.data_mut(),
        );
    }
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
        }
    }

    fn layout(&self, input: &Tensor<T>) -> Result<(usize, usize, usize)> {
        let c = self.gamma.len();
        let s = input.shape();
        if s.len() < 2 || s[1] != c {
            return Err(Error::Shape(format!(
                "batch norm over {c} channels got input {s:?}"
            )));
        }
        Ok((s[0], c, s[2..].iter().product()))
    }

    /// Folds a batch's statistics into the running averages.
    pub fn absorb(&mut self, batch_mean: &[T], batch_var: &[T]) {
        let m = T::lit(BN_MOMENTUM);
        let one_m = T::one() - m;
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(batch_mean) {
            *r = m * *r + one_m * b;
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(batch_var) {
            *r = m * *r + one_m * b;
        }
    }
}

impl<T: Scalar> Layer<T> {
    pub fn leaky_relu(alpha: f64) -> Self {
        Layer::LeakyRelu {
            alpha: T::lit(alpha),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::TConv2d(_) => "tconv2d",
            Layer::Dense(_) => "dense",
            Layer::BatchNorm(_) => "batchnorm",
            Layer::LeakyRelu { .. } => "leaky_relu",
            Layer::Sigmoid => "sigmoid",
            Layer::Softmax => "softmax",
            Layer::Flatten => "flatten",
            Layer::Reshape(_) => "reshape",
        }
    }

    /// Trainable parameters, in gradient order.
    pub fn params(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv2d(l) => vec![&l.weight, &l.bias],
            Layer::TConv2d(l) => vec![&l.weight, &l.bias],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => vec![&l.gamma, &l.beta],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::TConv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => vec![&mut l.gamma, &mut l.beta],
            _ => Vec::new(),
        }
    }

    /// Every persistent tensor (parameters and running statistics) with its
    /// field name.
    pub fn state(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::Conv2d(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::TConv2d(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::Dense(l) => vec![("weight", &l.weight), ("bias", &l.bias)],
            Layer::BatchNorm(l) => vec![
                ("gamma", &l.gamma),
                ("beta", &l.beta),
                ("running_mean", &l.running_mean),
                ("running_var", &l.running_var),
            ],
            _ => Vec::new(),
        }
    }

    pub fn state_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        match self {
            Layer::Conv2d(l) => vec![("weight", &mut l.weight), ("bias", &mut l.bias)],
            Layer::TConv2d(l) => vec![("weight", &mut l.weight), ("bias", &mut l.bias)],
            Layer::Dense(l) => vec![("weight", &mut l.weight), ("bias", &mut l.bias)],
            Layer::BatchNorm(l) => vec![
                ("gamma", &mut l.gamma),
                ("beta", &mut l.beta),
                ("running_mean", &mut l.running_mean),
                ("running_var", &mut l.running_var),
            ],
            _ => Vec::new(),
        }
    }

    pub fn forward(&self, input: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Cache<T>)> {
        let keep = || Cache::Input(input.clone());
        match self {
            Layer::Conv2d(l) => {
                let out = conv2d(input, &l.weight, Some(&l.bias), l.stride, l.padding)?;
                Ok((out, keep()))
            }
            Layer::TConv2d(l) => {
                let mut out = l.forward_no_bias(input)?;
                add_channel_bias(&mut out, &l.bias);
                Ok((out, keep()))
            }
            Layer::Dense(l) => {
                let mut out = l.apply(input)?;
                let n_out = l.bias.len();
                for row in out.data_mut().chunks_mut(n_out) {
                    for (v, &b) in row.iter_mut().zip(l.bias.data()) {
                        *v += b;
                    }
                }
                Ok((out, keep()))
            }
            Layer::BatchNorm(l) => batchnorm_forward(l, input, mode),
            Layer::LeakyRelu { alpha } => {
                let a = *alpha;
                Ok((input.map(|v| if v >= T::zero() { v } else { a * v }), keep()))
            }
            Layer::Sigmoid => {
                let out = input.map(sigmoid);
                Ok((out.clone(), Cache::Output(out)))
            }
            Layer::Softmax => {
                let out = softmax_rows(input);
                Ok((out.clone(), Cache::Output(out)))
            }
            Layer::Flatten => {
                let n = input.batch();
                let f = input.item_len();
                Ok((input.clone().reshape(&[n, f])?, Cache::Shape(input.shape().to_vec())))
            }
            Layer::Reshape(item_shape) => {
                let mut shape = vec![input.batch()];
                shape.extend_from_slice(item_shape);
                Ok((input.clone().reshape(&shape)?, Cache::Shape(input.shape().to_vec())))
            }
        }
    }

    /// Returns the input gradient and the parameter gradients (in
    /// [`Layer::params`] order).
    pub fn backward(&self, cache: &Cache<T>, grad: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let mut acc: Vec<Tensor<T>> = self.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
        let gin = self.backward_impl(cache, grad, Some(&mut acc))?;
        Ok((gin, acc))
    }

    /// [`Layer::backward`] that adds the parameter gradients into `acc`.
    pub fn backward_accumulate(
        &self,
        cache: &Cache<T>,
        grad: &Tensor<T>,
        acc: &mut [Tensor<T>],
    ) -> Result<Tensor<T>> {
        self.backward_impl(cache, grad, Some(acc))
    }

    /// Input gradient only; skips the parameter-gradient products.
    pub fn input_grad(&self, cache: &Cache<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
        self.backward_impl(cache, grad, None)
    }

    fn check_accumulator(&self, acc: &[Tensor<T>]) -> Result<()> {
        let params = self.params();
        if acc.len() != params.len() || acc.iter().zip(&params).any(|(a, p)| a.shape() != p.shape()) {
            return Err(Error::Shape(format!(
                "{} gradient accumulator does not match its parameters",
                self.kind()
            )));
        }
        Ok(())
    }

    fn backward_impl(
        &self,
        cache: &Cache<T>,
        grad: &Tensor<T>,
        acc: Option<&mut [Tensor<T>]>,
    ) -> Result<Tensor<T>> {
        if let Some(a) = &acc {
            self.check_accumulator(a)?;
        }
        match (self, cache) {
            (Layer::Conv2d(l), Cache::Input(x)) => {
                let hw = (x.shape()[2], x.shape()[3]);
                let gin = conv2d_input_grad(grad, &l.weight, hw, l.stride, l.padding)?;
                if let Some([dw, db]) = acc {
                    conv2d_weight_grad_into(x, grad, l.stride, l.padding, dw)?;
                    channel_sum_into(grad, db)?;
                }
                Ok(gin)
            }
            (Layer::TConv2d(l), Cache::Input(x)) => {
                let gin = conv2d(grad, &l.weight, None, l.stride, l.padding)?;
                if let Some([dw, db]) = acc {
                    conv2d_weight_grad_into(grad, x, l.stride, l.padding, dw)?;
                    channel_sum_into(grad, db)?;
                }
                Ok(gin)
            }
            (Layer::Dense(l), Cache::Input(x)) => {
                let n = l.check_input(x)?;
                let (n_in, n_out) = l.dims();
                if grad.shape() != [n, n_out] {
                    return Err(Error::Shape(format!(
                        "dense gradient {:?}, expected [{n}, {n_out}]",
                        grad.shape()
                    )));
                }
                let mut gin = vec![T::zero(); n * n_in];
                matmul(
                    MatRef::new(grad.data(), n, n_out),
                    MatRef::new(l.weight.data(), n_in, n_out).t(),
                    T::zero(),
                    &mut gin,
                );
                if let Some([dw, db]) = acc {
                    l.outer_into(x, grad, dw);
                    for row in grad.data().chunks(n_out) {
                        for (d, &g) in db.data_mut().iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                }
                Tensor::from_vec(&[n, n_in], gin)
            }
            (Layer::BatchNorm(l), cache) => {
                let (gin, dgamma, dbeta) = batchnorm_backward(l, cache, grad)?;
                if let Some([g, b]) = acc {
                    g.data_mut().iter_mut().zip(&dgamma).for_each(|(a, &d)| *a += d);
                    b.data_mut().iter_mut().zip(&dbeta).for_each(|(a, &d)| *a += d);
                }
                Ok(gin)
            }
            (Layer::LeakyRelu { alpha }, Cache::Input(x)) => {
                let a = *alpha;
                grad.zip_map(x, |g, v| if v >= T::zero() { g } else { a * g })
            }
            (Layer::Sigmoid, Cache::Output(y)) => grad.zip_map(y, |g, s| g * s * (T::one() - s)),
            (Layer::Softmax, Cache::Output(y)) => {
                let last = *y.shape().last().unwrap();
                let mut gin = grad.clone();
                for (gr, yr) in gin.data_mut().chunks_mut(last).zip(y.data().chunks(last)) {
                    let dot: T = gr.iter().zip(yr).map(|(&g, &p)| g * p).sum();
                    for (g, &p) in gr.iter_mut().zip(yr) {
                        *g = p * (*g - dot);
                    }
                }
                Ok(gin)
            }
            (Layer::Flatten | Layer::Reshape(_), Cache::Shape(shape)) => grad.clone().reshape(shape),
            (layer, _) => Err(Error::Shape(format!(
                "{} layer received a cache from a different layer",
                layer.kind()
            ))),
        }
    }

    /// Adjoint of the input-gradient map `g_out ↦ g_in` computed by
    /// [`Layer::backward`], taken at the recorded upstream gradient `g_out`.
    ///
    /// Given `u = ∂L/∂g_in`, returns `∂L/∂g_out` and adds `∂L/∂θ` into `acc`.
    /// Only layers whose input gradient is linear in `g_out` and whose
    /// activation masks are locally constant are supported.
    pub fn input_grad_adjoint(
        &self,
        cache: &Cache<T>,
        g_out: &Tensor<T>,
        u: &Tensor<T>,
        acc: &mut [Tensor<T>],
    ) -> Result<Tensor<T>> {
        self.check_accumulator(acc)?;
        match (self, cache, acc) {
            (Layer::Conv2d(l), Cache::Input(_), [dw, _]) => {
                conv2d_weight_grad_into(u, g_out, l.stride, l.padding, dw)?;
                conv2d(u, &l.weight, None, l.stride, l.padding)
            }
            (Layer::TConv2d(l), Cache::Input(_), [dw, _]) => {
                conv2d_weight_grad_into(g_out, u, l.stride, l.padding, dw)?;
                l.forward_no_bias(u)
            }
            (Layer::Dense(l), Cache::Input(_), [dw, _]) => {
                l.check_input(u)?;
                l.outer_into(u, g_out, dw);
                l.apply(u)
            }
            (Layer::LeakyRelu { alpha }, Cache::Input(x), _) => {
                let a = *alpha;
                u.zip_map(x, |g, v| if v >= T::zero() { g } else { a * g })
            }
            (Layer::Flatten | Layer::Reshape(_), Cache::Shape(_), _) => u.clone().reshape(g_out.shape()),
            (layer, _, _) => Err(Error::Unsupported(format!(
                "second-order pass through a {} layer",
                layer.kind()
            ))),
        }
    }
}

fn add_channel_bias<T: Scalar>(out: &mut Tensor<T>, bias: &Tensor<T>) {
    let c = bias.len();
    let plane = out.len() / (out.batch() * c);
    for (chunk, i) in out.data_mut().chunks_mut(plane).zip(0..) {
        let b = bias.data()[i % c];
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn softmax_rows<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let last = *input.shape().last().unwrap();
    let mut out = input.clone();
    for row in out.data_mut().chunks_mut(last) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

fn batchnorm_forward<T: Scalar>(
    l: &BatchNorm<T>,
    input: &Tensor<T>,
    mode: Mode,
) -> Result<(Tensor<T>, Cache<T>)> {
    let (n, c, s) = l.layout(input)?;
    let eps = T::lit(BN_EPS);
    let x = input.data();
    let idx = |i: usize, ch: usize| (i * c + ch) * s;
    let (mean, var) = match mode {
        Mode::Train => {
            if n < 2 {
                return Err(Error::BatchTooSmall);
            }
            let m = T::from_usize(n * s).unwrap();
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for ch in 0..c {
                let mut acc = T::zero();
                for i in 0..n {
                    acc += x[idx(i, ch)..][..s].iter().copied().sum();
                }
                mean[ch] = acc / m;
                let mut acc = T::zero();
                for i in 0..n {
                    acc += x[idx(i, ch)..][..s]
                        .iter()
                        .map(|&v| (v - mean[ch]) * (v - mean[ch]))
                        .sum();
                }
                var[ch] = acc / m;
            }
            (mean, var)
        }
        Mode::Infer => (l.running_mean.data().to_vec(), l.running_var.data().to_vec()),
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = input.clone();
    let mut out = input.clone();
    for i in 0..n {
        for ch in 0..c {
            let range = idx(i, ch)..idx(i, ch) + s;
            let (g, b) = (l.gamma.data()[ch], l.beta.data()[ch]);
            for (xh, o) in xhat.data_mut()[range.clone()]
                .iter_mut()
                .zip(&mut out.data_mut()[range])
            {
                *xh = (*xh - mean[ch]) * inv_std[ch];
                *o = g * *xh + b;
            }
        }
    }
    Ok((
        out,
        Cache::Norm {
            xhat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
            mode,
        },
    ))
}

fn batchnorm_backward<T: Scalar>(
    l: &BatchNorm<T>,
    cache: &Cache<T>,
    grad: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let Cache::Norm {
        xhat, inv_std, mode, ..
    } = cache
    else {
        return Err(Error::Shape("batchnorm layer received a foreign cache".into()));
    };
    let (n, c, s) = l.layout(grad)?;
    let idx = |i: usize, ch: usize| (i * c + ch) * s;
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for i in 0..n {
        for ch in 0..c {
            let g = &grad.data()[idx(i, ch)..][..s];
            let xh = &xhat.data()[idx(i, ch)..][..s];
            dgamma[ch] += g.iter().zip(xh).map(|(&a, &b)| a * b).sum();
            dbeta[ch] += g.iter().copied().sum();
        }
    }
    let mut gin = grad.clone();
    let m = T::from_usize(n * s).unwrap();
    for ch in 0..c {
        let gamma = l.gamma.data()[ch];
        match mode {
            Mode::Infer => {
                for i in 0..n {
                    for v in &mut gin.data_mut()[idx(i, ch)..][..s] {
                        *v = *v * gamma * inv_std[ch];
                    }
                }
            }
            Mode::Train => {
                // dx = γ/σ · (g − mean(g) − x̂·mean(g·x̂))
                let mean_g = dbeta[ch] / m;
                let mean_gx = dgamma[ch] / m;
                let k = gamma * inv_std[ch];
                for i in 0..n {
                    let xh = &xhat.data()[idx(i, ch)..][..s];
                    for (v, &x) in gin.data_mut()[idx(i, ch)..][..s].iter_mut().zip(xh) {
                        *v = k * (*v - mean_g - x * mean_gx);
                    }
                }
            }
        }
    }
    Ok((gin, dgamma, dbeta))
}
