//! 2D cross-correlation kernels for NCHW tensors, lowered to matrix products
//! through im2col.
//!
//! The transposed convolution is never implemented separately: its forward
//! pass is the input-gradient of [`conv2d`] and its backward passes are
//! [`conv2d`] and [`conv2d_weight_grad`] with roles swapped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::scalar::{matmul, MatRef, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    /// `(k − 1) / 2` zeros on each side; preserves `h / stride` for odd kernels.
    Same,
    Valid,
}

impl Padding {
    pub fn amount(self, kernel: usize) -> usize {
        match self {
            Padding::Same => (kernel - 1) / 2,
            Padding::Valid => 0,
        }
    }
}

/// Geometry of one convolution: input `n × c_in × h × w`, kernel
/// `c_out × c_in × kh × kw`, output `n × c_out × ho × wo`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub n: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeometry {
    pub fn new(
        input: [usize; 4],
        kernel: [usize; 4],
        stride: (usize, usize),
        padding: Padding,
    ) -> Result<Self> {
        let [n, c_in, h, w] = input;
        let [c_out, kc, kh, kw] = kernel;
        if kc != c_in {
            return Err(Error::Shape(format!(
                "input has {c_in} channels but kernel expects {kc}"
            )));
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::Shape("stride must be positive".into()));
        }
        let (ph, pw) = (padding.amount(kh), padding.amount(kw));
        if h + 2 * ph < kh || w + 2 * pw < kw {
            return Err(Error::Shape(format!(
                "kernel {kh}×{kw} larger than padded input {}×{}",
                h + 2 * ph,
                w + 2 * pw
            )));
        }
        Ok(Self {
            n,
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            sh: stride.0,
            sw: stride.1,
            ph,
            pw,
            ho: (h + 2 * ph - kh) / stride.0 + 1,
            wo: (w + 2 * pw - kw) / stride.1 + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn out_positions(&self) -> usize {
        self.n * self.ho * self.wo
    }
}

fn dims4<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<[usize; 4]> {
    match *t.shape() {
        [a, b, c, d] => Ok([a, b, c, d]),
        ref s => Err(Error::Shape(format!("{what} must be rank 4 (NCHW), got {s:?}"))),
    }
}

/// `[c_in·kh·kw, n·ho·wo]` patch matrix.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeometry) -> Vec<T> {
    let cols = g.out_positions();
    let mut out = vec![T::zero(); g.patch_len() * cols];
    let plane = g.ho * g.wo;
    for ci in 0..g.c_in {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for n in 0..g.n {
                    let src = &x[(n * g.c_in + ci) * g.h * g.w..][..g.h * g.w];
                    for oh in 0..g.ho {
                        let ih = (oh * g.sh + ki) as isize - g.ph as isize;
                        if ih < 0 || ih >= g.h as isize {
                            continue;
                        }
                        let src_row = &src[ih as usize * g.w..][..g.w];
                        let dst_row = &mut dst[n * plane + oh * g.wo..][..g.wo];
                        for (ow, d) in dst_row.iter_mut().enumerate() {
                            let iw = (ow * g.sw + kj) as isize - g.pw as isize;
                            if iw >= 0 && iw < g.w as isize {
                                *d = src_row[iw as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Scatter-adds a patch matrix back into an `n × c_in × h × w` buffer.
fn col2im<T: Scalar>(cols_mat: &[T], g: &ConvGeometry) -> Vec<T> {
    let cols = g.out_positions();
    let plane = g.ho * g.wo;
    let mut out = vec![T::zero(); g.n * g.c_in * g.h * g.w];
    for ci in 0..g.c_in {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &cols_mat[row * cols..(row + 1) * cols];
                for n in 0..g.n {
                    let dst = &mut out[(n * g.c_in + ci) * g.h * g.w..][..g.h * g.w];
                    for oh in 0..g.ho {
                        let ih = (oh * g.sh + ki) as isize - g.ph as isize;
                        if ih < 0 || ih >= g.h as isize {
                            continue;
                        }
                        let dst_row = &mut dst[ih as usize * g.w..][..g.w];
                        let src_row = &src[n * plane + oh * g.wo..][..g.wo];
                        for (ow, &s) in src_row.iter().enumerate() {
                            let iw = (ow * g.sw + kj) as isize - g.pw as isize;
                            if iw >= 0 && iw < g.w as isize {
                                dst_row[iw as usize] += s;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// `[n, c, p]` → `[c, n·p]`.
fn to_channel_major<T: Scalar>(x: &[T], n: usize, c: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for i in 0..n {
        for ch in 0..c {
            out[ch * n * p + i * p..][..p].copy_from_slice(&x[(i * c + ch) * p..][..p]);
        }
    }
    out
}

/// `[c, n·p]` → `[n, c, p]`.
fn from_channel_major<T: Scalar>(x: &[T], n: usize, c: usize, p: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for i in 0..n {
        for ch in 0..c {
            out[(i * c + ch) * p..][..p].copy_from_slice(&x[ch * n * p + i * p..][..p]);
        }
    }
    out
}

/// Cross-correlation of `input` (`n × c_in × h × w`) with `weight`
/// (`c_out × c_in × kh × kw`), plus an optional per-channel bias.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: (usize, usize),
    padding: Padding,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(dims4(input, "conv input")?, dims4(weight, "conv weight")?, stride, padding)?;
    if let Some(b) = bias {
        if b.len() != g.c_out {
            return Err(Error::Shape(format!(
                "bias has {} entries for {} output channels",
                b.len(),
                g.c_out
            )));
        }
    }
    let cols = im2col(input.data(), &g);
    let p = g.out_positions();
    let mut out_cm = vec![T::zero(); g.c_out * p];
    matmul(
        MatRef::new(weight.data(), g.c_out, g.patch_len()),
        MatRef::new(&cols, g.patch_len(), p),
        T::zero(),
        &mut out_cm,
    );
    let plane = g.ho * g.wo;
    let mut out = from_channel_major(&out_cm, g.n, g.c_out, plane);
    if let Some(b) = bias {
        for (chunk, i) in out.chunks_mut(plane).zip(0..) {
            let bv = b.data()[i % g.c_out];
            chunk.iter_mut().for_each(|v| *v += bv);
        }
    }
    Tensor::from_vec(&[g.n, g.c_out, g.ho, g.wo], out)
}

/// Gradient of a [`conv2d`] with respect to its input, for an input of
/// spatial size `input_hw`. This is also the transposed-convolution forward.
pub fn conv2d_input_grad<T: Scalar>(
    grad_out: &Tensor<T>,
    weight: &Tensor<T>,
    input_hw: (usize, usize),
    stride: (usize, usize),
    padding: Padding,
) -> Result<Tensor<T>> {
    let [n, c_out, ho, wo] = dims4(grad_out, "output gradient")?;
    let wd = dims4(weight, "conv weight")?;
    if wd[0] != c_out {
        return Err(Error::Shape(format!(
            "gradient has {c_out} channels but kernel produces {}",
            wd[0]
        )));
    }
    let g = ConvGeometry::new([n, wd[1], input_hw.0, input_hw.1], wd, stride, padding)?;
    if (g.ho, g.wo) != (ho, wo) {
        return Err(Error::Shape(format!(
            "input {}×{} convolves to {}×{}, not {ho}×{wo}",
            input_hw.0, input_hw.1, g.ho, g.wo
        )));
    }
    let p = g.out_positions();
    let g_cm = to_channel_major(grad_out.data(), n, c_out, ho * wo);
    let mut dcols = vec![T::zero(); g.patch_len() * p];
    matmul(
        MatRef::new(weight.data(), c_out, g.patch_len()).t(),
        MatRef::new(&g_cm, c_out, p),
        T::zero(),
        &mut dcols,
    );
    Tensor::from_vec(&[n, g.c_in, g.h, g.w], col2im(&dcols, &g))
}

/// Gradient of a [`conv2d`] with respect to its kernel.
pub fn conv2d_weight_grad<T: Scalar>(
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
    kernel: (usize, usize),
    stride: (usize, usize),
    padding: Padding,
) -> Result<Tensor<T>> {
    let c_in = dims4(input, "conv input")?[1];
    let c_out = dims4(grad_out, "output gradient")?[1];
    let mut dw = Tensor::zeros(&[c_out, c_in, kernel.0, kernel.1]);
    conv2d_weight_grad_into(input, grad_out, stride, padding, &mut dw)?;
    Ok(dw)
}

/// Adds the kernel gradient of a [`conv2d`] into `acc`, whose shape fixes
/// the kernel size.
pub fn conv2d_weight_grad_into<T: Scalar>(
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: (usize, usize),
    padding: Padding,
    acc: &mut Tensor<T>,
) -> Result<()> {
    let [n, c_in, h, w] = dims4(input, "conv input")?;
    let [gn, c_out, ho, wo] = dims4(grad_out, "output gradient")?;
    let kd = dims4(acc, "kernel gradient")?;
    if gn != n {
        return Err(Error::Shape(format!("batch {n} vs gradient batch {gn}")));
    }
    if kd[0] != c_out {
        return Err(Error::Shape(format!(
            "kernel gradient has {} output channels, gradient has {c_out}",
            kd[0]
        )));
    }
    let g = ConvGeometry::new([n, c_in, h, w], kd, stride, padding)?;
    if (g.ho, g.wo) != (ho, wo) {
        return Err(Error::Shape(format!(
            "input convolves to {}×{}, gradient is {ho}×{wo}",
            g.ho, g.wo
        )));
    }
    let cols = im2col(input.data(), &g);
    let p = g.out_positions();
    let g_cm = to_channel_major(grad_out.data(), n, c_out, ho * wo);
    matmul(
        MatRef::new(&g_cm, c_out, p),
        MatRef::new(&cols, g.patch_len(), p).t(),
        T::one(),
        acc.data_mut(),
    );
    Ok(())
}

/// Per-channel sum of an NCHW gradient.
pub fn channel_sum<T: Scalar>(grad: &Tensor<T>) -> Result<Tensor<T>> {
    let c = dims4(grad, "gradient")?[1];
    let mut out = Tensor::zeros(&[c]);
    channel_sum_into(grad, &mut out)?;
    Ok(out)
}

/// Adds the per-channel sum of an NCHW gradient into `acc`.
pub fn channel_sum_into<T: Scalar>(grad: &Tensor<T>, acc: &mut Tensor<T>) -> Result<()> {
    let [n, c, h, w] = dims4(grad, "gradient")?;
    if acc.len() != c {
        return Err(Error::Shape(format!("{} bias slots for {c} channels", acc.len())));
    }
    let out = acc.data_mut();
    for i in 0..n {
        for (ch, o) in out.iter_mut().enumerate() {
            *o += grad.data()[(i * c + ch) * h * w..][..h * w].iter().copied().sum();
        }
    }
    Ok(())
}
