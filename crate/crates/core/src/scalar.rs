//! Floating-point abstraction shared by every numeric routine.
//!
//! Training runs in `f32`; gradient checks and analytic oracles run in
//! `f64`. Matrix products dispatch to the matching `matrixmultiply` kernel.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + LowerExp
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// `c = alpha * a * b + beta * c` over strided row/column layouts.
    ///
    /// # Safety
    /// Every index reachable through the given strides must lie inside the
    /// corresponding buffer. Use [`matmul`] for the checked wrapper.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every supported scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("supported scalars convert to f64")
    }

    fn to_f32_lossy(self) -> f32 {
        self.to_f32().expect("supported scalars convert to f32")
    }

    fn from_f32_lossy(v: f32) -> Self {
        Self::from_f32(v).expect("f32 converts to every supported scalar")
    }

    fn lit(v: f64) -> Self {
        Self::from_f64_lossy(v)
    }
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Borrowed strided matrix view.
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a, T> MatRef<'a, T> {
    /// Dense row-major view.
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            row_stride: cols,
            col_stride: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    fn fits(&self) -> bool {
        if self.rows == 0 || self.cols == 0 {
            return true;
        }
        (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride < self.data.len()
    }
}

/// `out = a * b + beta * out`, with `out` dense row-major `a.rows × b.cols`.
pub fn matmul<T: Scalar>(a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, out: &mut [T]) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert!(a.fits() && b.fits(), "matrix view exceeds its buffer");
    assert!(out.len() >= a.rows * b.cols, "output buffer too small");
    if a.rows == 0 || b.cols == 0 {
        return;
    }
    if a.cols == 0 {
        for v in &mut out[..a.rows * b.cols] {
            *v = *v * beta;
        }
        return;
    }
    if thin_product(a, b, beta, out) {
        return;
    }
    // SAFETY: all three views were bounds-checked above.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            T::one(),
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            out.as_mut_ptr(),
            b.cols as isize,
            1,
        );
    }
}

/// Outer or inner dimension at or below which [`matmul`] skips packing.
const SMALL_DIM: usize = 16;

/// Unpacked product for thin operands; returns false when the shapes are
/// better served by the blocked kernel.
fn thin_product<T: Scalar>(a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, out: &mut [T]) -> bool {
    let (m, k) = (a.rows, a.cols);
    let rows_contiguous = b.col_stride == 1 && (m <= SMALL_DIM || k <= SMALL_DIM);
    let cols_contiguous = b.row_stride == 1 && a.col_stride == 1 && m <= SMALL_DIM;
    if !rows_contiguous && !cols_contiguous {
        return false;
    }
    vectorized(|| thin_product_generic(a, b, beta, out));
    true
}

/// Runs `f` compiled with AVX2 enabled when the CPU supports it, so that
/// simple element-wise loops inlined into it use 256-bit lanes.
#[inline(always)]
pub fn vectorized<R>(f: impl FnOnce() -> R) -> R {
    #[cfg(target_arch = "x86_64")]
    {
        #[target_feature(enable = "avx2")]
        unsafe fn with_avx2<R>(f: impl FnOnce() -> R) -> R {
            f()
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2.
            return unsafe { with_avx2(f) };
        }
    }
    f()
}

#[inline(always)]
fn thin_product_generic<T: Scalar>(a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, out: &mut [T]) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let out = &mut out[..m * n];
    let a_at = |r: usize, i: usize| a.data[r * a.row_stride + i * a.col_stride];
    if b.col_stride == 1 && (m <= SMALL_DIM || k <= SMALL_DIM) {
        scale_output(out, beta);
        let b_row = |i: usize| &b.data[i * b.row_stride..][..n];
        if m <= SMALL_DIM {
            for i in 0..k {
                let brow = b_row(i);
                for (r, orow) in out.chunks_exact_mut(n).enumerate() {
                    axpy(orow, a_at(r, i), brow);
                }
            }
        } else {
            for (r, orow) in out.chunks_exact_mut(n).enumerate() {
                for i in 0..k {
                    axpy(orow, a_at(r, i), b_row(i));
                }
            }
        }
    } else {
        for j in 0..n {
            let bcol = &b.data[j * b.col_stride..][..k];
            for r in 0..m {
                let d = dot(&a.data[r * a.row_stride..][..k], bcol);
                let o = &mut out[r * n + j];
                *o = if beta == T::zero() { d } else { beta * *o + d };
            }
        }
    }
}

#[inline(always)]
fn scale_output<T: Scalar>(out: &mut [T], beta: T) {
    if beta == T::zero() {
        out.fill(T::zero());
    } else if beta != T::one() {
        out.iter_mut().for_each(|v| *v = *v * beta);
    }
}

#[inline(always)]
fn axpy<T: Scalar>(out: &mut [T], alpha: T, x: &[T]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

#[inline(always)]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    const LANES: usize = 8;
    let mut acc = [T::zero(); LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let half = [acc[0] + acc[4], acc[1] + acc[5], acc[2] + acc[6], acc[3] + acc[7]];
    (half[0] + half[2]) + (half[1] + half[3]) + tail
}
