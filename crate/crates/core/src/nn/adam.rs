use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::scalar::{vectorized, Scalar};

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

pub const ADAM_EPS: f64 = 1e-8;

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[&Tensor<T>], lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
            lr: T::lit(lr),
            beta1: T::lit(beta1),
            beta2: T::lit(beta2),
            eps: T::lit(ADAM_EPS),
        }
    }

    /// One update. Parameters are untouched when any gradient is non-finite
    /// or mis-shaped.
    pub fn step(&mut self, mut params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "{} parameters, {} gradients, {} optimizer slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(Error::Shape(format!(
                    "parameter {i}: {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            if !g.all_finite() {
                return Err(Error::Diverged(format!("non-finite gradient for parameter {i}")));
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        // Bias corrections folded into the step size and the second moment.
        let step = self.lr / (T::one() - b1.powi(t));
        let inv_c2 = T::one() / (T::one() - b2.powi(t));
        let (one_b1, one_b2, eps) = (T::one() - b1, T::one() - b2, self.eps);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
            vectorized(|| {
                for (((pv, &gv), mv), vv) in p.iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mv = b1 * *mv + one_b1 * gv;
                    *vv = b2 * *vv + one_b2 * gv * gv;
                    *pv -= step * *mv / ((*vv * inv_c2).sqrt() + eps);
                }
            });
        }
        Ok(())
    }
}
