use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Mode, Network, Tensor};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct PenaltyOutput<T> {
    /// `λ · mean_i (‖∇ critic(x̂_i)‖ − 1)²`
    pub penalty: T,
    /// Gradient of the penalty with respect to the critic parameters.
    pub param_grads: Vec<Tensor<T>>,
    /// Per-sample input-gradient norms.
    pub grad_norms: Vec<T>,
}

/// Per-sample gradients of the critic score with respect to its input.
pub fn input_gradients<T: Scalar>(critic: &Network<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (scores, tape) = critic.forward(x, Mode::Train)?;
    critic.input_grad(&tape, &Tensor::full(scores.shape(), T::one()))
}

/// Penalty on random interpolates `x̂ = ε·real + (1 − ε)·fake`, with one
/// `ε ~ U[0, 1]` per sample.
pub fn gradient_penalty<T: Scalar, R: Rng + ?Sized>(
    critic: &Network<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    lambda: f64,
    rng: &mut R,
) -> Result<PenaltyOutput<T>> {
    let eps: Vec<T> = (0..real.batch())
        .map(|_| T::lit(rng.gen_range(0.0..1.0)))
        .collect();
    gradient_penalty_at(critic, real, fake, &eps, lambda)
}

/// [`gradient_penalty`] with explicit interpolation weights.
///
/// The parameter gradient differentiates the input-gradient norm through
/// the critic's backward pass (see [`Network::input_grad_param_grads`]).
pub fn gradient_penalty_at<T: Scalar>(
    critic: &Network<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    eps: &[T],
    lambda: f64,
) -> Result<PenaltyOutput<T>> {
    let mut param_grads = critic.zero_grads();
    let (penalty, grad_norms) = penalty_accumulate(critic, real, fake, eps, lambda, &mut param_grads)?;
    Ok(PenaltyOutput {
        penalty,
        param_grads,
        grad_norms,
    })
}

/// Penalty and per-sample input-gradient norms; the parameter gradient is
/// added into `acc`.
pub(crate) fn penalty_accumulate<T: Scalar>(
    critic: &Network<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    eps: &[T],
    lambda: f64,
    acc: &mut [Tensor<T>],
) -> Result<(T, Vec<T>)> {
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("gradient penalty weight {lambda} must be ≥ 0")));
    }
    if real.shape() != fake.shape() {
        return Err(Error::Shape(format!(
            "real batch {:?} vs fake batch {:?}",
            real.shape(),
            fake.shape()
        )));
    }
    let n = real.batch();
    if eps.len() != n {
        return Err(Error::Shape(format!("{} interpolation weights for batch {n}", eps.len())));
    }
    let item = real.item_len();
    let mut mixed = real.clone();
    for (i, &e) in eps.iter().enumerate() {
        let f = fake.item(i);
        for (m, &fv) in mixed.data_mut()[i * item..(i + 1) * item].iter_mut().zip(f) {
            *m = e * *m + (T::one() - e) * fv;
        }
    }

    let (scores, tape) = critic.forward(&mixed, Mode::Train)?;
    let recorded = critic.backward_recording(&tape, &Tensor::full(scores.shape(), T::one()))?;
    let g = &recorded.input_grad;

    let lam = T::lit(lambda);
    let inv_n = T::one() / T::from_usize(n).unwrap();
    let mut penalty = T::zero();
    let mut norms = Vec::with_capacity(n);
    let mut u = g.clone();
    for i in 0..n {
        let gi = g.item(i);
        let norm = gi.iter().map(|&v| v * v).sum::<T>().sqrt();
        let dev = norm - T::one();
        penalty += dev * dev;
        norms.push(norm);
        // ∂/∂g_i of λ/n (‖g_i‖ − 1)²; zero at g_i = 0.
        let k = if norm > T::zero() {
            lam * inv_n * (dev + dev) / norm
        } else {
            T::zero()
        };
        for v in &mut u.data_mut()[i * item..(i + 1) * item] {
            *v = *v * k;
        }
    }
    critic.input_grad_param_grads(&tape, &recorded, &u, acc)?;
    Ok((lam * penalty * inv_n, norms))
}
