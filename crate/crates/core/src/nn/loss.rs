use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct XentLoss<T> {
    /// Mean negative log-likelihood.
    pub loss: T,
    /// Gradient with respect to the pre-softmax logits: `(p − onehot) / n`.
    pub logit_grad: Tensor<T>,
    /// Set when a true-class probability fell below [`PROB_FLOOR`] and was clamped.
    pub clamped: bool,
}

/// Cross-entropy of softmax outputs `probs` (`n × classes`) against class
/// indices.
pub fn xent_loss<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<XentLoss<T>> {
    let (n, k) = match *probs.shape() {
        [n, k] => (n, k),
        ref s => return Err(Error::Shape(format!("probabilities must be n × classes, got {s:?}"))),
    };
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} predictions but {} labels", labels.len())));
    }
    let floor = T::lit(PROB_FLOOR);
    let inv_n = T::one() / T::from_usize(n).unwrap();
    let mut clamped = false;
    let mut loss = T::zero();
    let mut grad = probs.scale(inv_n);
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::Shape(format!("label {y} out of range for {k} classes")));
        }
        let p = probs.data()[i * k + y];
        if p < floor {
            clamped = true;
        }
        loss -= p.max(floor).ln();
        grad.data_mut()[i * k + y] -= inv_n;
    }
    Ok(XentLoss {
        loss: loss * inv_n,
        logit_grad: grad,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let p = Tensor::from_vec(&[2, 2], vec![1.0f64, 0.0, 0.0, 1.0]).unwrap();
        let out = xent_loss(&p, &[0, 1]).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(!out.clamped);
    }

    #[test]
    fn uniform_two_class_is_ln2() {
        let p = Tensor::from_vec(&[3, 2], vec![0.5f64; 6]).unwrap();
        let out = xent_loss(&p, &[0, 1, 1]).unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_is_clamped_and_flagged() {
        let p = Tensor::from_vec(&[1, 2], vec![1.0f64, 0.0]).unwrap();
        let out = xent_loss(&p, &[1]).unwrap();
        assert!(out.clamped);
        assert!((out.loss - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn label_mismatch() {
        let p = Tensor::from_vec(&[1, 2], vec![0.5f64, 0.5]).unwrap();
        assert!(xent_loss(&p, &[0, 1]).is_err());
        assert!(xent_loss(&p, &[2]).is_err());
    }
}
