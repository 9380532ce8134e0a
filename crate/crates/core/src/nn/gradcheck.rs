//! Central finite-difference gradient verification.
//!
//! Entries whose ±h evaluations flip the sign of any leaky-ReLU input are
//! counted as kink crossings and skipped: the derivative is not defined
//! across them.

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::nn::layer::Mode;
use crate::nn::network::Network;
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;
use crate::seed::rng_from_seed;

/// Denominator floor for relative errors.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub tolerance: f64,
    /// Check at most this many randomly chosen entries per tensor.
    pub max_entries_per_tensor: Option<usize>,
    pub mode: Mode,
    pub seed: u64,
    /// Also check the gradient with respect to the network input.
    pub check_input: bool,
}

impl GradCheckOptions {
    pub fn new(tolerance: f64) -> Self {
        Self {
            tolerance,
            max_entries_per_tensor: None,
            mode: Mode::Train,
            seed: 0,
            check_input: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance && self.tensors.iter().any(|t| t.checked > 0)
    }

    pub fn checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).sum()
    }

    pub fn skipped(&self) -> usize {
        self.tensors.iter().map(|t| t.skipped_kinks).sum()
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Checks `analytic` against central differences of `eval`.
///
/// `eval` receives the full tensor list with one entry perturbed and
/// returns the scalar loss plus an activation sign pattern (empty when the
/// function has no kinks).
pub fn check_gradients<T, F>(
    names: &[String],
    tensors: &[Tensor<T>],
    analytic: &[Tensor<T>],
    opts: &GradCheckOptions,
    mut eval: F,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: FnMut(&[Tensor<T>]) -> Result<(T, Vec<bool>)>,
{
    if names.len() != tensors.len() || tensors.len() != analytic.len() {
        return Err(Error::Shape("names, tensors and gradients must align".into()));
    }
    let mut rng = rng_from_seed(opts.seed);
    let (_, base_pattern) = eval(tensors)?;
    let mut work: Vec<Tensor<T>> = tensors.to_vec();
    let mut report = GradCheckReport {
        tensors: Vec::new(),
        max_rel_error: 0.0,
        tolerance: opts.tolerance,
    };
    for (ti, name) in names.iter().enumerate() {
        if analytic[ti].shape() != tensors[ti].shape() {
            return Err(Error::Shape(format!("gradient for {name} has the wrong shape")));
        }
        let len = tensors[ti].len();
        let entries: Vec<usize> = match opts.max_entries_per_tensor {
            Some(k) if k < len => sample(&mut rng, len, k).into_vec(),
            _ => (0..len).collect(),
        };
        let mut check = TensorCheck {
            name: name.clone(),
            checked: 0,
            skipped_kinks: 0,
            max_rel_error: 0.0,
        };
        for j in entries {
            let theta = tensors[ti].data()[j];
            let h = T::lit(1e-5) * theta.abs().max(T::one());
            work[ti].data_mut()[j] = theta + h;
            let (plus, pat_plus) = eval(&work)?;
            work[ti].data_mut()[j] = theta - h;
            let (minus, pat_minus) = eval(&work)?;
            work[ti].data_mut()[j] = theta;
            if pat_plus != base_pattern || pat_minus != base_pattern {
                check.skipped_kinks += 1;
                continue;
            }
            let numeric = ((plus - minus) / (h + h)).to_f64_lossy();
            let err = rel_error(analytic[ti].data()[j].to_f64_lossy(), numeric);
            check.max_rel_error = check.max_rel_error.max(err);
            check.checked += 1;
        }
        report.max_rel_error = report.max_rel_error.max(check.max_rel_error);
        report.tensors.push(check);
    }
    Ok(report)
}

/// Gradient check of a whole network under the loss `Σ r ⊙ net(input)` for
/// a fixed random projection `r`.
pub fn grad_check<T: Scalar>(
    net: &Network<T>,
    input: &Tensor<T>,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let (out, tape) = net.forward(input, opts.mode)?;
    let mut rng = rng_from_seed(opts.seed ^ 0x5EED);
    let r = Tensor::<T>::randn(out.shape(), 1.0 / (out.len() as f64).sqrt(), &mut rng);
    let back = net.backward(&tape, &r)?;

    let params = net.params();
    let n_params = params.len();
    let mut names: Vec<String> = net
        .layers()
        .iter()
        .enumerate()
        .flat_map(|(i, l)| {
            let kind = l.kind();
            (0..l.params().len()).map(move |k| format!("{i}.{kind}.param{k}"))
        })
        .collect();
    let mut tensors: Vec<Tensor<T>> = params.into_iter().cloned().collect();
    let mut analytic = back.param_grads;
    if opts.check_input {
        names.push("input".into());
        tensors.push(input.clone());
        analytic.push(back.input_grad);
    }
    let mode = opts.mode;
    let mut scratch = net.clone();
    check_gradients(&names, &tensors, &analytic, opts, |ts| {
        for (p, t) in scratch.params_mut().into_iter().zip(&ts[..n_params]) {
            p.data_mut().copy_from_slice(t.data());
        }
        let x = if ts.len() > n_params { &ts[n_params] } else { input };
        let (y, tape) = scratch.forward(x, mode)?;
        Ok((y.dot(&r)?, scratch.activation_pattern(&tape)))
    })
}
