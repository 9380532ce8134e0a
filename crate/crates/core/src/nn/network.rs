use crate::error::{Error, Result};
use crate::nn::layer::{Cache, Layer, Mode};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// A feed-forward stack of layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
}

/// Per-layer caches from one forward pass.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    caches: Vec<Cache<T>>,
}

#[derive(Clone, Debug)]
pub struct Backward<T> {
    pub input_grad: Tensor<T>,
    /// One tensor per parameter, in [`Network::params`] order; empty for
    /// input-gradient-only passes.
    pub param_grads: Vec<Tensor<T>>,
    /// Gradient with respect to each layer's output, when recorded.
    pub upstream: Vec<Tensor<T>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grads(&self) -> Vec<Tensor<T>> {
        self.params().iter().map(|p| Tensor::zeros(p.shape())).collect()
    }

    /// Persistent tensors named `"{layer}.{kind}.{field}"`.
    pub fn named_state(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                let kind = l.kind();
                l.state()
                    .into_iter()
                    .map(move |(field, t)| (format!("{i}.{kind}.{field}"), t))
            })
            .collect()
    }

    pub fn named_state_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                let kind = l.kind();
                l.state_mut()
                    .into_iter()
                    .map(move |(field, t)| (format!("{i}.{kind}.{field}"), t))
            })
            .collect()
    }

    pub fn forward(&self, input: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, Tape<T>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&x, mode)?;
            caches.push(cache);
            x = y;
        }
        Ok((x, Tape { caches }))
    }

    pub fn predict(&self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x, mode)?.0;
        }
        Ok(x)
    }

    pub fn backward(&self, tape: &Tape<T>, grad_out: &Tensor<T>) -> Result<Backward<T>> {
        self.backward_span(tape, self.layers.len(), grad_out, true, false)
    }

    /// Input-gradient pass that records every layer's upstream gradient.
    /// No parameter gradients are computed.
    pub fn backward_recording(&self, tape: &Tape<T>, grad_out: &Tensor<T>) -> Result<Backward<T>> {
        self.backward_span(tape, self.layers.len(), grad_out, false, true)
    }

    /// Gradient with respect to the network input only.
    pub fn input_grad(&self, tape: &Tape<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self
            .backward_span(tape, self.layers.len(), grad_out, false, false)?
            .input_grad)
    }

    /// Backward pass starting at the output of layer `end − 1`; layers from
    /// `end` onwards get zero gradients.
    pub fn backward_from(&self, tape: &Tape<T>, end: usize, grad: &Tensor<T>) -> Result<Backward<T>> {
        self.backward_span(tape, end, grad, true, false)
    }

    /// Backward pass that adds the parameter gradients into `acc` (one
    /// tensor per parameter) and returns the input gradient.
    pub fn backward_accumulate(
        &self,
        tape: &Tape<T>,
        grad_out: &Tensor<T>,
        acc: &mut [Tensor<T>],
    ) -> Result<Tensor<T>> {
        self.check_tape(tape, self.layers.len())?;
        let mut slots = self.param_slots(acc)?;
        let mut g = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            g = self.layers[i].backward_accumulate(&tape.caches[i], &g, slots[i])?;
        }
        drop(slots);
        Ok(g)
    }

    fn check_tape(&self, tape: &Tape<T>, end: usize) -> Result<()> {
        if tape.caches.len() != self.layers.len() || end > self.layers.len() {
            return Err(Error::Shape("tape does not belong to this network".into()));
        }
        Ok(())
    }

    /// Splits a flat per-parameter accumulator into per-layer slices.
    fn param_slots<'a>(&self, acc: &'a mut [Tensor<T>]) -> Result<Vec<&'a mut [Tensor<T>]>> {
        let counts: Vec<usize> = self.layers.iter().map(|l| l.params().len()).collect();
        if counts.iter().sum::<usize>() != acc.len() {
            return Err(Error::Shape(format!(
                "{} gradient tensors for {} parameters",
                acc.len(),
                counts.iter().sum::<usize>()
            )));
        }
        let mut slots = Vec::with_capacity(counts.len());
        let mut rest = acc;
        for c in counts {
            let (head, tail) = rest.split_at_mut(c);
            slots.push(head);
            rest = tail;
        }
        Ok(slots)
    }

    fn backward_span(
        &self,
        tape: &Tape<T>,
        end: usize,
        grad_out: &Tensor<T>,
        with_params: bool,
        record: bool,
    ) -> Result<Backward<T>> {
        self.check_tape(tape, end)?;
        let mut acc = if with_params { self.zero_grads() } else { Vec::new() };
        let mut slots = if with_params { self.param_slots(&mut acc)? } else { Vec::new() };
        let mut upstream = Vec::new();
        let mut g = grad_out.clone();
        for i in (0..end).rev() {
            if record {
                upstream.push(g.clone());
            }
            g = if with_params {
                self.layers[i].backward_accumulate(&tape.caches[i], &g, slots[i])?
            } else {
                self.layers[i].input_grad(&tape.caches[i], &g)?
            };
        }
        drop(slots);
        upstream.reverse();
        Ok(Backward {
            input_grad: g,
            param_grads: acc,
            upstream,
        })
    }

    /// Parameter gradient of a loss on the input gradient.
    ///
    /// `recorded` must come from [`Network::backward_recording`] on `tape`;
    /// `u` is the loss gradient with respect to `recorded.input_grad`. The
    /// result is added into `acc`.
    pub fn input_grad_param_grads(
        &self,
        tape: &Tape<T>,
        recorded: &Backward<T>,
        u: &Tensor<T>,
        acc: &mut [Tensor<T>],
    ) -> Result<()> {
        self.check_tape(tape, self.layers.len())?;
        if recorded.upstream.len() != self.layers.len() {
            return Err(Error::Shape(
                "second-order pass needs a recorded full backward pass".into(),
            ));
        }
        let mut slots = self.param_slots(acc)?;
        let mut u = u.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            u = layer.input_grad_adjoint(&tape.caches[i], &recorded.upstream[i], &u, slots[i])?;
        }
        drop(slots);
        Ok(())
    }

    pub fn absorb_batch_stats(&mut self, tape: &Tape<T>) {
        for (layer, cache) in self.layers.iter_mut().zip(&tape.caches) {
            if let (
                Layer::BatchNorm(bn),
                Cache::Norm {
                    batch_mean,
                    batch_var,
                    mode: Mode::Train,
                    ..
                },
            ) = (layer, cache)
            {
                bn.absorb(batch_mean, batch_var);
            }
        }
    }

    /// Sign pattern of every leaky-ReLU input, for detecting kink crossings.
    pub fn activation_pattern(&self, tape: &Tape<T>) -> Vec<bool> {
        self.layers
            .iter()
            .zip(&tape.caches)
            .filter_map(|(l, c)| match (l, c) {
                (Layer::LeakyRelu { .. }, Cache::Input(x)) => Some(x),
                _ => None,
            })
            .flat_map(|x| x.data().iter().map(|&v| v >= T::zero()))
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        use crate::nn::layer::{BatchNorm, Conv2d, Dense, TConv2d};
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv2d(c) => Layer::Conv2d(Conv2d {
                    weight: c.weight.cast(),
                    bias: c.bias.cast(),
                    stride: c.stride,
                    padding: c.padding,
                }),
                Layer::TConv2d(c) => Layer::TConv2d(TConv2d {
                    weight: c.weight.cast(),
                    bias: c.bias.cast(),
                    stride: c.stride,
                    padding: c.padding,
                }),
                Layer::Dense(d) => Layer::Dense(Dense {
                    weight: d.weight.cast(),
                    bias: d.bias.cast(),
                }),
                Layer::BatchNorm(b) => Layer::BatchNorm(BatchNorm {
                    gamma: b.gamma.cast(),
                    beta: b.beta.cast(),
                    running_mean: b.running_mean.cast(),
                    running_var: b.running_var.cast(),
                }),
                Layer::LeakyRelu { alpha } => Layer::LeakyRelu {
                    alpha: U::from_f64_lossy(alpha.to_f64_lossy()),
                },
                Layer::Sigmoid => Layer::Sigmoid,
                Layer::Softmax => Layer::Softmax,
                Layer::Flatten => Layer::Flatten,
                Layer::Reshape(s) => Layer::Reshape(s.clone()),
            })
            .collect();
        Network { layers }
    }
}

/// `acc += other`, tensor by tensor.
pub fn accumulate<T: Scalar>(acc: &mut [Tensor<T>], other: &[Tensor<T>]) -> Result<()> {
    if acc.len() != other.len() {
        return Err(Error::Shape(format!(
            "{} gradient tensors vs {}",
            acc.len(),
            other.len()
        )));
    }
    for (a, b) in acc.iter_mut().zip(other) {
        a.add_assign(b)?;
    }
    Ok(())
}
