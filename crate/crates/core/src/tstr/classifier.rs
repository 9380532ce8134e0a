//! Small two-class CNN used to score generators.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folding::ClassLabel;
use crate::loadsim::LabelledDataset;
use crate::nn::{xent_loss, AdamState, Conv2d, Dense, Layer, Mode, Network, Padding, Tensor};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_from_seed};
use crate::tstr::metrics::ConfusionMatrix;

const CONV_CHANNELS: [usize; 2] = [16, 32];
const HIDDEN: usize = 128;
const KERNEL: usize = 5;
const EVAL_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("classifier batch size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("classifier lr {} must be positive", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("classifier {name} {b} must lie in [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Width of the flattened feature map after both stride-2 convolutions.
pub fn classifier_flatten_len(rows: usize, cols: usize) -> usize {
    CONV_CHANNELS[1] * rows.div_ceil(4) * cols.div_ceil(4)
}

/// conv16 → conv32 (5×5, stride 2, leaky ReLU) → dense128 (leaky ReLU) →
/// dense2 → softmax.
pub fn build_classifier<T: Scalar>(rows: usize, cols: usize, seed: u64) -> Result<Network<T>> {
    if rows < 8 || cols < 8 {
        return Err(Error::Config(format!(
            "classifier needs heatmaps of at least 8×8, got {rows}×{cols}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let leak = crate::nn::layer::DEFAULT_LEAK;
    Ok(Network::new(vec![
        Layer::Conv2d(Conv2d::new(1, CONV_CHANNELS[0], KERNEL, 2, Padding::Same, &mut rng)),
        Layer::leaky_relu(leak),
        Layer::Conv2d(Conv2d::new(CONV_CHANNELS[0], CONV_CHANNELS[1], KERNEL, 2, Padding::Same, &mut rng)),
        Layer::leaky_relu(leak),
        Layer::Flatten,
        Layer::Dense(Dense::new(classifier_flatten_len(rows, cols), HIDDEN, &mut rng)),
        Layer::leaky_relu(leak),
        Layer::Dense(Dense::new(HIDDEN, 2, &mut rng)),
        Layer::Softmax,
    ]))
}

fn batch_tensor<T: Scalar>(ds: &LabelledDataset<T>, idx: &[usize]) -> Result<Tensor<T>> {
    let (rows, cols) = ds.dims().ok_or_else(|| Error::Empty("dataset".into()))?;
    let items: Vec<&[T]> = idx.iter().map(|&i| ds.items()[i].as_row_major()).collect();
    Tensor::stack(&items, &[1, rows, cols])
}

/// Cross-entropy training with Adam on seeded shuffles. The network is
/// initialised from `derive_seed(seed, 0)` and shuffled with
/// `derive_seed(seed, 1)`.
pub fn train_classifier<T: Scalar>(
    train: &LabelledDataset<T>,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<Network<T>> {
    cfg.validate()?;
    for label in ClassLabel::ALL {
        if train.count(label) == 0 {
            return Err(Error::Config(format!(
                "classifier training set has no class-{} items",
                label.index()
            )));
        }
    }
    let (rows, cols) = train.dims().ok_or_else(|| Error::Empty("training set".into()))?;
    let mut net = build_classifier::<T>(rows, cols, derive_seed(seed, 0))?;
    let mut opt = AdamState::new(&net.params(), cfg.lr, cfg.beta1, cfg.beta2);
    let mut rng = rng_from_seed(derive_seed(seed, 1));
    let labels: Vec<usize> = train.labels().iter().map(|l| l.index()).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let softmax_at = net.layers().len() - 1;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(cfg.batch_size) {
            let x = batch_tensor(train, idx)?;
            let (probs, tape) = net.forward(&x, Mode::Train)?;
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let loss = xent_loss(&probs, &y)?;
            if !loss.loss.is_finite() {
                return Err(Error::Diverged(format!("classifier loss is {}", loss.loss)));
            }
            // The loss gradient is taken with respect to the logits, so the
            // backward pass starts below the softmax.
            let grads = net.backward_from(&tape, softmax_at, &loss.logit_grad)?.param_grads;
            opt.step(net.params_mut(), &grads)?;
        }
    }
    Ok(net)
}

/// Predicted class per item: the larger softmax output, ties to class 0.
pub fn predict_labels<T: Scalar>(model: &Network<T>, data: &LabelledDataset<T>) -> Result<Vec<ClassLabel>> {
    let mut out = Vec::with_capacity(data.len());
    let all: Vec<usize> = (0..data.len()).collect();
    for idx in all.chunks(EVAL_CHUNK) {
        let probs = model.predict(&batch_tensor(data, idx)?, Mode::Infer)?;
        if probs.shape() != [idx.len(), 2] {
            return Err(Error::Shape(format!("classifier output {:?}", probs.shape())));
        }
        out.extend(probs.data().chunks(2).map(|p| {
            if p[1] > p[0] {
                ClassLabel::Pool
            } else {
                ClassLabel::NonPool
            }
        }));
    }
    Ok(out)
}

pub fn evaluate<T: Scalar>(model: &Network<T>, test: &LabelledDataset<T>) -> Result<ConfusionMatrix> {
    if test.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let predicted = predict_labels(model, test)?;
    Ok(ConfusionMatrix::from_pairs(test.labels().into_iter().zip(predicted)))
}
