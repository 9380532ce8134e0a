use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::folding::{ClassLabel, Heatmap};
use crate::loadsim::LabelledDataset;
use crate::nn::{AdamState, Layer, Mode, Network, Tensor};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_from_seed, Rng};
use crate::wgan::penalty::penalty_accumulate;
use crate::wgan::{GanArch, GanCheckpoint, GanTrainConfig};
use rand::Rng as _;

const SAMPLE_CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticStep<T> {
    /// `mean(critic(real)) − mean(critic(fake))`
    pub em_estimate: T,
    pub penalty: T,
    /// `mean(critic(fake)) − mean(critic(real)) + penalty`
    pub loss: T,
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub em_estimate: f64,
    pub penalty: f64,
    pub gen_loss: f64,
}

impl EpochLog {
    pub const HEADER: &'static str = "epoch,em_estimate,penalty,gen_loss";

    pub fn to_csv_line(&self) -> String {
        format!("{},{},{},{}", self.epoch, self.em_estimate, self.penalty, self.gen_loss)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub checkpoint: GanCheckpoint<T>,
    pub log: Vec<EpochLog>,
}

/// A run that diverged: the error, the epochs logged so far, and the model
/// as it stood after the last successful update.
#[derive(Debug)]
pub struct TrainFailure<T> {
    pub error: Error,
    pub log: Vec<EpochLog>,
    pub last_good: Box<GanCheckpoint<T>>,
}

impl<T> std::fmt::Display for TrainFailure<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "training failed after {} epoch(s): {}", self.log.len(), self.error)
    }
}

fn latent<T: Scalar>(batch: usize, dim: usize, rng: &mut Rng) -> Tensor<T> {
    Tensor::randn(&[batch, dim], 1.0, rng)
}

fn mean_score<T: Scalar>(scores: &Tensor<T>) -> T {
    scores.mean()
}

/// Critic loss and its parameter gradient for fixed batches and
/// interpolation weights.
pub fn critic_loss_grads<T: Scalar>(
    critic: &Network<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    eps: &[T],
    lambda: f64,
) -> Result<(CriticStep<T>, Vec<Tensor<T>>)> {
    if critic.layers().iter().any(|l| matches!(l, Layer::BatchNorm(_))) {
        return Err(Error::Unsupported(
            "critic must be batch-independent (no batch norm)".into(),
        ));
    }
    if real.shape() != fake.shape() {
        return Err(Error::Shape(format!(
            "real batch {:?} vs fake batch {:?}",
            real.shape(),
            fake.shape()
        )));
    }
    let n = real.batch();
    let inv_n = T::one() / T::from_usize(n).unwrap();
    // Scores are per-sample, so one pass over [real; fake] serves both terms.
    let mut joint = real.data().to_vec();
    joint.extend_from_slice(fake.data());
    let mut joint_shape = real.shape().to_vec();
    joint_shape[0] = 2 * n;
    let (scores, tape) = critic.forward(&Tensor::from_vec(&joint_shape, joint)?, Mode::Train)?;
    let upstream: Vec<T> = (0..2 * n).map(|i| if i < n { -inv_n } else { inv_n }).collect();
    let mut grads = critic.zero_grads();
    critic.backward_accumulate(&tape, &Tensor::from_vec(scores.shape(), upstream)?, &mut grads)?;
    let (real_mean, fake_mean) = {
        let s = scores.data();
        (
            s[..n].iter().copied().sum::<T>() * inv_n,
            s[n..].iter().copied().sum::<T>() * inv_n,
        )
    };
    let (penalty, _) = penalty_accumulate(critic, real, fake, eps, lambda, &mut grads)?;
    let em = real_mean - fake_mean;
    Ok((
        CriticStep {
            em_estimate: em,
            penalty: penalty,
            loss: penalty - em,
        },
        grads,
    ))
}

/// One Adam update of the critic against a fresh fake batch. The generator
/// is only read.
pub fn critic_step<T: Scalar>(
    critic: &mut Network<T>,
    generator: &Network<T>,
    real: &Tensor<T>,
    cfg: &GanTrainConfig,
    opt: &mut AdamState<T>,
    rng: &mut Rng,
) -> Result<CriticStep<T>> {
    if real.batch() != cfg.batch_size {
        return Err(Error::Shape(format!(
            "critic step expects a batch of {}, got {}",
            cfg.batch_size,
            real.batch()
        )));
    }
    let latent_dim = generator_latent_dim(generator)?;
    let z = latent(cfg.batch_size, latent_dim, rng);
    let fake = generator.predict(&z, Mode::Train)?;
    let eps: Vec<T> = (0..cfg.batch_size)
        .map(|_| T::lit(rng.gen_range(0.0..1.0)))
        .collect();
    let (step, grads) = critic_loss_grads(critic, real, &fake, &eps, cfg.lambda_gp)?;
    if !step.loss.is_finite() {
        return Err(Error::Diverged(format!(
            "critic loss is {} (EM estimate {})",
            step.loss, step.em_estimate
        )));
    }
    opt.step(critic.params_mut(), &grads)?;
    Ok(step)
}

/// Generator loss `−mean(critic(generator(z)))` and its generator gradient.
/// Also returns the generator tape so batch statistics can be absorbed.
pub fn generator_loss_grads<T: Scalar>(
    critic: &Network<T>,
    generator: &Network<T>,
    z: &Tensor<T>,
) -> Result<(T, Vec<Tensor<T>>, crate::nn::Tape<T>)> {
    let n = z.batch();
    let inv_n = T::one() / T::from_usize(n).unwrap();
    let (fake, gen_tape) = generator.forward(z, Mode::Train)?;
    let (scores, critic_tape) = critic.forward(&fake, Mode::Train)?;
    let through_critic = critic.input_grad(&critic_tape, &Tensor::full(scores.shape(), -inv_n))?;
    let grads = generator.backward(&gen_tape, &through_critic)?.param_grads;
    Ok((-mean_score(&scores), grads, gen_tape))
}

/// One Adam update of the generator. The critic is only read.
pub fn generator_step<T: Scalar>(
    critic: &Network<T>,
    generator: &mut Network<T>,
    cfg: &GanTrainConfig,
    opt: &mut AdamState<T>,
    rng: &mut Rng,
) -> Result<T> {
    let z = latent(cfg.batch_size, generator_latent_dim(generator)?, rng);
    let (loss, grads, tape) = generator_loss_grads(critic, generator, &z)?;
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("generator loss is {loss}")));
    }
    opt.step(generator.params_mut(), &grads)?;
    generator.absorb_batch_stats(&tape);
    Ok(loss)
}

fn generator_latent_dim<T: Scalar>(generator: &Network<T>) -> Result<usize> {
    match generator.layers().first() {
        Some(crate::nn::Layer::Dense(d)) => Ok(d.weight.shape()[0]),
        _ => Err(Error::Shape("generator must start with a dense projection".into())),
    }
}

fn check_class_data<T: Scalar>(data: &LabelledDataset<T>, arch: &GanArch) -> Result<ClassLabel> {
    let first = data
        .items()
        .first()
        .ok_or_else(|| Error::Empty("no training heatmaps for this class".into()))?;
    let label = first.label;
    if data.items().iter().any(|h| h.label != label) {
        return Err(Error::Config("GAN training data must contain a single class".into()));
    }
    if data.items().iter().any(|h| !h.normalized) {
        return Err(Error::Config("GAN training data must be normalized".into()));
    }
    if data.dims() != Some((arch.rows, arch.cols)) {
        return Err(Error::Shape(format!(
            "data is {:?} but the architecture expects {}×{}",
            data.dims(),
            arch.rows,
            arch.cols
        )));
    }
    Ok(label)
}

/// Trains one class's GAN. See [`train_wgan_with`].
pub fn train_wgan<T: Scalar>(
    class_data: &LabelledDataset<T>,
    cfg: &GanTrainConfig,
    arch: &GanArch,
) -> Result<TrainOutcome<T>, Box<TrainFailure<T>>> {
    train_wgan_with(class_data, cfg, arch, |_| {})
}

/// Trains one class's GAN, calling `on_epoch` after each logged epoch.
///
/// An epoch is one shuffled pass of critic batches over the data (the last
/// batch is filled from the start of the shuffle). A generator step follows
/// every `n_critic` critic steps, counted across epochs. The learning rates
/// are multiplied by `lr_decay` once, at epoch `epochs / 2`.
pub fn train_wgan_with<T: Scalar>(
    class_data: &LabelledDataset<T>,
    cfg: &GanTrainConfig,
    arch: &GanArch,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome<T>, Box<TrainFailure<T>>> {
    let early = |error: Error| -> Box<TrainFailure<T>> {
        // No model exists yet; report an untrained generator.
        let ckpt = GanCheckpoint::init(*arch, cfg, ClassLabel::NonPool)
            .or_else(|_| GanCheckpoint::init(GanArch::new(8, 8), cfg, ClassLabel::NonPool))
            .expect("an 8×8 architecture always builds");
        Box::new(TrainFailure {
            error,
            log: Vec::new(),
            last_good: Box::new(ckpt),
        })
    };
    if let Err(e) = cfg.validate().and(arch.validate()) {
        return Err(early(e));
    }
    let label = match check_class_data(class_data, arch) {
        Ok(l) => l,
        Err(e) => return Err(early(e)),
    };
    let mut ckpt = match GanCheckpoint::<T>::init(*arch, cfg, label) {
        Ok(c) => c,
        Err(e) => return Err(early(e)),
    };
    let mut log = Vec::with_capacity(cfg.epochs);
    match run_epochs(&mut ckpt, class_data.items(), cfg, &mut log, &mut on_epoch) {
        Ok(()) => Ok(TrainOutcome {
            checkpoint: ckpt,
            log,
        }),
        Err(error) => Err(Box::new(TrainFailure {
            error,
            log,
            last_good: Box::new(ckpt),
        })),
    }
}

fn run_epochs<T: Scalar>(
    ckpt: &mut GanCheckpoint<T>,
    items: &[Heatmap<T>],
    cfg: &GanTrainConfig,
    log: &mut Vec<EpochLog>,
    on_epoch: &mut impl FnMut(&EpochLog),
) -> Result<()> {
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 3));
    let item_shape = [1, ckpt.arch.rows, ckpt.arch.cols];
    let state = ckpt
        .training
        .as_mut()
        .ok_or_else(|| Error::Config("checkpoint has no critic to train".into()))?;
    let generator = &mut ckpt.generator;
    let n = items.len();
    let steps_per_epoch = n.div_ceil(cfg.batch_size);
    let mut critic_steps = 0usize;
    let mut last_gen_loss = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        if cfg.decay_epoch() == Some(epoch) {
            let k = T::lit(cfg.lr_decay);
            state.critic_opt.lr = state.critic_opt.lr * k;
            state.gen_opt.lr = state.gen_opt.lr * k;
        }
        order.shuffle(&mut rng);
        let (mut em_sum, mut pen_sum) = (0.0, 0.0);
        let (mut gen_sum, mut gen_count) = (0.0, 0usize);
        for step in 0..steps_per_epoch {
            let batch: Vec<&[T]> = (0..cfg.batch_size)
                .map(|k| items[order[(step * cfg.batch_size + k) % n]].as_row_major())
                .collect();
            let real = Tensor::stack(&batch, &item_shape)?;
            let cs = critic_step(
                &mut state.critic,
                generator,
                &real,
                cfg,
                &mut state.critic_opt,
                &mut rng,
            )?;
            em_sum += cs.em_estimate.to_f64_lossy();
            pen_sum += cs.penalty.to_f64_lossy();
            critic_steps += 1;
            if critic_steps % cfg.n_critic == 0 {
                let gl = generator_step(&state.critic, generator, cfg, &mut state.gen_opt, &mut rng)?;
                gen_sum += gl.to_f64_lossy();
                gen_count += 1;
            }
        }
        if gen_count > 0 {
            last_gen_loss = gen_sum / gen_count as f64;
        }
        let entry = EpochLog {
            epoch,
            em_estimate: em_sum / steps_per_epoch as f64,
            penalty: pen_sum / steps_per_epoch as f64,
            gen_loss: last_gen_loss,
        };
        on_epoch(&entry);
        log.push(entry);
        ckpt.epochs_completed = epoch as u32 + 1;
    }
    Ok(())
}

/// Draws `n` heatmaps from a trained generator (batch norm in inference
/// mode), all labelled with the checkpoint's class.
pub fn sample<T: Scalar>(ckpt: &GanCheckpoint<T>, n: usize, seed: u64) -> Result<LabelledDataset<T>> {
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let (rows, cols) = (ckpt.arch.rows, ckpt.arch.cols);
    let mut items = Vec::with_capacity(n);
    while items.len() < n {
        let batch = SAMPLE_CHUNK.min(n - items.len());
        let z = latent(batch, ckpt.arch.latent_dim, &mut rng);
        let out = ckpt.generator.predict(&z, Mode::Infer)?;
        for i in 0..batch {
            let data = out.item(i).iter().map(|&v| v.max(T::zero()).min(T::one())).collect();
            items.push(Heatmap::from_row_major(rows, cols, data, ckpt.class_label, true)?);
        }
    }
    LabelledDataset::with_generated_ids(items, "gen", seed)
}
