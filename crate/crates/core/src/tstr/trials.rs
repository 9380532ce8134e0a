//! Train-synthetic, test-real trials and their aggregation.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folding::{normalize, ClassLabel};
use crate::loadsim::{split_dataset, LabelledDataset};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_from_seed};
use crate::tstr::classifier::{evaluate, train_classifier, ClassifierConfig};
use crate::tstr::metrics::{boxplot_stats, class_metrics, macro_average, ClassMetrics, ConfusionMatrix, FiveNumber};
use crate::wgan::{sample, train_wgan, GanArch, GanTrainConfig};

/// Where a trial's synthetic training data comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorSource {
    /// One WGAN per class, trained on the trial's GAN split.
    Wgan,
    /// Real GAN-split heatmaps resampled with replacement. Gives the score a
    /// perfect generator would reach, separating simulator difficulty from
    /// generator quality.
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TstrConfig {
    pub n_trials: usize,
    pub n_generated_per_class: usize,
    /// Fraction of each class used to train the generators; the rest is the
    /// real evaluation set.
    pub gan_train_ratio: f64,
    /// Min–max rescale every generated heatmap, as real heatmaps are.
    pub renormalize_generated: bool,
    pub latent_dim: usize,
    pub gan: GanTrainConfig,
    pub classifier: ClassifierConfig,
    pub source: GeneratorSource,
    pub seed: u64,
}

impl Default for TstrConfig {
    fn default() -> Self {
        Self {
            n_trials: 64,
            n_generated_per_class: 5000,
            gan_train_ratio: 0.5,
            renormalize_generated: true,
            latent_dim: 128,
            gan: GanTrainConfig::default(),
            classifier: ClassifierConfig::default(),
            source: GeneratorSource::Wgan,
            seed: 0,
        }
    }
}

impl TstrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Config("at least one trial is required".into()));
        }
        if self.n_generated_per_class == 0 {
            return Err(Error::Config("n_generated_per_class must be at least 1".into()));
        }
        if !(self.gan_train_ratio > 0.0 && self.gan_train_ratio < 1.0) {
            return Err(Error::Config(format!(
                "gan_train_ratio {} must lie in (0, 1)",
                self.gan_train_ratio
            )));
        }
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be at least 1".into()));
        }
        self.gan.validate()?;
        self.classifier.validate()
    }

    /// Seed of trial `index`; every random choice inside the trial derives
    /// from it, so trials are independent of execution order.
    pub fn trial_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, index as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub confusion: ConfusionMatrix,
    pub per_class: [ClassMetrics; 2],
    pub macro_avg: ClassMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedTrial {
    pub trial: usize,
    pub seed: u64,
    pub error: String,
}

pub type TrialOutcome = std::result::Result<TrialResult, FailedTrial>;

/// One row of the ranking table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopRow {
    pub trial: usize,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub summary: FiveNumber,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Successful trials in trial order.
    pub trials: Vec<TrialResult>,
    pub failed: Vec<FailedTrial>,
    /// Five-number summaries over successful trials; empty when none succeeded.
    pub boxplot: Vec<MetricSummary>,
    pub top: Vec<TopRow>,
}

pub const DEFAULT_TOP_K: usize = 5;

impl EvalReport {
    /// Aggregates trial outcomes, whatever order they arrive in.
    pub fn from_outcomes(outcomes: Vec<TrialOutcome>, k: usize) -> Result<Self> {
        let mut trials = Vec::new();
        let mut failed = Vec::new();
        for o in outcomes {
            match o {
                Ok(t) => trials.push(t),
                Err(f) => failed.push(f),
            }
        }
        trials.sort_by_key(|t| t.trial);
        failed.sort_by_key(|f| f.trial);
        let boxplot = if trials.is_empty() {
            Vec::new()
        } else {
            let columns: [(&str, fn(&TrialResult) -> f64); 5] = [
                ("macro_precision", |t| t.macro_avg.precision),
                ("macro_recall", |t| t.macro_avg.recall),
                ("macro_f1", |t| t.macro_avg.f1),
                ("f1_class0", |t| t.per_class[0].f1),
                ("f1_class1", |t| t.per_class[1].f1),
            ];
            columns
                .iter()
                .map(|(name, f)| {
                    let values: Vec<f64> = trials.iter().map(f).collect();
                    Ok(MetricSummary {
                        metric: name.to_string(),
                        summary: boxplot_stats(&values)?,
                    })
                })
                .collect::<Result<_>>()?
        };
        let top = top_k(&trials, k)?;
        Ok(Self {
            trials,
            failed,
            boxplot,
            top,
        })
    }

    pub fn attempted(&self) -> usize {
        self.trials.len() + self.failed.len()
    }

    pub fn summary(&self, metric: &str) -> Option<&FiveNumber> {
        self.boxplot.iter().find(|m| m.metric == metric).map(|m| &m.summary)
    }
}

/// The `k` best trials by macro F1, ties broken by macro precision, then
/// macro recall, then trial index.
pub fn top_k(trials: &[TrialResult], k: usize) -> Result<Vec<TopRow>> {
    if k == 0 {
        return Err(Error::Config("top-k needs k ≥ 1".into()));
    }
    let mut rows: Vec<TopRow> = trials
        .iter()
        .map(|t| TopRow {
            trial: t.trial,
            f1: t.macro_avg.f1,
            precision: t.macro_avg.precision,
            recall: t.macro_avg.recall,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.f1.total_cmp(&a.f1)
            .then(b.precision.total_cmp(&a.precision))
            .then(b.recall.total_cmp(&a.recall))
            .then(a.trial.cmp(&b.trial))
    });
    rows.truncate(k);
    Ok(rows)
}

fn renormalized<T: Scalar>(ds: LabelledDataset<T>) -> Result<LabelledDataset<T>> {
    let items = ds.items().iter().map(normalize).collect::<Result<Vec<_>>>()?;
    LabelledDataset::new(items, ds.ids().to_vec(), ds.seed)
}

fn synthesize<T: Scalar>(
    class_train: &LabelledDataset<T>,
    cfg: &TstrConfig,
    label: ClassLabel,
    trial_seed: u64,
) -> Result<LabelledDataset<T>> {
    let n = cfg.n_generated_per_class;
    let sample_seed = derive_seed(trial_seed, 20 + label.index() as u64);
    match cfg.source {
        GeneratorSource::Wgan => {
            let (rows, cols) = class_train
                .dims()
                .ok_or_else(|| Error::Empty(format!("class-{} GAN split", label.index())))?;
            let arch = GanArch {
                latent_dim: cfg.latent_dim,
                ..GanArch::new(rows, cols)
            };
            let gan_cfg = GanTrainConfig {
                seed: derive_seed(trial_seed, 10 + label.index() as u64),
                ..cfg.gan
            };
            let trained = train_wgan(class_train, &gan_cfg, &arch).map_err(|f| f.error)?;
            sample(&trained.checkpoint, n, sample_seed)
        }
        GeneratorSource::Oracle => {
            if class_train.is_empty() {
                return Err(Error::Empty(format!("class-{} GAN split", label.index())));
            }
            let mut rng = rng_from_seed(sample_seed);
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..class_train.len())).collect();
            Ok(class_train.subset(&idx))
        }
    }
}

/// Runs trial `index`: split, synthesize per class, train the classifier on
/// synthetic data only, score it on the held-out real split.
pub fn run_trial<T: Scalar>(real: &LabelledDataset<T>, cfg: &TstrConfig, index: usize) -> Result<TrialResult> {
    let seed = cfg.trial_seed(index);
    let (gan_train, eval) = split_dataset(real, cfg.gan_train_ratio, derive_seed(seed, 0))?;
    let mut synthetic: Option<LabelledDataset<T>> = None;
    for label in ClassLabel::ALL {
        let mut part = synthesize(&gan_train.class_subset(label), cfg, label, seed)?;
        if cfg.renormalize_generated && cfg.source == GeneratorSource::Wgan {
            part = renormalized(part)?;
        }
        synthetic = Some(match synthetic {
            None => part,
            Some(acc) => acc.concat(part)?,
        });
    }
    let synthetic = synthetic.expect("two classes were synthesized");
    let model = train_classifier(&synthetic, &cfg.classifier, derive_seed(seed, 30))?;
    let confusion = evaluate(&model, &eval)?;
    let per_class = class_metrics(&confusion);
    Ok(TrialResult {
        trial: index,
        seed,
        confusion,
        per_class,
        macro_avg: macro_average(&per_class),
    })
}

/// All trials in parallel; `on_trial` sees each outcome as it completes.
/// A trial that errors (a diverged GAN, say) is recorded as failed and
/// left out of the aggregates.
pub fn run_tstr_trials<T: Scalar>(
    real: &LabelledDataset<T>,
    cfg: &TstrConfig,
    on_trial: impl Fn(&TrialOutcome) + Sync,
) -> Result<EvalReport> {
    cfg.validate()?;
    for label in ClassLabel::ALL {
        if real.count(label) < 2 {
            return Err(Error::Stratify(format!(
                "real data has {} class-{} heatmaps; each class needs at least 2",
                real.count(label),
                label.index()
            )));
        }
    }
    if real.items().iter().any(|h| !h.normalized) {
        return Err(Error::Config("real heatmaps must be normalized".into()));
    }
    let outcomes: Vec<TrialOutcome> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|i| {
            let outcome = run_trial(real, cfg, i).map_err(|e| FailedTrial {
                trial: i,
                seed: cfg.trial_seed(i),
                error: e.to_string(),
            });
            on_trial(&outcome);
            outcome
        })
        .collect();
    EvalReport::from_outcomes(outcomes, DEFAULT_TOP_K)
}
