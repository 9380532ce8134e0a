//! Seeded synthetic household consumption heatmaps.
//!
//! Each household is a daily base profile (base load plus Gaussian bumps at
//! the morning and evening peaks) scaled by a per-household lognormal
//! factor, with i.i.d. Gaussian noise. Pool households additionally carry a
//! pump block: `pump_amplitude` is added over a daily row window on a
//! Bernoulli subset of the days in a season window in the first half of the
//! year.
//!
//! Household `i` of a dataset draws from `derive_seed(seed, i)`, so the
//! dataset is identical however the households are scheduled.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::folding::{normalize, ClassLabel, Heatmap};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_from_seed};

/// Stream index used to pick which households own a pool.
const POOL_ASSIGNMENT_STREAM: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Samples per day (`P`).
    pub rows: usize,
    /// Days (`D`).
    pub cols: usize,
    pub n_households: usize,
    pub pool_fraction: f64,
    pub base_mean: f64,
    pub noise_sigma: f64,
    /// Rows of the morning and evening peaks.
    pub peak_hours: (usize, usize),
    /// Peak bump height relative to the base load.
    pub peak_amplitude: f64,
    /// Peak bump standard deviation, in rows.
    pub peak_width: f64,
    /// Log-space standard deviation of the per-household scale.
    pub scale_sigma: f64,
    pub pump_amplitude: f64,
    /// Half-open row range `[r0, r1)` of the daily pump window.
    pub pump_daily_window: (usize, usize),
    /// Half-open column range `[c0, c1)` of the pump season.
    pub pump_season_window: (usize, usize),
    /// Fraction of season days on which the pump runs.
    pub pump_duty: f64,
    /// Probability that a pool household shows no pump at all.
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            rows: 24,
            cols: 64,
            n_households: 200,
            pool_fraction: 0.1,
            base_mean: 0.3,
            noise_sigma: 0.08,
            peak_hours: (7, 19),
            peak_amplitude: 1.5,
            peak_width: 1.5,
            scale_sigma: 0.5,
            pump_amplitude: 0.6,
            pump_daily_window: (9, 17),
            pump_season_window: (6, 26),
            pump_duty: 0.8,
            label_noise: 0.0,
            seed: 42,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let (p, d) = (self.rows, self.cols);
        if p == 0 || d == 0 || p % 8 != 0 || d % 8 != 0 {
            return bad(format!(
                "rows ({p}) and cols ({d}) must be positive multiples of 8"
            ));
        }
        if !(self.pool_fraction > 0.0 && self.pool_fraction < 1.0) {
            return bad(format!("pool_fraction {} must lie in (0, 1)", self.pool_fraction));
        }
        if !(self.base_mean > 0.0 && self.base_mean.is_finite()) {
            return bad(format!("base_mean {} must be positive", self.base_mean));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be non-negative", self.noise_sigma));
        }
        if !(self.pump_amplitude > 0.0 && self.pump_amplitude.is_finite()) {
            return bad(format!("pump_amplitude {} must be positive", self.pump_amplitude));
        }
        if !(self.pump_duty > 0.0 && self.pump_duty <= 1.0) {
            return bad(format!("pump_duty {} must lie in (0, 1]", self.pump_duty));
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return bad(format!("label_noise {} must lie in [0, 1]", self.label_noise));
        }
        if !(self.scale_sigma >= 0.0 && self.peak_amplitude >= 0.0 && self.peak_width > 0.0) {
            return bad("scale_sigma and peak_amplitude must be non-negative, peak_width positive".into());
        }
        if self.peak_hours.0 >= p || self.peak_hours.1 >= p {
            return bad(format!("peak hours {:?} outside 0..{p}", self.peak_hours));
        }
        let (r0, r1) = self.pump_daily_window;
        if !(r0 < r1 && r1 <= p) {
            return bad(format!("pump daily window [{r0}, {r1}) must satisfy 0 ≤ r0 < r1 ≤ {p}"));
        }
        let (c0, c1) = self.pump_season_window;
        if !(c0 < c1 && c1 <= d / 2) {
            return bad(format!(
                "pump season [{c0}, {c1}) must satisfy 0 ≤ c0 < c1 ≤ {}",
                d / 2
            ));
        }
        Ok(())
    }

    /// Noise-free daily profile before the household scale.
    pub fn base_profile(&self) -> Vec<f64> {
        let (m, e) = self.peak_hours;
        let w2 = 2.0 * self.peak_width * self.peak_width;
        (0..self.rows)
            .map(|r| {
                let bump = |peak: usize| (-((r as f64 - peak as f64).powi(2)) / w2).exp();
                self.base_mean * (1.0 + self.peak_amplitude * (bump(m) + bump(e)))
            })
            .collect()
    }

    pub fn pool_count(&self) -> usize {
        (self.pool_fraction * self.n_households as f64).round() as usize
    }
}

/// A raw (unnormalised) household and the scale it was drawn with.
#[derive(Clone, Debug)]
pub struct RawHousehold {
    pub heatmap: Heatmap<f64>,
    pub scale: f64,
    /// Days on which the pump ran (empty for non-pool households).
    pub pump_days: Vec<usize>,
}

pub fn simulate_household_raw(cfg: &SimConfig, label: ClassLabel, seed: u64) -> Result<RawHousehold> {
    cfg.validate()?;
    let mut rng = rng_from_seed(seed);
    let (p, d) = (cfg.rows, cfg.cols);
    let scale = (cfg.scale_sigma * rng.sample::<f64, _>(StandardNormal)).exp();
    let profile = cfg.base_profile();
    let mut grid = vec![0.0f64; p * d];
    for r in 0..p {
        for c in 0..d {
            let noise = cfg.noise_sigma * rng.sample::<f64, _>(StandardNormal);
            grid[r * d + c] = (profile[r] * scale + noise).max(0.0);
        }
    }
    let mut pump_days = Vec::new();
    if label == ClassLabel::Pool && !rng.gen_bool(cfg.label_noise) {
        let (r0, r1) = cfg.pump_daily_window;
        for c in cfg.pump_season_window.0..cfg.pump_season_window.1 {
            if rng.gen_bool(cfg.pump_duty) {
                pump_days.push(c);
                for r in r0..r1 {
                    grid[r * d + c] += cfg.pump_amplitude;
                }
            }
        }
    }
    Ok(RawHousehold {
        heatmap: Heatmap::from_row_major(p, d, grid, label, false)?,
        scale,
        pump_days,
    })
}

/// One normalised household heatmap.
pub fn simulate_household<T: Scalar>(cfg: &SimConfig, label: ClassLabel, seed: u64) -> Result<Heatmap<T>> {
    let raw = normalize(&simulate_household_raw(cfg, label, seed)?.heatmap)?;
    let data = raw.as_row_major().iter().map(|&v| T::from_f64_lossy(v)).collect();
    Heatmap::from_row_major(cfg.rows, cfg.cols, data, label, true)
}

/// Equally shaped heatmaps with identifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelledDataset<T = f32> {
    items: Vec<Heatmap<T>>,
    ids: Vec<String>,
    pub seed: u64,
}

impl<T: Scalar> LabelledDataset<T> {
    pub fn new(items: Vec<Heatmap<T>>, ids: Vec<String>, seed: u64) -> Result<Self> {
        if items.len() != ids.len() {
            return Err(Error::Shape(format!("{} heatmaps but {} ids", items.len(), ids.len())));
        }
        if let Some(first) = items.first() {
            let dims = (first.rows(), first.cols());
            if let Some(i) = items.iter().position(|h| (h.rows(), h.cols()) != dims) {
                return Err(Error::Shape(format!(
                    "heatmap {i} is {}×{}, expected {}×{}",
                    items[i].rows(),
                    items[i].cols(),
                    dims.0,
                    dims.1
                )));
            }
        }
        Ok(Self { items, ids, seed })
    }

    /// Identifiers `"{prefix}{i:04}"`.
    pub fn with_generated_ids(items: Vec<Heatmap<T>>, prefix: &str, seed: u64) -> Result<Self> {
        let ids = (0..items.len()).map(|i| format!("{prefix}{i:04}")).collect();
        Self::new(items, ids, seed)
    }

    pub fn items(&self) -> &[Heatmap<T>] {
        &self.items
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> Vec<ClassLabel> {
        self.items.iter().map(|h| h.label).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `(rows, cols)` shared by every item.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.items.first().map(|h| (h.rows(), h.cols()))
    }

    pub fn count(&self, label: ClassLabel) -> usize {
        self.items.iter().filter(|h| h.label == label).count()
    }

    pub fn class_subset(&self, label: ClassLabel) -> Self {
        self.filter(|h| h.label == label)
    }

    fn filter(&self, keep: impl Fn(&Heatmap<T>) -> bool) -> Self {
        let (items, ids) = self
            .items
            .iter()
            .zip(&self.ids)
            .filter(|(h, _)| keep(h))
            .map(|(h, id)| (h.clone(), id.clone()))
            .unzip();
        Self {
            items,
            ids,
            seed: self.seed,
        }
    }

    /// Items at `indices`, in that order (repeats allowed).
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            items: indices.iter().map(|&i| self.items[i].clone()).collect(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            seed: self.seed,
        }
    }

    /// Concatenates two datasets of the same dimensions.
    pub fn concat(mut self, other: Self) -> Result<Self> {
        self.items.extend(other.items);
        self.ids.extend(other.ids);
        Self::new(self.items, self.ids, self.seed)
    }
}

/// `cfg.n_households` normalised heatmaps, exactly `round(pool_fraction·n)`
/// of them labelled pool.
pub fn simulate_dataset<T: Scalar>(cfg: &SimConfig) -> Result<LabelledDataset<T>> {
    cfg.validate()?;
    let n = cfg.n_households;
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 households, got {n}")));
    }
    let mut is_pool = vec![false; n];
    let mut rng = rng_from_seed(derive_seed(cfg.seed, POOL_ASSIGNMENT_STREAM));
    for i in sample(&mut rng, n, cfg.pool_count().min(n)) {
        is_pool[i] = true;
    }
    let items = is_pool
        .par_iter()
        .enumerate()
        .map(|(i, &pool)| {
            let label = if pool { ClassLabel::Pool } else { ClassLabel::NonPool };
            simulate_household(cfg, label, derive_seed(cfg.seed, i as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    LabelledDataset::with_generated_ids(items, "hh", cfg.seed)
}

/// Stratified shuffle split. Each class keeps `round(ratio·n_c)` items in the
/// training part, clamped so both parts receive at least one item of every
/// class.
pub fn split_dataset<T: Scalar>(
    ds: &LabelledDataset<T>,
    train_ratio: f64,
    seed: u64,
) -> Result<(LabelledDataset<T>, LabelledDataset<T>)> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::Config(format!("train ratio {train_ratio} must lie in (0, 1)")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in ClassLabel::ALL {
        let members: Vec<usize> = (0..ds.len()).filter(|&i| ds.items[i].label == label).collect();
        if members.len() < 2 {
            return Err(Error::Stratify(format!(
                "class {} has {} member(s); at least 2 are needed",
                label.index(),
                members.len()
            )));
        }
        let n = members.len();
        let n_train = ((train_ratio * n as f64).round() as usize).clamp(1, n - 1);
        let mut rng = rng_from_seed(derive_seed(seed, label.index() as u64));
        let order = sample(&mut rng, n, n).into_vec();
        train.extend(order[..n_train].iter().map(|&k| members[k]));
        test.extend(order[n_train..].iter().map(|&k| members[k]));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}
