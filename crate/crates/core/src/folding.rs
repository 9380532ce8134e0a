//! Folding periodic 1D series into period-per-column heatmaps.
//!
//! A series sampled `P` times per period becomes a `P × D` grid whose column
//! `c` holds period `c`: `grid[r][c] = values[c·P + r]`. Rows therefore index
//! time-of-day and columns index days.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MINUTES_PER_DAY: u32 = 1440;

/// Binary class tag used throughout the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    NonPool = 0,
    Pool = 1,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 2] = [ClassLabel::NonPool, ClassLabel::Pool];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(ClassLabel::NonPool),
            1 => Ok(ClassLabel::Pool),
            other => Err(Error::Format(format!("class label must be 0 or 1, got {other}"))),
        }
    }
}

/// A labelled 1D consumption sequence with a fixed sampling period.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadSeries<T = f32> {
    values: Vec<T>,
    sample_minutes: u32,
    pub label: ClassLabel,
    pub id: String,
}

impl<T: Scalar> LoadSeries<T> {
    pub fn new(
        values: Vec<T>,
        sample_minutes: u32,
        label: ClassLabel,
        id: impl Into<String>,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("load series has no values".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::NonFinite(format!(
                "reading {i} is {} (readings must be finite and non-negative)",
                values[i]
            )));
        }
        if sample_minutes == 0 || MINUTES_PER_DAY % sample_minutes != 0 {
            return Err(Error::Config(format!(
                "sample_minutes = {sample_minutes} does not divide a day of {MINUTES_PER_DAY} minutes"
            )));
        }
        Ok(Self {
            values,
            sample_minutes,
            label,
            id: id.into(),
        })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn sample_minutes(&self) -> u32 {
        self.sample_minutes
    }

    /// Samples per day.
    pub fn samples_per_day(&self) -> usize {
        (MINUTES_PER_DAY / self.sample_minutes) as usize
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `rows × cols` grid of consumption values, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heatmap<T = f32> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
    pub label: ClassLabel,
    pub normalized: bool,
}

impl<T: Scalar> Heatmap<T> {
    /// Builds a heatmap from row-major data.
    pub fn from_row_major(
        rows: usize,
        cols: usize,
        data: Vec<T>,
        label: ClassLabel,
        normalized: bool,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("heatmap must be at least 1×1, got {rows}×{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "heatmap {rows}×{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("heatmap entry {i}")));
        }
        if normalized && data.iter().any(|&v| v < T::zero() || v > T::one()) {
            return Err(Error::Format("normalized heatmap has entries outside [0, 1]".into()));
        }
        Ok(Self {
            rows,
            cols,
            data,
            label,
            normalized,
        })
    }

    /// Samples per period (`P`).
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of periods (`D`).
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    pub fn as_row_major(&self) -> &[T] {
        &self.data
    }

    pub fn into_row_major(self) -> Vec<T> {
        self.data
    }

    pub fn min_max(&self) -> (T, T) {
        self.data.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }

    /// Values in series order (`values[c·P + r] = grid[r][c]`).
    pub fn to_series_order(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.push(self.get(r, c));
            }
        }
        out
    }

    /// Inverse of [`Heatmap::to_series_order`].
    pub fn from_series_order(
        rows: usize,
        cols: usize,
        values: &[T],
        label: ClassLabel,
        normalized: bool,
    ) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "heatmap {rows}×{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        let mut data = vec![T::zero(); rows * cols];
        for (i, &v) in values.iter().enumerate() {
            let (c, r) = (i / rows, i % rows);
            data[r * cols + c] = v;
        }
        Self::from_row_major(rows, cols, data, label, normalized)
    }

    /// Keeps the first `cols` periods.
    pub fn crop_cols(&self, cols: usize) -> Result<Self> {
        if cols == 0 || cols > self.cols {
            return Err(Error::Shape(format!("cannot crop {} columns to {cols}", self.cols)));
        }
        let data = (0..self.rows)
            .flat_map(|r| self.data[r * self.cols..r * self.cols + cols].iter().copied())
            .collect();
        Self::from_row_major(self.rows, cols, data, self.label, self.normalized)
    }

    /// Appends zero-valued periods up to `cols`.
    pub fn pad_cols(&self, cols: usize) -> Result<Self> {
        if cols < self.cols {
            return Err(Error::Shape(format!("cannot pad {} columns to {cols}", self.cols)));
        }
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(&self.data[r * self.cols..(r + 1) * self.cols]);
            data.extend(std::iter::repeat(T::zero()).take(cols - self.cols));
        }
        Self::from_row_major(self.rows, cols, data, self.label, self.normalized)
    }
}

/// Result of [`fold`]: the heatmap plus the number of trailing samples that
/// did not fill a whole period and were dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct Folded<T = f32> {
    pub heatmap: Heatmap<T>,
    pub discarded: usize,
}

impl<T> Folded<T> {
    pub fn truncated(&self) -> bool {
        self.discarded > 0
    }
}

/// Folds `series` into a `period × floor(len / period)` heatmap.
pub fn fold<T: Scalar>(series: &LoadSeries<T>, period: usize) -> Result<Folded<T>> {
    let len = series.len();
    if period == 0 || len < period {
        return Err(Error::SeriesTooShort { len, period });
    }
    let cols = len / period;
    let used = cols * period;
    let heatmap =
        Heatmap::from_series_order(period, cols, &series.values[..used], series.label, false)?;
    Ok(Folded {
        heatmap,
        discarded: len - used,
    })
}

/// Flattens a heatmap back into a series (inverse of [`fold`]).
pub fn unfold<T: Scalar>(
    heatmap: &Heatmap<T>,
    sample_minutes: u32,
    id: impl Into<String>,
) -> Result<LoadSeries<T>> {
    LoadSeries::new(heatmap.to_series_order(), sample_minutes, heatmap.label, id)
}

/// Per-heatmap min–max scaling onto `[0, 1]`. Constant heatmaps become zeros.
pub fn normalize<T: Scalar>(heatmap: &Heatmap<T>) -> Result<Heatmap<T>> {
    if heatmap.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cannot normalize a heatmap with non-finite entries".into()));
    }
    let (lo, hi) = heatmap.min_max();
    let range = hi - lo;
    let data = if range > T::zero() {
        heatmap
            .data
            .iter()
            .map(|&v| ((v - lo) / range).max(T::zero()).min(T::one()))
            .collect()
    } else {
        vec![T::zero(); heatmap.data.len()]
    };
    Ok(Heatmap {
        data,
        normalized: true,
        ..heatmap.clone()
    })
}

/// Receptive-field comparison between a 1D kernel on the raw series and a 2D
/// kernel on the folded heatmap, for a feature recurring at the same phase
/// in `span_periods` consecutive periods.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelEconomy {
    pub span_periods: usize,
    pub period: usize,
    /// Samples a 1D kernel must cover: `(m − 1)·P + 1`.
    pub span_1d: usize,
    /// Weights a 2D kernel needs along the period axis: `m`.
    pub weights_2d: usize,
    /// Reduction for a centred object at border distance `d`: `2d`.
    pub reduction_example_2d: usize,
}

pub fn kernel_economy(span_periods: usize, period: usize, border_distance: usize) -> Result<KernelEconomy> {
    if span_periods == 0 || period == 0 {
        return Err(Error::Config("span and period must both be at least 1".into()));
    }
    Ok(KernelEconomy {
        span_periods,
        period,
        span_1d: (span_periods - 1) * period + 1,
        weights_2d: span_periods,
        reduction_example_2d: 2 * border_distance,
    })
}
