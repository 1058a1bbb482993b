//! Forecast accuracy: weighted quantile loss, MASE, MAE, MSE and the
//! geometric-mean relative aggregate.
//!
//! Point metrics use the per-step median across sample paths. Quantiles are
//! empirical order statistics with linear interpolation.

use alloc::vec::Vec;

use thiserror::Error;

pub const DEFAULT_QUANTILE_LEVELS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("need at least one forecast sample path")]
    NoSamples,
    #[error("sample path {path} has length {got}, expected {expected}")]
    ShapeMismatch {
        path: usize,
        expected: usize,
        got: usize,
    },
    #[error("context of length {context} is too short for season length {season}")]
    ContextTooShort { context: usize, season: usize },
    #[error("season length must be at least 1")]
    InvalidSeason,
    #[error("quantile levels must be sorted, distinct and inside (0, 1)")]
    InvalidLevels,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{0} scale is zero; metric undefined")]
    ZeroScale(&'static str),
    #[error("aggregate needs at least one dataset")]
    NoDatasets,
    #[error("score at dataset {0} is not positive")]
    NonPositiveScore(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalInput {
    pub ground_truth: Vec<f64>,
    /// `[sample][step]`.
    pub forecast_samples: Vec<Vec<f64>>,
    pub in_sample_context: Vec<f64>,
    pub season_length: usize,
}

impl EvalInput {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let h = self.ground_truth.len();
        if h == 0 {
            return Err(MetricsError::EmptyHorizon);
        }
        if self.forecast_samples.is_empty() {
            return Err(MetricsError::NoSamples);
        }
        for (path, s) in self.forecast_samples.iter().enumerate() {
            if s.len() != h {
                return Err(MetricsError::ShapeMismatch {
                    path,
                    expected: h,
                    got: s.len(),
                });
            }
        }
        if self.season_length == 0 {
            return Err(MetricsError::InvalidSeason);
        }
        if self.in_sample_context.len() <= self.season_length {
            return Err(MetricsError::ContextTooShort {
                context: self.in_sample_context.len(),
                season: self.season_length,
            });
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.ground_truth) {
            return Err(MetricsError::NonFinite("ground truth"));
        }
        if !self.forecast_samples.iter().all(|s| finite(s)) {
            return Err(MetricsError::NonFinite("forecast samples"));
        }
        if !finite(&self.in_sample_context) {
            return Err(MetricsError::NonFinite("context"));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.ground_truth.len()
    }

    fn column(&self, t: usize) -> Vec<f64> {
        self.forecast_samples.iter().map(|s| s[t]).collect()
    }

    /// Per-step median across sample paths.
    pub fn median_path(&self) -> Vec<f64> {
        (0..self.horizon())
            .map(|t| median(&self.column(t)))
            .collect()
    }

    /// Truncates to the first `h` steps (for horizon curves).
    pub fn prefix(&self, h: usize) -> EvalInput {
        EvalInput {
            ground_truth: self.ground_truth[..h].to_vec(),
            forecast_samples: self
                .forecast_samples
                .iter()
                .map(|s| s[..h].to_vec())
                .collect(),
            in_sample_context: self.in_sample_context.clone(),
            season_length: self.season_length,
        }
    }
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// `2·(q·(y−ŷ)⁺ + (1−q)·(ŷ−y)⁺)`.
pub fn pinball(y: f64, forecast: f64, q: f64) -> f64 {
    2.0 * (q * (y - forecast).max(0.0) + (1.0 - q) * (forecast - y).max(0.0))
}

fn check_levels(levels: &[f64]) -> Result<(), MetricsError> {
    let in_range = levels.iter().all(|&q| q > 0.0 && q < 1.0);
    let sorted = levels.windows(2).all(|w| w[0] < w[1]);
    if levels.is_empty() || !in_range || !sorted {
        return Err(MetricsError::InvalidLevels);
    }
    Ok(())
}

/// Weighted quantile loss averaged over `levels`.
pub fn wql(input: &EvalInput, levels: &[f64]) -> Result<f64, MetricsError> {
    input.validate()?;
    check_levels(levels)?;
    let scale: f64 = input.ground_truth.iter().map(|y| y.abs()).sum();
    if scale == 0.0 {
        return Err(MetricsError::ZeroScale("ground truth"));
    }
    let mut total = 0.0;
    for (t, &y) in input.ground_truth.iter().enumerate() {
        let mut col = input.column(t);
        col.sort_by(f64::total_cmp);
        total += levels
            .iter()
            .map(|&q| pinball(y, quantile_sorted(&col, q), q))
            .sum::<f64>();
    }
    Ok(total / scale / levels.len() as f64)
}

/// Mean absolute error of the seasonal-naive forecast inside the context.
pub fn seasonal_naive_scale(context: &[f64], season: usize) -> f64 {
    let diffs = season..context.len();
    let n = diffs.len() as f64;
    diffs
        .map(|i| (context[i] - context[i - season]).abs())
        .sum::<f64>()
        / n
}

pub fn mase(input: &EvalInput) -> Result<f64, MetricsError> {
    input.validate()?;
    let scale = seasonal_naive_scale(&input.in_sample_context, input.season_length);
    if scale == 0.0 {
        return Err(MetricsError::ZeroScale("seasonal-naive"));
    }
    Ok(mae(input)? / scale)
}

pub fn mae(input: &EvalInput) -> Result<f64, MetricsError> {
    input.validate()?;
    let point = input.median_path();
    let n = point.len() as f64;
    Ok(input
        .ground_truth
        .iter()
        .zip(&point)
        .map(|(y, f)| (y - f).abs())
        .sum::<f64>()
        / n)
}

pub fn mse(input: &EvalInput) -> Result<f64, MetricsError> {
    input.validate()?;
    let point = input.median_path();
    let n = point.len() as f64;
    Ok(input
        .ground_truth
        .iter()
        .zip(&point)
        .map(|(y, f)| (y - f) * (y - f))
        .sum::<f64>()
        / n)
}

/// Geometric mean of `method / baseline` across datasets.
pub fn aggregate_relative(per_dataset: &[(f64, f64)]) -> Result<f64, MetricsError> {
    if per_dataset.is_empty() {
        return Err(MetricsError::NoDatasets);
    }
    let mut log_sum = 0.0;
    for (i, &(method, baseline)) in per_dataset.iter().enumerate() {
        let ok = method > 0.0 && baseline > 0.0 && method.is_finite() && baseline.is_finite();
        if !ok {
            return Err(MetricsError::NonPositiveScore(i));
        }
        log_sum += libm::log(method / baseline);
    }
    Ok(libm::exp(log_sum / per_dataset.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub wql: f64,
    pub mase: f64,
    pub mae: f64,
    pub mse: f64,
    pub latency_seconds: f64,
}

pub fn evaluate(
    input: &EvalInput,
    levels: &[f64],
    latency_seconds: f64,
) -> Result<MetricReport, MetricsError> {
    Ok(MetricReport {
        wql: wql(input, levels)?,
        mase: mase(input)?,
        mae: mae(input)?,
        mse: mse(input)?,
        latency_seconds,
    })
}
