//! Frame-at-a-time forecasters over token sequences.
//!
//! A [`FramePredictor`] turns a [`ForecastRequest`] into a [`FrameStream`]
//! that yields one [`Frame`] per horizon step. Timing, latency simulation and
//! concurrent execution live in the `tokencast` crate; this module only
//! computes values.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::codec::TokenSequence;
use crate::linalg;

/// One horizon step: a token per sample path.
pub type Frame = Vec<u32>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictError {
    #[error("horizon must be at least 1")]
    InvalidHorizon,
    #[error("num_samples must be at least 1")]
    InvalidSamples,
    #[error("context is empty")]
    EmptyContext,
    #[error("context has {got} tokens, predictor needs at least {need}")]
    ContextTooShort { need: usize, got: usize },
    #[error("invalid predictor parameters: {0}")]
    InvalidParams(String),
    #[error("predictor failed at frame {frame}: {message}")]
    Failed { frame: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRequest {
    pub context: TokenSequence,
    pub horizon: usize,
    pub num_samples: usize,
    pub seed: u64,
}

impl ForecastRequest {
    pub fn new(context: TokenSequence, horizon: usize, num_samples: usize, seed: u64) -> Self {
        Self {
            context,
            horizon,
            num_samples,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), PredictError> {
        if self.horizon == 0 {
            return Err(PredictError::InvalidHorizon);
        }
        if self.num_samples == 0 {
            return Err(PredictError::InvalidSamples);
        }
        if self.context.is_empty() {
            return Err(PredictError::EmptyContext);
        }
        Ok(())
    }

    pub fn quant_factor(&self) -> u32 {
        self.context.config.quant_factor
    }
}

/// Frames over a horizon with the time (seconds from a caller-chosen origin)
/// at which each frame was complete.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub model_id: String,
    pub frames: Vec<Frame>,
    pub frame_done_at: Vec<f64>,
}

impl ForecastResult {
    pub fn horizon(&self) -> usize {
        self.frames.len()
    }

    pub fn num_samples(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    /// Transposes to `[sample][step]`.
    pub fn sample_paths(&self) -> Vec<Vec<u32>> {
        (0..self.num_samples())
            .map(|s| self.frames.iter().map(|f| f[s]).collect())
            .collect()
    }

    /// Sample paths in the original units of `context`.
    pub fn decode(&self, context: &TokenSequence) -> Vec<Vec<f64>> {
        self.sample_paths()
            .iter()
            .map(|p| context.decode_tokens(p))
            .collect()
    }

    pub fn duration(&self) -> f64 {
        self.frame_done_at.last().copied().unwrap_or(0.0)
    }
}

pub trait FrameStream: Send {
    /// Next frame, or `None` once the horizon is exhausted.
    fn next_frame(&mut self) -> Option<Result<Frame, PredictError>>;
}

pub trait FramePredictor: Send + Sync {
    fn start(&self, req: &ForecastRequest) -> Result<Box<dyn FrameStream>, PredictError>;
}

/// Drains a predictor without any timing.
pub fn predict_all(
    predictor: &dyn FramePredictor,
    req: &ForecastRequest,
) -> Result<Vec<Frame>, PredictError> {
    req.validate()?;
    let mut stream = predictor.start(req)?;
    let mut frames = Vec::with_capacity(req.horizon);
    while let Some(frame) = stream.next_frame() {
        frames.push(frame?);
    }
    Ok(frames)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    /// Repeat the last context token.
    Persistence,
    /// Repeat the last `period` context tokens.
    SeasonalNaive { period: usize },
    /// Least-squares autoregression with intercept on unit-scaled tokens.
    /// With `innovations`, each sample path adds Gaussian noise at the
    /// fitted residual scale.
    Ar { order: usize, innovations: bool },
}

pub fn reference_predictor(kind: ReferenceKind) -> Result<Box<dyn FramePredictor>, PredictError> {
    Ok(match kind {
        ReferenceKind::Persistence => Box::new(Persistence),
        ReferenceKind::SeasonalNaive { period } => {
            if period == 0 {
                return Err(PredictError::InvalidParams(
                    "season length must be at least 1".into(),
                ));
            }
            Box::new(SeasonalNaive { period })
        }
        ReferenceKind::Ar { order, innovations } => {
            if order == 0 {
                return Err(PredictError::InvalidParams(
                    "AR order must be at least 1".into(),
                ));
            }
            Box::new(ArPredictor { order, innovations })
        }
    })
}

/// Replays a fixed sequence of per-step tokens across all sample paths.
struct Replay {
    steps: Vec<u32>,
    num_samples: usize,
    next: usize,
}

impl FrameStream for Replay {
    fn next_frame(&mut self) -> Option<Result<Frame, PredictError>> {
        let token = *self.steps.get(self.next)?;
        self.next += 1;
        Some(Ok(vec![token; self.num_samples]))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Persistence;

impl FramePredictor for Persistence {
    fn start(&self, req: &ForecastRequest) -> Result<Box<dyn FrameStream>, PredictError> {
        req.validate()?;
        let last = *req
            .context
            .tokens
            .last()
            .ok_or(PredictError::EmptyContext)?;
        Ok(Box::new(Replay {
            steps: vec![last; req.horizon],
            num_samples: req.num_samples,
            next: 0,
        }))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SeasonalNaive {
    pub period: usize,
}

impl FramePredictor for SeasonalNaive {
    fn start(&self, req: &ForecastRequest) -> Result<Box<dyn FrameStream>, PredictError> {
        req.validate()?;
        let ctx = &req.context.tokens;
        if ctx.len() < self.period {
            return Err(PredictError::ContextTooShort {
                need: self.period,
                got: ctx.len(),
            });
        }
        let season = &ctx[ctx.len() - self.period..];
        Ok(Box::new(Replay {
            steps: (0..req.horizon).map(|h| season[h % self.period]).collect(),
            num_samples: req.num_samples,
            next: 0,
        }))
    }
}

/// `x_t = intercept + Σ coeffs[i]·x_{t-1-i} + ε`, `ε ~ N(0, sigma²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    pub intercept: f64,
    pub coeffs: Vec<f64>,
    pub sigma: f64,
}

impl ArModel {
    /// Ordinary least squares on the lagged design matrix. Falls back to the
    /// mean model when the design is singular (e.g. a constant context).
    pub fn fit(values: &[f64], order: usize) -> Result<Self, PredictError> {
        if order == 0 {
            return Err(PredictError::InvalidParams(
                "AR order must be at least 1".into(),
            ));
        }
        let need = 2 * order + 1;
        if values.len() < need {
            return Err(PredictError::ContextTooShort {
                need,
                got: values.len(),
            });
        }
        let dim = order + 1;
        let mut xtx = vec![vec![0.0; dim]; dim];
        let mut xty = vec![0.0; dim];
        let mut row = vec![0.0; dim];
        for t in order..values.len() {
            row[0] = 1.0;
            for i in 0..order {
                row[i + 1] = values[t - 1 - i];
            }
            for i in 0..dim {
                xty[i] += row[i] * values[t];
                for j in 0..dim {
                    xtx[i][j] += row[i] * row[j];
                }
            }
        }
        let model = match linalg::solve(xtx, xty) {
            Some(beta) if beta.iter().all(|b| b.is_finite()) => ArModel {
                intercept: beta[0],
                coeffs: beta[1..].to_vec(),
                sigma: 0.0,
            },
            _ => ArModel {
                intercept: values.iter().sum::<f64>() / values.len() as f64,
                coeffs: vec![0.0; order],
                sigma: 0.0,
            },
        };
        let residuals: Vec<f64> = (order..values.len())
            .map(|t| values[t] - model.predict_next(&values[..t]))
            .collect();
        let dof = residuals.len().saturating_sub(dim).max(1);
        let sigma = libm::sqrt(residuals.iter().map(|r| r * r).sum::<f64>() / dof as f64);
        Ok(ArModel { sigma, ..model })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// Conditional mean given `history`, most recent value last.
    pub fn predict_next(&self, history: &[f64]) -> f64 {
        let n = history.len();
        self.coeffs
            .iter()
            .enumerate()
            .fold(self.intercept, |acc, (i, c)| acc + c * history[n - 1 - i])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ArPredictor {
    pub order: usize,
    pub innovations: bool,
}

struct ArStream {
    model: ArModel,
    innovations: bool,
    histories: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
    quant_factor: f64,
    remaining: usize,
}

impl FramePredictor for ArPredictor {
    fn start(&self, req: &ForecastRequest) -> Result<Box<dyn FrameStream>, PredictError> {
        req.validate()?;
        let values = req.context.unit_values();
        let model = ArModel::fit(&values, self.order)?;
        let tail = values[values.len() - self.order..].to_vec();
        Ok(Box::new(ArStream {
            model,
            innovations: self.innovations,
            histories: vec![tail; req.num_samples],
            rng: ChaCha8Rng::seed_from_u64(req.seed),
            quant_factor: req.quant_factor() as f64,
            remaining: req.horizon,
        }))
    }
}

impl FrameStream for ArStream {
    fn next_frame(&mut self) -> Option<Result<Frame, PredictError>> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let q = self.quant_factor;
        let frame = self
            .histories
            .iter_mut()
            .map(|hist| {
                let mut v = self.model.predict_next(hist);
                if self.innovations {
                    let z: f64 = StandardNormal.sample(&mut self.rng);
                    v += self.model.sigma * z;
                }
                let v = v.clamp(0.0, 1.0);
                hist.remove(0);
                hist.push(v);
                libm::round(v * q) as u32
            })
            .collect();
        Some(Ok(frame))
    }
}
