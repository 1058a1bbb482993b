//! Race decoding decisions: prefix tolerance check, result concatenation,
//! and a replay of the race over recorded frame timings.
//!
//! The concurrent, wall-clock orchestrator is in the `tokencast` crate and
//! makes the same decisions through these functions.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::metrics::median;
use crate::predictor::{ForecastResult, Frame};

pub const DEFAULT_GAMMA: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RaceError {
    #[error("tolerance check needs at least one overlapping frame")]
    ZeroOverlap,
    #[error("prefixes have different lengths ({main} main vs {draft} draft frames)")]
    LengthMismatch { main: usize, draft: usize },
    #[error("frame {frame} has {got} sample paths, expected {expected}")]
    SampleMismatch {
        frame: usize,
        expected: usize,
        got: usize,
    },
    #[error("spans do not tile 0..{horizon}: main covers {main_start}..{main_end}, draft covers {draft_start}..{draft_end}")]
    BadCoverage {
        horizon: usize,
        main_start: usize,
        main_end: usize,
        draft_start: usize,
        draft_end: usize,
    },
    #[error("invalid race config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormKind {
    #[default]
    Rmse,
    MeanAbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SummaryPath {
    #[default]
    Median,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaceConfig {
    /// Prefix disagreement below which the draft suffix is accepted, in
    /// units of the context range.
    pub gamma: f64,
    /// Frames the main must have finished before a check; `None` means
    /// `max(1, ⌈0.05·H⌉)`.
    pub min_overlap: Option<usize>,
    pub norm: NormKind,
    pub compare_on: SummaryPath,
}

impl Default for RaceConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            min_overlap: None,
            norm: NormKind::Rmse,
            compare_on: SummaryPath::Median,
        }
    }
}

impl RaceConfig {
    pub fn validate(&self) -> Result<(), RaceError> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(RaceError::InvalidConfig(alloc::format!(
                "gamma must be finite and non-negative, got {}",
                self.gamma
            )));
        }
        if self.min_overlap == Some(0) {
            return Err(RaceError::InvalidConfig(
                "min_overlap must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn min_overlap_for(&self, horizon: usize) -> usize {
        self.min_overlap
            .unwrap_or_else(|| libm::ceil(horizon as f64 * 0.05).max(1.0) as usize)
    }
}

/// Per-frame summary across sample paths, in unit (range-normalized) space.
pub fn summary_path(frames: &[Frame], kind: SummaryPath, quant_factor: u32) -> Vec<f64> {
    let q = quant_factor as f64;
    frames
        .iter()
        .map(|f| {
            let vals: Vec<f64> = f.iter().map(|&t| t as f64 / q).collect();
            match kind {
                SummaryPath::Median => median(&vals),
                SummaryPath::Mean => vals.iter().sum::<f64>() / vals.len() as f64,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceCheck {
    pub delta_p: f64,
    pub pass: bool,
}

/// Compares the main and draft prefixes over the same `k` frames. Token
/// differences divided by `Q` are decoded differences divided by the context
/// range, so `delta_p` is scale-free. Passes when `delta_p < gamma`.
pub fn tolerance_check(
    main_prefix: &[Frame],
    draft_prefix: &[Frame],
    quant_factor: u32,
    cfg: &RaceConfig,
) -> Result<ToleranceCheck, RaceError> {
    if main_prefix.len() != draft_prefix.len() {
        return Err(RaceError::LengthMismatch {
            main: main_prefix.len(),
            draft: draft_prefix.len(),
        });
    }
    if main_prefix.is_empty() {
        return Err(RaceError::ZeroOverlap);
    }
    let main = summary_path(main_prefix, cfg.compare_on, quant_factor);
    let draft = summary_path(draft_prefix, cfg.compare_on, quant_factor);
    let k = main.len() as f64;
    let diffs = main.iter().zip(&draft).map(|(a, b)| a - b);
    let delta_p = match cfg.norm {
        NormKind::Rmse => libm::sqrt(diffs.map(|d| d * d).sum::<f64>() / k),
        NormKind::MeanAbs => diffs.map(f64::abs).sum::<f64>() / k,
    };
    Ok(ToleranceCheck {
        delta_p,
        pass: delta_p < cfg.gamma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Main,
    Draft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Concatenated,
    MainOnly,
}

/// Frames `[start, start + frames.len())` of a horizon with their
/// completion times.
#[derive(Debug, Clone, Copy)]
pub struct FrameSpan<'a> {
    pub start: usize,
    pub frames: &'a [Frame],
    pub done_at: &'a [f64],
}

impl<'a> FrameSpan<'a> {
    pub fn new(start: usize, frames: &'a [Frame], done_at: &'a [f64]) -> Self {
        Self {
            start,
            frames,
            done_at,
        }
    }

    /// `result.frames[range]` as a span.
    pub fn of(result: &'a ForecastResult, range: core::ops::Range<usize>) -> Self {
        Self {
            start: range.start,
            frames: &result.frames[range.clone()],
            done_at: &result.frame_done_at[range],
        }
    }

    fn end(&self) -> usize {
        self.start + self.frames.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Concatenation {
    pub result: ForecastResult,
    pub provenance: Vec<Provenance>,
}

/// Main prefix followed by draft suffix. The spans must tile `0..horizon`
/// exactly and agree on the number of sample paths. Completion times are
/// made non-decreasing: a draft frame counts as available no earlier than
/// the main frames before it.
pub fn concatenate(
    main_prefix: FrameSpan<'_>,
    draft_suffix: FrameSpan<'_>,
    horizon: usize,
) -> Result<Concatenation, RaceError> {
    let tiles = main_prefix.start == 0
        && main_prefix.end() == draft_suffix.start
        && draft_suffix.end() == horizon
        && main_prefix.done_at.len() == main_prefix.frames.len()
        && draft_suffix.done_at.len() == draft_suffix.frames.len();
    if !tiles {
        return Err(RaceError::BadCoverage {
            horizon,
            main_start: main_prefix.start,
            main_end: main_prefix.end(),
            draft_start: draft_suffix.start,
            draft_end: draft_suffix.end(),
        });
    }
    let frames: Vec<Frame> = main_prefix
        .frames
        .iter()
        .chain(draft_suffix.frames)
        .cloned()
        .collect();
    if let Some(expected) = frames.first().map(Vec::len) {
        if let Some((frame, f)) = frames.iter().enumerate().find(|(_, f)| f.len() != expected) {
            return Err(RaceError::SampleMismatch {
                frame,
                expected,
                got: f.len(),
            });
        }
    }
    let mut latest = 0.0f64;
    let frame_done_at = main_prefix
        .done_at
        .iter()
        .chain(draft_suffix.done_at)
        .map(|&t| {
            latest = latest.max(t);
            latest
        })
        .collect();
    let mut provenance = alloc::vec![Provenance::Main; main_prefix.frames.len()];
    provenance.extend(core::iter::repeat_n(
        Provenance::Draft,
        draft_suffix.frames.len(),
    ));
    Ok(Concatenation {
        result: ForecastResult {
            model_id: "concat".into(),
            frames,
            frame_done_at,
        },
        provenance,
    })
}

/// Everything a race produced. Times are seconds from the race start.
#[derive(Debug, Clone, PartialEq)]
pub struct RaceOutcome {
    pub forecast: ForecastResult,
    pub provenance: Vec<Provenance>,
    pub branch: Branch,
    /// Frames taken from the main predictor.
    pub k: usize,
    /// Measured prefix disagreement; `None` when no check ran.
    pub delta_p: Option<f64>,
    pub gamma: f64,
    /// Draft completion time; `None` if the draft failed or was overtaken.
    pub t_draft: Option<f64>,
    pub t_main: f64,
    /// `t_main` extrapolated from `k` frames because the main was cancelled.
    pub t_main_projected: bool,
    pub t_tolerance: f64,
    pub t_total: f64,
    pub draft_error: Option<String>,
    pub main_error: Option<String>,
}

impl RaceOutcome {
    /// Main time over race time.
    pub fn speedup(&self) -> f64 {
        if self.t_total > 0.0 {
            self.t_main / self.t_total
        } else {
            1.0
        }
    }

    pub(crate) fn main_only(main: ForecastResult, gamma: f64) -> Self {
        let h = main.horizon();
        let t_main = main.duration();
        Self {
            forecast: main,
            provenance: alloc::vec![Provenance::Main; h],
            branch: Branch::MainOnly,
            k: h,
            delta_p: None,
            gamma,
            t_draft: None,
            t_main,
            t_main_projected: false,
            t_tolerance: 0.0,
            t_total: t_main,
            draft_error: None,
            main_error: None,
        }
    }
}

/// `elapsed_for_k · H / k`.
pub fn project_main_time(elapsed_for_k: f64, k: usize, horizon: usize) -> f64 {
    elapsed_for_k * horizon as f64 / k as f64
}

/// Replays a race over two complete results whose `frame_done_at` record
/// when each frame became available. Gives the outcome the concurrent
/// orchestrator would reach for the same timings, deterministically.
pub fn replay_race(
    main: &ForecastResult,
    draft: &ForecastResult,
    quant_factor: u32,
    cfg: &RaceConfig,
) -> Result<RaceOutcome, RaceError> {
    cfg.validate()?;
    let horizon = main.horizon();
    if draft.horizon() != horizon {
        return Err(RaceError::LengthMismatch {
            main: horizon,
            draft: draft.horizon(),
        });
    }
    let t_main = main.duration();
    let t_draft = draft.duration();
    let mut outcome = RaceOutcome::main_only(main.clone(), cfg.gamma);
    outcome.t_draft = Some(t_draft);
    if t_main <= t_draft {
        return Ok(outcome);
    }
    let min_overlap = cfg.min_overlap_for(horizon).min(horizon);
    let check_at = t_draft.max(main.frame_done_at[min_overlap - 1]);
    if check_at >= t_main {
        return Ok(outcome);
    }
    let k = main
        .frame_done_at
        .iter()
        .take_while(|&&t| t <= check_at)
        .count();
    let check = tolerance_check(&main.frames[..k], &draft.frames[..k], quant_factor, cfg)?;
    outcome.delta_p = Some(check.delta_p);
    if !check.pass {
        return Ok(outcome);
    }
    let joined = concatenate(
        FrameSpan::of(main, 0..k),
        FrameSpan::of(draft, k..horizon),
        horizon,
    )?;
    Ok(RaceOutcome {
        forecast: joined.result,
        provenance: joined.provenance,
        branch: Branch::Concatenated,
        k,
        t_main: project_main_time(main.frame_done_at[k - 1], k, horizon),
        t_main_projected: true,
        t_total: check_at,
        ..outcome
    })
}
