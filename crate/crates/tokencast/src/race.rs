//! Concurrent race decoding: main and draft stream side by side, the draft
//! suffix is accepted once the main's finished prefix agrees with it.

use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use tokencast_core::predictor::predict_all;
use tokencast_core::race::{
    concatenate, project_main_time, replay_race, tolerance_check, FrameSpan,
};
use tokencast_core::{
    Branch, ForecastRequest, ForecastResult, Provenance, RaceConfig, RaceError, RaceOutcome,
};

use crate::stream::{
    predict_stream_at, BoardStatus, CancelToken, FrameBoard, Notifier, PredictorHandle,
};

/// Where race timings come from.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Serialize, serde::Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    /// Threads, real sleeps, monotonic clock.
    #[default]
    Wall,
    /// Frames computed eagerly; times taken from the nominal latency
    /// schedule. Deterministic.
    Virtual,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RaceFailure {
    #[error(transparent)]
    Config(#[from] RaceError),
    #[error("invalid request: {0}")]
    Request(String),
    #[error("main and draft model ids are both {0:?}")]
    DuplicateModelId(String),
    #[error("main failed ({main}) and draft failed ({draft})")]
    BothFailed { main: String, draft: String },
    #[error("main failed before the draft could be verified: {0}")]
    MainFailedUnverified(String),
}

/// Poll interval backing the condition-variable wait.
const MONITOR_TICK: Duration = Duration::from_millis(20);

pub fn run_race(
    main: &PredictorHandle,
    draft: &PredictorHandle,
    req: &ForecastRequest,
    cfg: &RaceConfig,
    clock: Clock,
) -> Result<RaceOutcome, RaceFailure> {
    match clock {
        Clock::Wall => race(main, draft, req, cfg),
        Clock::Virtual => race_virtual(main, draft, req, cfg),
    }
}

fn check_inputs(
    main: &PredictorHandle,
    draft: &PredictorHandle,
    req: &ForecastRequest,
    cfg: &RaceConfig,
) -> Result<usize, RaceFailure> {
    cfg.validate()?;
    req.validate()
        .map_err(|e| RaceFailure::Request(e.to_string()))?;
    if main.model_id == draft.model_id {
        return Err(RaceFailure::DuplicateModelId(main.model_id.clone()));
    }
    let min_overlap = cfg.min_overlap_for(req.horizon);
    if min_overlap > req.horizon {
        return Err(RaceError::InvalidConfig(format!(
            "min_overlap {min_overlap} exceeds horizon {}",
            req.horizon
        ))
        .into());
    }
    Ok(min_overlap)
}

/// Deterministic race: both predictors are drained without sleeping and the
/// decision is replayed over their nominal frame schedules.
pub fn race_virtual(
    main: &PredictorHandle,
    draft: &PredictorHandle,
    req: &ForecastRequest,
    cfg: &RaceConfig,
) -> Result<RaceOutcome, RaceFailure> {
    check_inputs(main, draft, req, cfg)?;
    let run = |h: &PredictorHandle| {
        predict_all(h.predictor(), req).map(|frames| ForecastResult {
            model_id: h.model_id.clone(),
            frames,
            frame_done_at: h.nominal_schedule(req),
        })
    };
    let main_result = run(main);
    let draft_result = run(draft);
    match (main_result, draft_result) {
        (Ok(m), Ok(d)) => {
            let mut out = replay_race(&m, &d, req.quant_factor(), cfg)?;
            if out.branch == Branch::Concatenated {
                out.forecast.model_id = format!("{}+{}", main.model_id, draft.model_id);
            }
            Ok(out)
        }
        (Ok(m), Err(e)) => {
            let mut out = main_only(m, cfg.gamma);
            out.draft_error = Some(e.to_string());
            Ok(out)
        }
        (Err(m), Ok(_)) => Err(RaceFailure::MainFailedUnverified(m.to_string())),
        (Err(m), Err(d)) => Err(RaceFailure::BothFailed {
            main: m.to_string(),
            draft: d.to_string(),
        }),
    }
}

fn main_only(main: ForecastResult, gamma: f64) -> RaceOutcome {
    let h = main.horizon();
    let t_main = main.duration();
    RaceOutcome {
        forecast: main,
        provenance: vec![Provenance::Main; h],
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

struct Lane {
    board: Arc<FrameBoard>,
    cancel: CancelToken,
}

fn launch(
    handle: &PredictorHandle,
    req: &ForecastRequest,
    notifier: &Arc<Notifier>,
    origin: Instant,
) -> Lane {
    let board = Arc::new(FrameBoard::new(Arc::clone(notifier)));
    let cancel = CancelToken::new();
    let (h, r, b, c) = (
        handle.clone(),
        req.clone(),
        Arc::clone(&board),
        cancel.clone(),
    );
    // detached: a cancelled lane winds down on its own
    thread::spawn(move || {
        let _ = predict_stream_at(&h, &r, b.as_ref(), &c, origin);
    });
    Lane { board, cancel }
}

/// Runs main and draft concurrently on identical requests.
///
/// When the draft finishes, the main's published prefix (at least
/// `min_overlap` frames, waiting for them if needed) is compared with the
/// draft's first `k` frames. A passing check cancels the main and returns
/// main frames `0..k` followed by draft frames `k..H`; otherwise the main's
/// full result is returned. A main that finishes first wins outright.
pub fn race(
    main: &PredictorHandle,
    draft: &PredictorHandle,
    req: &ForecastRequest,
    cfg: &RaceConfig,
) -> Result<RaceOutcome, RaceFailure> {
    let min_overlap = check_inputs(main, draft, req, cfg)?;
    let horizon = req.horizon;
    let notifier = Arc::new(Notifier::default());
    let origin = Instant::now();
    let main_lane = launch(main, req, &notifier, origin);
    let draft_lane = launch(draft, req, &notifier, origin);

    let mut draft_error: Option<String> = None;
    let mut checked: Option<f64> = None;
    let mut t_tolerance = 0.0;

    let outcome = loop {
        let seen = notifier.generation();
        let (main_len, main_status) = main_lane.board.progress();
        let (draft_len, draft_status) = draft_lane.board.progress();

        if main_status == BoardStatus::Done {
            draft_lane.cancel.cancel();
            let mut out = main_only(main_lane.board.snapshot(&main.model_id), cfg.gamma);
            out.t_total = origin.elapsed().as_secs_f64();
            out.delta_p = checked;
            out.t_tolerance = t_tolerance;
            if draft_status == BoardStatus::Done {
                out.t_draft = draft_lane.board.done_at(horizon - 1);
            }
            out.draft_error = draft_error;
            break Ok(out);
        }

        if let BoardStatus::Failed(e) = &draft_status {
            if draft_error.is_none() {
                draft_error = Some(e.to_string());
            }
        }

        let main_failed = match &main_status {
            BoardStatus::Failed(e) => Some(e.to_string()),
            _ => None,
        };
        match (&main_failed, &draft_error) {
            (Some(m), Some(d)) => {
                break Err(RaceFailure::BothFailed {
                    main: m.clone(),
                    draft: d.clone(),
                })
            }
            (Some(m), None) if checked.is_some() => {
                break Err(RaceFailure::MainFailedUnverified(m.clone()))
            }
            _ => {}
        }

        let draft_done = draft_status == BoardStatus::Done && draft_len == horizon;
        let can_check = main_len >= min_overlap || main_failed.is_some();
        if draft_done && checked.is_none() && can_check {
            if main_len < min_overlap {
                break Err(RaceFailure::MainFailedUnverified(
                    main_failed.unwrap_or_default(),
                ));
            }
            let check_start = Instant::now();
            let (main_prefix, main_times) = main_lane.board.prefix(main_len);
            let (draft_frames, draft_times) = draft_lane.board.prefix(horizon);
            let k = main_prefix.len();
            let check = tolerance_check(&main_prefix, &draft_frames[..k], req.quant_factor(), cfg)?;
            if check.pass {
                main_lane.cancel.cancel();
                let joined = concatenate(
                    FrameSpan::new(0, &main_prefix, &main_times),
                    FrameSpan::new(k, &draft_frames[k..], &draft_times[k..]),
                    horizon,
                )?;
                let mut forecast = joined.result;
                forecast.model_id = format!("{}+{}", main.model_id, draft.model_id);
                let t_tolerance = check_start.elapsed().as_secs_f64();
                break Ok(RaceOutcome {
                    forecast,
                    provenance: joined.provenance,
                    branch: Branch::Concatenated,
                    k,
                    delta_p: Some(check.delta_p),
                    gamma: cfg.gamma,
                    t_draft: draft_times.last().copied(),
                    t_main: project_main_time(main_times[k - 1], k, horizon),
                    t_main_projected: true,
                    t_tolerance,
                    t_total: origin.elapsed().as_secs_f64(),
                    draft_error: None,
                    main_error: main_failed,
                });
            }
            checked = Some(check.delta_p);
            t_tolerance = check_start.elapsed().as_secs_f64();
            if main_failed.is_some() {
                continue;
            }
        }
        notifier.wait_past(seen, MONITOR_TICK);
    };
    if outcome.is_err() {
        main_lane.cancel.cancel();
        draft_lane.cancel.cancel();
    }
    outcome
}

/// JSON race report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RaceReport {
    pub branch: &'static str,
    pub horizon: usize,
    pub k: usize,
    pub delta_p: Option<f64>,
    pub gamma: f64,
    pub t_draft: Option<f64>,
    pub t_main: f64,
    pub t_main_projected: bool,
    pub t_tolerance: f64,
    pub t_total: f64,
    pub speedup: f64,
    pub main_model: String,
    pub draft_model: String,
    pub provenance: Vec<&'static str>,
    pub draft_error: Option<String>,
    pub main_error: Option<String>,
}

impl RaceReport {
    pub fn new(outcome: &RaceOutcome, main: &PredictorHandle, draft: &PredictorHandle) -> Self {
        Self {
            branch: match outcome.branch {
                Branch::Concatenated => "concatenated",
                Branch::MainOnly => "main_only",
            },
            horizon: outcome.forecast.horizon(),
            k: outcome.k,
            delta_p: outcome.delta_p,
            gamma: outcome.gamma,
            t_draft: outcome.t_draft,
            t_main: outcome.t_main,
            t_main_projected: outcome.t_main_projected,
            t_tolerance: outcome.t_tolerance,
            t_total: outcome.t_total,
            speedup: outcome.speedup(),
            main_model: main.model_id.clone(),
            draft_model: draft.model_id.clone(),
            provenance: outcome
                .provenance
                .iter()
                .map(|p| match p {
                    Provenance::Main => "main",
                    Provenance::Draft => "draft",
                })
                .collect(),
            draft_error: outcome.draft_error.clone(),
            main_error: outcome.main_error.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("race report serializes")
    }
}
