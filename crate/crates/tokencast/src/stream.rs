//! Timed, cancellable frame streaming on top of the core predictors.

use std::fmt;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokencast_core::predictor::{reference_predictor, PredictError};
use tokencast_core::{ForecastRequest, ForecastResult, Frame, FramePredictor, ReferenceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Main,
    Draft,
}

/// Artificial per-frame delay, `per_frame ± jitter`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimulatedLatency {
    pub per_frame: Duration,
    pub jitter: Duration,
}

impl SimulatedLatency {
    /// Delay for each of `horizon` frames. Jitter is drawn from a stream
    /// seeded by the request seed and model id, so it is reproducible.
    pub fn schedule(&self, horizon: usize, seed: u64, model_id: &str) -> Vec<Duration> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(model_id.as_bytes()));
        let base = self.per_frame.as_secs_f64();
        let jitter = self.jitter.as_secs_f64();
        (0..horizon)
            .map(|_| {
                let j = if jitter > 0.0 {
                    rng.random_range(-jitter..=jitter)
                } else {
                    0.0
                };
                Duration::from_secs_f64((base + j).max(0.0))
            })
            .collect()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// A predictor plus identity, role and optional simulated latency.
#[derive(Clone)]
pub struct PredictorHandle {
    pub model_id: String,
    pub role: Role,
    pub expected_per_frame_latency: Duration,
    predictor: Arc<dyn FramePredictor>,
    latency: Option<SimulatedLatency>,
}

impl fmt::Debug for PredictorHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PredictorHandle")
            .field("model_id", &self.model_id)
            .field("role", &self.role)
            .field("latency", &self.latency)
            .finish_non_exhaustive()
    }
}

impl PredictorHandle {
    pub fn new(
        model_id: impl Into<String>,
        role: Role,
        predictor: Arc<dyn FramePredictor>,
    ) -> Self {
        Self {
            model_id: model_id.into(),
            role,
            expected_per_frame_latency: Duration::ZERO,
            predictor,
            latency: None,
        }
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    pub fn latency(&self) -> Option<SimulatedLatency> {
        self.latency
    }

    pub fn predictor(&self) -> &dyn FramePredictor {
        self.predictor.as_ref()
    }

    /// Nominal frame completion times from the stream start, as a
    /// simulated-latency wrapper would produce them with a perfect clock.
    pub fn nominal_schedule(&self, req: &ForecastRequest) -> Vec<f64> {
        let delays = match self.latency {
            Some(l) => l.schedule(req.horizon, req.seed, &self.model_id),
            None => vec![Duration::ZERO; req.horizon],
        };
        delays
            .iter()
            .scan(0.0, |acc, d| {
                *acc += d.as_secs_f64();
                Some(*acc)
            })
            .collect()
    }
}

pub fn make_reference_predictor(
    kind: ReferenceKind,
    model_id: impl Into<String>,
    role: Role,
) -> Result<PredictorHandle, PredictError> {
    let predictor: Arc<dyn FramePredictor> = Arc::from(reference_predictor(kind)?);
    Ok(PredictorHandle::new(model_id, role, predictor))
}

/// Wraps a handle so each frame is released `per_frame_delay ± jitter`
/// after the previous one. Frame values are untouched.
pub fn with_simulated_latency(
    handle: PredictorHandle,
    per_frame_delay: Duration,
    jitter: Duration,
) -> PredictorHandle {
    PredictorHandle {
        expected_per_frame_latency: per_frame_delay,
        latency: Some(SimulatedLatency {
            per_frame: per_frame_delay,
            jitter,
        }),
        ..handle
    }
}

/// Cooperative cancellation flag whose sleeps wake on cancel.
#[derive(Debug, Clone, Default)]
pub struct CancelToken(Arc<(Mutex<bool>, Condvar)>);

impl CancelToken {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cancel(&self) {
        let (flag, cv) = &*self.0;
        *lock(flag) = true;
        cv.notify_all();
    }

    pub fn is_cancelled(&self) -> bool {
        *lock(&self.0 .0)
    }

    /// Sleeps until `deadline`; returns `true` if cancelled first.
    pub fn sleep_until(&self, deadline: Instant) -> bool {
        let (flag, cv) = &*self.0;
        let mut cancelled = lock(flag);
        loop {
            if *cancelled {
                return true;
            }
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            cancelled = cv
                .wait_timeout(cancelled, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
    }
}

pub(crate) fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Receives frames as a predictor publishes them. Frames arrive in index
/// order with no gaps; each call hands over one complete frame.
pub trait FrameSink: Send + Sync {
    fn publish(&self, index: usize, frame: &Frame, done_at: f64);
    fn fail(&self, _index: usize, _error: &StreamError) {}
    fn finish(&self) {}
}

/// Sink that discards everything.
pub struct NullSink;

impl FrameSink for NullSink {
    fn publish(&self, _: usize, _: &Frame, _: f64) {}
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StreamError {
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error("frame {frame} has {got} sample paths, expected {expected}")]
    BadFrameWidth {
        frame: usize,
        expected: usize,
        got: usize,
    },
    #[error("frame {frame} holds token {token} above the vocabulary bound {quant_factor}")]
    TokenOutOfRange {
        frame: usize,
        token: u32,
        quant_factor: u32,
    },
    #[error("stream ended after {0} frames")]
    Truncated(usize),
    #[error("cancelled after {0} frames")]
    Cancelled(usize),
}

/// A failed or cancelled stream with whatever frames completed.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{error}")]
pub struct StreamFailure {
    pub error: StreamError,
    pub partial: ForecastResult,
}

/// Streams `req` through `handle` from a fresh clock origin.
pub fn predict_stream(
    handle: &PredictorHandle,
    req: &ForecastRequest,
    sink: &dyn FrameSink,
) -> Result<ForecastResult, StreamFailure> {
    predict_stream_at(handle, req, sink, &CancelToken::new(), Instant::now())
}

/// Streams `req` through `handle`. Frame times are seconds since `origin`;
/// cancellation is checked before each frame and interrupts latency sleeps.
pub fn predict_stream_at(
    handle: &PredictorHandle,
    req: &ForecastRequest,
    sink: &dyn FrameSink,
    cancel: &CancelToken,
    origin: Instant,
) -> Result<ForecastResult, StreamFailure> {
    let mut result = ForecastResult {
        model_id: handle.model_id.clone(),
        frames: Vec::with_capacity(req.horizon),
        frame_done_at: Vec::with_capacity(req.horizon),
    };
    let fail = |error: StreamError, partial: ForecastResult| {
        sink.fail(partial.frames.len(), &error);
        Err(StreamFailure { error, partial })
    };
    let mut stream = match req.validate().and_then(|_| handle.predictor.start(req)) {
        Ok(s) => s,
        Err(e) => return fail(e.into(), result),
    };
    let delays = handle
        .latency
        .map(|l| l.schedule(req.horizon, req.seed, &handle.model_id));
    let quant_factor = req.quant_factor();
    let mut deadline = Instant::now();

    for index in 0..req.horizon {
        if cancel.is_cancelled() {
            return fail(StreamError::Cancelled(index), result);
        }
        let frame = match stream.next_frame() {
            Some(Ok(f)) => f,
            Some(Err(e)) => return fail(e.into(), result),
            None => return fail(StreamError::Truncated(index), result),
        };
        if frame.len() != req.num_samples {
            let e = StreamError::BadFrameWidth {
                frame: index,
                expected: req.num_samples,
                got: frame.len(),
            };
            return fail(e, result);
        }
        if let Some(&token) = frame.iter().find(|&&t| t > quant_factor) {
            let e = StreamError::TokenOutOfRange {
                frame: index,
                token,
                quant_factor,
            };
            return fail(e, result);
        }
        if let Some(delays) = &delays {
            deadline += delays[index];
            if cancel.sleep_until(deadline) {
                return fail(StreamError::Cancelled(index), result);
            }
        }
        let done_at = origin.elapsed().as_secs_f64();
        sink.publish(index, &frame, done_at);
        result.frames.push(frame);
        result.frame_done_at.push(done_at);
    }
    sink.finish();
    Ok(result)
}

/// Wakes waiters whenever any attached board changes.
#[derive(Debug, Default)]
pub struct Notifier {
    generation: Mutex<u64>,
    cv: Condvar,
}

impl Notifier {
    pub fn generation(&self) -> u64 {
        *lock(&self.generation)
    }

    fn bump(&self) {
        *lock(&self.generation) += 1;
        self.cv.notify_all();
    }

    /// Blocks until the generation moves past `seen` or `timeout` passes.
    pub fn wait_past(&self, seen: u64, timeout: Duration) {
        let g = lock(&self.generation);
        let _ = self.cv.wait_timeout_while(g, timeout, |g| *g == seen);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoardStatus {
    Running,
    Done,
    Failed(StreamError),
}

#[derive(Debug)]
struct BoardState {
    frames: Vec<Frame>,
    done_at: Vec<f64>,
    status: BoardStatus,
}

/// Sink that keeps published frames readable while the producer runs.
/// Readers see whole frames only; a prefix read never blocks on the
/// producer for longer than one push.
#[derive(Debug)]
pub struct FrameBoard {
    state: Mutex<BoardState>,
    notifier: Arc<Notifier>,
}

impl Default for FrameBoard {
    fn default() -> Self {
        Self::new(Arc::new(Notifier::default()))
    }
}

impl FrameBoard {
    pub fn new(notifier: Arc<Notifier>) -> Self {
        Self {
            state: Mutex::new(BoardState {
                frames: Vec::new(),
                done_at: Vec::new(),
                status: BoardStatus::Running,
            }),
            notifier,
        }
    }

    pub fn len(&self) -> usize {
        lock(&self.state).frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn status(&self) -> BoardStatus {
        lock(&self.state).status.clone()
    }

    /// Published frame count and status read together.
    pub fn progress(&self) -> (usize, BoardStatus) {
        let s = lock(&self.state);
        (s.frames.len(), s.status.clone())
    }

    /// First `k` frames and their times (fewer if fewer are published).
    pub fn prefix(&self, k: usize) -> (Vec<Frame>, Vec<f64>) {
        let s = lock(&self.state);
        let k = k.min(s.frames.len());
        (s.frames[..k].to_vec(), s.done_at[..k].to_vec())
    }

    pub fn snapshot(&self, model_id: &str) -> ForecastResult {
        let s = lock(&self.state);
        ForecastResult {
            model_id: model_id.to_string(),
            frames: s.frames.clone(),
            frame_done_at: s.done_at.clone(),
        }
    }

    pub fn done_at(&self, index: usize) -> Option<f64> {
        lock(&self.state).done_at.get(index).copied()
    }
}

impl FrameSink for FrameBoard {
    fn publish(&self, index: usize, frame: &Frame, done_at: f64) {
        {
            let mut s = lock(&self.state);
            debug_assert_eq!(index, s.frames.len());
            s.frames.push(frame.clone());
            s.done_at.push(done_at);
        }
        self.notifier.bump();
    }

    fn fail(&self, _index: usize, error: &StreamError) {
        lock(&self.state).status = BoardStatus::Failed(error.clone());
        self.notifier.bump();
    }

    fn finish(&self) {
        lock(&self.state).status = BoardStatus::Done;
        self.notifier.bump();
    }
}
