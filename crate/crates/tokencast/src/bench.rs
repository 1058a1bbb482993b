//! Ablation benchmark: every dataset under every method, scored on decoded
//! forecasts, plus geometric-mean aggregates relative to a baseline method.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use tokencast_core::metrics::{aggregate_relative, evaluate};
use tokencast_core::{
    encode, encode_unfiltered, predict_all, EvalInput, ForecastRequest, ForecastResult, TimeSeries,
};

use crate::config::RunConfig;
use crate::race::{run_race, Clock};
use crate::stream::{predict_stream, NullSink, PredictorHandle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Method {
    /// Anti-aliased encoding and race decoding.
    Full,
    /// Anti-aliased encoding, main predictor alone.
    NoRd,
    /// Unfiltered encoding, race decoding.
    NoAaqm,
    /// Unfiltered encoding, main predictor alone.
    Plain,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Full, Method::NoRd, Method::NoAaqm, Method::Plain];

    pub fn name(self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::NoRd => "no_rd",
            Method::NoAaqm => "no_aaqm",
            Method::Plain => "plain",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    pub fn filtered(self) -> bool {
        matches!(self, Method::Full | Method::NoRd)
    }

    pub fn races(self) -> bool {
        matches!(self, Method::Full | Method::NoAaqm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchDataset {
    pub name: String,
    pub series: TimeSeries,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub clock: Clock,
    pub workers: usize,
    pub methods: Vec<Method>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            clock: Clock::Virtual,
            workers: 1,
            methods: Method::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub dataset: String,
    pub method: &'static str,
    pub horizon: usize,
    pub wql: f64,
    pub mase: f64,
    pub mae: f64,
    pub mse: f64,
    pub latency_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub dataset: String,
    pub method: &'static str,
    pub horizon: usize,
    pub wql: f64,
    pub mase: f64,
    pub mae: f64,
    pub mse: f64,
}

/// Geometric mean of per-dataset `method / baseline` ratios.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub method: &'static str,
    pub baseline: &'static str,
    pub datasets: usize,
    pub wql: Option<f64>,
    pub mase: Option<f64>,
    pub mae: Option<f64>,
    pub mse: Option<f64>,
    pub latency_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchFailure {
    pub dataset: String,
    pub method: &'static str,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub aggregates: Vec<AggregateRow>,
    pub curves: Vec<CurvePoint>,
    pub failures: Vec<BenchFailure>,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("baseline {0:?} is not among the bench methods")]
    UnknownBaseline(String),
    #[error("no methods selected")]
    NoMethods,
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

struct Trial {
    row: BenchRow,
    curve: Vec<CurvePoint>,
}

struct Lanes {
    main: PredictorHandle,
    draft: PredictorHandle,
}

fn forecast_solo(
    main: &PredictorHandle,
    req: &ForecastRequest,
    clock: Clock,
) -> Result<(ForecastResult, f64), String> {
    match clock {
        Clock::Virtual => {
            let frames = predict_all(main.predictor(), req).map_err(|e| e.to_string())?;
            let result = ForecastResult {
                model_id: main.model_id.clone(),
                frames,
                frame_done_at: main.nominal_schedule(req),
            };
            let t = result.duration();
            Ok((result, t))
        }
        Clock::Wall => {
            let start = Instant::now();
            let result = predict_stream(main, req, &NullSink).map_err(|e| e.to_string())?;
            Ok((result, start.elapsed().as_secs_f64()))
        }
    }
}

fn run_trial(
    cfg: &RunConfig,
    lanes: &Lanes,
    dataset: &BenchDataset,
    method: Method,
    clock: Clock,
) -> Result<Trial, String> {
    let d = &cfg.dataset;
    let values = &dataset.series.values;
    let need = d.context_length + d.horizon;
    if values.len() < need {
        return Err(format!(
            "series has {} values, need context_length + horizon = {need}",
            values.len()
        ));
    }
    let split = values.len() - d.horizon;
    let context = &values[split - d.context_length..split];
    let truth = &values[split..];

    let quant = cfg.quant_config();
    let encoded = if method.filtered() {
        encode(context, &cfg.filter_spec(), &quant)
    } else {
        encode_unfiltered(context, &quant)
    }
    .map_err(|e| format!("encoding context: {e}"))?;
    let req = ForecastRequest::new(encoded, d.horizon, cfg.eval.num_samples, cfg.eval.seed);

    let (forecast, latency) = if method.races() {
        let out = run_race(&lanes.main, &lanes.draft, &req, &cfg.race_config(), clock)
            .map_err(|e| e.to_string())?;
        let t = out.t_total;
        (out.forecast, t)
    } else {
        forecast_solo(&lanes.main, &req, clock)?
    };

    let input = EvalInput {
        ground_truth: truth.to_vec(),
        forecast_samples: forecast.decode(&req.context),
        in_sample_context: context.to_vec(),
        season_length: d.season_length,
    };
    let levels = &cfg.eval.quantile_levels;
    let report = evaluate(&input, levels, latency).map_err(|e| e.to_string())?;
    let mut curve = Vec::with_capacity(d.horizon);
    for h in 1..=d.horizon {
        let r = evaluate(&input.prefix(h), levels, latency).map_err(|e| e.to_string())?;
        curve.push(CurvePoint {
            dataset: dataset.name.clone(),
            method: method.name(),
            horizon: h,
            wql: r.wql,
            mase: r.mase,
            mae: r.mae,
            mse: r.mse,
        });
    }
    Ok(Trial {
        row: BenchRow {
            dataset: dataset.name.clone(),
            method: method.name(),
            horizon: d.horizon,
            wql: report.wql,
            mase: report.mase,
            mae: report.mae,
            mse: report.mse,
            latency_s: latency,
        },
        curve,
    })
}

/// Runs every `(dataset, method)` pair on `opts.workers` threads. Failed
/// pairs are logged and reported; the rest still run. Output order follows
/// `datasets` then `opts.methods`, independent of scheduling.
pub fn run_bench(
    cfg: &RunConfig,
    datasets: &[BenchDataset],
    opts: &BenchOptions,
) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    if opts.methods.is_empty() {
        return Err(BenchError::NoMethods);
    }
    let baseline = Method::from_name(&cfg.eval.baseline)
        .filter(|m| opts.methods.contains(m))
        .ok_or_else(|| BenchError::UnknownBaseline(cfg.eval.baseline.clone()))?;
    let lanes = Lanes {
        main: cfg.main_handle()?,
        draft: cfg.draft_handle()?,
    };

    let jobs: Vec<(usize, Method)> = (0..datasets.len())
        .flat_map(|i| opts.methods.iter().map(move |&m| (i, m)))
        .collect();
    let slots: Vec<Mutex<Option<Result<Trial, String>>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = opts.workers.clamp(1, jobs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(i, method)) = jobs.get(j) else {
                    break;
                };
                let trial = run_trial(cfg, &lanes, &datasets[i], method, opts.clock);
                *slots[j].lock().unwrap_or_else(|e| e.into_inner()) = Some(trial);
            });
        }
    });

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let mut failures = Vec::new();
    for (slot, &(i, method)) in slots.into_iter().zip(&jobs) {
        let outcome = slot
            .into_inner()
            .unwrap_or_else(|e| e.into_inner())
            .unwrap_or_else(|| Err("worker panicked".into()));
        match outcome {
            Ok(t) => {
                rows.push(t.row);
                curves.extend(t.curve);
            }
            Err(error) => {
                log::warn!("{} / {}: {error}", datasets[i].name, method.name());
                failures.push(BenchFailure {
                    dataset: datasets[i].name.clone(),
                    method: method.name(),
                    error,
                });
            }
        }
    }
    let aggregates = opts
        .methods
        .iter()
        .map(|&m| aggregate_row(&rows, m, baseline))
        .collect();
    Ok(BenchReport {
        rows,
        aggregates,
        curves,
        failures,
    })
}

fn aggregate_row(rows: &[BenchRow], method: Method, baseline: Method) -> AggregateRow {
    let pairs: Vec<(&BenchRow, &BenchRow)> = rows
        .iter()
        .filter(|r| r.method == method.name())
        .filter_map(|r| {
            rows.iter()
                .find(|b| b.method == baseline.name() && b.dataset == r.dataset)
                .map(|b| (r, b))
        })
        .collect();
    let score = |f: fn(&BenchRow) -> f64| {
        let ratios: Vec<(f64, f64)> = pairs.iter().map(|(r, b)| (f(r), f(b))).collect();
        aggregate_relative(&ratios).ok()
    };
    AggregateRow {
        method: method.name(),
        baseline: baseline.name(),
        datasets: pairs.len(),
        wql: score(|r| r.wql),
        mase: score(|r| r.mase),
        mae: score(|r| r.mae),
        mse: score(|r| r.mse),
        latency_s: score(|r| r.latency_s),
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), BenchError> {
    let csv_err = |source| BenchError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|source| BenchError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `metrics.csv`, `metrics.json`, `aggregate.csv` and `curves.csv`
/// into `dir`, creating it if needed.
pub fn write_outputs(report: &BenchReport, dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| BenchError::Write { path, source }
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let metrics = dir.join("metrics.csv");
    let json = dir.join("metrics.json");
    let aggregate = dir.join("aggregate.csv");
    let curves = dir.join("curves.csv");
    write_rows(&metrics, &report.rows)?;
    write_rows(&aggregate, &report.aggregates)?;
    write_rows(&curves, &report.curves)?;
    let text = serde_json::to_string_pretty(report).expect("bench report serializes");
    fs::write(&json, text + "\n").map_err(io_err(&json))?;
    Ok(vec![metrics, json, aggregate, curves])
}
