//! Run configuration: a strict JSON/TOML schema with defaults, validated
//! field by field.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tokencast_core::metrics::DEFAULT_QUANTILE_LEVELS;
use tokencast_core::{
    FilterSpec, NormKind, QuantizationConfig, RaceConfig, ReferenceKind, RoundingMode, SummaryPath,
};

use crate::external::SubprocessPredictor;
use crate::stream::{make_reference_predictor, with_simulated_latency, PredictorHandle, Role};

/// Overrides the output directory of `bench` and `race`.
pub const OUT_DIR_ENV: &str = "TOKENCAST_OUT_DIR";
/// Overrides the `bench` worker count.
pub const THREADS_ENV: &str = "TOKENCAST_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}: config files must end in .json or .toml")]
    UnsupportedFormat(PathBuf),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct RunConfig {
    pub filter: FilterSection,
    pub quant: QuantSection,
    pub race: RaceSection,
    pub predictors: PredictorsSection,
    pub eval: EvalSection,
    pub dataset: DatasetSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub order: usize,
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        Self {
            order: 5,
            cutoff_hz: 10.0,
            sample_rate_hz: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    Floor,
    Nearest,
}

impl From<Rounding> for RoundingMode {
    fn from(r: Rounding) -> Self {
        match r {
            Rounding::Floor => RoundingMode::Floor,
            Rounding::Nearest => RoundingMode::Nearest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantSection {
    pub quant_factor: u32,
    pub rounding: Rounding,
}

impl Default for QuantSection {
    fn default() -> Self {
        Self {
            quant_factor: tokencast_core::codec::DEFAULT_QUANT_FACTOR,
            rounding: Rounding::Floor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    #[default]
    Rmse,
    MeanAbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Summary {
    #[default]
    Median,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RaceSection {
    /// Tolerance on the range-normalized prefix disagreement. A tuning
    /// knob; 0.1 is a starting point, not a calibrated value.
    pub gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_overlap: Option<usize>,
    pub norm: Norm,
    pub compare_on: Summary,
}

impl Default for RaceSection {
    fn default() -> Self {
        Self {
            gamma: tokencast_core::race::DEFAULT_GAMMA,
            min_overlap: None,
            norm: Norm::Rmse,
            compare_on: Summary::Median,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Persistence,
    SeasonalNaive,
    Ar,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorSection {
    pub kind: PredictorKind,
    /// AR order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    /// Seasonal-naive period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<usize>,
    /// AR sample paths carry Gaussian innovations.
    #[serde(default = "yes")]
    pub innovations: bool,
    /// Program and arguments of an external predictor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Vec<String>>,
    #[serde(default)]
    pub latency_ms: f64,
    #[serde(default)]
    pub jitter_ms: f64,
}

fn yes() -> bool {
    true
}

impl PredictorSection {
    pub fn ar(order: usize, latency_ms: f64) -> Self {
        Self {
            kind: PredictorKind::Ar,
            order: Some(order),
            period: None,
            innovations: true,
            command: None,
            latency_ms,
            jitter_ms: 0.0,
        }
    }

    fn validate(&self, field: &str) -> Result<(), ConfigError> {
        let f = |name: &str| format!("{field}.{name}");
        if !(self.latency_ms.is_finite() && self.latency_ms >= 0.0) {
            return Err(invalid(&f("latency_ms"), "must be finite and non-negative"));
        }
        if !(self.jitter_ms.is_finite() && self.jitter_ms >= 0.0) {
            return Err(invalid(&f("jitter_ms"), "must be finite and non-negative"));
        }
        match self.kind {
            PredictorKind::Ar => match self.order {
                Some(o) if o >= 1 => {}
                _ => return Err(invalid(&f("order"), "ar predictors need order >= 1")),
            },
            PredictorKind::SeasonalNaive => match self.period {
                Some(p) if p >= 1 => {}
                _ => {
                    return Err(invalid(
                        &f("period"),
                        "seasonal_naive predictors need period >= 1",
                    ))
                }
            },
            PredictorKind::External => match &self.command {
                Some(c) if !c.is_empty() => {}
                _ => return Err(invalid(&f("command"), "external predictors need a command")),
            },
            PredictorKind::Persistence => {}
        }
        Ok(())
    }

    pub fn reference_kind(&self) -> Option<ReferenceKind> {
        match self.kind {
            PredictorKind::Persistence => Some(ReferenceKind::Persistence),
            PredictorKind::SeasonalNaive => Some(ReferenceKind::SeasonalNaive {
                period: self.period.unwrap_or(1),
            }),
            PredictorKind::Ar => Some(ReferenceKind::Ar {
                order: self.order.unwrap_or(1),
                innovations: self.innovations,
            }),
            PredictorKind::External => None,
        }
    }

    /// Parses `kind[:param][@latency_ms]`, e.g. `ar:8@20`, `persistence`,
    /// `seasonal_naive:24@5`. The parameter is the AR order or the season
    /// period.
    pub fn parse_spec(spec: &str) -> Result<Self, String> {
        let (body, latency) = match spec.split_once('@') {
            Some((b, l)) => {
                let ms: f64 = l
                    .parse()
                    .map_err(|_| format!("bad latency {l:?} in {spec:?}"))?;
                (b, ms)
            }
            None => (spec, 0.0),
        };
        let (kind, param) = match body.split_once(':') {
            Some((k, p)) => {
                let n: usize = p
                    .parse()
                    .map_err(|_| format!("bad parameter {p:?} in {spec:?}"))?;
                (k, Some(n))
            }
            None => (body, None),
        };
        let mut section = PredictorSection::ar(param.unwrap_or(1), latency);
        match kind {
            "ar" => {
                section.order =
                    Some(param.ok_or_else(|| format!("{spec:?}: ar needs an order, e.g. ar:3"))?)
            }
            "persistence" => {
                section.kind = PredictorKind::Persistence;
                section.order = None;
            }
            "seasonal_naive" => {
                section.kind = PredictorKind::SeasonalNaive;
                section.order = None;
                section.period = Some(param.unwrap_or(1));
            }
            other => return Err(format!("unknown predictor kind {other:?}")),
        }
        if !(latency.is_finite() && latency >= 0.0) {
            return Err(format!("{spec:?}: latency must be non-negative"));
        }
        Ok(section)
    }

    /// Short label such as `ar3` or `seasonal_naive24`.
    pub fn label(&self) -> String {
        match self.kind {
            PredictorKind::Persistence => "persistence".into(),
            PredictorKind::SeasonalNaive => format!("seasonal_naive{}", self.period.unwrap_or(1)),
            PredictorKind::Ar => format!("ar{}", self.order.unwrap_or(1)),
            PredictorKind::External => "external".into(),
        }
    }

    pub fn build(&self, model_id: &str, role: Role) -> Result<PredictorHandle, ConfigError> {
        let field = match role {
            Role::Main => "predictors.main",
            Role::Draft => "predictors.draft",
        };
        self.validate(field)?;
        let handle = match self.reference_kind() {
            Some(kind) => make_reference_predictor(kind, model_id, role)
                .map_err(|e| invalid(field, e.to_string()))?,
            None => {
                let cmd = self.command.clone().unwrap_or_default();
                PredictorHandle::new(model_id, role, Arc::new(SubprocessPredictor::new(cmd)))
            }
        };
        if self.latency_ms > 0.0 || self.jitter_ms > 0.0 {
            Ok(with_simulated_latency(
                handle,
                Duration::from_secs_f64(self.latency_ms / 1e3),
                Duration::from_secs_f64(self.jitter_ms / 1e3),
            ))
        } else {
            Ok(handle)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorsSection {
    pub main: PredictorSection,
    pub draft: PredictorSection,
}

impl Default for PredictorsSection {
    fn default() -> Self {
        Self {
            main: PredictorSection::ar(8, 20.0),
            draft: PredictorSection::ar(3, 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub quantile_levels: Vec<f64>,
    /// Bench method the aggregate scores are relative to.
    pub baseline: String,
    pub num_samples: usize,
    pub seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            quantile_levels: DEFAULT_QUANTILE_LEVELS.to_vec(),
            baseline: "plain".into(),
            num_samples: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub value_column: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp_column: Option<String>,
    pub context_length: usize,
    pub horizon: usize,
    pub season_length: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            value_column: "value".into(),
            timestamp_column: None,
            context_length: 256,
            horizon: 64,
            season_length: 1,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let f = &self.filter;
        if f.order == 0 || f.order > tokencast_core::dsp::MAX_ORDER {
            return Err(invalid(
                "filter.order",
                format!("must be in 1..={}", tokencast_core::dsp::MAX_ORDER),
            ));
        }
        if !(f.sample_rate_hz.is_finite() && f.sample_rate_hz > 0.0) {
            return Err(invalid(
                "filter.sample_rate_hz",
                "must be finite and positive",
            ));
        }
        if !(f.cutoff_hz.is_finite() && f.cutoff_hz > 0.0 && f.cutoff_hz < f.sample_rate_hz / 2.0) {
            return Err(invalid(
                "filter.cutoff_hz",
                format!(
                    "must lie strictly between 0 and the Nyquist frequency {} Hz",
                    f.sample_rate_hz / 2.0
                ),
            ));
        }
        if self.quant.quant_factor == 0 {
            return Err(invalid("quant.quant_factor", "must be at least 1"));
        }
        let r = &self.race;
        if !(r.gamma.is_finite() && r.gamma >= 0.0) {
            return Err(invalid("race.gamma", "must be finite and non-negative"));
        }
        if r.min_overlap == Some(0) {
            return Err(invalid("race.min_overlap", "must be at least 1"));
        }
        if let Some(m) = r.min_overlap {
            if m > self.dataset.horizon {
                return Err(invalid(
                    "race.min_overlap",
                    "must not exceed dataset.horizon",
                ));
            }
        }
        self.predictors.main.validate("predictors.main")?;
        self.predictors.draft.validate("predictors.draft")?;
        let e = &self.eval;
        let levels_ok = !e.quantile_levels.is_empty()
            && e.quantile_levels.iter().all(|&q| q > 0.0 && q < 1.0)
            && e.quantile_levels.windows(2).all(|w| w[0] < w[1]);
        if !levels_ok {
            return Err(invalid(
                "eval.quantile_levels",
                "must be non-empty, strictly increasing and inside (0, 1)",
            ));
        }
        if e.num_samples == 0 {
            return Err(invalid("eval.num_samples", "must be at least 1"));
        }
        if e.baseline.is_empty() {
            return Err(invalid("eval.baseline", "must name a bench method"));
        }
        let d = &self.dataset;
        if d.value_column.is_empty() {
            return Err(invalid("dataset.value_column", "must not be empty"));
        }
        if d.horizon == 0 {
            return Err(invalid("dataset.horizon", "must be at least 1"));
        }
        if d.season_length == 0 {
            return Err(invalid("dataset.season_length", "must be at least 1"));
        }
        if d.context_length <= d.season_length {
            return Err(invalid(
                "dataset.context_length",
                "must exceed dataset.season_length",
            ));
        }
        if d.context_length <= 3 * f.order {
            return Err(invalid(
                "dataset.context_length",
                format!("must exceed 3 x filter.order = {}", 3 * f.order),
            ));
        }
        Ok(())
    }

    pub fn filter_spec(&self) -> FilterSpec {
        FilterSpec {
            order: self.filter.order,
            cutoff_hz: self.filter.cutoff_hz,
            sample_rate_hz: self.filter.sample_rate_hz,
        }
    }

    pub fn quant_config(&self) -> QuantizationConfig {
        QuantizationConfig {
            quant_factor: self.quant.quant_factor,
            rounding: self.quant.rounding.into(),
        }
    }

    pub fn race_config(&self) -> RaceConfig {
        RaceConfig {
            gamma: self.race.gamma,
            min_overlap: self.race.min_overlap,
            norm: match self.race.norm {
                Norm::Rmse => NormKind::Rmse,
                Norm::MeanAbs => NormKind::MeanAbs,
            },
            compare_on: match self.race.compare_on {
                Summary::Median => SummaryPath::Median,
                Summary::Mean => SummaryPath::Mean,
            },
        }
    }

    pub fn main_handle(&self) -> Result<PredictorHandle, ConfigError> {
        let id = format!("main-{}", self.predictors.main.label());
        self.predictors.main.build(&id, Role::Main)
    }

    pub fn draft_handle(&self) -> Result<PredictorHandle, ConfigError> {
        let id = format!("draft-{}", self.predictors.draft.label());
        self.predictors.draft.build(&id, Role::Draft)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, String> {
        serde_json::from_str(s).map_err(|e| e.to_string())
    }

    pub fn from_toml(s: &str) -> Result<Self, String> {
        toml::from_str(s).map_err(|e| e.to_string())
    }
}

enum Format {
    Json,
    Toml,
}

fn format_of(path: &Path) -> Result<Format, ConfigError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => Ok(Format::Json),
        Some("toml") => Ok(Format::Toml),
        _ => Err(ConfigError::UnsupportedFormat(path.to_path_buf())),
    }
}

/// Reads, fills defaults and validates.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let format = format_of(path)?;
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let parsed = match format {
        Format::Json => RunConfig::from_json(&text),
        Format::Toml => RunConfig::from_toml(&text),
    };
    let cfg = parsed.map_err(|message| ConfigError::Parse {
        path: path.to_path_buf(),
        message,
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn save_config(cfg: &RunConfig, path: &Path) -> Result<(), ConfigError> {
    let text = match format_of(path)? {
        Format::Json => cfg.to_json(),
        Format::Toml => cfg.to_toml(),
    };
    std::fs::write(path, text).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// CLI value, else `TOKENCAST_OUT_DIR`, else `./out`.
pub fn output_dir(cli: Option<PathBuf>) -> PathBuf {
    cli.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// CLI value, else `TOKENCAST_THREADS`, else available parallelism.
pub fn worker_count(cli: Option<usize>) -> usize {
    cli.or_else(|| std::env::var(THREADS_ENV).ok()?.parse().ok())
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}
