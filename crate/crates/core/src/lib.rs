//! Signal conditioning, tokenization and race-decoding primitives for
//! token-based time series forecasting.
//!
//! Everything in this crate is a pure function of its inputs and builds
//! without `std`; the `tokencast` crate adds threads, clocks, file formats
//! and the command line on top.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod codec;
pub mod dsp;
pub mod linalg;
pub mod metrics;
pub mod predictor;
pub mod race;
pub mod series;

pub use codec::{
    encode, encode_unfiltered, CodecError, NormalizationRecord, QuantizationConfig, RoundingMode,
    TokenSequence,
};
pub use dsp::{DspError, FilterCoefficients, FilterSpec, Spectrum};
pub use metrics::{EvalInput, MetricReport, MetricsError};
pub use predictor::{
    predict_all, reference_predictor, ForecastRequest, ForecastResult, Frame, FramePredictor,
    FrameStream, PredictError, ReferenceKind,
};
pub use race::{Branch, NormKind, Provenance, RaceConfig, RaceError, RaceOutcome, SummaryPath};
pub use series::TimeSeries;
