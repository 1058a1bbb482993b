//! Butterworth low-pass design, zero-phase filtering and spectral tools.
//!
//! All arithmetic is `f64`. Filters are realized as cascaded second-order
//! sections; the expanded transfer-function polynomials are kept alongside
//! for export and inspection.

mod butterworth;
mod fft;
mod filtfilt;
mod snr;

pub use butterworth::{design_butterworth, Biquad, FilterCoefficients, FilterSpec, MAX_ORDER};
pub use fft::{dft, fft, idft, ifft, Spectrum};
pub use filtfilt::{filtfilt, lfilter, padding_len};
pub use snr::{filtered_snr, snr, FrequencyBand, Snr};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DspError {
    #[error("filter order must be in 1..={max}, got {order}")]
    InvalidOrder { order: usize, max: usize },
    #[error("sample rate must be finite and positive, got {0}")]
    InvalidSampleRate(f64),
    #[error("cutoff {cutoff_hz} Hz must lie strictly between 0 and the Nyquist frequency {nyquist_hz} Hz")]
    CutoffOutOfRange { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("input of length {len} is too short for order {order} (need more than {min})")]
    InputTooShort {
        len: usize,
        order: usize,
        min: usize,
    },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("empty input")]
    Empty,
    #[error("spectra have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("band [{lo_hz}, {hi_hz}] Hz is not within [0, {nyquist_hz}] Hz")]
    InvalidBand {
        lo_hz: f64,
        hi_hz: f64,
        nyquist_hz: f64,
    },
    #[error("signal and noise power are both zero in the band")]
    ZeroPower,
}

pub(crate) fn check_finite(x: &[f64]) -> Result<(), DspError> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(DspError::NonFinite(i)),
        None => Ok(()),
    }
}
