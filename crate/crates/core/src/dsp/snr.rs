use core::f64::consts::PI;

use super::butterworth::FilterCoefficients;
use super::fft::Spectrum;
use super::DspError;

/// Closed frequency interval in Hz, applied to absolute bin frequency so
/// each band covers its negative-frequency mirror too.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyBand {
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl FrequencyBand {
    pub fn new(lo_hz: f64, hi_hz: f64) -> Self {
        Self { lo_hz, hi_hz }
    }

    fn contains(&self, freq_hz: f64) -> bool {
        let f = freq_hz.abs();
        f >= self.lo_hz && f <= self.hi_hz
    }
}

/// Signal-to-noise power ratio. `Infinite` when the noise has no power in
/// the band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Finite(f64),
    Infinite,
}

impl Snr {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Snr::Infinite)
    }

    pub fn value(&self) -> f64 {
        match self {
            Snr::Finite(v) => *v,
            Snr::Infinite => f64::INFINITY,
        }
    }
}

/// `Σ|S[k]|² / Σ|E[k]|²` over the bins inside `band` (all bins when `None`).
pub fn snr(
    signal: &Spectrum,
    noise: &Spectrum,
    band: Option<FrequencyBand>,
) -> Result<Snr, DspError> {
    weighted_snr(signal, noise, band, |_| 1.0)
}

/// SNR after zero-phase low-pass filtering: both sums restricted to
/// `[0, cutoff]`, the noise weighted by the power response of the applied
/// forward-backward filter, `|H|⁴`.
pub fn filtered_snr(
    signal: &Spectrum,
    noise: &Spectrum,
    coeffs: &FilterCoefficients,
) -> Result<Snr, DspError> {
    let spec = coeffs.spec();
    let band = FrequencyBand::new(0.0, spec.cutoff_hz);
    let fs = spec.sample_rate_hz;
    weighted_snr(signal, noise, Some(band), |f| {
        let h = coeffs.response(2.0 * PI * f.abs() / fs).norm_sqr();
        h * h
    })
}

fn weighted_snr(
    signal: &Spectrum,
    noise: &Spectrum,
    band: Option<FrequencyBand>,
    noise_weight: impl Fn(f64) -> f64,
) -> Result<Snr, DspError> {
    if signal.len() != noise.len() {
        return Err(DspError::LengthMismatch(signal.len(), noise.len()));
    }
    if signal.is_empty() {
        return Err(DspError::Empty);
    }
    if let Some(b) = band {
        let nyquist_hz = signal.sample_rate_hz() / 2.0;
        let valid = b.lo_hz >= 0.0 && b.lo_hz <= b.hi_hz && b.hi_hz <= nyquist_hz;
        if !valid {
            return Err(DspError::InvalidBand {
                lo_hz: b.lo_hz,
                hi_hz: b.hi_hz,
                nyquist_hz,
            });
        }
    }
    let in_band = |f: f64| band.is_none_or(|b| b.contains(f));
    let mut signal_power = 0.0;
    let mut noise_power = 0.0;
    for ((s, e), &f) in signal.bins.iter().zip(&noise.bins).zip(&signal.bin_freq_hz) {
        if in_band(f) {
            signal_power += s.norm_sqr();
            noise_power += e.norm_sqr() * noise_weight(f);
        }
    }
    if noise_power == 0.0 {
        return if signal_power == 0.0 {
            Err(DspError::ZeroPower)
        } else {
            Ok(Snr::Infinite)
        };
    }
    Ok(Snr::Finite(signal_power / noise_power))
}
