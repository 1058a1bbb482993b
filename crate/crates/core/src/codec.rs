//! Anti-aliasing quantization: low-pass filter, min-max normalize,
//! fixed-point quantize and map to integer token IDs, plus the inverse path
//! back to original units.

use alloc::vec::Vec;

use thiserror::Error;

use crate::dsp::{design_butterworth, filtfilt, DspError, FilterSpec};

/// Default number of quantization steps per unit interval.
pub const DEFAULT_QUANT_FACTOR: u32 = 10_000;

/// Distance from the grid a value may sit and still count as on it.
const GRID_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("empty series")]
    Empty,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("quantization factor must be at least 1")]
    InvalidQuantFactor,
    #[error("value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("value {value} at index {index} is not on the 1/{quant_factor} grid")]
    OffGrid {
        index: usize,
        value: f64,
        quant_factor: u32,
    },
    #[error("token {token} at index {index} exceeds the vocabulary bound {quant_factor}")]
    TokenOutOfRange {
        index: usize,
        token: u32,
        quant_factor: u32,
    },
    #[error("normalization record has max {max_val} below min {min_val}")]
    InvalidRecord { min_val: f64, max_val: f64 },
    #[error(transparent)]
    Filter(#[from] DspError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RoundingMode {
    /// `floor(x·Q)/Q`; error in `(-1/Q, 0]`.
    #[default]
    Floor,
    /// Nearest grid level; error in `[-1/(2Q), 1/(2Q)]`.
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantizationConfig {
    pub quant_factor: u32,
    pub rounding: RoundingMode,
}

impl Default for QuantizationConfig {
    fn default() -> Self {
        Self {
            quant_factor: DEFAULT_QUANT_FACTOR,
            rounding: RoundingMode::Floor,
        }
    }
}

impl QuantizationConfig {
    pub fn new(quant_factor: u32, rounding: RoundingMode) -> Result<Self, CodecError> {
        let cfg = Self {
            quant_factor,
            rounding,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.quant_factor == 0 {
            return Err(CodecError::InvalidQuantFactor);
        }
        Ok(())
    }

    /// Number of distinct tokens, `Q + 1`.
    pub fn vocab_size(&self) -> usize {
        self.quant_factor as usize + 1
    }

    fn q(&self) -> f64 {
        self.quant_factor as f64
    }
}

/// Min and max of the context window. A record with `min == max` is
/// degenerate: it normalizes to 0.5 and decodes back to the constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationRecord {
    pub min_val: f64,
    pub max_val: f64,
}

impl NormalizationRecord {
    pub fn new(min_val: f64, max_val: f64) -> Result<Self, CodecError> {
        let r = Self { min_val, max_val };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if !(self.min_val.is_finite() && self.max_val.is_finite()) || self.max_val < self.min_val {
            return Err(CodecError::InvalidRecord {
                min_val: self.min_val,
                max_val: self.max_val,
            });
        }
        Ok(())
    }

    pub fn range(&self) -> f64 {
        self.max_val - self.min_val
    }

    pub fn is_degenerate(&self) -> bool {
        self.max_val == self.min_val
    }
}

/// Token IDs plus everything required to decode them.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
    pub norm: NormalizationRecord,
    pub config: QuantizationConfig,
}

impl TokenSequence {
    pub fn new(
        tokens: Vec<u32>,
        norm: NormalizationRecord,
        config: QuantizationConfig,
    ) -> Result<Self, CodecError> {
        config.validate()?;
        norm.validate()?;
        check_tokens(&tokens, &config)?;
        Ok(Self {
            tokens,
            norm,
            config,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token values as fractions of the unit interval.
    pub fn unit_values(&self) -> Vec<f64> {
        let q = self.config.q();
        self.tokens.iter().map(|&t| t as f64 / q).collect()
    }

    /// Tokens back to original units.
    pub fn decode(&self) -> Vec<f64> {
        self.decode_tokens(&self.tokens)
    }

    /// Decodes tokens produced against this sequence's record (e.g. a
    /// forecast of this context). Tokens are assumed valid.
    pub fn decode_tokens(&self, tokens: &[u32]) -> Vec<f64> {
        let q = self.config.q();
        let unit: Vec<f64> = tokens.iter().map(|&t| t as f64 / q).collect();
        denormalize(&unit, &self.norm)
    }
}

fn check_finite(x: &[f64]) -> Result<(), CodecError> {
    if x.is_empty() {
        return Err(CodecError::Empty);
    }
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(CodecError::NonFinite(i)),
        None => Ok(()),
    }
}

fn check_tokens(tokens: &[u32], config: &QuantizationConfig) -> Result<(), CodecError> {
    match tokens.iter().position(|&t| t > config.quant_factor) {
        Some(index) => Err(CodecError::TokenOutOfRange {
            index,
            token: tokens[index],
            quant_factor: config.quant_factor,
        }),
        None => Ok(()),
    }
}

/// Min-max scales into `[0, 1]`.
pub fn normalize(x: &[f64]) -> Result<(Vec<f64>, NormalizationRecord), CodecError> {
    check_finite(x)?;
    let min_val = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max_val = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let record = NormalizationRecord { min_val, max_val };
    if record.is_degenerate() {
        return Ok((alloc::vec![0.5; x.len()], record));
    }
    let range = record.range();
    let y = x
        .iter()
        .map(|&v| ((v - min_val) / range).clamp(0.0, 1.0))
        .collect();
    Ok((y, record))
}

pub fn denormalize(y: &[f64], record: &NormalizationRecord) -> Vec<f64> {
    if record.is_degenerate() {
        return alloc::vec![record.min_val; y.len()];
    }
    let range = record.range();
    y.iter().map(|&v| record.min_val + v * range).collect()
}

/// Grid index for a value in `[0, 1]`.
fn grid_index(v: f64, config: &QuantizationConfig) -> u32 {
    let q = config.q();
    let max = config.quant_factor as i64;
    let mut i = libm::floor(v * q) as i64;
    // v·q can land one ulp off an integer; settle against the stored levels
    match config.rounding {
        RoundingMode::Floor => {
            if i < max && (i + 1) as f64 / q <= v {
                i += 1;
            }
            if i > 0 && i as f64 / q > v {
                i -= 1;
            }
        }
        RoundingMode::Nearest => {
            i = (i - 1..=i + 1)
                .filter(|c| (0..=max).contains(c))
                .min_by(|&a, &b| {
                    let da = (a as f64 / q - v).abs();
                    let db = (b as f64 / q - v).abs();
                    da.total_cmp(&db)
                })
                .unwrap_or(0);
        }
    }
    i.clamp(0, max) as u32
}

/// Snaps normalized values onto the `1/Q` grid.
pub fn quantize(y: &[f64], config: &QuantizationConfig) -> Result<Vec<f64>, CodecError> {
    config.validate()?;
    let q = config.q();
    y.iter()
        .enumerate()
        .map(|(index, &v)| {
            if !(0.0..=1.0).contains(&v) {
                return Err(CodecError::OutOfRange { index, value: v });
            }
            Ok(grid_index(v, config) as f64 / q)
        })
        .collect()
}

/// Maps grid values to token IDs `round(x·Q)`.
pub fn tokenize(xq: &[f64], config: &QuantizationConfig) -> Result<Vec<u32>, CodecError> {
    config.validate()?;
    let q = config.q();
    xq.iter()
        .enumerate()
        .map(|(index, &v)| {
            if !(0.0..=1.0).contains(&v) {
                return Err(CodecError::OutOfRange { index, value: v });
            }
            let t = libm::round(v * q);
            if (t / q - v).abs() > GRID_SNAP {
                return Err(CodecError::OffGrid {
                    index,
                    value: v,
                    quant_factor: config.quant_factor,
                });
            }
            Ok(t as u32)
        })
        .collect()
}

/// Token IDs back to grid values in `[0, 1]`.
pub fn detokenize(tokens: &[u32], config: &QuantizationConfig) -> Result<Vec<f64>, CodecError> {
    config.validate()?;
    check_tokens(tokens, config)?;
    let q = config.q();
    Ok(tokens.iter().map(|&t| t as f64 / q).collect())
}

/// Normalize, quantize and tokenize without filtering.
pub fn encode_unfiltered(
    x: &[f64],
    config: &QuantizationConfig,
) -> Result<TokenSequence, CodecError> {
    let (y, norm) = normalize(x)?;
    let xq = quantize(&y, config)?;
    let tokens = tokenize(&xq, config)?;
    Ok(TokenSequence {
        tokens,
        norm,
        config: *config,
    })
}

/// Full anti-aliasing encode: zero-phase low-pass, then normalize (on the
/// filtered signal), quantize and tokenize.
pub fn encode(
    x: &[f64],
    spec: &FilterSpec,
    config: &QuantizationConfig,
) -> Result<TokenSequence, CodecError> {
    check_finite(x)?;
    config.validate()?;
    let coeffs = design_butterworth(spec)?;
    let filtered = filtfilt(&coeffs, x)?;
    encode_unfiltered(&filtered, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    const Q: u32 = 10_000;

    fn floor_cfg() -> QuantizationConfig {
        QuantizationConfig::default()
    }

    fn nearest_cfg() -> QuantizationConfig {
        QuantizationConfig::new(Q, RoundingMode::Nearest).unwrap()
    }

    #[test]
    fn normalize_endpoints() {
        let (y, r) = normalize(&[0.0, 5.0, 10.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.5, 1.0]);
        assert_eq!(r, NormalizationRecord::new(0.0, 10.0).unwrap());
    }

    #[test]
    fn constant_series_is_degenerate() {
        let (y, r) = normalize(&[-2.0, -2.0, -2.0]).unwrap();
        assert_eq!(y, vec![0.5; 3]);
        assert!(r.is_degenerate());
        assert_eq!(denormalize(&[0.0, 0.3, 1.0], &r), vec![-2.0; 3]);
    }

    #[test]
    fn normalize_rejects_bad_input() {
        assert_eq!(normalize(&[]), Err(CodecError::Empty));
        assert_eq!(
            normalize(&[1.0, f64::INFINITY]),
            Err(CodecError::NonFinite(1))
        );
        assert!(NormalizationRecord::new(2.0, 1.0).is_err());
    }

    #[test]
    fn normalize_round_trip() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let x: Vec<f64> = (0..100).map(|_| rng.random_range(-50.0..80.0)).collect();
        let (y, r) = normalize(&x).unwrap();
        let back = denormalize(&y, &r);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(&[0.12345], &floor_cfg()).unwrap(), vec![0.1234]);
        assert_eq!(quantize(&[1.0], &floor_cfg()).unwrap(), vec![1.0]);
        assert_eq!(quantize(&[0.0], &floor_cfg()).unwrap(), vec![0.0]);
        assert_eq!(quantize(&[0.12345], &nearest_cfg()).unwrap().len(), 1);
        // 0.29·1e4 evaluates to 2899.999…; the grid value 0.29 must still win
        assert_eq!(quantize(&[0.29], &floor_cfg()).unwrap(), vec![0.29]);
        assert!(matches!(
            quantize(&[0.5, 1.2], &floor_cfg()),
            Err(CodecError::OutOfRange { index: 1, .. })
        ));
        let zero = QuantizationConfig {
            quant_factor: 0,
            rounding: RoundingMode::Floor,
        };
        assert_eq!(quantize(&[0.5], &zero), Err(CodecError::InvalidQuantFactor));
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize(&[0.1234], &floor_cfg()).unwrap(), vec![1234]);
        assert_eq!(tokenize(&[0.0, 1.0], &floor_cfg()).unwrap(), vec![0, Q]);
        assert!(matches!(
            tokenize(&[0.12345], &floor_cfg()),
            Err(CodecError::OffGrid { index: 0, .. })
        ));
    }

    #[test]
    fn detokenize_and_decode() {
        let record = NormalizationRecord::new(10.0, 20.0).unwrap();
        let seq = TokenSequence::new(vec![0, 5000, 10_000], record, floor_cfg()).unwrap();
        assert_eq!(seq.decode(), vec![10.0, 15.0, 20.0]);
        let flat = TokenSequence::new(
            vec![0, 7, 10_000],
            NormalizationRecord::new(4.0, 4.0).unwrap(),
            floor_cfg(),
        )
        .unwrap();
        assert_eq!(flat.decode(), vec![4.0; 3]);
        assert!(matches!(
            detokenize(&[3, 10_001], &floor_cfg()),
            Err(CodecError::TokenOutOfRange {
                index: 1,
                token: 10_001,
                ..
            })
        ));
        assert!(TokenSequence::new(vec![10_001], record, floor_cfg()).is_err());
    }

    #[test]
    fn quantization_error_bounds_exhaustive() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let x: Vec<f64> = (0..100_000).map(|_| rng.random_range(0.0..=1.0)).collect();
        let q = Q as f64;
        let floor = quantize(&x, &floor_cfg()).unwrap();
        for (v, xq) in x.iter().zip(&floor) {
            let err = xq - v;
            assert!(err <= 0.0 && err > -1.0 / q, "{v} -> {xq}");
        }
        let nearest = quantize(&x, &nearest_cfg()).unwrap();
        for (v, xq) in x.iter().zip(&nearest) {
            assert!((xq - v).abs() <= 0.5 / q, "{v} -> {xq}");
        }
    }

    #[test]
    fn full_vocabulary_bijection() {
        let cfg = floor_cfg();
        let all: Vec<u32> = (0..=Q).collect();
        let values = detokenize(&all, &cfg).unwrap();
        assert_eq!(tokenize(&values, &cfg).unwrap(), all);
        assert_eq!(quantize(&values, &cfg).unwrap(), values);
    }

    #[test]
    fn constant_series_encodes_to_one_token() {
        let spec = FilterSpec::new(5, 10.0, 100.0).unwrap();
        let seq = encode(&[3.0; 64], &spec, &floor_cfg()).unwrap();
        assert!(seq.tokens.iter().all(|&t| t == seq.tokens[0]));
        assert_eq!(seq.tokens[0], Q / 2);
        assert!(seq.decode().iter().all(|v| (v - 3.0).abs() < 1e-9));
    }

    #[test]
    fn encode_surfaces_filter_errors() {
        let bad = FilterSpec {
            order: 5,
            cutoff_hz: 60.0,
            sample_rate_hz: 100.0,
        };
        assert!(matches!(
            encode(&[1.0; 64], &bad, &floor_cfg()),
            Err(CodecError::Filter(DspError::CutoffOutOfRange { .. }))
        ));
        let spec = FilterSpec::new(5, 10.0, 100.0).unwrap();
        assert!(matches!(
            encode(&[1.0; 10], &spec, &floor_cfg()),
            Err(CodecError::Filter(DspError::InputTooShort { .. }))
        ));
    }

    proptest! {
        #[test]
        fn tokenize_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let cfg = floor_cfg();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let q = quantize(&[lo, hi], &cfg).unwrap();
            let t = tokenize(&q, &cfg).unwrap();
            prop_assert!(t[0] <= t[1]);
            prop_assert!(t[1] <= Q);
        }

        #[test]
        fn grid_round_trip(tokens in proptest::collection::vec(0u32..=Q, 1..200)) {
            let cfg = nearest_cfg();
            let v = detokenize(&tokens, &cfg).unwrap();
            prop_assert_eq!(tokenize(&v, &cfg).unwrap(), tokens);
        }
    }
}
