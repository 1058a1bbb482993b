//! Binary token stream files.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                             |
//! |--------|------|-----------------------------------|
//! | 0      | 4    | magic `b"TKCS"`                   |
//! | 4      | 2    | format version (1)                |
//! | 6      | 1    | rounding mode: 0 floor, 1 nearest |
//! | 7      | 1    | reserved, zero                    |
//! | 8      | 4    | quantization factor `Q` (u32)     |
//! | 12     | 8    | `min_val` (f64)                   |
//! | 20     | 8    | `max_val` (f64)                   |
//! | 28     | 8    | token count `N` (u64)             |
//! | 36     | 4·N  | token IDs (u32)                   |

use std::io::{self, Read, Write};

use tokencast_core::{NormalizationRecord, QuantizationConfig, RoundingMode, TokenSequence};

pub const MAGIC: [u8; 4] = *b"TKCS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 36;

#[derive(Debug, thiserror::Error)]
pub enum TokenFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a token file (bad magic)")]
    BadMagic,
    #[error("unsupported token file version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown rounding mode byte {0}")]
    BadRounding(u8),
    #[error("file ends after {got} bytes, expected {expected}")]
    Truncated { expected: u64, got: u64 },
    #[error("{0} trailing bytes after the last token")]
    TrailingBytes(usize),
    #[error("invalid contents: {0}")]
    Invalid(#[from] tokencast_core::CodecError),
}

pub fn to_bytes(seq: &TokenSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * seq.tokens.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match seq.config.rounding {
        RoundingMode::Floor => 0,
        RoundingMode::Nearest => 1,
    });
    out.push(0);
    out.extend_from_slice(&seq.config.quant_factor.to_le_bytes());
    out.extend_from_slice(&seq.norm.min_val.to_le_bytes());
    out.extend_from_slice(&seq.norm.max_val.to_le_bytes());
    out.extend_from_slice(&(seq.tokens.len() as u64).to_le_bytes());
    for t in &seq.tokens {
        out.extend_from_slice(&t.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<TokenSequence, TokenFileError> {
    let truncated = |expected: u64| TokenFileError::Truncated {
        expected,
        got: bytes.len() as u64,
    };
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(TokenFileError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(truncated(HEADER_LEN as u64));
    }
    let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());

    let version = u16_at(4);
    if version != VERSION {
        return Err(TokenFileError::UnsupportedVersion(version));
    }
    let rounding = match bytes[6] {
        0 => RoundingMode::Floor,
        1 => RoundingMode::Nearest,
        b => return Err(TokenFileError::BadRounding(b)),
    };
    let config = QuantizationConfig::new(u32_at(8), rounding)?;
    let norm = NormalizationRecord::new(f64::from_bits(u64_at(12)), f64::from_bits(u64_at(20)))?;
    let count = u64_at(28);
    let expected = count
        .checked_mul(4)
        .and_then(|n| n.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| truncated(u64::MAX))?;
    if (bytes.len() as u64) < expected {
        return Err(truncated(expected));
    }
    if (bytes.len() as u64) > expected {
        return Err(TokenFileError::TrailingBytes(
            bytes.len() - expected as usize,
        ));
    }
    let tokens = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(TokenSequence::new(tokens, norm, config)?)
}

pub fn write(seq: &TokenSequence, mut w: impl Write) -> Result<(), TokenFileError> {
    w.write_all(&to_bytes(seq))?;
    Ok(())
}

pub fn read(mut r: impl Read) -> Result<TokenSequence, TokenFileError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> TokenSequence {
        TokenSequence::new(
            vec![0, 1, 5000, 10_000],
            NormalizationRecord::new(-3.5, 12.25).unwrap(),
            QuantizationConfig::new(10_000, RoundingMode::Nearest).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn header_layout_is_fixed() {
        let b = to_bytes(&sample());
        assert_eq!(b.len(), HEADER_LEN + 16);
        assert_eq!(&b[..4], b"TKCS");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(b[6], 1);
        assert_eq!(&b[8..12], &10_000u32.to_le_bytes());
        assert_eq!(&b[12..20], &(-3.5f64).to_le_bytes());
        assert_eq!(&b[28..36], &4u64.to_le_bytes());
        assert_eq!(&b[36 + 8..36 + 12], &5000u32.to_le_bytes());
    }

    #[test]
    fn rejects_corrupt_files() {
        let good = to_bytes(&sample());
        assert!(matches!(from_bytes(b"NOPE"), Err(TokenFileError::BadMagic)));
        assert!(matches!(
            from_bytes(&good[..20]),
            Err(TokenFileError::Truncated { .. })
        ));
        assert!(matches!(
            from_bytes(&good[..good.len() - 1]),
            Err(TokenFileError::Truncated { .. })
        ));
        let mut extra = good.clone();
        extra.push(0);
        assert!(matches!(
            from_bytes(&extra),
            Err(TokenFileError::TrailingBytes(1))
        ));
        let mut v = good.clone();
        v[4] = 9;
        assert!(matches!(
            from_bytes(&v),
            Err(TokenFileError::UnsupportedVersion(9))
        ));
        let mut r = good.clone();
        r[6] = 7;
        assert!(matches!(
            from_bytes(&r),
            Err(TokenFileError::BadRounding(7))
        ));
        let mut big = good.clone();
        big[36..40].copy_from_slice(&10_001u32.to_le_bytes());
        assert!(matches!(from_bytes(&big), Err(TokenFileError::Invalid(_))));
    }

    proptest! {
        #[test]
        fn round_trips(
            q in 1u32..100_000,
            raw in proptest::collection::vec(any::<u32>(), 0..64),
            lo in -1e6f64..1e6,
            span in 0.0f64..1e6,
            nearest in any::<bool>(),
        ) {
            let rounding = if nearest { RoundingMode::Nearest } else { RoundingMode::Floor };
            let tokens = raw.into_iter().map(|t| t % (q + 1)).collect();
            let seq = TokenSequence::new(
                tokens,
                NormalizationRecord::new(lo, lo + span).unwrap(),
                QuantizationConfig::new(q, rounding).unwrap(),
            ).unwrap();
            let mut buf = Vec::new();
            write(&seq, &mut buf).unwrap();
            prop_assert_eq!(read(buf.as_slice()).unwrap(), seq);
        }
    }
}
