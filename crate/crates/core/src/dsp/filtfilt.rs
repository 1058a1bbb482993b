use alloc::vec::Vec;

use super::butterworth::{Biquad, FilterCoefficients};
use super::{check_finite, DspError};

/// Odd-extension length used at each end by [`filtfilt`].
pub fn padding_len(order: usize) -> usize {
    3 * (order + 1)
}

/// Single causal pass through the section cascade from a zero state.
pub fn lfilter(coeffs: &FilterCoefficients, x: &[f64]) -> Vec<f64> {
    let mut state = alloc::vec![[0.0; 2]; coeffs.sections().len()];
    run_cascade(coeffs.sections(), x, &mut state)
}

/// Zero-phase filtering: odd extension, forward pass, backward pass, trim.
///
/// Each pass starts from the steady state for its first sample, so constant
/// inputs pass through unchanged. The effective magnitude response is `|H|²`
/// with zero phase.
pub fn filtfilt(coeffs: &FilterCoefficients, x: &[f64]) -> Result<Vec<f64>, DspError> {
    check_finite(x)?;
    let order = coeffs.order();
    let min = 3 * order;
    if x.len() <= min {
        return Err(DspError::InputTooShort {
            len: x.len(),
            order,
            min,
        });
    }
    let pad = padding_len(order).min(x.len() - 1);
    let extended = odd_extend(x, pad);
    let unit_state = steady_state(coeffs.sections());

    let mut state = scaled(&unit_state, extended[0]);
    let mut y = run_cascade(coeffs.sections(), &extended, &mut state);
    y.reverse();
    let mut state = scaled(&unit_state, y[0]);
    let mut y = run_cascade(coeffs.sections(), &y, &mut state);
    y.reverse();

    Ok(y[pad..pad + x.len()].to_vec())
}

fn odd_extend(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    let first = x[0];
    let last = x[n - 1];
    out.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    out.extend_from_slice(x);
    out.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));
    out
}

/// Transposed direct-form II state of every section after a unit step has
/// settled.
fn steady_state(sections: &[Biquad]) -> Vec<[f64; 2]> {
    let mut input_level = 1.0;
    sections
        .iter()
        .map(|s| {
            let g = s.dc_gain();
            let s2 = (s.b[2] - s.a[2] * g) * input_level;
            let s1 = (s.b[1] - s.a[1] * g) * input_level + s2;
            input_level *= g;
            [s1, s2]
        })
        .collect()
}

fn scaled(state: &[[f64; 2]], by: f64) -> Vec<[f64; 2]> {
    state.iter().map(|[a, b]| [a * by, b * by]).collect()
}

fn run_cascade(sections: &[Biquad], x: &[f64], state: &mut [[f64; 2]]) -> Vec<f64> {
    x.iter()
        .map(|&input| {
            sections
                .iter()
                .zip(state.iter_mut())
                .fold(input, |v, (s, z)| {
                    let y = s.b[0] * v + z[0];
                    z[0] = s.b[1] * v - s.a[1] * y + z[1];
                    z[1] = s.b[2] * v - s.a[2] * y;
                    y
                })
        })
        .collect()
}
