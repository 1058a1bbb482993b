use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use super::{check_finite, DspError};

/// DFT of a real sequence together with the signed frequency of each bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
    pub bin_freq_hz: Vec<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// `|X[k]|²` per bin.
    pub fn power(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        // bin 1 sits at fs / N
        match self.bin_freq_hz.get(1) {
            Some(f) => f * self.len() as f64,
            None => 0.0,
        }
    }
}

fn bin_frequencies(n: usize, sample_rate_hz: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let signed = if k <= n / 2 {
                k as f64
            } else {
                k as f64 - n as f64
            };
            signed * sample_rate_hz / n as f64
        })
        .collect()
}

pub fn dft(x: &[f64], sample_rate_hz: f64) -> Result<Spectrum, DspError> {
    if x.is_empty() {
        return Err(DspError::Empty);
    }
    check_finite(x)?;
    let input: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    Ok(Spectrum {
        bins: fft(&input),
        bin_freq_hz: bin_frequencies(x.len(), sample_rate_hz),
    })
}

/// Inverse DFT, keeping the real part.
pub fn idft(spectrum: &Spectrum) -> Result<Vec<f64>, DspError> {
    if spectrum.is_empty() {
        return Err(DspError::Empty);
    }
    Ok(ifft(&spectrum.bins).into_iter().map(|c| c.re).collect())
}

/// Forward transform of arbitrary length: iterative radix-2 for powers of
/// two, Bluestein's chirp-z otherwise.
pub fn fft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    if n <= 1 {
        return x.to_vec();
    }
    if n.is_power_of_two() {
        let mut buf = x.to_vec();
        radix2_in_place(&mut buf, false);
        buf
    } else {
        bluestein(x)
    }
}

pub fn ifft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len() as f64;
    let conj: Vec<Complex64> = x.iter().map(|c| c.conj()).collect();
    fft(&conj).into_iter().map(|c| c.conj() / n).collect()
}

fn radix2_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let step = sign * 2.0 * PI / len as f64;
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = Complex64::from_polar(1.0, step * k as f64);
                let u = buf[start + k];
                let v = buf[start + k + half] * w;
                buf[start + k] = u + v;
                buf[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
}

fn bluestein(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let m = (2 * n - 1).next_power_of_two();
    // chirp w[k] = exp(-iπ k² / n); k² taken mod 2n keeps the angle small
    let chirp: Vec<Complex64> = (0..n)
        .map(|k| {
            let k2 = (k as u128 * k as u128 % (2 * n as u128)) as f64;
            Complex64::from_polar(1.0, -PI * k2 / n as f64)
        })
        .collect();

    let mut a = vec![Complex64::new(0.0, 0.0); m];
    for k in 0..n {
        a[k] = x[k] * chirp[k];
    }
    let mut b = vec![Complex64::new(0.0, 0.0); m];
    b[0] = chirp[0].conj();
    for k in 1..n {
        b[k] = chirp[k].conj();
        b[m - k] = chirp[k].conj();
    }
    radix2_in_place(&mut a, false);
    radix2_in_place(&mut b, false);
    for (ai, bi) in a.iter_mut().zip(&b) {
        *ai *= bi;
    }
    radix2_in_place(&mut a, true);
    let scale = 1.0 / m as f64;
    (0..n).map(|k| a[k] * scale * chirp[k]).collect()
}
