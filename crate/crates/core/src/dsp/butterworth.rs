use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use super::DspError;

/// Highest supported filter order. Direct-form coefficients above this are
/// too ill-conditioned to be worth exporting.
pub const MAX_ORDER: usize = 12;

/// Low-pass Butterworth design parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub order: usize,
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
}

impl FilterSpec {
    pub fn new(order: usize, cutoff_hz: f64, sample_rate_hz: f64) -> Result<Self, DspError> {
        let spec = Self {
            order,
            cutoff_hz,
            sample_rate_hz,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if self.order == 0 || self.order > MAX_ORDER {
            return Err(DspError::InvalidOrder {
                order: self.order,
                max: MAX_ORDER,
            });
        }
        if !self.sample_rate_hz.is_finite() || self.sample_rate_hz <= 0.0 {
            return Err(DspError::InvalidSampleRate(self.sample_rate_hz));
        }
        let nyquist_hz = self.nyquist_hz();
        if !self.cutoff_hz.is_finite() || self.cutoff_hz <= 0.0 || self.cutoff_hz >= nyquist_hz {
            return Err(DspError::CutoffOutOfRange {
                cutoff_hz: self.cutoff_hz,
                nyquist_hz,
            });
        }
        Ok(())
    }

    pub fn nyquist_hz(&self) -> f64 {
        self.sample_rate_hz / 2.0
    }

    /// Cutoff as a fraction of Nyquist, in (0, 1).
    pub fn normalized_cutoff(&self) -> f64 {
        self.cutoff_hz / self.nyquist_hz()
    }

    /// Cutoff in radians per sample, in (0, π).
    pub fn cutoff_omega(&self) -> f64 {
        PI * self.normalized_cutoff()
    }
}

/// One second-order section `(b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
/// First-order sections carry zero in the `z⁻²` slots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn is_first_order(&self) -> bool {
        self.a[2] == 0.0 && self.b[2] == 0.0
    }

    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        let num = self.b[0] + z1 * self.b[1] + z2 * self.b[2];
        let den = self.a[0] + z1 * self.a[1] + z2 * self.a[2];
        num / den
    }

    fn poles(&self) -> Vec<Complex64> {
        if self.is_first_order() {
            return vec![Complex64::new(-self.a[1], 0.0)];
        }
        // z² + a1 z + a2 = 0
        let disc = Complex64::new(self.a[1] * self.a[1] - 4.0 * self.a[2], 0.0).sqrt();
        let half = Complex64::new(-self.a[1] / 2.0, 0.0);
        vec![half + disc / 2.0, half - disc / 2.0]
    }
}

/// A designed low-pass filter.
///
/// `b` and `a` are the expanded numerator and denominator (`a[0] == 1`), each
/// of length `order + 1`. Filtering runs through the equivalent cascade of
/// sections, which stays stable where the expanded form would not.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoefficients {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
    sections: Vec<Biquad>,
    spec: FilterSpec,
}

impl FilterCoefficients {
    pub fn order(&self) -> usize {
        self.spec.order
    }

    pub fn spec(&self) -> &FilterSpec {
        &self.spec
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Poles of the discrete-time transfer function.
    pub fn poles(&self) -> Vec<Complex64> {
        self.sections.iter().flat_map(Biquad::poles).collect()
    }

    /// Complex frequency response at `omega` radians per sample.
    pub fn response(&self, omega: f64) -> Complex64 {
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(omega))
    }

    /// Single-pass magnitude response at `freq_hz`.
    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        self.response(2.0 * PI * freq_hz / self.spec.sample_rate_hz)
            .norm()
    }
}

/// Designs a digital Butterworth low-pass filter from the analog prototype by
/// pre-warping the cutoff and applying the bilinear transform.
pub fn design_butterworth(spec: &FilterSpec) -> Result<FilterCoefficients, DspError> {
    spec.validate()?;
    let n = spec.order;
    // bilinear transform with T = 1: s = 2 (z - 1) / (z + 1)
    let warped = 2.0 * libm::tan(spec.cutoff_omega() / 2.0);
    let to_digital = |p: Complex64| (2.0 + p) / (2.0 - p);

    let mut sections = Vec::with_capacity(n.div_ceil(2));
    if n % 2 == 1 {
        let z = to_digital(Complex64::new(-warped, 0.0)).re;
        let g = (1.0 - z) / 2.0;
        sections.push(Biquad {
            b: [g, g, 0.0],
            a: [1.0, -z, 0.0],
        });
    }
    // upper-half-plane prototype poles; conjugates fill in the rest
    let mut pairs: Vec<Biquad> = (0..n / 2)
        .map(|k| {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            let z = to_digital(Complex64::from_polar(warped, theta));
            let a1 = -2.0 * z.re;
            let a2 = z.norm_sqr();
            let g = (1.0 + a1 + a2) / 4.0;
            Biquad {
                b: [g, 2.0 * g, g],
                a: [1.0, a1, a2],
            }
        })
        .collect();
    // poles nearest the unit circle last
    pairs.sort_by(|x, y| x.a[2].total_cmp(&y.a[2]));
    sections.extend(pairs);

    let (b, a) = expand(&sections);
    Ok(FilterCoefficients {
        b,
        a,
        sections,
        spec: *spec,
    })
}

fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, pi) in p.iter().enumerate() {
        for (j, qj) in q.iter().enumerate() {
            out[i + j] += pi * qj;
        }
    }
    out
}

fn expand(sections: &[Biquad]) -> (Vec<f64>, Vec<f64>) {
    let mut b = vec![1.0];
    let mut a = vec![1.0];
    for s in sections {
        let len = if s.is_first_order() { 2 } else { 3 };
        b = poly_mul(&b, &s.b[..len]);
        a = poly_mul(&a, &s.a[..len]);
    }
    (b, a)
}
