//! Seeded synthetic series: a low-band sine mixture plus high-band noise,
//! each confined to its side of a split frequency.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokencast_core::TimeSeries;

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyFamily {
    pub sample_rate_hz: f64,
    /// Signal tones lie in `(0, low_max_hz]`.
    pub low_max_hz: f64,
    /// Noise tones lie in `[high_min_hz, nyquist)`.
    pub high_min_hz: f64,
    pub signal_tones: usize,
    pub noise_tones: usize,
    /// Noise RMS over signal RMS.
    pub noise_ratio: f64,
}

impl Default for NoisyFamily {
    fn default() -> Self {
        Self {
            sample_rate_hz: 100.0,
            low_max_hz: 5.0,
            high_min_hz: 15.0,
            signal_tones: 3,
            noise_tones: 24,
            noise_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisySeries {
    pub clean: Vec<f64>,
    pub noise: Vec<f64>,
}

impl NoisySeries {
    pub fn observed(&self) -> Vec<f64> {
        self.clean
            .iter()
            .zip(&self.noise)
            .map(|(s, e)| s + e)
            .collect()
    }
}

struct Tone {
    amp: f64,
    freq: f64,
    phase: f64,
}

fn tones(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<Tone> {
    (0..n)
        .map(|_| Tone {
            amp: rng.random_range(0.5..1.5),
            freq: rng.random_range(lo..hi),
            phase: rng.random_range(0.0..TAU),
        })
        .collect()
}

fn render(tones: &[Tone], n: usize, fs: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            tones
                .iter()
                .map(|w| w.amp * (TAU * w.freq * t + w.phase).sin())
                .sum()
        })
        .collect()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

impl NoisyFamily {
    pub fn generate(&self, n: usize, seed: u64) -> NoisySeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fs = self.sample_rate_hz;
        let lo_min = (self.low_max_hz / 10.0).max(fs / n.max(1) as f64);
        let signal = tones(&mut rng, self.signal_tones, lo_min, self.low_max_hz);
        let noise = tones(&mut rng, self.noise_tones, self.high_min_hz, 0.49 * fs);
        let clean = render(&signal, n, fs);
        let mut noise = render(&noise, n, fs);
        let (s, e) = (rms(&clean), rms(&noise));
        if e > 0.0 {
            let scale = self.noise_ratio * s / e;
            noise.iter_mut().for_each(|v| *v *= scale);
        }
        NoisySeries { clean, noise }
    }

    pub fn series(&self, n: usize, seed: u64) -> TimeSeries {
        TimeSeries::new(self.generate(n, seed).observed(), self.sample_rate_hz)
    }
}
