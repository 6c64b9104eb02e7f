//! Windowed-sinc polyphase resampling.
//!
//! The conversion ratio is reduced to `up / down` with the greatest common
//! divisor, and one Kaiser-windowed sinc kernel is precomputed for each of the
//! `up` fractional phases. Every phase is normalized to unit DC gain so that a
//! constant input stays constant, and the input is edge-extended rather than
//! zero-padded at both ends.

use super::Waveform;
use crate::error::{Error, Result};

/// Default number of input taps evaluated per output sample.
pub const DEFAULT_TAPS: usize = 32;
/// Default Kaiser window shape.
pub const DEFAULT_BETA: f64 = 8.0;
/// Cutoff as a fraction of the lower of the two Nyquist rates.
pub const DEFAULT_ROLLOFF: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResamplerConfig {
    pub taps: usize,
    pub beta: f64,
    pub rolloff: f64,
}

impl Default for ResamplerConfig {
    fn default() -> Self {
        Self { taps: DEFAULT_TAPS, beta: DEFAULT_BETA, rolloff: DEFAULT_ROLLOFF }
    }
}

/// Precomputed polyphase filter for one rate pair.
#[derive(Debug, Clone)]
pub struct Resampler {
    source_rate: u32,
    target_rate: u32,
    up: usize,
    down: usize,
    taps: usize,
    /// `up` rows of `taps` coefficients.
    bank: Vec<f64>,
}

impl Resampler {
    pub fn new(source_rate: u32, target_rate: u32, cfg: ResamplerConfig) -> Result<Self> {
        if source_rate == 0 || target_rate == 0 {
            return Err(Error::InvalidConfig("sample rates must be positive".into()));
        }
        if cfg.taps < 2 || cfg.taps % 2 != 0 {
            return Err(Error::InvalidConfig(format!("taps must be even and >= 2, got {}", cfg.taps)));
        }
        if !(cfg.rolloff > 0.0 && cfg.rolloff <= 1.0) {
            return Err(Error::InvalidConfig(format!("rolloff {} outside (0, 1]", cfg.rolloff)));
        }
        let g = gcd(source_rate as usize, target_rate as usize);
        let up = target_rate as usize / g;
        let down = source_rate as usize / g;

        // Cutoff in cycles per input sample.
        let cutoff = cfg.rolloff * 0.5 * (target_rate.min(source_rate) as f64) / source_rate as f64;
        let half = (cfg.taps / 2) as f64;
        let i0_beta = bessel_i0(cfg.beta);
        let mut bank = vec![0.0; up * cfg.taps];
        for phase in 0..up {
            let frac = phase as f64 / up as f64;
            let row = &mut bank[phase * cfg.taps..(phase + 1) * cfg.taps];
            for (j, coef) in row.iter_mut().enumerate() {
                // Input offset of tap j relative to floor(position).
                let offset = j as f64 - half + 1.0;
                let t = offset - frac;
                let r = t / half;
                let window = if r.abs() >= 1.0 {
                    0.0
                } else {
                    bessel_i0(cfg.beta * (1.0 - r * r).sqrt()) / i0_beta
                };
                *coef = 2.0 * cutoff * sinc(2.0 * cutoff * t) * window;
            }
            let sum: f64 = row.iter().sum();
            for coef in row.iter_mut() {
                *coef /= sum;
            }
        }
        Ok(Self { source_rate, target_rate, up, down, taps: cfg.taps, bank })
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        ((input_len as f64) * self.target_rate as f64 / self.source_rate as f64).round() as usize
    }

    pub fn process(&self, input: &[f32]) -> Result<Vec<f32>> {
        if input.is_empty() {
            return Err(Error::EmptyAudio);
        }
        let n_out = self.output_len(input.len());
        let last = input.len() as isize - 1;
        let half = (self.taps / 2) as isize;
        let mut out = Vec::with_capacity(n_out);
        for m in 0..n_out {
            let pos = m * self.down;
            let base = (pos / self.up) as isize;
            let phase = pos % self.up;
            let row = &self.bank[phase * self.taps..(phase + 1) * self.taps];
            let start = base - half + 1;
            let mut acc = 0.0f64;
            if start >= 0 && start + self.taps as isize - 1 <= last {
                let window = &input[start as usize..start as usize + self.taps];
                for (c, &x) in row.iter().zip(window) {
                    acc += c * x as f64;
                }
            } else {
                for (j, c) in row.iter().enumerate() {
                    let idx = (start + j as isize).clamp(0, last) as usize;
                    acc += c * input[idx] as f64;
                }
            }
            out.push(acc as f32);
        }
        Ok(out)
    }
}

/// Resample `wave` to `target_rate` with the default filter.
pub fn resample(wave: &Waveform, target_rate: u32) -> Result<Waveform> {
    if wave.samples.is_empty() {
        return Err(Error::EmptyAudio);
    }
    if target_rate == wave.sample_rate {
        return Ok(wave.clone());
    }
    let resampler = Resampler::new(wave.sample_rate, target_rate, ResamplerConfig::default())?;
    let samples = resampler.process(&wave.samples)?;
    Ok(Waveform { samples, sample_rate: target_rate })
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}
