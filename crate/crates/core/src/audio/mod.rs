//! Waveforms, resampling, and log Mel-spectrograms.

pub mod mel;
pub mod resample;
mod wav;

pub use mel::{mel_spectrogram, MelConfig, MelExtractor, MelFilterbank, MelSpectrogram};
pub use resample::{resample, Resampler, ResamplerConfig};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

/// Mono audio with amplitudes nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample_rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NumericError(format!("waveform sample {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}
