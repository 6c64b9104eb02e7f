//! Log Mel-spectrogram extraction.

use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelConfig {
    pub n_filters: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub win_ms: f64,
    pub hop_ms: f64,
    pub sample_rate: u32,
    pub log_floor: f64,
    /// DFT grid size. `None` picks the smallest power of two that covers the
    /// window with grid spacing no wider than the narrowest filter half-width,
    /// so every triangle gets at least two nonzero weights.
    pub n_fft: Option<usize>,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_filters: 64,
            fmin_hz: 50.0,
            fmax_hz: 350.0,
            win_ms: 13.0,
            hop_ms: 10.0,
            sample_rate: 16000,
            log_floor: 1e-10,
            n_fft: None,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if self.n_filters == 0 {
            return bad("n_filters must be >= 1".into());
        }
        if !(self.fmin_hz > 0.0 && self.fmin_hz < self.fmax_hz) {
            return bad(format!("need 0 < fmin ({}) < fmax ({})", self.fmin_hz, self.fmax_hz));
        }
        if self.fmax_hz > nyquist {
            return bad(format!("fmax {} Hz exceeds Nyquist {} Hz", self.fmax_hz, nyquist));
        }
        if !(self.win_ms > 0.0 && self.hop_ms > 0.0) {
            return bad("win_ms and hop_ms must be positive".into());
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive".into());
        }
        if self.win_samples() == 0 || self.hop_samples() == 0 {
            return bad("window or hop rounds to zero samples".into());
        }
        Ok(())
    }

    pub fn win_samples(&self) -> usize {
        (self.win_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_s(&self) -> f64 {
        self.hop_samples() as f64 / self.sample_rate as f64
    }

    pub fn frame_count(&self, n_samples: usize) -> usize {
        let win = self.win_samples();
        if n_samples < win {
            0
        } else {
            1 + (n_samples - win) / self.hop_samples()
        }
    }

    /// The `n_filters + 2` band edges in Hz, evenly spaced on the Mel scale.
    pub fn band_edges(&self) -> Vec<f64> {
        let lo = hz_to_mel(self.fmin_hz);
        let hi = hz_to_mel(self.fmax_hz);
        let n = self.n_filters + 1;
        (0..=n).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / n as f64)).collect()
    }

    pub fn filter_centers(&self) -> Vec<f64> {
        let edges = self.band_edges();
        edges[1..edges.len() - 1].to_vec()
    }

    pub fn resolved_n_fft(&self) -> usize {
        if let Some(n) = self.n_fft {
            return n;
        }
        let edges = self.band_edges();
        let narrowest = edges.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let mut n = self.win_samples().next_power_of_two();
        while self.sample_rate as f64 / n as f64 > narrowest {
            n *= 2;
        }
        n
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Frames × filters matrix of natural-log Mel energies, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Vec<f32>,
    pub n_frames: usize,
    pub n_filters: usize,
    pub hop_s: f64,
    pub win_s: f64,
}

impl MelSpectrogram {
    pub fn row(&self, frame: usize) -> &[f32] {
        &self.values[frame * self.n_filters..(frame + 1) * self.n_filters]
    }
}

/// Triangular Mel filterbank evaluated on the DFT grid points inside
/// `[fmin, fmax]`. Each filter's weights sum to one.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// Index of the first DFT bin kept.
    pub first_bin: usize,
    pub n_bins: usize,
    pub n_fft: usize,
    /// `n_filters` rows of `n_bins` weights.
    pub weights: Vec<f32>,
    pub n_filters: usize,
}

impl MelFilterbank {
    pub fn new(cfg: &MelConfig) -> Result<Self> {
        cfg.validate()?;
        let n_fft = cfg.resolved_n_fft();
        if n_fft < cfg.win_samples() {
            return Err(Error::InvalidConfig(format!(
                "n_fft {n_fft} is shorter than the {}-sample window",
                cfg.win_samples()
            )));
        }
        let df = cfg.sample_rate as f64 / n_fft as f64;
        let first_bin = (cfg.fmin_hz / df).ceil() as usize;
        let last_bin = (cfg.fmax_hz / df).floor() as usize;
        if last_bin < first_bin {
            return Err(Error::InvalidConfig("no DFT bins inside the Mel band".into()));
        }
        let n_bins = last_bin - first_bin + 1;
        let edges = cfg.band_edges();
        let mut weights = vec![0f32; cfg.n_filters * n_bins];
        for f in 0..cfg.n_filters {
            let (lo, mid, hi) = (edges[f], edges[f + 1], edges[f + 2]);
            let row = &mut weights[f * n_bins..(f + 1) * n_bins];
            let mut sum = 0.0f64;
            let mut raw = vec![0.0f64; n_bins];
            for (b, w) in raw.iter_mut().enumerate() {
                let hz = (first_bin + b) as f64 * df;
                *w = if hz > lo && hz <= mid {
                    (hz - lo) / (mid - lo)
                } else if hz > mid && hz < hi {
                    (hi - hz) / (hi - mid)
                } else {
                    0.0
                };
                sum += *w;
            }
            if sum <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "filter {f} ({mid:.1} Hz) covers no DFT bin; increase n_fft"
                )));
            }
            for (dst, w) in row.iter_mut().zip(&raw) {
                *dst = (w / sum) as f32;
            }
        }
        Ok(Self { first_bin, n_bins, n_fft, weights, n_filters: cfg.n_filters })
    }

    pub fn row(&self, filter: usize) -> &[f32] {
        &self.weights[filter * self.n_bins..(filter + 1) * self.n_bins]
    }
}

/// Reusable extractor: precomputes the filterbank and the windowed DFT basis.
#[derive(Debug, Clone)]
pub struct MelExtractor {
    cfg: MelConfig,
    bank: MelFilterbank,
    /// `win × 2·n_bins` matrix: Hann-windowed cosine and sine columns.
    basis: Vec<f32>,
}

impl MelExtractor {
    pub fn new(cfg: MelConfig) -> Result<Self> {
        let bank = MelFilterbank::new(&cfg)?;
        let win = cfg.win_samples();
        let cols = 2 * bank.n_bins;
        let mut basis = vec![0f32; win * cols];
        for n in 0..win {
            let hann = if win > 1 {
                0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (win - 1) as f64).cos()
            } else {
                1.0
            };
            for b in 0..bank.n_bins {
                let k = (bank.first_bin + b) as f64;
                let angle = 2.0 * std::f64::consts::PI * k * n as f64 / bank.n_fft as f64;
                basis[n * cols + 2 * b] = (hann * angle.cos()) as f32;
                basis[n * cols + 2 * b + 1] = (-hann * angle.sin()) as f32;
            }
        }
        Ok(Self { cfg, bank, basis })
    }

    pub fn config(&self) -> &MelConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.bank
    }

    pub fn compute(&self, wave: &Waveform) -> Result<MelSpectrogram> {
        let cfg = &self.cfg;
        if wave.sample_rate != cfg.sample_rate {
            return Err(Error::InvalidConfig(format!(
                "waveform is {} Hz but the Mel config expects {} Hz",
                wave.sample_rate, cfg.sample_rate
            )));
        }
        let win = cfg.win_samples();
        let hop = cfg.hop_samples();
        if wave.samples.len() < win {
            return Err(Error::AudioTooShort { samples: wave.samples.len(), window: win });
        }
        let n_frames = cfg.frame_count(wave.samples.len());
        let nb = self.bank.n_bins;
        let cols = 2 * nb;

        // Frames are strided views into the signal: row stride = hop.
        let mut spectrum = vec![0f32; n_frames * cols];
        unsafe {
            matrixmultiply::sgemm(
                n_frames,
                win,
                cols,
                1.0,
                wave.samples.as_ptr(),
                hop as isize,
                1,
                self.basis.as_ptr(),
                cols as isize,
                1,
                0.0,
                spectrum.as_mut_ptr(),
                cols as isize,
                1,
            );
        }
        let mut power = vec![0f32; n_frames * nb];
        for (p, s) in power.iter_mut().zip(spectrum.chunks_exact(2)) {
            *p = s[0] * s[0] + s[1] * s[1];
        }
        let mut energies = vec![0f32; n_frames * cfg.n_filters];
        unsafe {
            matrixmultiply::sgemm(
                n_frames,
                nb,
                cfg.n_filters,
                1.0,
                power.as_ptr(),
                nb as isize,
                1,
                self.bank.weights.as_ptr(),
                1,
                nb as isize,
                0.0,
                energies.as_mut_ptr(),
                cfg.n_filters as isize,
                1,
            );
        }
        let floor = cfg.log_floor;
        let values = energies
            .into_iter()
            .map(|e| (e as f64).max(floor).ln() as f32)
            .collect();
        Ok(MelSpectrogram {
            values,
            n_frames,
            n_filters: cfg.n_filters,
            hop_s: cfg.hop_s(),
            win_s: win as f64 / cfg.sample_rate as f64,
        })
    }
}

pub fn mel_spectrogram(wave: &Waveform, cfg: &MelConfig) -> Result<MelSpectrogram> {
    MelExtractor::new(cfg.clone())?.compute(wave)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, n: usize, sr: u32) -> Waveform {
        let samples = (0..n)
            .map(|i| (0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin()) as f32)
            .collect();
        Waveform { samples, sample_rate: sr }
    }

    #[test]
    fn one_second_gives_99_frames() {
        let cfg = MelConfig::default();
        assert_eq!(cfg.win_samples(), 208);
        assert_eq!(cfg.hop_samples(), 160);
        let mel = mel_spectrogram(&tone(200.0, 16000, 16000), &cfg).unwrap();
        assert_eq!(mel.n_frames, 99);
        assert_eq!(mel.n_filters, 64);
    }

    #[test]
    fn silence_hits_the_floor() {
        let cfg = MelConfig::default();
        let wave = Waveform { samples: vec![0.0; 4000], sample_rate: 16000 };
        let mel = mel_spectrogram(&wave, &cfg).unwrap();
        let floor = (cfg.log_floor).ln() as f32;
        assert!(mel.values.iter().all(|&v| v == floor));
    }

    #[test]
    fn short_audio_and_bad_band_are_errors() {
        let cfg = MelConfig::default();
        let wave = Waveform { samples: vec![0.0; 100], sample_rate: 16000 };
        assert!(matches!(mel_spectrogram(&wave, &cfg), Err(Error::AudioTooShort { .. })));

        let bad = MelConfig { fmax_hz: 9000.0, ..MelConfig::default() };
        let wave = Waveform { samples: vec![0.0; 1000], sample_rate: 16000 };
        assert!(matches!(mel_spectrogram(&wave, &bad), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn rate_mismatch_is_rejected() {
        let wave = Waveform { samples: vec![0.0; 1000], sample_rate: 44100 };
        assert!(matches!(
            mel_spectrogram(&wave, &MelConfig::default()),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn filterbank_rows_are_unimodal_and_ordered() {
        let bank = MelFilterbank::new(&MelConfig::default()).unwrap();
        let mut last_peak = None;
        for f in 0..bank.n_filters {
            let row = bank.row(f);
            assert!(row.iter().all(|&w| w >= 0.0));
            let peak = row
                .iter()
                .enumerate()
                .fold((0, f32::MIN), |acc, (i, &w)| if w > acc.1 { (i, w) } else { acc })
                .0;
            assert!(row[..=peak].windows(2).all(|w| w[0] <= w[1]));
            assert!(row[peak..].windows(2).all(|w| w[0] >= w[1]));
            if let Some(prev) = last_peak {
                assert!(peak > prev, "filter {f} peak {peak} not after {prev}");
            }
            last_peak = Some(peak);
        }
    }

    #[test]
    fn default_grid_is_fine_enough() {
        let cfg = MelConfig::default();
        assert_eq!(cfg.resolved_n_fft(), 8192);
        let c = cfg.filter_centers();
        assert_eq!(c.len(), 64);
        assert!(c[0] > 50.0 && c[63] < 350.0);
    }
}
