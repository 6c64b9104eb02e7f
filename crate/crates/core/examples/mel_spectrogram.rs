//! Log Mel spectrogram of a 200 Hz tone: prints the strongest filter per
//! frame next to the filter centers.

use tonelab::audio::{mel_spectrogram, MelConfig, Waveform};

fn main() -> tonelab::Result<()> {
    let cfg = MelConfig::default();
    let sr = cfg.sample_rate as f32;
    let samples = (0..8000).map(|i| (2.0 * std::f32::consts::PI * 200.0 * i as f32 / sr).sin()).collect();
    let mel = mel_spectrogram(&Waveform::new(samples, cfg.sample_rate)?, &cfg)?;
    let centers = cfg.filter_centers();
    println!("{} frames x {} filters, n_fft {}", mel.n_frames, mel.n_filters, cfg.resolved_n_fft());
    for f in (0..mel.n_frames).step_by(10) {
        let row = mel.row(f);
        let best = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        println!("frame {f:3}: filter {best:2} (center {:.1} Hz), log energy {:.2}", centers[best], row[best]);
    }
    Ok(())
}
