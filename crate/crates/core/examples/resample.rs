//! Resamples a 1 kHz tone from 44.1 kHz to 16 kHz and reports the output
//! frequency estimated from zero crossings.

use tonelab::audio::{resample, Waveform};

fn main() -> tonelab::Result<()> {
    let src = 44100u32;
    let samples: Vec<f32> =
        (0..src as usize).map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / src as f64).sin() as f32).collect();
    let out = resample(&Waveform::new(samples, src)?, 16000)?;
    let body = &out.samples[1000..out.samples.len() - 1000];
    let crossings = body.windows(2).filter(|w| w[0] < 0.0 && w[1] >= 0.0).count();
    let est = crossings as f64 * out.sample_rate as f64 / body.len() as f64;
    println!("{} -> {} samples, estimated frequency {est:.1} Hz", src, out.samples.len());
    Ok(())
}
