//! Renders one utterance and prints its f0 track every 20 ms, with the unit
//! boundaries of the true and jittered alignments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tonelab::synth::{synth_utterance, SynthConfig};
use tonelab::Tone;

fn main() -> tonelab::Result<()> {
    let cfg = SynthConfig::default();
    let tones = [Tone::T0, Tone::T4, Tone::T4, Tone::T0, Tone::T3, Tone::T3, Tone::T5];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let u = synth_utterance("demo", &tones, 1.0, &cfg, &mut rng)?;
    let sr = u.waveform.sample_rate as f64;
    for (s, j) in u.truth.syllables.iter().zip(&u.jittered.syllables) {
        println!("{} {:.3}-{:.3}s (aligner {:.3}-{:.3}s)", s.tone, s.start_s, s.end_s(), j.start_s, j.end_s());
    }
    println!("rendered as {:?}", u.rendered);
    for i in (0..u.f0_track.len()).step_by((sr * 0.02) as usize) {
        let f0 = u.f0_track[i];
        let bar = "#".repeat((f0 / 10.0) as usize);
        println!("{:5.2}s {:6.1} Hz {bar}", i as f64 / sr, f0);
    }
    Ok(())
}
