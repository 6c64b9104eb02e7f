//! Writes a small synthetic corpus to disk and summarizes it.
//!
//! `cargo run --example synth_corpus -- [out_dir] [n_utterances] [seed]`

use std::path::PathBuf;

use tonelab::synth::{generate_corpus, SynthConfig};
use tonelab::Tone;

fn main() -> tonelab::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = PathBuf::from(args.first().map_or("synth_corpus", String::as_str));
    let cfg = SynthConfig {
        n_utterances: args.get(1).and_then(|s| s.parse().ok()).unwrap_or(20),
        n_test_utterances: 5,
        seed: args.get(2).and_then(|s| s.parse().ok()).unwrap_or(42),
        ..SynthConfig::default()
    };
    let meta = generate_corpus(&cfg, &out)?;
    println!("wrote {} utterances to {}", meta.utterances.len(), out.display());
    for t in Tone::ALL {
        println!("  {t}: {}", meta.tone_counts[t.index()]);
    }
    let sandhi: usize = meta.utterances.iter().map(|u| u.sandhi).sum();
    println!("  T3 finals rendered as T2: {sandhi}");
    println!("train speakers {:.3?}", meta.train_speakers);
    println!("test speakers  {:.3?}", meta.test_speakers);
    Ok(())
}
