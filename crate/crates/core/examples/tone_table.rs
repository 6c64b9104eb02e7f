//! Trains the three variants on one synthetic corpus and prints the
//! comparison table.
//!
//! `cargo run --release --example tone_table -- [desk | comparison.json]`
//!
//! `desk` runs the full 2000/400-utterance comparison (about half an hour on
//! one core). A JSON file overrides any field of
//! `tonelab::experiment::Comparison`. Without an argument a small corpus is
//! used.

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use tonelab::eval::{default_patterns, render_markdown};
use tonelab::experiment::Comparison;
use tonelab::synth::SynthConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cmp = match std::env::args().nth(1) {
        Some(arg) if arg == "desk" => Comparison::desk_scale(),
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => Comparison {
            synth: SynthConfig { n_utterances: 300, n_test_utterances: 60, seed: 42, ..SynthConfig::default() },
            ..Comparison::default()
        },
    };
    let runs = cmp.run(&default_patterns(), |r| {
        eprintln!(
            "{}: {} epochs, best {:?}, accuracy {:.4}, {:.0}s",
            r.report.model,
            r.history.epochs.len(),
            r.history.best_epoch,
            r.report.accuracy,
            r.seconds
        );
    })?;
    let reports: Vec<_> = runs.into_iter().map(|r| r.report).collect();
    print!("{}", render_markdown(&reports));
    Ok(())
}
