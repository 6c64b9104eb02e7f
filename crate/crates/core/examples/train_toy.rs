//! Trains the segment-feature model on a small synthetic corpus and prints
//! the epoch history.
//!
//! `cargo run --release --example train_toy -- [n_utterances]`

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use tonelab::experiment::Comparison;
use tonelab::nn::Variant;
use tonelab::synth::SynthConfig;
use tonelab::train::TrainConfig;

fn main() -> tonelab::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(150);
    let cmp = Comparison {
        synth: SynthConfig { n_utterances: n, n_test_utterances: n / 5, seed: 1, ..SynthConfig::default() },
        train: TrainConfig { max_epochs: 15, ..TrainConfig::default() },
        ..Comparison::default()
    };
    let (corpus, data) = cmp.samples()?;
    println!("train {} / dev {} / test {} samples", data.train.len(), data.dev.len(), data.test.len());
    let run = cmp.run_variant(Variant::Sf, corpus.vocab.len(), &data, &tonelab::eval::default_patterns())?;
    println!("T0 keep probability {:.4}", run.history.t0_keep_prob);
    for e in &run.history.epochs {
        println!(
            "epoch {:3}  train {:.4}  dev {:.4}  dev acc {:.4}  lr {:.2e}{}",
            e.epoch,
            e.train_loss,
            e.dev_loss,
            e.dev_accuracy,
            e.lr,
            if e.lr_reduced { "  (reduced)" } else { "" }
        );
    }
    println!("best epoch {:?}, test accuracy {:.4} in {:.0}s", run.history.best_epoch, run.report.accuracy, run.seconds);
    Ok(())
}
