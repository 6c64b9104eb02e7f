//! Synthesizes a few utterances, turns them into tri-tone context samples
//! and round-trips them through a feature archive.

use tonelab::audio::MelConfig;
use tonelab::features::{read_archive, tone_histogram, write_archive, ArchiveHeader};
use tonelab::pipeline::{featurize_corpus, AlignmentSource, Featurizer};
use tonelab::segment::SegmentMode;
use tonelab::synth::{Corpus, SynthConfig};

fn main() -> tonelab::Result<()> {
    let corpus = Corpus::new(SynthConfig { n_utterances: 8, dev_fraction: 0.0, seed: 3, ..SynthConfig::default() })?;
    let mel = MelConfig::default();
    let featurizer = Featurizer::new(mel.clone(), 1, SegmentMode::Tritone, corpus.vocab.len())?;
    let samples = featurize_corpus(&corpus, &featurizer, AlignmentSource::Jittered)?.train;
    println!("{} samples, tones {:?}", samples.len(), tone_histogram(&samples));
    for s in samples.iter().take(6) {
        let shapes: Vec<String> = s.slices.iter().map(|x| format!("{}x{}", x.frames, x.bins)).collect();
        println!("  {}#{} {} slots {} duration {:.3}s", s.utt_id, s.position, s.label, shapes.join(" "), s.seg_feats[1].duration());
    }
    let dir = std::env::temp_dir().join("tonelab_featurize_example");
    let header = ArchiveHeader { mel: Some(mel), vocab_size: corpus.vocab.len(), context_size: 1, segment_mode: SegmentMode::Tritone };
    let manifest = write_archive(&samples, &header, &dir)?;
    let back = read_archive(&dir)?;
    println!("archive {}: {} bytes, identical after reload: {}", dir.display(), manifest.total_bytes, back.samples == samples);
    Ok(())
}
