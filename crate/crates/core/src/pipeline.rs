//! Audio + alignment to context samples.

use std::path::Path;

use crate::alignment::UtteranceAlignment;
use crate::audio::{read_wav, resample, MelConfig, MelExtractor, Waveform};
use crate::error::Result;
use crate::features::{build_utterance, ContextSample};
use crate::segment::{segment_intervals, slice_segments, SegmentMode};
use crate::synth::{Corpus, Split};

pub struct Featurizer {
    mel: MelExtractor,
    pub context_size: usize,
    pub segment_mode: SegmentMode,
    pub vocab_size: usize,
}

impl Featurizer {
    pub fn new(mel: MelConfig, context_size: usize, segment_mode: SegmentMode, vocab_size: usize) -> Result<Self> {
        Ok(Self { mel: MelExtractor::new(mel)?, context_size, segment_mode, vocab_size })
    }

    pub fn mel_config(&self) -> &MelConfig {
        self.mel.config()
    }

    /// One context sample per aligned unit of the utterance.
    pub fn featurize(&self, wave: &Waveform, utt: &UtteranceAlignment) -> Result<Vec<ContextSample>> {
        let wave = resample(wave, self.mel.config().sample_rate)?;
        let mel = self.mel.compute(&wave)?;
        let bounds = utt.frame_intervals(mel.hop_s, mel.n_frames)?;
        let intervals = segment_intervals(&bounds, mel.n_frames, self.segment_mode)?;
        let slices = slice_segments(&mel, &intervals)?;
        build_utterance(utt, &slices, self.context_size, self.vocab_size)
    }

    /// Reads `<audio_dir>/<utt_id>.wav` for every alignment whose id starts
    /// with `prefix`.
    pub fn featurize_dir(
        &self,
        audio_dir: &Path,
        alignments: &[UtteranceAlignment],
        prefix: Option<&str>,
    ) -> Result<Vec<ContextSample>> {
        let mut out = Vec::new();
        for utt in alignments.iter().filter(|u| prefix.map_or(true, |p| u.utt_id.starts_with(p))) {
            let wave = read_wav(&audio_dir.join(format!("{}.wav", utt.utt_id)))?;
            out.extend(self.featurize(&wave, utt)?);
        }
        Ok(out)
    }
}

/// Which alignment of a synthetic utterance to featurize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignmentSource {
    Truth,
    Jittered,
}

#[derive(Debug, Clone, Default)]
pub struct SplitSamples {
    pub train: Vec<ContextSample>,
    pub dev: Vec<ContextSample>,
    pub test: Vec<ContextSample>,
}

/// Renders and featurizes a synthetic corpus without touching disk; each
/// waveform is dropped as soon as its samples are built.
pub fn featurize_corpus(corpus: &Corpus, featurizer: &Featurizer, source: AlignmentSource) -> Result<SplitSamples> {
    let mut out = SplitSamples::default();
    for i in 0..corpus.len() {
        let u = corpus.utterance(i)?;
        let align = match source {
            AlignmentSource::Truth => &u.truth,
            AlignmentSource::Jittered => &u.jittered,
        };
        let samples = featurizer.featurize(&u.waveform, align)?;
        match corpus.split(i) {
            Split::Train => out.train.extend(samples),
            Split::Dev => out.dev.extend(samples),
            Split::Test => out.test.extend(samples),
        }
    }
    Ok(out)
}
