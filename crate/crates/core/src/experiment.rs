//! Baseline vs. segment features vs. segment features with context, trained
//! and scored on one synthetic corpus.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::audio::MelConfig;
use crate::error::Result;
use crate::eval::{evaluate, EvalReport};
use crate::features::ContextSample;
use crate::nn::{Model, ModelConfig, Variant};
use crate::pipeline::{featurize_corpus, AlignmentSource, Featurizer, SplitSamples};
use crate::segment::SegmentMode;
use crate::synth::{Corpus, SynthConfig};
use crate::tone::Tone;
use crate::train::{train, TrainConfig, TrainHistory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Comparison {
    pub synth: SynthConfig,
    pub mel: MelConfig,
    /// Variant, context size and vocabulary are filled in per run.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub context_size: usize,
    pub segment_mode: SegmentMode,
    pub variants: Vec<Variant>,
}

impl Default for Comparison {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            mel: MelConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            context_size: 1,
            segment_mode: SegmentMode::Tritone,
            variants: vec![Variant::Baseline, Variant::Sf, Variant::SfCtx],
        }
    }
}

#[derive(Debug, Clone)]
pub struct VariantRun {
    pub variant: Variant,
    pub report: EvalReport,
    pub history: TrainHistory,
    pub seconds: f64,
}

fn narrowed(samples: &[ContextSample], n: usize) -> Result<Vec<ContextSample>> {
    samples.iter().map(|s| s.narrow(n)).collect()
}

impl Comparison {
    /// Seed 42, 2000 train and 400 test utterances, a narrow network with a
    /// strided stem, and the default training schedule.
    pub fn desk_scale() -> Self {
        Self {
            synth: SynthConfig { n_utterances: 2000, n_test_utterances: 400, seed: 42, ..SynthConfig::default() },
            model: ModelConfig { channels: vec![4, 8, 16, 32], stem_stride: 2, ..ModelConfig::default() },
            ..Self::default()
        }
    }

    pub fn model_config(&self, variant: Variant, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            variant,
            context_size: if variant == Variant::SfCtx { self.context_size } else { 0 },
            vocab_size,
            n_mels: self.mel.n_filters,
            ..self.model.clone()
        }
    }

    /// Synthesizes and featurizes the corpus with the aligner's (jittered)
    /// boundaries.
    pub fn samples(&self) -> Result<(Corpus, SplitSamples)> {
        let corpus = Corpus::new(self.synth.clone())?;
        let featurizer = Featurizer::new(self.mel.clone(), self.context_size, self.segment_mode, corpus.vocab.len())?;
        let split = featurize_corpus(&corpus, &featurizer, AlignmentSource::Jittered)?;
        Ok((corpus, split))
    }

    pub fn run_variant(&self, variant: Variant, vocab_size: usize, data: &SplitSamples, patterns: &[Vec<Tone>]) -> Result<VariantRun> {
        let cfg = self.model_config(variant, vocab_size);
        let n = cfg.slots() / 2;
        let start = Instant::now();
        let model = Model::<f32>::new(cfg, self.train.seed)?;
        let (best, history) = if n == self.context_size {
            train(model, &data.train, &data.dev, &self.train)?
        } else {
            train(model, &narrowed(&data.train, n)?, &narrowed(&data.dev, n)?, &self.train)?
        };
        let report = if n == self.context_size {
            evaluate(&best, &data.test, patterns)?
        } else {
            evaluate(&best, &narrowed(&data.test, n)?, patterns)?
        };
        Ok(VariantRun { variant, report, history, seconds: start.elapsed().as_secs_f64() })
    }

    /// Every configured variant on one corpus; `progress` sees each run as
    /// it finishes.
    pub fn run<F: FnMut(&VariantRun)>(&self, patterns: &[Vec<Tone>], mut progress: F) -> Result<Vec<VariantRun>> {
        let (corpus, data) = self.samples()?;
        let mut out = Vec::with_capacity(self.variants.len());
        for &v in &self.variants {
            let r = self.run_variant(v, corpus.vocab.len(), &data, patterns)?;
            progress(&r);
            out.push(r);
        }
        Ok(out)
    }
}
