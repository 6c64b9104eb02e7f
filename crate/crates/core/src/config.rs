//! The JSON run configuration shared by every subcommand.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::MelConfig;
use crate::error::{Error, Result};
use crate::eval::DEFAULT_PATTERNS;
use crate::nn::ModelConfig;
use crate::segment::SegmentMode;
use crate::synth::SynthConfig;
use crate::tone::{parse_pattern, Tone};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mel: MelConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
    pub context_size: usize,
    pub segment_mode: SegmentMode,
    pub patterns: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mel: MelConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
            context_size: 1,
            segment_mode: SegmentMode::default(),
            patterns: DEFAULT_PATTERNS.iter().map(|p| p.to_string()).collect(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// `None` yields the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn parsed_patterns(&self) -> Result<Vec<Vec<Tone>>> {
        self.patterns.iter().map(|p| parse_pattern(p)).collect()
    }
}
