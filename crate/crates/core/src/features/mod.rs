//! Segment features, context windows, and on-disk feature archives.

mod archive;

pub use archive::{read_archive, write_archive, ArchiveHeader, FeatureArchive, Manifest, SampleRecord, ARCHIVE_VERSION};

use crate::alignment::{AlignedSyllable, UtteranceAlignment, Vocabulary};
use crate::error::{Error, Result};
use crate::segment::Segment;
use crate::tone::{Tone, N_TONES};

/// `[dur_s, one-hot(syllable_id)]`, length `1 + |V|`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFeature(pub Vec<f32>);

impl SegmentFeature {
    pub fn padding(vocab_size: usize) -> Self {
        Self(vec![0.0; 1 + vocab_size])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn duration(&self) -> f32 {
        self.0[0]
    }

    /// Index of the hot syllable, `None` for padding.
    pub fn syllable_id(&self) -> Option<usize> {
        self.0[1..].iter().position(|&v| v != 0.0)
    }
}

pub fn segment_feature(syl: &AlignedSyllable, vocab: &Vocabulary) -> Result<SegmentFeature> {
    segment_feature_sized(syl, vocab.len())
}

fn segment_feature_sized(syl: &AlignedSyllable, vocab_size: usize) -> Result<SegmentFeature> {
    if syl.syllable_id >= vocab_size {
        return Err(Error::UnknownSyllable {
            utt_id: String::new(),
            row: 0,
            syllable: format!("#{}", syl.syllable_id),
        });
    }
    let mut v = vec![0.0; 1 + vocab_size];
    v[0] = syl.dur_s as f32;
    v[1 + syl.syllable_id] = 1.0;
    Ok(SegmentFeature(v))
}

/// One classification instance: `2n + 1` slots centered on one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSample {
    pub slices: Vec<Segment>,
    pub seg_feats: Vec<SegmentFeature>,
    pub label: Tone,
    pub utt_id: String,
    pub position: usize,
}

impl ContextSample {
    pub fn context_size(&self) -> usize {
        self.slices.len() / 2
    }

    pub fn center(&self) -> &Segment {
        &self.slices[self.context_size()]
    }

    pub fn feat_len(&self) -> usize {
        self.seg_feats[0].len()
    }

    /// The same sample restricted to a smaller window.
    pub fn narrow(&self, n: usize) -> Result<ContextSample> {
        let own = self.context_size();
        if n > own {
            return Err(Error::ConfigMismatch(format!(
                "cannot widen a context of size {own} to {n}"
            )));
        }
        let range = own - n..own + n + 1;
        Ok(ContextSample {
            slices: self.slices[range.clone()].to_vec(),
            seg_feats: self.seg_feats[range].to_vec(),
            label: self.label,
            utt_id: self.utt_id.clone(),
            position: self.position,
        })
    }

    fn check(&self) -> Result<()> {
        let slots = self.slices.len();
        if slots % 2 != 1 || self.seg_feats.len() != slots {
            return Err(Error::ShapeError(format!(
                "{} slices and {} features do not form a 2n+1 window",
                slots,
                self.seg_feats.len()
            )));
        }
        if self.center().is_placeholder() {
            return Err(Error::EmptySegment);
        }
        Ok(())
    }
}

/// Build the window around unit `i`. Slots that fall outside the utterance
/// get an empty slice and an all-zero segment feature.
pub fn build_context(
    utt: &UtteranceAlignment,
    slices: &[Segment],
    i: usize,
    n: usize,
    vocab_size: usize,
) -> Result<ContextSample> {
    let count = utt.syllables.len();
    if slices.len() != count {
        return Err(Error::AlignmentSliceMismatch { syllables: count, slices: slices.len() });
    }
    if i >= count {
        return Err(Error::BadBounds(format!("position {i} in a {count}-unit utterance")));
    }
    let bins = slices[i].bins;
    let mut window = Vec::with_capacity(2 * n + 1);
    let mut feats = Vec::with_capacity(2 * n + 1);
    for offset in -(n as isize)..=(n as isize) {
        let j = i as isize + offset;
        if (0..count as isize).contains(&j) {
            let j = j as usize;
            window.push(slices[j].clone());
            feats.push(segment_feature_sized(&utt.syllables[j], vocab_size)?);
        } else {
            window.push(Segment::placeholder(bins));
            feats.push(SegmentFeature::padding(vocab_size));
        }
    }
    let sample = ContextSample {
        slices: window,
        seg_feats: feats,
        label: utt.syllables[i].tone,
        utt_id: utt.utt_id.clone(),
        position: i,
    };
    sample.check()?;
    Ok(sample)
}

/// All windows of one utterance, one per unit.
pub fn build_utterance(
    utt: &UtteranceAlignment,
    slices: &[Segment],
    n: usize,
    vocab_size: usize,
) -> Result<Vec<ContextSample>> {
    (0..utt.syllables.len()).map(|i| build_context(utt, slices, i, n, vocab_size)).collect()
}

pub fn tone_histogram(samples: &[ContextSample]) -> [usize; N_TONES] {
    let mut h = [0; N_TONES];
    for s in samples {
        h[s.label.index()] += 1;
    }
    h
}
