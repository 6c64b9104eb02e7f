use crate::error::{Error, Result};
use crate::features::ContextSample;

/// Mini-batch of context samples, zero-padded to the longest slice.
///
/// `slices` is `[sample][slot][frame][bin]` with `max_frames` frames per
/// slot; frames at or beyond `frame_mask[sample·slots + slot]` are zero.
/// `slot_mask` is `true` for populated slots and `false` for placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub n_samples: usize,
    pub n_slots: usize,
    pub max_frames: usize,
    pub n_bins: usize,
    pub slices: Vec<f32>,
    pub frame_mask: Vec<usize>,
    pub slot_mask: Vec<bool>,
    pub feat_len: usize,
    /// `[sample][slot][feat_len]`.
    pub seg_feats: Vec<f32>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn from_samples(samples: &[&ContextSample]) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyDataset)?;
        let n_slots = first.slices.len();
        let n_bins = first.center().bins;
        let feat_len = first.feat_len();
        let mut max_frames = 0;
        for s in samples {
            if s.slices.len() != n_slots || s.seg_feats.len() != n_slots {
                return Err(Error::ShapeError("samples in a batch must share a context size".into()));
            }
            for (slice, feat) in s.slices.iter().zip(&s.seg_feats) {
                if !slice.is_placeholder() && slice.bins != n_bins {
                    return Err(Error::ShapeError(format!("slice with {} bins, expected {n_bins}", slice.bins)));
                }
                if feat.len() != feat_len {
                    return Err(Error::ShapeError("segment feature length differs within a batch".into()));
                }
                max_frames = max_frames.max(slice.frames);
            }
        }
        let n = samples.len();
        let stride = max_frames * n_bins;
        let mut slices = vec![0f32; n * n_slots * stride];
        let mut frame_mask = Vec::with_capacity(n * n_slots);
        let mut slot_mask = Vec::with_capacity(n * n_slots);
        let mut seg_feats = Vec::with_capacity(n * n_slots * feat_len);
        for (b, s) in samples.iter().enumerate() {
            for (k, (slice, feat)) in s.slices.iter().zip(&s.seg_feats).enumerate() {
                let off = (b * n_slots + k) * stride;
                slices[off..off + slice.values.len()].copy_from_slice(&slice.values);
                frame_mask.push(slice.frames);
                slot_mask.push(!slice.is_placeholder());
                seg_feats.extend_from_slice(&feat.0);
            }
        }
        Ok(Self {
            n_samples: n,
            n_slots,
            max_frames,
            n_bins,
            slices,
            frame_mask,
            slot_mask,
            feat_len,
            seg_feats,
            labels: samples.iter().map(|s| s.label.index()).collect(),
        })
    }

    /// The valid frames of one slot, `frames × bins` row-major.
    pub fn slot_frames(&self, sample: usize, slot: usize) -> &[f32] {
        let idx = sample * self.n_slots + slot;
        let off = idx * self.max_frames * self.n_bins;
        &self.slices[off..off + self.frame_mask[idx] * self.n_bins]
    }

    pub fn slot_feats(&self, sample: usize) -> &[f32] {
        let w = self.n_slots * self.feat_len;
        &self.seg_feats[sample * w..(sample + 1) * w]
    }

    /// Copy with `extra` additional zero frames after every slot.
    pub fn with_extra_padding(&self, extra: usize) -> Batch {
        let new_max = self.max_frames + extra;
        let old_stride = self.max_frames * self.n_bins;
        let new_stride = new_max * self.n_bins;
        let mut slices = vec![0f32; self.n_samples * self.n_slots * new_stride];
        for i in 0..self.n_samples * self.n_slots {
            slices[i * new_stride..i * new_stride + old_stride]
                .copy_from_slice(&self.slices[i * old_stride..(i + 1) * old_stride]);
        }
        Batch { max_frames: new_max, slices, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SegmentFeature;
    use crate::segment::Segment;
    use crate::tone::Tone;

    fn sample(frames: usize) -> ContextSample {
        ContextSample {
            slices: vec![Segment { frames, bins: 2, values: vec![1.0; 2 * frames] }],
            seg_feats: vec![SegmentFeature(vec![0.1, 1.0])],
            label: Tone::T2,
            utt_id: "u".into(),
            position: 0,
        }
    }

    #[test]
    fn pads_to_longest_slice() {
        let s = [sample(10), sample(20), sample(15)];
        let refs: Vec<&ContextSample> = s.iter().collect();
        let b = Batch::from_samples(&refs).unwrap();
        assert_eq!(b.max_frames, 20);
        assert_eq!(b.frame_mask, vec![10, 20, 15]);
        assert_eq!(b.labels, vec![2, 2, 2]);
        // Frames past the mask are zero.
        let first = &b.slices[..20 * 2];
        assert!(first[20..].iter().all(|&v| v == 0.0));
        assert_eq!(b.slot_frames(2, 0).len(), 30);
    }

    #[test]
    fn extra_padding_preserves_valid_frames() {
        let s = [sample(3), sample(5)];
        let refs: Vec<&ContextSample> = s.iter().collect();
        let b = Batch::from_samples(&refs).unwrap();
        let p = b.with_extra_padding(7);
        assert_eq!(p.max_frames, 12);
        for i in 0..2 {
            assert_eq!(b.slot_frames(i, 0), p.slot_frames(i, 0));
        }
    }
}
