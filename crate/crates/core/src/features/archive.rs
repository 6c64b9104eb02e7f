//! Feature archive: `manifest.json` plus `data.bin`, a flat blob of
//! little-endian `f32`. Each sample stores its `2n + 1` slices row-major
//! followed by its `2n + 1` segment features.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{tone_histogram, ContextSample, SegmentFeature};
use crate::audio::MelConfig;
use crate::error::{Error, Result};
use crate::segment::{Segment, SegmentMode};
use crate::tone::{Tone, N_TONES};

pub const ARCHIVE_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const DATA: &str = "data.bin";

/// Archive-level settings echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub mel: Option<MelConfig>,
    pub vocab_size: usize,
    pub context_size: usize,
    pub segment_mode: SegmentMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub utt_id: String,
    pub pos: usize,
    pub label: Tone,
    /// `[frames, bins]` per slot; zero frames marks a placeholder.
    pub slice_shapes: Vec<[usize; 2]>,
    pub feat_len: usize,
    /// Byte offset of each slice, then of the feature block.
    pub byte_offsets: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    #[serde(flatten)]
    pub header: ArchiveHeader,
    pub sample_count: usize,
    pub tone_counts: [usize; N_TONES],
    pub total_bytes: u64,
    pub samples: Vec<SampleRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureArchive {
    pub manifest: Manifest,
    pub samples: Vec<ContextSample>,
}

pub fn write_archive(samples: &[ContextSample], header: &ArchiveHeader, dir: &Path) -> Result<Manifest> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let slots = 2 * header.context_size + 1;
    let mut blob: Vec<u8> = Vec::new();
    let mut records = Vec::with_capacity(samples.len());
    for s in samples {
        if s.slices.len() != slots {
            return Err(Error::ConfigMismatch(format!(
                "sample {}#{} has {} slots, archive expects {slots}",
                s.utt_id,
                s.position,
                s.slices.len()
            )));
        }
        let feat_len = s.feat_len();
        if feat_len != 1 + header.vocab_size || s.seg_feats.iter().any(|f| f.len() != feat_len) {
            return Err(Error::ShapeError(format!("segment features of {}#{}", s.utt_id, s.position)));
        }
        let mut offsets = Vec::with_capacity(slots + 1);
        for slice in &s.slices {
            offsets.push(blob.len() as u64);
            push_f32s(&mut blob, &slice.values);
        }
        offsets.push(blob.len() as u64);
        for f in &s.seg_feats {
            push_f32s(&mut blob, &f.0);
        }
        records.push(SampleRecord {
            utt_id: s.utt_id.clone(),
            pos: s.position,
            label: s.label,
            slice_shapes: s.slices.iter().map(|x| [x.frames, x.bins]).collect(),
            feat_len,
            byte_offsets: offsets,
        });
    }
    let manifest = Manifest {
        version: ARCHIVE_VERSION,
        header: header.clone(),
        sample_count: samples.len(),
        tone_counts: tone_histogram(samples),
        total_bytes: blob.len() as u64,
        samples: records,
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let data_path = dir.join(DATA);
    fs::write(&data_path, &blob).map_err(|e| Error::io(&data_path, e))?;
    let manifest_path = dir.join(MANIFEST);
    let json = serde_json::to_vec_pretty(&manifest)?;
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

pub fn read_archive(dir: &Path) -> Result<FeatureArchive> {
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let value: serde_json::Value = serde_json::from_slice(&text)
        .map_err(|e| Error::CorruptArchive(format!("manifest: {e}")))?;
    let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != ARCHIVE_VERSION {
        return Err(Error::VersionError { found: version, expected: ARCHIVE_VERSION });
    }
    let manifest: Manifest =
        serde_json::from_value(value).map_err(|e| Error::CorruptArchive(format!("manifest: {e}")))?;

    let data_path = dir.join(DATA);
    let blob = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    if blob.len() as u64 != manifest.total_bytes {
        return Err(Error::CorruptArchive(format!(
            "data.bin has {} bytes, manifest records {}",
            blob.len(),
            manifest.total_bytes
        )));
    }
    if manifest.samples.len() != manifest.sample_count {
        return Err(Error::CorruptArchive("sample_count disagrees with sample records".into()));
    }

    let slots = 2 * manifest.header.context_size + 1;
    let mut cursor = 0u64;
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for rec in &manifest.samples {
        if rec.slice_shapes.len() != slots || rec.byte_offsets.len() != slots + 1 {
            return Err(Error::CorruptArchive(format!("record {}#{} has wrong slot count", rec.utt_id, rec.pos)));
        }
        let mut slices = Vec::with_capacity(slots);
        for (shape, &offset) in rec.slice_shapes.iter().zip(&rec.byte_offsets) {
            let count = shape[0] * shape[1];
            let values = take_f32s(&blob, offset, count, &mut cursor)?;
            slices.push(Segment { frames: shape[0], bins: shape[1], values });
        }
        let block = take_f32s(&blob, rec.byte_offsets[slots], slots * rec.feat_len, &mut cursor)?;
        let seg_feats = block.chunks(rec.feat_len.max(1)).map(|c| SegmentFeature(c.to_vec())).collect();
        samples.push(ContextSample {
            slices,
            seg_feats,
            label: rec.label,
            utt_id: rec.utt_id.clone(),
            position: rec.pos,
        });
    }
    if cursor != manifest.total_bytes {
        return Err(Error::CorruptArchive(format!("{} trailing bytes", manifest.total_bytes - cursor)));
    }
    if tone_histogram(&samples) != manifest.tone_counts {
        return Err(Error::CorruptArchive("tone_counts disagree with sample labels".into()));
    }
    Ok(FeatureArchive { manifest, samples })
}

fn push_f32s(blob: &mut Vec<u8>, values: &[f32]) {
    blob.reserve(values.len() * 4);
    for v in values {
        blob.extend_from_slice(&v.to_le_bytes());
    }
}

fn take_f32s(blob: &[u8], offset: u64, count: usize, cursor: &mut u64) -> Result<Vec<f32>> {
    if offset != *cursor {
        return Err(Error::CorruptArchive(format!("offset {offset} does not follow {cursor}")));
    }
    let end = offset + 4 * count as u64;
    if end > blob.len() as u64 {
        return Err(Error::CorruptArchive(format!("payload ends at byte {}, need {end}", blob.len())));
    }
    *cursor = end;
    Ok(blob[offset as usize..end as usize]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}
