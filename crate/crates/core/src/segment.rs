//! Plain, di-tone and tri-tone segmentation of spectrogram frames.
//!
//! A tri-tone segment of unit `i` runs from the point where the last half of
//! unit `i - 1` begins to the point where the first half of unit `i + 1`
//! ends. "Half" is the floor of the neighbor's *plain* frame count, and any
//! gap frames between the units are absorbed into the extension.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::audio::MelSpectrogram;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentMode {
    Plain,
    Ditone,
    #[default]
    Tritone,
}

impl SegmentMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentMode::Plain => "plain",
            SegmentMode::Ditone => "ditone",
            SegmentMode::Tritone => "tritone",
        }
    }
}

impl fmt::Display for SegmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SegmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(SegmentMode::Plain),
            "ditone" => Ok(SegmentMode::Ditone),
            "tritone" => Ok(SegmentMode::Tritone),
            other => Err(Error::InvalidConfig(format!("unknown segment mode {other:?}"))),
        }
    }
}

/// Half-open frame range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameInterval {
    pub start: usize,
    pub end: usize,
}

impl FrameInterval {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.start <= frame && frame < self.end
    }
}

fn check_bounds(bounds: &[FrameInterval], total_frames: usize) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    let mut prev_end = 0;
    for (i, b) in bounds.iter().enumerate() {
        if b.is_empty() || b.end > total_frames || b.start < prev_end {
            return Err(Error::BadBounds(format!(
                "interval {i} [{}, {}) invalid (previous end {prev_end}, total {total_frames})",
                b.start, b.end
            )));
        }
        prev_end = b.end;
    }
    Ok(())
}

/// Extend each unit's plain interval according to `mode`.
pub fn segment_intervals(
    bounds: &[FrameInterval],
    total_frames: usize,
    mode: SegmentMode,
) -> Result<Vec<FrameInterval>> {
    check_bounds(bounds, total_frames)?;
    let last = bounds.len() - 1;
    let out = bounds
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let right = if i < last {
                let next = bounds[i + 1];
                next.start + next.len() / 2
            } else {
                b.end
            };
            let left = if i > 0 {
                let prev = bounds[i - 1];
                prev.end - prev.len() / 2
            } else {
                b.start
            };
            let (start, end) = match mode {
                SegmentMode::Plain => (b.start, b.end),
                SegmentMode::Ditone => (b.start, right),
                SegmentMode::Tritone => (left, right),
            };
            FrameInterval { start, end: end.min(total_frames) }
        })
        .collect();
    Ok(out)
}

/// Copy the rows of each interval out of `mel`.
pub fn slice_segments(mel: &MelSpectrogram, intervals: &[FrameInterval]) -> Result<Vec<Segment>> {
    intervals
        .iter()
        .map(|iv| {
            if iv.is_empty() || iv.end > mel.n_frames {
                return Err(Error::BadBounds(format!(
                    "[{}, {}) outside a {}-frame spectrogram",
                    iv.start, iv.end, mel.n_frames
                )));
            }
            let w = mel.n_filters;
            Ok(Segment {
                frames: iv.len(),
                bins: w,
                values: mel.values[iv.start * w..iv.end * w].to_vec(),
            })
        })
        .collect()
}

/// A frames × bins matrix, row-major. Zero frames marks a placeholder.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Segment {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<f32>,
}

impl Segment {
    pub fn placeholder(bins: usize) -> Self {
        Self { frames: 0, bins, values: Vec::new() }
    }

    pub fn is_placeholder(&self) -> bool {
        self.frames == 0
    }

    pub fn row(&self, frame: usize) -> &[f32] {
        &self.values[frame * self.bins..(frame + 1) * self.bins]
    }
}
