//! Syllable vocabularies and force-alignment files.
//!
//! `vocab.txt` holds one tone-stripped syllable per line, line 0 being `sil`.
//! `alignments.tsv` has no header and five tab-separated columns:
//! `utt_id  start_s  dur_s  syllable  tone`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::segment::FrameInterval;
use crate::tone::Tone;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    syllables: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut syllables = Vec::new();
        let mut index = HashMap::new();
        for (line, entry) in entries.into_iter().enumerate() {
            let syllable: String = entry.into();
            if line == 0 && syllable != "sil" {
                return Err(Error::BadVocabHeader { found: syllable });
            }
            if syllable.chars().any(|c| c.is_ascii_digit()) {
                return Err(Error::ToneLeak { syllable, line });
            }
            if syllable.is_empty() || syllable.chars().any(char::is_whitespace) {
                return Err(Error::InvalidConfig(format!("bad vocabulary entry {syllable:?} on line {line}")));
            }
            if index.insert(syllable.clone(), line).is_some() {
                return Err(Error::DuplicateSyllable { syllable, line });
            }
            syllables.push(syllable);
        }
        if syllables.is_empty() {
            return Err(Error::BadVocabHeader { found: String::new() });
        }
        Ok(Self { syllables, index })
    }

    pub fn len(&self) -> usize {
        self.syllables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.syllables.is_empty()
    }

    pub fn id(&self, syllable: &str) -> Option<usize> {
        self.index.get(syllable).copied()
    }

    pub fn syllable(&self, id: usize) -> Option<&str> {
        self.syllables.get(id).map(String::as_str)
    }

    pub fn syllables(&self) -> &[String] {
        &self.syllables
    }

    pub fn to_text(&self) -> String {
        let mut s = self.syllables.join("\n");
        s.push('\n');
        s
    }
}

pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vocab(&text)
}

pub fn parse_vocab(text: &str) -> Result<Vocabulary> {
    Vocabulary::from_entries(text.lines().map(str::trim).filter(|l| !l.is_empty()))
}

pub fn save_vocab(vocab: &Vocabulary, path: &Path) -> Result<()> {
    fs::write(path, vocab.to_text()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSyllable {
    pub start_s: f64,
    pub dur_s: f64,
    pub syllable_id: usize,
    pub tone: Tone,
}

impl AlignedSyllable {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.dur_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceAlignment {
    pub utt_id: String,
    pub syllables: Vec<AlignedSyllable>,
}

impl UtteranceAlignment {
    pub fn tones(&self) -> Vec<Tone> {
        self.syllables.iter().map(|s| s.tone).collect()
    }

    /// Frame intervals of every unit at the given hop. Intervals never
    /// overlap, every unit owns at least one frame, and nothing reaches past
    /// `total_frames`.
    pub fn frame_intervals(&self, hop_s: f64, total_frames: usize) -> Result<Vec<FrameInterval>> {
        let mut out = Vec::with_capacity(self.syllables.len());
        let mut prev_end = 0;
        for syl in &self.syllables {
            let (start, end) = syllable_frames(syl.start_s, syl.dur_s, hop_s)?;
            let start = start.max(prev_end);
            if start >= total_frames {
                return Err(Error::BadBounds(format!(
                    "utterance {} starts a unit at frame {start} but the spectrogram has {total_frames}",
                    self.utt_id
                )));
            }
            let end = end.max(start + 1).min(total_frames);
            out.push(FrameInterval { start, end });
            prev_end = end;
        }
        Ok(out)
    }
}

/// `floor(t / hop)`.
pub fn seconds_to_frames(t_s: f64, hop_s: f64) -> Result<usize> {
    if !(t_s >= 0.0) || !t_s.is_finite() {
        return Err(Error::BadTime(t_s));
    }
    if !(hop_s > 0.0) {
        return Err(Error::InvalidConfig(format!("hop must be positive, got {hop_s}")));
    }
    // Guard against 0.25 / 0.01 = 24.999999999999996.
    Ok((t_s / hop_s + 1e-9).floor() as usize)
}

/// Frame interval `[start, end)` of one unit, with at least one frame.
pub fn syllable_frames(start_s: f64, dur_s: f64, hop_s: f64) -> Result<(usize, usize)> {
    let start = seconds_to_frames(start_s, hop_s)?;
    let end = seconds_to_frames(start_s + dur_s, hop_s)?;
    Ok((start, end.max(start + 1)))
}

pub fn parse_alignment(path: &Path, vocab: &Vocabulary) -> Result<Vec<UtteranceAlignment>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_alignment_str(&text, vocab)
}

pub fn parse_alignment_str(text: &str, vocab: &Vocabulary) -> Result<Vec<UtteranceAlignment>> {
    // BTreeMap keeps utterances in a stable order.
    let mut grouped: BTreeMap<String, Vec<(usize, AlignedSyllable)>> = BTreeMap::new();
    for (row, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() != 5 {
            return Err(Error::BadRow { row, reason: format!("expected 5 columns, found {}", cols.len()) });
        }
        let number = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::BadRow { row, reason: format!("{s:?} is not a number") })
        };
        let utt_id = cols[0].to_string();
        let start_s = number(cols[1])?;
        let dur_s = number(cols[2])?;
        if !(start_s >= 0.0) {
            return Err(Error::BadTime(start_s));
        }
        if !(dur_s > 0.0) {
            return Err(Error::BadDuration { utt_id, row });
        }
        let syllable_id = vocab.id(cols[3]).ok_or_else(|| Error::UnknownSyllable {
            utt_id: utt_id.clone(),
            row,
            syllable: cols[3].to_string(),
        })?;
        let tone: Tone = cols[4]
            .parse()
            .map_err(|_| Error::BadRow { row, reason: format!("unknown tone {:?}", cols[4]) })?;
        grouped.entry(utt_id).or_default().push((row, AlignedSyllable { start_s, dur_s, syllable_id, tone }));
    }

    let mut out = Vec::with_capacity(grouped.len());
    for (utt_id, mut rows) in grouped {
        rows.sort_by(|a, b| a.1.start_s.total_cmp(&b.1.start_s));
        for pair in rows.windows(2) {
            // Tolerate rounding in the written decimal times.
            if pair[1].1.start_s < pair[0].1.end_s() - 1e-6 {
                return Err(Error::OverlapError { utt_id, row: pair[1].0 });
            }
        }
        out.push(UtteranceAlignment { utt_id, syllables: rows.into_iter().map(|(_, s)| s).collect() });
    }
    Ok(out)
}

pub fn format_alignment(utts: &[UtteranceAlignment], vocab: &Vocabulary) -> String {
    let mut s = String::new();
    for utt in utts {
        for syl in &utt.syllables {
            let name = vocab.syllable(syl.syllable_id).unwrap_or("?");
            // Duration from the rounded endpoints, so touching units still touch.
            let start = (syl.start_s * 1e6).round() / 1e6;
            let dur = (syl.end_s() * 1e6).round() / 1e6 - start;
            let _ = writeln!(s, "{}\t{start:.6}\t{dur:.6}\t{}\t{}", utt.utt_id, name, syl.tone);
        }
    }
    s
}

pub fn write_alignment(path: &Path, utts: &[UtteranceAlignment], vocab: &Vocabulary) -> Result<()> {
    fs::write(path, format_alignment(utts, vocab)).map_err(|e| Error::io(path, e))
}
