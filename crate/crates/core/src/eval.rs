//! Accuracy, per-tone F1, confusion matrices, and tone-pattern accuracy.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ContextSample;
use crate::nn::{Batch, Model, Variant};
use crate::tone::{parse_pattern, pattern_name, Tone, N_TONES};

pub const DEFAULT_PATTERNS: [&str; 3] = ["T4-T4", "T4-T3-T4", "T2-T2"];

/// Square count matrix, rows = reference class, columns = prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: Vec<Vec<u64>>,
}

impl Confusion {
    pub fn new(classes: usize) -> Self {
        Self { counts: vec![vec![0; classes]; classes] }
    }

    pub fn from_pairs(classes: usize, refs: &[usize], preds: &[usize]) -> Result<Self> {
        if refs.len() != preds.len() {
            return Err(Error::ShapeError(format!("{} references, {} predictions", refs.len(), preds.len())));
        }
        let mut c = Self::new(classes);
        for (&r, &p) in refs.iter().zip(preds) {
            c.add(r, p)?;
        }
        Ok(c)
    }

    pub fn add(&mut self, reference: usize, predicted: usize) -> Result<()> {
        let k = self.classes();
        if reference >= k || predicted >= k {
            return Err(Error::BadLabel(reference.max(predicted)));
        }
        self.counts[reference][predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.trace(), self.total())
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Per-class precision, recall and F1; every 0/0 is taken as 0.
pub fn f1_from_confusion(c: &Confusion) -> Vec<ClassMetrics> {
    (0..c.classes())
        .map(|k| {
            let tp = c.counts[k][k];
            let row: u64 = c.counts[k].iter().sum();
            let col: u64 = c.counts.iter().map(|r| r[k]).sum();
            let precision = ratio(tp, col);
            let recall = ratio(tp, row);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            ClassMetrics { precision, recall, f1, support: row }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PatternScore {
    Scored { accuracy: f64, occurrences: usize, slots: usize },
    /// The pattern never occurs in the reference.
    NotApplicable,
}

impl PatternScore {
    pub fn accuracy(&self) -> Option<f64> {
        match self {
            PatternScore::Scored { accuracy, .. } => Some(*accuracy),
            PatternScore::NotApplicable => None,
        }
    }
}

/// Fraction of correctly predicted slots over every (possibly overlapping)
/// occurrence of `pattern` in the reference with initials removed.
///
/// Positions whose reference tone is `T0` are dropped from both sequences,
/// so the remaining entries stay paired.
pub fn pattern_accuracy(refs: &[Vec<Tone>], preds: &[Vec<Tone>], pattern: &[Tone]) -> Result<PatternScore> {
    if pattern.is_empty() {
        return Err(Error::BadPattern("empty pattern".into()));
    }
    if pattern.contains(&Tone::T0) {
        return Err(Error::BadPattern("patterns are made of lexical tones T1..T5".into()));
    }
    if refs.len() != preds.len() {
        return Err(Error::ShapeError(format!("{} reference utterances, {} predicted", refs.len(), preds.len())));
    }
    let (mut occurrences, mut slots, mut correct) = (0, 0, 0);
    for (r, p) in refs.iter().zip(preds) {
        if r.len() != p.len() {
            return Err(Error::ShapeError("reference and prediction lengths differ".into()));
        }
        let (r, p): (Vec<Tone>, Vec<Tone>) = r.iter().zip(p).filter(|(t, _)| **t != Tone::T0).unzip();
        if r.len() < pattern.len() {
            continue;
        }
        for start in 0..=r.len() - pattern.len() {
            if r[start..start + pattern.len()] == *pattern {
                occurrences += 1;
                slots += pattern.len();
                correct += (start..start + pattern.len()).filter(|&i| p[i] == r[i]).count();
            }
        }
    }
    Ok(if occurrences == 0 {
        PatternScore::NotApplicable
    } else {
        PatternScore::Scored { accuracy: correct as f64 / slots as f64, occurrences, slots }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToneMetrics {
    pub tone: Tone,
    #[serde(flatten)]
    pub metrics: ClassMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternResult {
    pub pattern: String,
    #[serde(flatten)]
    pub score: PatternScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Column heading, e.g. `ResNetSP`, `+SF`, `+SF+C1`.
    pub model: String,
    pub total: u64,
    pub accuracy: f64,
    pub per_tone: Vec<ToneMetrics>,
    pub confusion: Confusion,
    pub patterns: Vec<PatternResult>,
}

impl EvalReport {
    pub fn pattern(&self, name: &str) -> Option<PatternScore> {
        self.patterns.iter().find(|p| p.pattern == name).map(|p| p.score)
    }

    pub fn f1(&self, tone: Tone) -> f64 {
        self.per_tone[tone.index()].metrics.f1
    }
}

pub fn model_label(variant: Variant, context_size: usize) -> String {
    match variant {
        Variant::Baseline => "ResNetSP".into(),
        Variant::Sf => "+SF".into(),
        Variant::SfCtx => format!("+SF+C{context_size}"),
    }
}

/// Assembles a report from per-sample reference and predicted tones.
/// `keys` gives each sample's `(utt_id, position)` for pattern scoring.
pub fn report_from_predictions(
    model: String,
    keys: &[(&str, usize)],
    refs: &[Tone],
    preds: &[Tone],
    patterns: &[Vec<Tone>],
) -> Result<EvalReport> {
    if refs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if keys.len() != refs.len() || preds.len() != refs.len() {
        return Err(Error::ShapeError("keys, references and predictions differ in length".into()));
    }
    let confusion = Confusion::from_pairs(
        N_TONES,
        &refs.iter().map(|t| t.index()).collect::<Vec<_>>(),
        &preds.iter().map(|t| t.index()).collect::<Vec<_>>(),
    )?;
    let per_tone = f1_from_confusion(&confusion)
        .into_iter()
        .zip(Tone::ALL)
        .map(|(metrics, tone)| ToneMetrics { tone, metrics })
        .collect();

    let mut utts: BTreeMap<&str, Vec<(usize, Tone, Tone)>> = BTreeMap::new();
    for ((&(id, pos), &r), &p) in keys.iter().zip(refs).zip(preds) {
        utts.entry(id).or_default().push((pos, r, p));
    }
    let mut ref_seqs = Vec::with_capacity(utts.len());
    let mut pred_seqs = Vec::with_capacity(utts.len());
    for mut rows in utts.into_values() {
        rows.sort_by_key(|r| r.0);
        ref_seqs.push(rows.iter().map(|r| r.1).collect());
        pred_seqs.push(rows.iter().map(|r| r.2).collect());
    }
    let patterns = patterns
        .iter()
        .map(|pat| {
            Ok(PatternResult { pattern: pattern_name(pat), score: pattern_accuracy(&ref_seqs, &pred_seqs, pat)? })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EvalReport {
        model,
        total: confusion.total(),
        accuracy: confusion.accuracy(),
        per_tone,
        confusion,
        patterns,
    })
}

pub fn default_patterns() -> Vec<Vec<Tone>> {
    DEFAULT_PATTERNS.iter().map(|p| parse_pattern(p).expect("built-in pattern")).collect()
}

pub fn predict(model: &Model<f32>, samples: &[ContextSample], batch_size: usize) -> Result<Vec<Tone>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let batch = Batch::from_samples(&chunk.iter().collect::<Vec<_>>())?;
        out.extend(model.predict(&batch)?.into_iter().map(|i| Tone::from_index(i).expect("argmax of 6 logits")));
    }
    Ok(out)
}

/// Runs the model in eval mode over `samples` and scores the predictions.
pub fn evaluate(model: &Model<f32>, samples: &[ContextSample], patterns: &[Vec<Tone>]) -> Result<EvalReport> {
    let cfg = model.config();
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(s) = samples.iter().find(|s| s.slices.len() != cfg.slots()) {
        return Err(Error::ConfigMismatch(format!(
            "model {} expects {} slots, sample {}#{} has {}",
            cfg.variant.as_str(),
            cfg.slots(),
            s.utt_id,
            s.position,
            s.slices.len()
        )));
    }
    let preds = predict(model, samples, 64)?;
    let refs: Vec<Tone> = samples.iter().map(|s| s.label).collect();
    let keys: Vec<(&str, usize)> = samples.iter().map(|s| (s.utt_id.as_str(), s.position)).collect();
    report_from_predictions(model_label(cfg.variant, cfg.context_size), &keys, &refs, &preds, patterns)
}

/// Table with one column per report: overall accuracy, per-tone F1, then
/// pattern accuracies.
pub fn render_markdown(reports: &[EvalReport]) -> String {
    let mut s = String::from("|");
    for r in reports {
        let _ = write!(s, " | {}", r.model);
    }
    s.push_str(" |\n|---");
    for _ in reports {
        s.push_str("|---");
    }
    s.push_str("|\n");
    let mut row = |label: &str, cells: Vec<String>| {
        let _ = write!(s, "| {label}");
        for c in cells {
            let _ = write!(s, " | {c}");
        }
        s.push_str(" |\n");
    };
    row("Overall Accuracy", reports.iter().map(|r| format!("{:.3}", r.accuracy)).collect());
    for tone in Tone::ALL {
        row(tone.as_str(), reports.iter().map(|r| format!("{:.3}", r.f1(tone))).collect());
    }
    let names: Vec<String> = reports.first().map(|r| r.patterns.iter().map(|p| p.pattern.clone()).collect()).unwrap_or_default();
    for name in names {
        row(
            &name,
            reports
                .iter()
                .map(|r| match r.pattern(&name).and_then(|p| p.accuracy()) {
                    Some(a) => format!("{a:.3}"),
                    None => "n/a".into(),
                })
                .collect(),
        );
    }
    s
}
