//! Synthetic tone corpus: harmonic finals following tone templates, noise
//! initials, cross-faded f0 at voiced joins, T3 sandhi, and jittered
//! alignments standing in for an imperfect aligner.

mod contour;

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use contour::{tone_contour, ToneAnchors, CONTROL_RATE_HZ};

use crate::alignment::{save_vocab, write_alignment, AlignedSyllable, UtteranceAlignment, Vocabulary};
use crate::audio::{write_wav, Waveform};
use crate::error::{Error, Result};
use crate::tone::{Tone, N_TONES};

pub const FINALS: [&str; 33] = [
    "a", "ai", "an", "ang", "ao", "e", "ei", "en", "eng", "er", "i", "ia", "ian", "iang", "iao", "ie", "in", "ing",
    "iong", "iu", "o", "ong", "ou", "u", "ua", "uai", "uan", "uang", "ui", "un", "uo", "v", "ve",
];

pub const INITIALS: [&str; 21] =
    ["b", "p", "m", "f", "d", "t", "n", "l", "g", "k", "h", "j", "q", "x", "zh", "ch", "sh", "r", "z", "c", "s"];

/// Finals that most neutral-tone syllables use.
pub const PARTICLES: [&str; 4] = ["e", "a", "i", "en"];

/// Leading and trailing silence of every utterance.
pub const EDGE_SILENCE_S: f64 = 0.1;

const HARMONICS: [f64; 3] = [1.0, 0.5, 0.25];
const VOICED_PEAK: f64 = 0.3;
const INITIAL_PEAK: f64 = 0.12;
const RAMP_S: f64 = 0.008;

/// `sil`, then the finals, then the initials.
pub fn synth_vocab() -> Vocabulary {
    let entries = std::iter::once("sil").chain(FINALS).chain(INITIALS);
    Vocabulary::from_entries(entries).expect("built-in vocabulary is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Utterances in the train pool (dev utterances are carved out of it).
    pub n_utterances: usize,
    pub n_test_utterances: usize,
    pub dev_fraction: f64,
    /// Inclusive range of syllables per utterance.
    pub syllables: [usize; 2],
    pub sample_rate: u32,
    pub anchors: ToneAnchors,
    /// Sampling weights of T1..T5.
    pub tone_weights: [f64; 5],
    pub initial_prob: f64,
    pub initial_dur_s: [f64; 2],
    /// Duration range of finals per labelled tone T1..T5.
    pub final_dur_s: [[f64; 2]; 5],
    /// Probability that a T5 final is drawn from [`PARTICLES`].
    pub particle_prob: f64,
    /// Probability that a T1..T4 final is drawn from the finals that favour
    /// its tone.
    pub final_bias: f64,
    pub coarticulation_s: f64,
    pub sandhi_enabled: bool,
    pub jitter_max_s: f64,
    pub speaker_scale: [f64; 2],
    pub n_train_speakers: usize,
    pub n_test_speakers: usize,
    pub noise_floor: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_utterances: 10,
            n_test_utterances: 0,
            dev_fraction: 0.1,
            syllables: [5, 10],
            sample_rate: 44100,
            anchors: ToneAnchors::default(),
            tone_weights: [0.08, 0.16, 0.40, 0.28, 0.08],
            initial_prob: 0.8,
            initial_dur_s: [0.03, 0.08],
            final_dur_s: [[0.18, 0.26], [0.18, 0.26], [0.22, 0.32], [0.16, 0.24], [0.08, 0.12]],
            particle_prob: 0.8,
            final_bias: 0.5,
            coarticulation_s: 0.040,
            sandhi_enabled: true,
            jitter_max_s: 0.020,
            speaker_scale: [0.8, 1.25],
            n_train_speakers: 20,
            n_test_speakers: 5,
            noise_floor: 0.002,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        self.anchors.validate()?;
        if self.syllables[0] == 0 || self.syllables[0] > self.syllables[1] {
            return bad(format!("syllable range {:?} is empty", self.syllables));
        }
        if self.sample_rate < 2 * self.anchors.max_hz as u32 * HARMONICS.len() as u32 {
            return bad(format!("sample rate {} cannot carry the harmonics", self.sample_rate));
        }
        if self.tone_weights.iter().any(|w| !(*w >= 0.0)) || self.tone_weights.iter().sum::<f64>() <= 0.0 {
            return bad("tone weights must be non-negative with a positive sum".into());
        }
        let ranges = std::iter::once(&self.initial_dur_s).chain(&self.final_dur_s);
        for r in ranges {
            if !(r[0] > 0.0 && r[0] <= r[1]) {
                return bad(format!("duration range {r:?} must be positive and ordered"));
            }
        }
        for (name, p) in [
            ("initial_prob", self.initial_prob),
            ("particle_prob", self.particle_prob),
            ("final_bias", self.final_bias),
            ("dev_fraction", self.dev_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1]"));
            }
        }
        // A syllable is at least its final.
        let shortest = self.final_dur_s.iter().map(|r| r[0]).fold(f64::INFINITY, f64::min);
        if !(self.jitter_max_s < shortest / 2.0) {
            return bad(format!("jitter_max_s {} must be below half the shortest final ({shortest} s)", self.jitter_max_s));
        }
        if !(self.coarticulation_s >= 0.0) || !(self.jitter_max_s >= 0.0) || !(self.noise_floor >= 0.0) {
            return bad("coarticulation, jitter and noise floor must be non-negative".into());
        }
        if !(self.speaker_scale[0] > 0.0 && self.speaker_scale[0] <= self.speaker_scale[1]) {
            return bad("speaker scale range must be positive and ordered".into());
        }
        if self.n_utterances > 0 && self.n_train_speakers == 0 || self.n_test_utterances > 0 && self.n_test_speakers == 0 {
            return bad("every split with utterances needs at least one speaker".into());
        }
        Ok(())
    }

    pub fn total_utterances(&self) -> usize {
        self.n_utterances + self.n_test_utterances
    }

    pub fn n_dev(&self) -> usize {
        (self.n_utterances as f64 * self.dev_fraction).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train_",
            Split::Dev => "dev_",
            Split::Test => "test_",
        }
    }
}

/// One unit to render: an initial (`T0`) or a final.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitPlan {
    pub syllable_id: usize,
    pub tone: Tone,
    /// Tone actually rendered; differs from `tone` under sandhi.
    pub rendered: Tone,
    pub dur_s: f64,
}

#[derive(Debug, Clone)]
pub struct SynthUtterance {
    pub utt_id: String,
    pub waveform: Waveform,
    pub truth: UtteranceAlignment,
    pub jittered: UtteranceAlignment,
    pub rendered: Vec<Tone>,
    /// Rendered f0 per audio sample, 0 where unvoiced.
    pub f0_track: Vec<f32>,
    pub speaker_scale: f64,
}

fn uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.gen_range(r[0]..r[1])
    } else {
        r[0]
    }
}

/// Marks T3 finals followed (across initials) by another T3 final as
/// rendered T2.
pub fn apply_sandhi(units: &mut [UnitPlan]) {
    let finals: Vec<usize> = (0..units.len()).filter(|&i| units[i].tone != Tone::T0).collect();
    for w in finals.windows(2) {
        if units[w[0]].tone == Tone::T3 && units[w[1]].tone == Tone::T3 {
            units[w[0]].rendered = Tone::T2;
        }
    }
}

fn pick_final<R: Rng>(tone: Tone, vocab: &Vocabulary, cfg: &SynthConfig, rng: &mut R) -> usize {
    let name = if tone == Tone::T5 && rng.gen_bool(cfg.particle_prob) {
        *PARTICLES.choose(rng).unwrap()
    } else if tone != Tone::T5 && rng.gen_bool(cfg.final_bias) {
        // Every fourth final favours the same tone.
        let favoured: Vec<&str> =
            FINALS.iter().enumerate().filter(|(i, _)| i % 4 == tone.index() - 1).map(|(_, f)| *f).collect();
        *favoured.choose(rng).unwrap()
    } else {
        *FINALS.choose(rng).unwrap()
    };
    vocab.id(name).expect("final in vocabulary")
}

/// Concrete units for a tone sequence in which each `T0` precedes a final.
pub fn plan_from_tones<R: Rng>(tones: &[Tone], cfg: &SynthConfig, rng: &mut R) -> Result<Vec<UnitPlan>> {
    if tones.is_empty() {
        return Err(Error::InvalidConfig("empty tone sequence".into()));
    }
    let vocab = synth_vocab();
    let mut units = Vec::with_capacity(tones.len());
    for (i, &tone) in tones.iter().enumerate() {
        if tone == Tone::T0 {
            if tones.get(i + 1).map_or(true, |t| *t == Tone::T0) {
                return Err(Error::InvalidConfig("every initial must be followed by a final".into()));
            }
            let name = *INITIALS.choose(rng).unwrap();
            units.push(UnitPlan {
                syllable_id: vocab.id(name).unwrap(),
                tone,
                rendered: tone,
                dur_s: uniform(rng, cfg.initial_dur_s),
            });
        } else {
            units.push(UnitPlan {
                syllable_id: pick_final(tone, &vocab, cfg, rng),
                tone,
                rendered: tone,
                dur_s: uniform(rng, cfg.final_dur_s[tone.index() - 1]),
            });
        }
    }
    if cfg.sandhi_enabled {
        apply_sandhi(&mut units);
        // A re-rendered final is timed like the tone it is rendered as.
        for u in units.iter_mut().filter(|u| u.rendered != u.tone) {
            let [a, b] = cfg.final_dur_s[u.tone.index() - 1];
            let [c, d] = cfg.final_dur_s[u.rendered.index() - 1];
            let frac = if b > a { (u.dur_s - a) / (b - a) } else { 0.5 };
            u.dur_s = c + frac * (d - c);
        }
    }
    Ok(units)
}

/// Random tone sequence: syllable count, tones by weight, optional initials.
pub fn random_tones<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> Vec<Tone> {
    let n = rng.gen_range(cfg.syllables[0]..=cfg.syllables[1]);
    let total: f64 = cfg.tone_weights.iter().sum();
    let mut tones = Vec::with_capacity(2 * n);
    for _ in 0..n {
        if rng.gen_bool(cfg.initial_prob) {
            tones.push(Tone::T0);
        }
        let mut u = rng.gen::<f64>() * total;
        let mut k = 0;
        while k < 4 && u >= cfg.tone_weights[k] {
            u -= cfg.tone_weights[k];
            k += 1;
        }
        tones.push(Tone::from_index(k + 1).unwrap());
    }
    tones
}

/// Second-order band-pass (constant peak gain).
struct BandPass {
    b: [f64; 3],
    a: [f64; 2],
    z: [f64; 2],
}

impl BandPass {
    fn new(center_hz: f64, q: f64, sample_rate: f64) -> Self {
        let w = 2.0 * PI * center_hz / sample_rate;
        let alpha = w.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b: [alpha / a0, 0.0, -alpha / a0],
            a: [-2.0 * w.cos() / a0, (1.0 - alpha) / a0],
            z: [0.0; 2],
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.z[0];
        self.z[0] = self.b[1] * x - self.a[0] * y + self.z[1];
        self.z[1] = self.b[2] * x - self.a[1] * y;
        y
    }
}

fn ramp(pos: f64, len: f64) -> f64 {
    if len <= 0.0 || pos >= len {
        1.0
    } else {
        0.5 - 0.5 * (PI * pos.max(0.0) / len).cos()
    }
}

/// Renders planned units for one speaker.
pub fn render_utterance<R: Rng>(
    utt_id: &str,
    units: &[UnitPlan],
    speaker_scale: f64,
    cfg: &SynthConfig,
    rng: &mut R,
) -> Result<SynthUtterance> {
    if units.is_empty() {
        return Err(Error::InvalidConfig("nothing to render".into()));
    }
    let sr = cfg.sample_rate as f64;
    let a = &cfg.anchors;
    let mut starts = Vec::with_capacity(units.len());
    let mut t = EDGE_SILENCE_S;
    for u in units {
        if !(u.dur_s > 0.0) {
            return Err(Error::InvalidConfig("unit durations must be positive".into()));
        }
        starts.push(t);
        t += u.dur_s;
    }
    let total_s = t + EDGE_SILENCE_S;
    let n = (total_s * sr).ceil() as usize;
    let idx = |time: f64| ((time * sr).round() as usize).min(n);

    // Unscaled end value of the previous final, for T5.
    let mut prev_end = vec![None; units.len()];
    let mut last = None;
    for (k, u) in units.iter().enumerate() {
        if u.rendered != Tone::T0 {
            prev_end[k] = last;
            last = Some(a.end_value(u.rendered, last)?);
        }
    }
    let value = |k: usize, frac: f64| a.scaled(units[k].rendered, frac, prev_end[k], speaker_scale);

    let voiced = |k: usize| units.get(k).is_some_and(|u| u.rendered != Tone::T0);
    let mut f0 = vec![0f64; n];
    let mut env = vec![0f64; n];
    for (k, u) in units.iter().enumerate() {
        if u.rendered == Tone::T0 {
            continue;
        }
        let (s, e) = (starts[k], starts[k] + u.dur_s);
        let ramp_in = if k > 0 && voiced(k - 1) { 0.0 } else { RAMP_S.min(u.dur_s / 2.0) };
        let ramp_out = if voiced(k + 1) { 0.0 } else { RAMP_S.min(u.dur_s / 2.0) };
        for i in idx(s)..idx(e) {
            let ti = i as f64 / sr;
            f0[i] = value(k, (ti - s) / u.dur_s)?;
            env[i] = ramp(ti - s, ramp_in) * ramp(e - ti, ramp_out);
        }
    }
    // Raised-cosine blend across voiced joins.
    for k in 0..units.len().saturating_sub(1) {
        if !(voiced(k) && voiced(k + 1)) {
            continue;
        }
        let (da, db) = (units[k].dur_s, units[k + 1].dur_s);
        let h = (cfg.coarticulation_s / 2.0).min(da / 2.0).min(db / 2.0);
        if h <= 0.0 {
            continue;
        }
        let b = starts[k + 1];
        for i in idx(b - h)..idx(b + h) {
            let ti = i as f64 / sr;
            let fa = value(k, ((ti - starts[k]) / da).min(1.0))?;
            let fb = value(k + 1, ((ti - b) / db).max(0.0))?;
            let w = 0.5 - 0.5 * (PI * (ti - (b - h)) / (2.0 * h)).cos();
            f0[i] = (1.0 - w) * fa + w * fb;
        }
    }

    let mut out = vec![0f64; n];
    let norm: f64 = HARMONICS.iter().sum();
    let mut phase = 0.0f64;
    for i in 0..n {
        if env[i] > 0.0 {
            let s: f64 = HARMONICS.iter().enumerate().map(|(h, amp)| amp * ((h + 1) as f64 * phase).sin()).sum();
            out[i] = VOICED_PEAK * env[i] * s / norm;
        }
        phase = (phase + 2.0 * PI * f0[i] / sr) % (2.0 * PI);
    }
    for (k, u) in units.iter().enumerate() {
        if u.rendered != Tone::T0 {
            continue;
        }
        let center = 600.0 + 120.0 * (u.syllable_id % INITIALS.len()) as f64;
        let mut bp = BandPass::new(center, 1.2, sr);
        let (s, e) = (starts[k], starts[k] + u.dur_s);
        let r = 0.005f64.min(u.dur_s / 2.0);
        for i in idx(s)..idx(e) {
            let ti = i as f64 / sr;
            let x = bp.step(rng.gen_range(-1.0..1.0));
            out[i] += INITIAL_PEAK * 2.0 * x * ramp(ti - s, r) * ramp(e - ti, r);
        }
    }
    if cfg.noise_floor > 0.0 {
        for v in &mut out {
            *v += rng.gen_range(-cfg.noise_floor..cfg.noise_floor);
        }
    }

    let truth = UtteranceAlignment {
        utt_id: utt_id.to_string(),
        syllables: units
            .iter()
            .zip(&starts)
            .map(|(u, &s)| AlignedSyllable { start_s: s, dur_s: u.dur_s, syllable_id: u.syllable_id, tone: u.tone })
            .collect(),
    };
    let jittered = jitter_alignment(&truth, cfg.jitter_max_s, rng);
    Ok(SynthUtterance {
        utt_id: utt_id.to_string(),
        waveform: Waveform::new(out.iter().map(|&v| v as f32).collect(), cfg.sample_rate)?,
        truth,
        jittered,
        rendered: units.iter().map(|u| u.rendered).collect(),
        f0_track: f0.iter().map(|&v| v as f32).collect(),
        speaker_scale,
    })
}

/// Moves each interior boundary by `uniform(−j, j)` with
/// `j = min(jitter_max, 0.45 · shorter neighbour)`, so no unit collapses.
pub fn jitter_alignment<R: Rng>(truth: &UtteranceAlignment, jitter_max_s: f64, rng: &mut R) -> UtteranceAlignment {
    let syl = &truth.syllables;
    let mut bounds: Vec<f64> = syl.iter().map(|s| s.start_s).collect();
    bounds.push(syl.last().map_or(0.0, |s| s.end_s()));
    if jitter_max_s > 0.0 {
        for k in 1..syl.len() {
            let j = jitter_max_s.min(0.45 * syl[k - 1].dur_s.min(syl[k].dur_s));
            bounds[k] += rng.gen_range(-j..=j);
        }
    }
    UtteranceAlignment {
        utt_id: truth.utt_id.clone(),
        syllables: syl
            .iter()
            .enumerate()
            .map(|(k, s)| {
                if jitter_max_s > 0.0 {
                    AlignedSyllable { start_s: bounds[k], dur_s: bounds[k + 1] - bounds[k], ..s.clone() }
                } else {
                    s.clone()
                }
            })
            .collect(),
    }
}

/// Renders a tone sequence (initials as `T0`) for one speaker.
pub fn synth_utterance<R: Rng>(
    utt_id: &str,
    tones: &[Tone],
    speaker_scale: f64,
    cfg: &SynthConfig,
    rng: &mut R,
) -> Result<SynthUtterance> {
    cfg.validate()?;
    let units = plan_from_tones(tones, cfg, rng)?;
    render_utterance(utt_id, &units, speaker_scale, cfg, rng)
}

/// Deterministic corpus description; utterances are rendered on demand.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub cfg: SynthConfig,
    pub vocab: Vocabulary,
    pub train_speakers: Vec<f64>,
    pub test_speakers: Vec<f64>,
}

impl Corpus {
    pub fn new(cfg: SynthConfig) -> Result<Self> {
        cfg.validate()?;
        // Stratified draws over the scale range keep the two speaker pools
        // disjoint while interleaving them.
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let count = cfg.n_train_speakers + cfg.n_test_speakers;
        let [lo, hi] = cfg.speaker_scale;
        let mut scales: Vec<f64> =
            (0..count).map(|k| lo + (hi - lo) * (k as f64 + rng.gen::<f64>()) / count as f64).collect();
        scales.shuffle(&mut rng);
        let test_speakers = scales.split_off(cfg.n_train_speakers);
        Ok(Self { cfg, vocab: synth_vocab(), train_speakers: scales, test_speakers })
    }

    pub fn len(&self) -> usize {
        self.cfg.total_utterances()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn split(&self, index: usize) -> Split {
        if index >= self.cfg.n_utterances {
            Split::Test
        } else if index < self.cfg.n_dev() {
            Split::Dev
        } else {
            Split::Train
        }
    }

    pub fn utt_id(&self, index: usize) -> String {
        format!("{}{index:05}", self.split(index).prefix())
    }

    /// Renders utterance `index` from its own stream, seeded `seed ⊕ index`.
    pub fn utterance(&self, index: usize) -> Result<SynthUtterance> {
        if index >= self.len() {
            return Err(Error::BadBounds(format!("utterance {index} of {}", self.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ index as u64);
        let pool = if self.split(index) == Split::Test { &self.test_speakers } else { &self.train_speakers };
        let scale = *pool.choose(&mut rng).unwrap();
        let tones = random_tones(&self.cfg, &mut rng);
        let units = plan_from_tones(&tones, &self.cfg, &mut rng)?;
        render_utterance(&self.utt_id(index), &units, scale, &self.cfg, &mut rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMeta {
    pub utt_id: String,
    pub split: Split,
    pub speaker_scale: f64,
    pub units: usize,
    pub duration_s: f64,
    pub sandhi: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub config: SynthConfig,
    pub vocab_size: usize,
    pub train_speakers: Vec<f64>,
    pub test_speakers: Vec<f64>,
    pub tone_counts: [usize; N_TONES],
    pub utterances: Vec<UtteranceMeta>,
}

/// Writes `wav/*.wav`, `truth.tsv`, `jittered.tsv`, `vocab.txt` and
/// `corpus_meta.json` under `out_dir`.
pub fn generate_corpus(cfg: &SynthConfig, out_dir: &Path) -> Result<CorpusMeta> {
    let corpus = Corpus::new(cfg.clone())?;
    let wav_dir = out_dir.join("wav");
    fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    let mut truth = Vec::with_capacity(corpus.len());
    let mut jittered = Vec::with_capacity(corpus.len());
    let mut utterances = Vec::with_capacity(corpus.len());
    let mut tone_counts = [0; N_TONES];
    for i in 0..corpus.len() {
        let u = corpus.utterance(i)?;
        write_wav(&wav_dir.join(format!("{}.wav", u.utt_id)), &u.waveform)?;
        for s in &u.truth.syllables {
            tone_counts[s.tone.index()] += 1;
        }
        utterances.push(UtteranceMeta {
            utt_id: u.utt_id.clone(),
            split: corpus.split(i),
            speaker_scale: u.speaker_scale,
            units: u.truth.syllables.len(),
            duration_s: u.waveform.duration_s(),
            sandhi: u.truth.syllables.iter().zip(&u.rendered).filter(|(s, r)| s.tone != **r).count(),
        });
        truth.push(u.truth);
        jittered.push(u.jittered);
    }
    write_alignment(&out_dir.join("truth.tsv"), &truth, &corpus.vocab)?;
    write_alignment(&out_dir.join("jittered.tsv"), &jittered, &corpus.vocab)?;
    save_vocab(&corpus.vocab, &out_dir.join("vocab.txt"))?;
    let meta = CorpusMeta {
        config: cfg.clone(),
        vocab_size: corpus.vocab.len(),
        train_speakers: corpus.train_speakers,
        test_speakers: corpus.test_speakers,
        tone_counts,
        utterances,
    };
    let path = out_dir.join("corpus_meta.json");
    fs::write(&path, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(&path, e))?;
    Ok(meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_layout() {
        let v = synth_vocab();
        assert_eq!(v.len(), 55);
        assert_eq!(v.syllable(0), Some("sil"));
        assert_eq!(v.syllable(1), Some("a"));
        assert_eq!(v.syllable(34), Some("b"));
    }

    #[test]
    fn sandhi_skips_initials() {
        let mut units: Vec<UnitPlan> = [Tone::T3, Tone::T0, Tone::T3, Tone::T3, Tone::T1]
            .iter()
            .map(|&t| UnitPlan { syllable_id: 1, tone: t, rendered: t, dur_s: 0.1 })
            .collect();
        apply_sandhi(&mut units);
        let r: Vec<Tone> = units.iter().map(|u| u.rendered).collect();
        assert_eq!(r, vec![Tone::T2, Tone::T0, Tone::T2, Tone::T3, Tone::T1]);
        assert!(units.iter().all(|u| u.tone != Tone::T2));
    }

    #[test]
    fn sandhi_finals_take_t2_timing() {
        let cfg = SynthConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let units = plan_from_tones(&[Tone::T3, Tone::T0, Tone::T3], &cfg, &mut rng).unwrap();
            let [lo, hi] = cfg.final_dur_s[1];
            assert!(units[0].dur_s >= lo - 1e-12 && units[0].dur_s <= hi + 1e-12);
            let [lo, hi] = cfg.final_dur_s[2];
            assert!(units[2].dur_s >= lo && units[2].dur_s <= hi);
        }
    }

    #[test]
    fn zero_jitter_is_identity() {
        let cfg = SynthConfig { jitter_max_s: 0.0, ..SynthConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = synth_utterance("u", &[Tone::T0, Tone::T1, Tone::T4], 1.0, &cfg, &mut rng).unwrap();
        assert_eq!(u.truth, u.jittered);
    }

    #[test]
    fn jitter_stays_in_bounds() {
        let cfg = SynthConfig::default();
        let corpus = Corpus::new(cfg.clone()).unwrap();
        for i in 0..corpus.len() {
            let u = corpus.utterance(i).unwrap();
            assert_eq!(u.truth.syllables.len(), u.jittered.syllables.len());
            for (a, b) in u.truth.syllables.iter().zip(&u.jittered.syllables) {
                assert_eq!((a.syllable_id, a.tone), (b.syllable_id, b.tone));
                assert!((a.start_s - b.start_s).abs() <= cfg.jitter_max_s + 1e-12);
                assert!(b.dur_s > 0.0);
            }
        }
    }

    #[test]
    fn initials_must_precede_finals() {
        let cfg = SynthConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(plan_from_tones(&[Tone::T1, Tone::T0], &cfg, &mut rng).is_err());
        assert!(plan_from_tones(&[Tone::T0, Tone::T0, Tone::T1], &cfg, &mut rng).is_err());
    }

    #[test]
    fn speaker_pools_are_disjoint() {
        let c = Corpus::new(SynthConfig::default()).unwrap();
        assert_eq!(c.train_speakers.len(), 20);
        assert_eq!(c.test_speakers.len(), 5);
        for s in &c.test_speakers {
            assert!(!c.train_speakers.contains(s));
        }
    }
}
