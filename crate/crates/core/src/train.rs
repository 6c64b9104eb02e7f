//! Initial-class downsampling, batch assembly, and the SGD loop with early
//! stopping and reduce-on-plateau scheduling.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{tone_histogram, ContextSample};
use crate::nn::{argmax_rows, softmax_cross_entropy, Batch, Grads, Mode, Model, Param};
use crate::tone::{Tone, N_TONES};

/// Per-epoch keep probability of `T0` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KeepProbRepr", into = "KeepProbRepr")]
pub enum KeepProb {
    /// Balance initials to the mean count of the five lexical tones.
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum KeepProbRepr {
    Num(f64),
    Word(String),
}

impl TryFrom<KeepProbRepr> for KeepProb {
    type Error = String;

    fn try_from(r: KeepProbRepr) -> std::result::Result<Self, String> {
        match r {
            KeepProbRepr::Word(w) if w == "auto" => Ok(KeepProb::Auto),
            KeepProbRepr::Word(w) => Err(format!("t0_keep_prob must be a number or \"auto\", got {w:?}")),
            KeepProbRepr::Num(p) if (0.0..=1.0).contains(&p) => Ok(KeepProb::Fixed(p)),
            KeepProbRepr::Num(p) => Err(format!("t0_keep_prob {p} is outside [0, 1]")),
        }
    }
}

impl From<KeepProb> for KeepProbRepr {
    fn from(k: KeepProb) -> Self {
        match k {
            KeepProb::Auto => KeepProbRepr::Word("auto".into()),
            KeepProb::Fixed(p) => KeepProbRepr::Num(p),
        }
    }
}

impl KeepProb {
    pub fn resolve(self, counts: &[usize; N_TONES]) -> f64 {
        match self {
            KeepProb::Fixed(p) => p,
            KeepProb::Auto => auto_keep_prob(counts),
        }
    }
}

/// `mean(count(T1..T5)) / count(T0)`, clamped to `[0, 1]`; 1 when there are
/// no initials.
pub fn auto_keep_prob(counts: &[usize; N_TONES]) -> f64 {
    if counts[0] == 0 {
        return 1.0;
    }
    let finals: usize = counts[1..].iter().sum();
    (finals as f64 / (N_TONES - 1) as f64 / counts[0] as f64).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub min_lr: f64,
    /// Dev-loss decrease that counts as an improvement.
    pub min_improvement: f64,
    pub seed: u64,
    pub t0_keep_prob: KeepProb,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            momentum: 0.9,
            batch_size: 32,
            max_epochs: 100,
            early_stop_patience: 10,
            plateau_factor: 0.5,
            plateau_patience: 3,
            min_lr: 1e-5,
            min_improvement: 1e-4,
            seed: 0,
            t0_keep_prob: KeepProb::Auto,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must be in (0, 1)");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if !(self.min_lr >= 0.0) || self.min_lr > self.lr {
            return bad("min_lr must be in [0, lr]");
        }
        if let KeepProb::Fixed(p) = self.t0_keep_prob {
            if !(0.0..=1.0).contains(&p) {
                return bad("t0_keep_prob must be in [0, 1]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_accuracy: f64,
    /// Learning rate in effect during the epoch.
    pub lr: f64,
    /// Whether the scheduler reduced the rate at the end of this epoch.
    pub lr_reduced: bool,
    pub train_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_dev_loss: Option<f64>,
    pub t0_keep_prob: f64,
    pub stop_reason: Option<StopReason>,
}

impl TrainHistory {
    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

/// Reduce-on-plateau and early-stopping bookkeeping driven by dev loss.
///
/// After a reduction the bad-epoch counter restarts and the next epoch is a
/// cooldown epoch that is not counted toward the next reduction.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub lr: f64,
    factor: f64,
    patience: usize,
    min_lr: f64,
    threshold: f64,
    early_stop: usize,
    best: f64,
    bad_epochs: usize,
    since_best: usize,
    cooldown: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchedulerStep {
    pub improved: bool,
    pub reduced: bool,
    pub stop: bool,
}

impl PlateauScheduler {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.lr,
            factor: cfg.plateau_factor,
            patience: cfg.plateau_patience,
            min_lr: cfg.min_lr,
            threshold: cfg.min_improvement,
            early_stop: cfg.early_stop_patience,
            best: f64::INFINITY,
            bad_epochs: 0,
            since_best: 0,
            cooldown: 0,
        }
    }

    pub fn step(&mut self, dev_loss: f64) -> SchedulerStep {
        let improved = dev_loss < self.best - self.threshold;
        let mut reduced = false;
        if improved {
            self.best = dev_loss;
            self.bad_epochs = 0;
            self.since_best = 0;
        } else {
            self.since_best += 1;
            if self.cooldown > 0 {
                self.cooldown -= 1;
            } else {
                self.bad_epochs += 1;
            }
            if self.bad_epochs >= self.patience {
                let next = (self.lr * self.factor).max(self.min_lr);
                reduced = next < self.lr;
                self.lr = next;
                self.bad_epochs = 0;
                self.cooldown = 1;
            }
        }
        SchedulerStep { improved, reduced, stop: self.early_stop > 0 && self.since_best >= self.early_stop }
    }
}

/// Keeps each `T0` sample with probability `keep_prob`; other samples pass
/// through untouched and in order.
pub fn downsample_initials<'a, R: Rng>(
    samples: &'a [ContextSample],
    keep_prob: f64,
    rng: &mut R,
) -> Vec<&'a ContextSample> {
    let p = keep_prob.clamp(0.0, 1.0);
    samples.iter().filter(|s| s.label != Tone::T0 || rng.gen_bool(p)).collect()
}

/// Seeded shuffle split into groups of at most `batch_size`.
pub fn batch_order<R: Rng>(n: usize, batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

pub fn make_batches<R: Rng>(samples: &[&ContextSample], batch_size: usize, rng: &mut R) -> Result<Vec<Batch>> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    batch_order(samples.len(), batch_size, rng)
        .into_iter()
        .map(|group| Batch::from_samples(&group.iter().map(|&i| samples[i]).collect::<Vec<_>>()))
        .collect()
}

/// `v ← μ·v − lr·g; θ ← θ + v` over every trainable parameter.
pub fn sgd_step(params: &mut [Param<f32>], grads: &Grads<f32>, velocity: &mut [Vec<f32>], lr: f64, momentum: f64) {
    let (lr, mu) = (lr as f32, momentum as f32);
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        if !p.trainable {
            continue;
        }
        for ((theta, &gi), vi) in p.data.iter_mut().zip(g).zip(v.iter_mut()) {
            *vi = mu * *vi - lr * gi;
            *theta += *vi;
        }
    }
}

/// Mean eval-mode cross-entropy and accuracy over `samples`.
pub fn dev_metrics(model: &Model<f32>, samples: &[ContextSample], batch_size: usize) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for chunk in samples.chunks(batch_size.max(1)) {
        let batch = Batch::from_samples(&chunk.iter().collect::<Vec<_>>())?;
        let fwd = model.forward(&batch, Mode::Eval)?;
        let (l, _) = softmax_cross_entropy(&fwd.logits, &batch.labels, N_TONES)?;
        loss += l as f64 * chunk.len() as f64;
        correct += argmax_rows(&fwd.logits, N_TONES)
            .iter()
            .zip(&batch.labels)
            .filter(|(p, l)| p == l)
            .count();
    }
    let n = samples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

fn check_samples(model: &Model<f32>, samples: &[ContextSample], what: &str) -> Result<()> {
    let slots = model.config().slots();
    if let Some(s) = samples.iter().find(|s| s.slices.len() != slots) {
        return Err(Error::ConfigMismatch(format!(
            "{what} sample {}#{} has {} slots, model expects {slots}",
            s.utt_id,
            s.position,
            s.slices.len()
        )));
    }
    Ok(())
}

/// Trains with SGD and returns the parameters of the epoch with the lowest
/// dev loss.
pub fn train(
    mut model: Model<f32>,
    train_samples: &[ContextSample],
    dev_samples: &[ContextSample],
    cfg: &TrainConfig,
) -> Result<(Model<f32>, TrainHistory)> {
    cfg.validate()?;
    if train_samples.is_empty() || dev_samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_samples(&model, train_samples, "train")?;
    check_samples(&model, dev_samples, "dev")?;
    let train_ids: HashSet<&str> = train_samples.iter().map(|s| s.utt_id.as_str()).collect();
    if let Some(s) = dev_samples.iter().find(|s| train_ids.contains(s.utt_id.as_str())) {
        return Err(Error::InvalidConfig(format!("utterance {} is in both train and dev", s.utt_id)));
    }

    let keep_prob = cfg.t0_keep_prob.resolve(&tone_histogram(train_samples));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity: Vec<Vec<f32>> = model.params.iter().map(|p| vec![0.0; p.data.len()]).collect();
    let mut sched = PlateauScheduler::new(cfg);
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: None,
        best_dev_loss: None,
        t0_keep_prob: keep_prob,
        stop_reason: None,
    };
    let mut best = model.clone();

    for epoch in 1..=cfg.max_epochs {
        let lr = sched.lr;
        let epoch_samples = downsample_initials(train_samples, keep_prob, &mut rng);
        if epoch_samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut loss_sum = 0.0;
        for group in batch_order(epoch_samples.len(), cfg.batch_size, &mut rng) {
            let refs: Vec<&ContextSample> = group.iter().map(|&i| epoch_samples[i]).collect();
            let batch = Batch::from_samples(&refs)?;
            let step = model.loss_and_grads(&batch);
            let (loss, grads, fwd) = match step {
                Ok(v) if v.0.is_finite() => v,
                Ok(_) | Err(Error::NumericError(_)) => return Err(diverged(epoch, history)),
                Err(e) => return Err(e),
            };
            sgd_step(&mut model.params, &grads, &mut velocity, lr, cfg.momentum);
            model.update_running_stats(&fwd);
            loss_sum += loss as f64 * refs.len() as f64;
        }
        let train_loss = loss_sum / epoch_samples.len() as f64;
        let (dev_loss, dev_accuracy) = match dev_metrics(&model, dev_samples, cfg.batch_size) {
            Ok(v) if v.0.is_finite() => v,
            Ok(_) | Err(Error::NumericError(_)) => return Err(diverged(epoch, history)),
            Err(e) => return Err(e),
        };
        if history.best_dev_loss.map_or(true, |b| dev_loss < b) {
            history.best_dev_loss = Some(dev_loss);
            history.best_epoch = Some(epoch);
            best = model.clone();
        }
        let step = sched.step(dev_loss);
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            dev_loss,
            dev_accuracy,
            lr,
            lr_reduced: step.reduced,
            train_samples: epoch_samples.len(),
        });
        if step.stop {
            history.stop_reason = Some(StopReason::EarlyStop);
            return Ok((best, history));
        }
    }
    history.stop_reason = Some(StopReason::MaxEpochs);
    Ok((best, history))
}

fn diverged(epoch: usize, mut history: TrainHistory) -> Error {
    history.stop_reason = Some(StopReason::Diverged);
    Error::DivergenceError { epoch, history: Box::new(history) }
}
