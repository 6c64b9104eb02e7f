//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::batch::Batch;
use super::model::{Mode, Model, ModelConfig, Variant};
use super::real::Real;
use crate::error::Result;
use crate::features::{ContextSample, SegmentFeature};
use crate::segment::Segment;
use crate::tone::Tone;

/// Denominator floor of the relative error `|a − n| / max(|a|, |n|, floor)`.
/// A 64-bit loss near 1 is resolved by the stencil to roughly 1e-11, so
/// entries smaller than the floor are graded on absolute error instead of
/// on roundoff.
pub const REL_ERR_FLOOR: f64 = 1e-5;

/// Floor used when the analytic side runs in 32-bit: single-precision
/// convolutions leave absolute errors near 1e-6 on entries whose true value
/// is far below the typical gradient.
pub const REL_ERR_FLOOR_F32: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub total: usize,
    /// Coordinates passed over because `θ ± eps` crossed a kink.
    pub skipped: usize,
    /// Index (into the flat parameter vector) of the worst entry.
    pub worst: usize,
}

pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `loss_grad(θ).1` with `(L(θ + eps) − L(θ − eps)) / 2eps` on
/// `n_check` randomly chosen coordinates (all of them if there are fewer).
pub fn grad_check<F>(
    theta: &[f64],
    eps: f64,
    n_check: usize,
    seed: u64,
    floor: f64,
    mut loss_grad: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64], bool) -> Result<(f64, Vec<f64>)>,
{
    let total = theta.len();
    let (_, analytic) = loss_grad(theta, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx: Vec<usize> = if n_check >= total {
        (0..total).collect()
    } else {
        let mut v = sample(&mut rng, total, n_check).into_vec();
        v.sort_unstable();
        v
    };
    let mut point = theta.to_vec();
    let mut report = GradCheckReport { max_rel_err: 0.0, checked: idx.len(), total, skipped: 0, worst: 0 };
    for &i in &idx {
        point[i] = theta[i] + eps;
        let (up, _) = loss_grad(&point, false)?;
        point[i] = theta[i] - eps;
        let (down, _) = loss_grad(&point, false)?;
        point[i] = theta[i];
        let err = rel_err(analytic[i], (up - down) / (2.0 * eps), floor);
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst = i;
        }
    }
    Ok(report)
}

/// Like [`grad_check`] for piecewise-smooth losses, with the fourth-order
/// stencil `(−L(θ+2eps) + 8L(θ+eps) − 8L(θ−eps) + L(θ−2eps)) / 12eps` so
/// that sharp but smooth curvature (batch statistics over a handful of
/// positions) does not masquerade as gradient error.
///
/// `loss_pattern` returns the loss and an activation pattern; coordinates
/// whose stencil points do not all share the pattern at `θ` straddle a kink,
/// where finite differences measure nothing about the gradient, and are
/// replaced by fresh draws until `n_check` smooth coordinates are compared or
/// none remain.
pub fn grad_check_piecewise<F>(
    theta: &[f64],
    analytic: &[f64],
    eps: f64,
    n_check: usize,
    seed: u64,
    floor: f64,
    mut loss_pattern: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<bool>)>,
{
    let total = theta.len();
    let (_, base) = loss_pattern(theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = sample(&mut rng, total, total).into_vec();
    let mut point = theta.to_vec();
    let mut report = GradCheckReport { max_rel_err: 0.0, checked: 0, total, skipped: 0, worst: 0 };
    'coords: for i in order {
        if report.checked == n_check {
            break;
        }
        let mut loss = [0.0; 4];
        for (slot, step) in [2.0, 1.0, -1.0, -2.0].into_iter().enumerate() {
            point[i] = theta[i] + step * eps;
            let (l, pattern) = loss_pattern(&point)?;
            point[i] = theta[i];
            if pattern != base {
                report.skipped += 1;
                continue 'coords;
            }
            loss[slot] = l;
        }
        report.checked += 1;
        let numeric = (-loss[0] + 8.0 * loss[1] - 8.0 * loss[2] + loss[3]) / (12.0 * eps);
        let err = rel_err(analytic[i], numeric, floor);
        if err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst = i;
        }
    }
    Ok(report)
}

impl<T: Real> Model<T> {
    /// Trainable parameters flattened in declaration order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .flat_map(|p| p.data.iter().map(|v| v.to_f64().unwrap()))
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for p in self.params.iter_mut().filter(|p| p.trainable) {
            for v in &mut p.data {
                *v = T::lit(*it.next().expect("flat vector covers every parameter"));
            }
        }
    }

    pub fn flatten_grads(&self, grads: &[Vec<T>]) -> Vec<f64> {
        self.params
            .iter()
            .zip(grads)
            .filter(|(p, _)| p.trainable)
            .flat_map(|(_, g)| g.iter().map(|v| v.to_f64().unwrap()))
            .collect()
    }
}

/// Gradient check of a whole model on one batch (training-mode loss).
///
/// The numeric side always runs in 64-bit; the analytic side runs at the
/// model's own precision `T`, so `T = f32` measures the 32-bit backward pass
/// against a 64-bit oracle.
pub fn check_model<T: Real>(
    model: &Model<T>,
    batch: &Batch,
    eps: f64,
    n_check: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut probe: Model<f64> = model.cast();
    let floor = if std::mem::size_of::<T>() == 4 { REL_ERR_FLOOR_F32 } else { REL_ERR_FLOOR };
    let (_, grads, _) = model.loss_and_grads(batch)?;
    let analytic = model.flatten_grads(&grads);
    grad_check_piecewise(&model.flat_params(), &analytic, eps, n_check, seed, floor, |theta| {
        probe.set_flat_params(theta);
        let fwd = probe.forward(batch, Mode::Train)?;
        let loss = super::layers::softmax_cross_entropy(&fwd.logits, &batch.labels, probe.config().n_classes)?.0;
        Ok((loss, fwd.relu_pattern()))
    })
}

/// A model small enough to check exhaustively: three stages of 2/3/4
/// channels over 8 mel bins, vocabulary of 5, one context syllable per side.
pub fn tiny_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        context_size: if variant == Variant::SfCtx { 1 } else { 0 },
        channels: vec![2, 3, 4],
        blocks: vec![1, 1, 1],
        embedding_dim: 6,
        sf_dense_dim: 4,
        fusion_hidden_dim: 6,
        vocab_size: 5,
        n_mels: 8,
        ..ModelConfig::default()
    }
}

/// Random samples shaped for `cfg`; the first sample's left context slot
/// is a placeholder when the model has context.
pub fn random_samples(cfg: &ModelConfig, count: usize, seed: u64) -> Vec<ContextSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = cfg.slots();
    (0..count)
        .map(|i| {
            let mut slices = Vec::with_capacity(slots);
            let mut seg_feats = Vec::with_capacity(slots);
            for k in 0..slots {
                if i == 0 && k == 0 && slots > 1 {
                    slices.push(Segment::placeholder(cfg.n_mels));
                    seg_feats.push(SegmentFeature::padding(cfg.vocab_size));
                    continue;
                }
                let frames = rng.gen_range(9..17);
                let values = (0..frames * cfg.n_mels).map(|_| rng.gen_range(-2.0f32..2.0)).collect();
                slices.push(Segment { frames, bins: cfg.n_mels, values });
                let mut f = vec![0f32; 1 + cfg.vocab_size];
                f[0] = rng.gen_range(0.05..0.4);
                if cfg.vocab_size > 0 {
                    f[1 + rng.gen_range(0..cfg.vocab_size)] = 1.0;
                }
                seg_feats.push(SegmentFeature(f));
            }
            ContextSample {
                slices,
                seg_feats,
                label: Tone::from_index(rng.gen_range(0..6)).unwrap(),
                utt_id: format!("rand_{i}"),
                position: i,
            }
        })
        .collect()
}

pub fn random_batch(cfg: &ModelConfig, count: usize, seed: u64) -> Result<Batch> {
    let samples = random_samples(cfg, count, seed);
    let refs: Vec<&ContextSample> = samples.iter().collect();
    Batch::from_samples(&refs)
}

/// Grad check of the tiny `sf_ctx` model as run by the `gradcheck` command.
pub fn check_tiny_model(seed: u64) -> Result<GradCheckReport> {
    let cfg = tiny_config(Variant::SfCtx);
    let model = Model::<f64>::new(cfg.clone(), seed)?;
    let batch = random_batch(&cfg, 4, seed.wrapping_add(1))?;
    check_model(&model, &batch, 1e-5, 200, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let theta = vec![0.5, -1.5, 2.0];
        let r = grad_check(&theta, 1e-5, 200, 0, REL_ERR_FLOOR, |t, _| {
            Ok((t.iter().map(|v| v * v).sum(), t.iter().map(|v| 2.0 * v).collect()))
        })
        .unwrap();
        assert_eq!(r.checked, 3);
        assert!(r.max_rel_err < 1e-8, "{}", r.max_rel_err);
    }

    #[test]
    fn doubled_gradient_reports_half() {
        let theta = vec![0.5, -1.5, 2.0];
        let r = grad_check(&theta, 1e-5, 200, 0, REL_ERR_FLOOR, |t, _| {
            Ok((t.iter().map(|v| v * v).sum(), t.iter().map(|v| 4.0 * v).collect()))
        })
        .unwrap();
        assert!((r.max_rel_err - 0.5).abs() < 1e-6);
    }

    #[test]
    fn tiny_model_is_small() {
        let m = Model::<f64>::new(tiny_config(Variant::SfCtx), 0).unwrap();
        assert!(m.num_trainable() <= 5000, "{}", m.num_trainable());
    }
}
