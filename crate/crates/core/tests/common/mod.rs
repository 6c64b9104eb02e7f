//! Independent oracles shared by the integration tests and the acceptance
//! run. Nothing here calls the code path it checks.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tonelab::features::{ContextSample, SegmentFeature};
use tonelab::nn::gradcheck::{grad_check, REL_ERR_FLOOR, REL_ERR_FLOOR_F32};
use tonelab::nn::layers::{self, ConvSpec, FMap};
use tonelab::nn::{Batch, GradCheckReport, Real};
use tonelab::segment::{FrameInterval, Segment, SegmentMode};
use tonelab::Tone;

pub const GRAD_EPS: f64 = 1e-5;
pub const GRAD_SAMPLES: usize = 200;
pub const GRAD_TOL_F64: f64 = 1e-5;
pub const GRAD_TOL_F32: f64 = 1e-3;

// ---------------------------------------------------------------- layers

fn cast<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::from_f64(x).unwrap()).collect()
}

fn to_f64<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64().unwrap()).collect()
}

fn dot<T: Real>(a: &[T], b: &[f64]) -> T {
    a.iter().zip(b).map(|(&x, &r)| x * T::from_f64(r).unwrap()).sum()
}

fn fmap<T: Real>(c: usize, t: usize, f: usize, data: &[f64]) -> FMap<T> {
    FMap { c, t, f, data: cast(data) }
}

/// One layer under test: parameters and inputs packed into `theta`, a
/// scalar loss `Σ r·y` (or cross-entropy) and its analytic gradient.
pub struct LayerCase {
    pub name: &'static str,
    pub theta: Vec<f64>,
    kind: Kind,
    /// Random projection of the output.
    r: Vec<f64>,
}

enum Kind {
    Conv { c: usize, t: usize, f: usize, spec: ConvSpec },
    BatchNorm { c: usize, frames: Vec<usize>, f: usize },
    Relu,
    Add,
    StatsPool { c: usize, t: usize, f: usize },
    Dense { rows: usize, inp: usize, out: usize },
    SoftmaxCe { labels: Vec<usize> },
}

impl LayerCase {
    pub fn eval<T: Real>(&self, theta: &[f64]) -> (T, Vec<T>) {
        match &self.kind {
            Kind::Conv { c, t, f, spec } => {
                let nx = c * t * f;
                let x = fmap::<T>(*c, *t, *f, &theta[..nx]);
                let w: Vec<T> = cast(&theta[nx..]);
                let y = layers::conv2d_forward(&x, &w, *spec);
                let dy = FMap { c: y.c, t: y.t, f: y.f, data: cast(&self.r[..y.data.len()]) };
                let mut dw = vec![T::zero(); w.len()];
                let dx = layers::conv2d_backward(&x, &dy, &w, *spec, &mut dw);
                (dot(&y.data, &self.r), [dx.data, dw].concat())
            }
            Kind::BatchNorm { c, frames, f } => {
                let mut off = 0;
                let xs: Vec<FMap<T>> = frames
                    .iter()
                    .map(|&t| {
                        let m = fmap(*c, t, *f, &theta[off..off + c * t * f]);
                        off += c * t * f;
                        m
                    })
                    .collect();
                let gamma: Vec<T> = cast(&theta[off..off + c]);
                let beta: Vec<T> = cast(&theta[off + c..off + 2 * c]);
                let (ys, cache) = layers::batchnorm_forward_train(&xs, &gamma, &beta, T::from_f64(1e-5).unwrap());
                let mut roff = 0;
                let mut loss = T::zero();
                let dys: Vec<FMap<T>> = ys
                    .iter()
                    .map(|y| {
                        let r = &self.r[roff..roff + y.data.len()];
                        roff += y.data.len();
                        loss += dot(&y.data, r);
                        FMap { c: y.c, t: y.t, f: y.f, data: cast(r) }
                    })
                    .collect();
                let mut dg = vec![T::zero(); *c];
                let mut db = vec![T::zero(); *c];
                let dxs = layers::batchnorm_backward(&dys, &cache, &gamma, &mut dg, &mut db);
                let mut g: Vec<T> = dxs.into_iter().flat_map(|d| d.data).collect();
                g.extend(dg);
                g.extend(db);
                (loss, g)
            }
            Kind::Relu => {
                let x: Vec<T> = cast(theta);
                let mut y = x.clone();
                layers::relu_inplace(&mut y);
                let mut dy: Vec<T> = cast(&self.r);
                layers::relu_backward_inplace(&mut dy, &y);
                (dot(&y, &self.r), dy)
            }
            Kind::Add => {
                let h = theta.len() / 2;
                let mut a = fmap::<T>(1, h, 1, &theta[..h]);
                let b = fmap::<T>(1, h, 1, &theta[h..]);
                layers::add_inplace(&mut a, &b);
                let g: Vec<T> = cast(&self.r);
                (dot(&a.data, &self.r), [g.clone(), g].concat())
            }
            Kind::StatsPool { c, t, f } => {
                let x = fmap::<T>(*c, *t, *f, theta);
                let p = layers::stats_pool_fmap(&x);
                let dx = layers::stats_pool_fmap_backward(&x, &p, &cast::<T>(&self.r));
                (dot(&p, &self.r), dx.data)
            }
            Kind::Dense { rows, inp, out } => {
                let nx = rows * inp;
                let nw = inp * out;
                let x: Vec<T> = cast(&theta[..nx]);
                let w: Vec<T> = cast(&theta[nx..nx + nw]);
                let b: Vec<T> = cast(&theta[nx + nw..]);
                let y = layers::dense_forward(&x, *rows, &w, &b);
                let mut dw = vec![T::zero(); nw];
                let mut db = vec![T::zero(); *out];
                let dx = layers::dense_backward(&x, *rows, &w, &cast::<T>(&self.r), &mut dw, &mut db);
                (dot(&y, &self.r), [dx, dw, db].concat())
            }
            Kind::SoftmaxCe { labels } => {
                let logits: Vec<T> = cast(theta);
                let (loss, g) = layers::softmax_cross_entropy(&logits, labels, 6).unwrap();
                (loss, g)
            }
        }
    }

    /// 64-bit analytic against 64-bit numeric.
    pub fn check_f64(&self, seed: u64) -> GradCheckReport {
        grad_check(&self.theta, GRAD_EPS, GRAD_SAMPLES, seed, REL_ERR_FLOOR, |t, _| {
            let (l, g) = self.eval::<f64>(t);
            Ok((l, g))
        })
        .unwrap()
    }

    /// 32-bit analytic against the 64-bit numeric oracle.
    pub fn check_f32(&self, seed: u64) -> GradCheckReport {
        grad_check(&self.theta, GRAD_EPS, GRAD_SAMPLES, seed, REL_ERR_FLOOR_F32, |t, want_grad| {
            if want_grad {
                let (l, g) = self.eval::<f32>(t);
                Ok((l as f64, to_f64(&g)))
            } else {
                Ok((self.eval::<f64>(t).0, Vec::new()))
            }
        })
        .unwrap()
    }
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Values bounded away from zero so that ReLU kinks are never straddled.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.1..1.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect()
}

pub fn layer_cases(seed: u64) -> Vec<LayerCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::new();
    for (name, stride) in [("conv3x3", 1), ("conv3x3_stride2", 2)] {
        let spec = ConvSpec { cin: 2, cout: 3, kernel: 3, stride };
        let (c, t, f) = (2, 7, 6);
        let mut theta = uniform(&mut rng, c * t * f, -1.0, 1.0);
        theta.extend(uniform(&mut rng, spec.weight_len(), -0.5, 0.5));
        let n_out = 3 * spec.out_len(t) * spec.out_len(f);
        cases.push(LayerCase { name, theta, kind: Kind::Conv { c, t, f, spec }, r: uniform(&mut rng, n_out, -1.0, 1.0) });
    }
    let spec = ConvSpec { cin: 3, cout: 2, kernel: 1, stride: 2 };
    let mut theta = uniform(&mut rng, 3 * 5 * 4, -1.0, 1.0);
    theta.extend(uniform(&mut rng, spec.weight_len(), -0.5, 0.5));
    cases.push(LayerCase {
        name: "conv1x1_projection",
        theta,
        kind: Kind::Conv { c: 3, t: 5, f: 4, spec },
        r: uniform(&mut rng, 2 * 3 * 2, -1.0, 1.0),
    });

    let (c, frames, f) = (3, vec![4, 2, 5], 3);
    let n: usize = frames.iter().map(|t| c * t * f).sum();
    let mut theta = uniform(&mut rng, n, -2.0, 2.0);
    theta.extend(uniform(&mut rng, c, 0.5, 1.5));
    theta.extend(uniform(&mut rng, c, -0.5, 0.5));
    cases.push(LayerCase { name: "batchnorm", theta, kind: Kind::BatchNorm { c, frames, f }, r: uniform(&mut rng, n, -1.0, 1.0) });

    cases.push(LayerCase { name: "relu", theta: away_from_zero(&mut rng, 40), kind: Kind::Relu, r: uniform(&mut rng, 40, -1.0, 1.0) });
    cases.push(LayerCase { name: "residual_add", theta: uniform(&mut rng, 30, -1.0, 1.0), kind: Kind::Add, r: uniform(&mut rng, 15, -1.0, 1.0) });

    let (c, t, f) = (2, 6, 3);
    cases.push(LayerCase {
        name: "stats_pool",
        theta: uniform(&mut rng, c * t * f, -1.0, 1.0),
        kind: Kind::StatsPool { c, t, f },
        r: uniform(&mut rng, 2 * c * f, -1.0, 1.0),
    });

    let (rows, inp, out) = (4, 5, 3);
    cases.push(LayerCase {
        name: "dense",
        theta: uniform(&mut rng, rows * inp + inp * out + out, -1.0, 1.0),
        kind: Kind::Dense { rows, inp, out },
        r: uniform(&mut rng, rows * out, -1.0, 1.0),
    });

    let labels: Vec<usize> = (0..5).map(|_| rng.gen_range(0..6)).collect();
    cases.push(LayerCase {
        name: "softmax_cross_entropy",
        theta: uniform(&mut rng, 30, -2.0, 2.0),
        kind: Kind::SoftmaxCe { labels },
        r: Vec::new(),
    });
    cases
}

// ---------------------------------------------------------- segmentation

/// Per-frame membership oracle: frame `k` belongs to unit `i`'s segment when
/// it is one of `i`'s own frames, a gap frame on an extended side, or lies in
/// the adjacent half (floor) of a neighbour's plain frames.
pub fn brute_segments(bounds: &[(usize, usize)], mode: SegmentMode) -> Vec<(usize, usize)> {
    let total = bounds.last().unwrap().1;
    let owner = |k: usize| bounds.iter().position(|&(s, e)| s <= k && k < e);
    let last = bounds.len() - 1;
    (0..bounds.len())
        .map(|i| {
            let (s, e) = bounds[i];
            let left = mode == SegmentMode::Tritone && i > 0;
            let right = mode != SegmentMode::Plain && i < last;
            let members: Vec<usize> = (0..total)
                .filter(|&k| {
                    if (s..e).contains(&k) {
                        return true;
                    }
                    match owner(k) {
                        Some(j) if left && j + 1 == i => {
                            let (ps, pe) = bounds[j];
                            k - ps >= (pe - ps) - (pe - ps) / 2
                        }
                        Some(j) if right && j == i + 1 => {
                            let (ns, ne) = bounds[j];
                            k - ns < (ne - ns) / 2
                        }
                        Some(_) => false,
                        // Gap frames between this unit and an extended side.
                        None => (left && k < s && k >= bounds[i - 1].1) || (right && k >= e && k < bounds[i + 1].0),
                    }
                })
                .collect();
            let lo = *members.first().unwrap();
            let hi = *members.last().unwrap() + 1;
            assert_eq!(members.len(), hi - lo, "membership of unit {i} is not contiguous");
            (lo, hi)
        })
        .collect()
}

/// Random time-ordered bounds, sometimes with gaps.
pub fn random_bounds(rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let n = rng.gen_range(2..=20);
    let mut t = rng.gen_range(0..3);
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.2) {
                t += rng.gen_range(1..4);
            }
            let len = rng.gen_range(1..=50);
            let b = (t, t + len);
            t += len;
            b
        })
        .collect()
}

pub fn to_intervals(b: &[(usize, usize)]) -> Vec<FrameInterval> {
    b.iter().map(|&(s, e)| FrameInterval::new(s, e)).collect()
}

// ---------------------------------------------------------------- metrics

/// Textbook per-class F1 from reference/prediction lists.
pub fn brute_f1(refs: &[usize], preds: &[usize], classes: usize) -> Vec<f64> {
    (0..classes)
        .map(|k| {
            let tp = refs.iter().zip(preds).filter(|(r, p)| **r == k && **p == k).count() as f64;
            let fp = refs.iter().zip(preds).filter(|(r, p)| **r != k && **p == k).count() as f64;
            let fn_ = refs.iter().zip(preds).filter(|(r, p)| **r == k && **p != k).count() as f64;
            if 2.0 * tp + fp + fn_ == 0.0 {
                0.0
            } else {
                2.0 * tp / (2.0 * tp + fp + fn_)
            }
        })
        .collect()
}

/// Removes initials (by reference), then scores every window that matches
/// the pattern in the reference: fraction of its slots predicted right.
pub fn brute_pattern(refs: &[Vec<Tone>], preds: &[Vec<Tone>], pattern: &[Tone]) -> Option<f64> {
    let (mut hit, mut slots) = (0usize, 0usize);
    for (r, p) in refs.iter().zip(preds) {
        let keep: Vec<usize> = (0..r.len()).filter(|&i| r[i] != Tone::T0).collect();
        let rr: Vec<Tone> = keep.iter().map(|&i| r[i]).collect();
        let pp: Vec<Tone> = keep.iter().map(|&i| p[i]).collect();
        if rr.len() < pattern.len() {
            continue;
        }
        for start in 0..=rr.len() - pattern.len() {
            if rr[start..start + pattern.len()] == *pattern {
                for k in 0..pattern.len() {
                    slots += 1;
                    hit += (pp[start + k] == rr[start + k]) as usize;
                }
            }
        }
    }
    (slots > 0).then(|| hit as f64 / slots as f64)
}

/// Fixed fixtures: `(classes, refs, preds)`.
pub fn f1_fixtures() -> Vec<(usize, Vec<usize>, Vec<usize>)> {
    let mut v = vec![
        (2, vec![0, 0, 0, 1, 1, 1], vec![0, 0, 1, 1, 1, 0]),
        (2, vec![0, 1], vec![0, 1]),
        (2, vec![0, 0], vec![1, 1]),
        (3, vec![0, 1, 2], vec![2, 0, 1]),
        (3, vec![0, 0, 0], vec![0, 0, 0]),
        (6, vec![0, 1, 2, 3, 4, 5], vec![0, 1, 2, 3, 4, 5]),
        (6, vec![0, 0, 1, 1, 2, 2], vec![0, 1, 1, 2, 2, 0]),
        (4, vec![3, 3, 3, 3], vec![3, 3, 2, 1]),
        (2, vec![1, 1, 1, 1, 0], vec![1, 1, 1, 1, 1]),
        (6, vec![5, 4, 3, 2, 1, 0], vec![0, 1, 2, 3, 4, 5]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for k in 0..12 {
        let classes = 2 + k % 5;
        let n = rng.gen_range(1..40);
        let refs: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let preds: Vec<usize> =
            refs.iter().map(|&r| if rng.gen_bool(0.6) { r } else { rng.gen_range(0..classes) }).collect();
        v.push((classes, refs, preds));
    }
    v
}

/// `(refs, preds, pattern, expected)` with hand-computed expectations.
pub fn pattern_fixtures() -> Vec<(&'static str, &'static str, &'static str, Option<f64>)> {
    vec![
        ("T4-T4", "T4-T4", "T4-T4", Some(1.0)),
        ("T4-T4", "T4-T1", "T4-T4", Some(0.5)),
        ("T4-T4-T4", "T4-T1-T4", "T4-T4", Some(0.5)),
        ("T4-T0-T4", "T4-T0-T4", "T4-T4", Some(1.0)),
        ("T4-T0-T4", "T4-T3-T1", "T4-T4", Some(0.5)),
        ("T1-T2-T3", "T1-T2-T3", "T4-T4", None),
        ("T4-T3-T4", "T4-T3-T4", "T4-T3-T4", Some(1.0)),
        ("T4-T3-T4", "T4-T2-T4", "T4-T3-T4", Some(2.0 / 3.0)),
        ("T2-T2-T2-T2", "T2-T1-T2-T1", "T2-T2", Some(0.5)),
        ("T0-T2-T0-T2", "T2-T2-T2-T2", "T2-T2", Some(1.0)),
        ("T2-T5-T2", "T2-T5-T2", "T2-T2", None),
        ("T4-T4-T0-T3-T4", "T1-T4-T0-T3-T4", "T4-T3-T4", Some(1.0)),
        ("T4-T4-T3-T4-T4", "T4-T4-T3-T1-T4", "T4-T4", Some(0.75)),
    ]
}

/// Runs every metric fixture through the library; returns the number of
/// fixtures and the largest deviation from the oracles (`INFINITY` when an
/// applicability verdict disagrees).
pub fn metric_fixture_deviation() -> (usize, f64) {
    use tonelab::eval::{f1_from_confusion, pattern_accuracy, Confusion};
    let mut worst = 0f64;
    let mut n = 0;
    for (classes, refs, preds) in f1_fixtures() {
        let c = Confusion::from_pairs(classes, &refs, &preds).unwrap();
        for (got, want) in f1_from_confusion(&c).iter().zip(brute_f1(&refs, &preds, classes)) {
            worst = worst.max((got.f1 - want).abs());
        }
        n += 1;
    }
    for (r, p, pat, want) in pattern_fixtures() {
        let (r, p, pat) = (vec![parse_seq(r)], vec![parse_seq(p)], parse_seq(pat));
        let got = pattern_accuracy(&r, &p, &pat).unwrap().accuracy();
        let brute = brute_pattern(&r, &p, &pat);
        for other in [want, brute] {
            worst = worst.max(match (got, other) {
                (Some(a), Some(b)) => (a - b).abs(),
                (None, None) => 0.0,
                _ => f64::INFINITY,
            });
        }
        n += 1;
    }
    (n, worst)
}

pub fn parse_seq(s: &str) -> Vec<Tone> {
    tonelab::tone::parse_pattern(s).unwrap()
}

// ------------------------------------------------------------------- dsp

/// Power at `freq` by direct correlation with a complex exponential.
pub fn tone_power(x: &[f32], sr: f64, freq: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        let ph = 2.0 * std::f64::consts::PI * freq * i as f64 / sr;
        re += v as f64 * ph.cos();
        im -= v as f64 * ph.sin();
    }
    re * re + im * im
}

/// Normalized-autocorrelation pitch estimate with parabolic refinement.
pub fn autocorr_f0(x: &[f32], sr: f64, fmin: f64, fmax: f64) -> Option<f64> {
    let lo = (sr / fmax).floor() as usize;
    let hi = ((sr / fmin).ceil() as usize).min(x.len().saturating_sub(2));
    if hi <= lo + 2 {
        return None;
    }
    let r = |lag: usize| -> f64 {
        let n = x.len() - lag;
        let mut num = 0.0;
        let mut e0 = 0.0;
        let mut e1 = 0.0;
        for i in 0..n {
            let (a, b) = (x[i] as f64, x[i + lag] as f64);
            num += a * b;
            e0 += a * a;
            e1 += b * b;
        }
        num / (e0 * e1).sqrt().max(1e-12)
    };
    let vals: Vec<f64> = (lo..=hi).map(r).collect();
    let best = (0..vals.len()).max_by(|&a, &b| vals[a].total_cmp(&vals[b]))?;
    if vals[best] < 0.3 {
        return None;
    }
    // Prefer the shortest lag whose peak is close to the global best (avoids
    // octave errors from the subharmonic).
    let mut pick = best;
    for k in 1..vals.len() - 1 {
        if vals[k] >= vals[k - 1] && vals[k] >= vals[k + 1] && vals[k] > 0.9 * vals[best] {
            pick = k;
            break;
        }
    }
    let refine = if pick > 0 && pick + 1 < vals.len() {
        let (a, b, c) = (vals[pick - 1], vals[pick], vals[pick + 1]);
        let d = a - 2.0 * b + c;
        if d.abs() > 1e-12 {
            0.5 * (a - c) / d
        } else {
            0.0
        }
    } else {
        0.0
    };
    Some(sr / ((lo + pick) as f64 + refine))
}

/// Frequency of the largest FFT bin of a Hann-windowed signal, refined by
/// quadratic interpolation of the log magnitudes.
pub fn fft_peak_hz(x: &[f32], sr: f64) -> f64 {
    use rustfft::num_complex::Complex;
    let n = x.len().next_power_of_two() * 4;
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|i| {
            if i < x.len() {
                let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (x.len() - 1) as f64).cos();
                Complex::new(x[i] as f64 * w, 0.0)
            } else {
                Complex::new(0.0, 0.0)
            }
        })
        .collect();
    rustfft::FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mag: Vec<f64> = buf[..n / 2].iter().map(|c| c.norm().max(1e-300).ln()).collect();
    let k = (1..mag.len() - 1).max_by(|&a, &b| mag[a].total_cmp(&mag[b])).unwrap();
    let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
    let delta = 0.5 * (a - c) / (a - 2.0 * b + c);
    (k as f64 + delta) * sr / n as f64
}

pub fn sine(freq: f64, sr: u32, n: usize) -> Vec<f32> {
    (0..n).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin() as f32).collect()
}

/// Filter index whose center is nearest `hz`, from the Mel formula directly.
pub fn nearest_filter(hz: f64, n_filters: usize, fmin: f64, fmax: f64) -> usize {
    let mel = |f: f64| 2595.0 * (1.0 + f / 700.0).log10();
    let (lo, hi) = (mel(fmin), mel(fmax));
    let centers: Vec<f64> = (1..=n_filters)
        .map(|i| 700.0 * (10f64.powf((lo + (hi - lo) * i as f64 / (n_filters + 1) as f64) / 2595.0) - 1.0))
        .collect();
    (0..n_filters).min_by(|&a, &b| (centers[a] - hz).abs().total_cmp(&(centers[b] - hz).abs())).unwrap()
}

/// Frames whose argmax filter differs from the nearest-center filter, for a
/// 200 Hz tone under the default Mel settings.
pub fn argmax_filter_misses() -> (usize, usize) {
    use tonelab::audio::{mel_spectrogram, MelConfig, Waveform};
    let cfg = MelConfig::default();
    let mel = mel_spectrogram(&Waveform::new(sine(200.0, cfg.sample_rate, 16000), cfg.sample_rate).unwrap(), &cfg).unwrap();
    let want = nearest_filter(200.0, cfg.n_filters, cfg.fmin_hz, cfg.fmax_hz);
    let misses = (0..mel.n_frames)
        .filter(|&f| {
            let row = mel.row(f);
            (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap() != want
        })
        .count();
    (misses, mel.n_frames)
}

/// Relative error of the output FFT peak after resampling a sine from 44.1
/// to 16 kHz.
pub fn resample_peak_rel_err(freq: f64) -> f64 {
    use tonelab::audio::{resample, Waveform};
    let out = resample(&Waveform::new(sine(freq, 44100, 44100), 44100).unwrap(), 16000).unwrap();
    (fft_peak_hz(&out.samples, 16000.0) - freq).abs() / freq
}

/// Random lengths whose frame count differs from 1 + ⌊(N − win)/hop⌋.
pub fn framing_mismatches(trials: usize, seed: u64) -> usize {
    use tonelab::audio::{mel_spectrogram, MelConfig, Waveform};
    let cfg = MelConfig::default();
    let (win, hop) = (208usize, 160usize);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .filter(|_| {
            let n = rng.gen_range(win..win + 6000);
            let mel = mel_spectrogram(&Waveform::new(vec![0.01; n], cfg.sample_rate).unwrap(), &cfg).unwrap();
            mel.n_frames != 1 + (n - win) / hop
        })
        .count()
}

// ------------------------------------------------------------------- data

/// Random context samples; every slot of every sample is populated.
pub fn dense_samples(slots: usize, n_mels: usize, vocab: usize, count: usize, seed: u64) -> Vec<ContextSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let slices = (0..slots)
                .map(|_| {
                    let frames = rng.gen_range(2..12);
                    Segment { frames, bins: n_mels, values: (0..frames * n_mels).map(|_| rng.gen_range(-2.0..2.0)).collect() }
                })
                .collect();
            let seg_feats = (0..slots)
                .map(|_| {
                    let mut f = vec![0f32; 1 + vocab];
                    f[0] = rng.gen_range(0.05..0.3);
                    f[1 + rng.gen_range(0..vocab)] = 1.0;
                    SegmentFeature(f)
                })
                .collect();
            ContextSample { slices, seg_feats, label: Tone::from_index(i % 6).unwrap(), utt_id: format!("u{}", i / 7), position: i % 7 }
        })
        .collect()
}

pub fn batch_of(samples: &[ContextSample]) -> Batch {
    Batch::from_samples(&samples.iter().collect::<Vec<_>>()).unwrap()
}

/// Frames per tone class, for simple statistics.
pub fn histogram(tones: &[Tone]) -> BTreeMap<Tone, usize> {
    let mut m = BTreeMap::new();
    for t in tones {
        *m.entry(*t).or_default() += 1;
    }
    m
}

pub fn distinct<T: Ord + Clone>(v: &[T]) -> BTreeSet<T> {
    v.iter().cloned().collect()
}

/// `count` one-frame samples of a single tone, for sampler statistics.
pub fn tone_samples(tone: Tone, count: usize) -> Vec<ContextSample> {
    (0..count)
        .map(|i| ContextSample {
            slices: vec![Segment { frames: 1, bins: 1, values: vec![0.0] }],
            seg_feats: vec![SegmentFeature(vec![0.1, 1.0])],
            label: tone,
            utt_id: format!("s{i}"),
            position: 0,
        })
        .collect()
}

/// Empirical keep rate of initials over `draws` Bernoulli trials.
pub fn empirical_keep_rate(p: f64, draws: usize, seed: u64) -> f64 {
    let samples = tone_samples(Tone::T0, draws);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tonelab::train::downsample_initials(&samples, p, &mut rng).len() as f64 / draws as f64
}

/// One complete training run of a small model on a small synthetic corpus.
pub fn small_training_run(seed: u64) -> tonelab::train::TrainHistory {
    use tonelab::experiment::Comparison;
    use tonelab::nn::{ModelConfig, Variant};
    use tonelab::synth::SynthConfig;
    use tonelab::train::{train, TrainConfig};
    let cmp = Comparison {
        synth: SynthConfig { n_utterances: 40, n_test_utterances: 0, dev_fraction: 0.25, seed: 42, ..SynthConfig::default() },
        model: ModelConfig { channels: vec![4, 8], blocks: vec![1, 1], stem_stride: 2, embedding_dim: 16, sf_dense_dim: 8, fusion_hidden_dim: 16, ..ModelConfig::default() },
        train: TrainConfig { seed, ..TrainConfig::default() },
        ..Comparison::default()
    };
    let (corpus, data) = cmp.samples().unwrap();
    let model = tonelab::nn::Model::<f32>::new(cmp.model_config(Variant::SfCtx, corpus.vocab.len()), seed).unwrap();
    train(model, &data.train, &data.dev, &cmp.train).unwrap().1
}

/// Full-batch plain gradient descent on 60 linearly separable samples.
pub fn toy_descent(steps: usize) -> Vec<f64> {
    let cfg = tonelab::nn::ModelConfig {
        n_mels: 8,
        channels: vec![4, 4],
        blocks: vec![1, 1],
        embedding_dim: 8,
        ..tonelab::nn::gradcheck::tiny_config(tonelab::nn::Variant::Baseline)
    };
    let mut samples = dense_samples(1, cfg.n_mels, 5, 60, 17);
    // Class k lights up mel bin k.
    for s in &mut samples {
        let k = s.label.index();
        for f in 0..s.slices[0].frames {
            s.slices[0].values[f * 8 + k] += 6.0;
        }
    }
    let batch = batch_of(&samples);
    let mut model = tonelab::nn::Model::<f32>::new(cfg, 2).unwrap();
    let mut vel: Vec<Vec<f32>> = model.params.iter().map(|p| vec![0.0; p.data.len()]).collect();
    let mut losses = Vec::new();
    for _ in 0..steps {
        let (loss, grads, _) = model.loss_and_grads(&batch).unwrap();
        losses.push(loss as f64);
        tonelab::train::sgd_step(&mut model.params, &grads, &mut vel, 0.05, 0.0);
    }
    losses
}


/// Largest logit change over `batches` random batches when 1 to 50 zero
/// frames are appended, across variants and both modes.
pub fn padding_max_change(batches: u64) -> f64 {
    use tonelab::nn::gradcheck::{random_batch, tiny_config};
    use tonelab::nn::{Mode, Model, ModelConfig, Variant};
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0f64;
    for (k, variant) in [Variant::Baseline, Variant::Sf, Variant::SfCtx].into_iter().enumerate() {
        let cfg = ModelConfig { vocab_size: 5, n_mels: 16, channels: vec![4, 8], blocks: vec![1, 1], ..tiny_config(variant) };
        let model = Model::<f32>::new(cfg.clone(), k as u64).unwrap();
        for b in 0..batches {
            let batch = random_batch(&cfg, rng.gen_range(1..8), 1000 * k as u64 + b).unwrap();
            let padded = batch.with_extra_padding(rng.gen_range(1..=50));
            for mode in [Mode::Train, Mode::Eval] {
                let x = model.forward(&batch, mode).unwrap().logits;
                let y = model.forward(&padded, mode).unwrap().logits;
                for (a, b) in x.iter().zip(&y) {
                    worst = worst.max((a - b).abs() as f64);
                }
            }
        }
    }
    worst
}
