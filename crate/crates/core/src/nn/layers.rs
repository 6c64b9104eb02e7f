//! Layer kernels with hand-written reverse passes.
//!
//! Convolutional activations are ragged: each item (one context slot of one
//! sample) keeps its own frame count, so no computation is spent on padding
//! and padded frames cannot leak into valid ones.

use super::real::{matmul, Real};
use crate::error::{Error, Result};

/// Feature map laid out `[channel][time][freq]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FMap<T> {
    pub c: usize,
    pub t: usize,
    pub f: usize,
    pub data: Vec<T>,
}

impl<T: Real> FMap<T> {
    pub fn zeros(c: usize, t: usize, f: usize) -> Self {
        Self { c, t, f, data: vec![T::zero(); c * t * f] }
    }

    pub fn plane(&self) -> usize {
        self.t * self.f
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.c == other.c && self.t == other.t && self.f == other.f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn out_len(&self, n: usize) -> usize {
        (n + 2 * self.pad() - self.kernel) / self.stride + 1
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.kernel * self.kernel
    }

    fn patch(&self) -> usize {
        self.cin * self.kernel * self.kernel
    }
}

/// Output positions `o` whose input index `o·stride + tap − pad` lies in
/// `[0, n)`, as a half-open range.
fn valid_range(n: usize, out: usize, stride: usize, tap: usize, pad: usize) -> (usize, usize) {
    // o·s + tap ≥ pad  and  o·s + tap < n + pad
    let lo = pad.saturating_sub(tap).div_ceil(stride);
    let hi = if n + pad > tap { (n + pad - tap).div_ceil(stride).min(out) } else { 0 };
    (lo.min(hi), hi)
}

fn im2col<T: Real>(x: &FMap<T>, spec: ConvSpec, to: usize, fo: usize) -> Vec<T> {
    let k = spec.kernel;
    let pad = spec.pad();
    let s = spec.stride;
    let cols = to * fo;
    let mut out = vec![T::zero(); spec.patch() * cols];
    for ci in 0..spec.cin {
        let plane = &x.data[ci * x.plane()..(ci + 1) * x.plane()];
        for ki in 0..k {
            let (t_lo, t_hi) = valid_range(x.t, to, s, ki, pad);
            for kj in 0..k {
                let (f_lo, f_hi) = valid_range(x.f, fo, s, kj, pad);
                let row = (ci * k + ki) * k + kj;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for ot in t_lo..t_hi {
                    let it = ot * s + ki - pad;
                    let src = &plane[it * x.f..(it + 1) * x.f];
                    let drow = &mut dst[ot * fo + f_lo..ot * fo + f_hi];
                    if s == 1 {
                        let j0 = f_lo + kj - pad;
                        drow.copy_from_slice(&src[j0..j0 + drow.len()]);
                    } else {
                        for (d, of) in drow.iter_mut().zip(f_lo..) {
                            *d = src[of * s + kj - pad];
                        }
                    }
                }
            }
        }
    }
    out
}

fn col2im<T: Real>(cols: &[T], spec: ConvSpec, dx: &mut FMap<T>, to: usize, fo: usize) {
    let k = spec.kernel;
    let pad = spec.pad();
    let s = spec.stride;
    let n = to * fo;
    let (t, f) = (dx.t, dx.f);
    for ci in 0..spec.cin {
        let plane = &mut dx.data[ci * t * f..(ci + 1) * t * f];
        for ki in 0..k {
            let (t_lo, t_hi) = valid_range(t, to, s, ki, pad);
            for kj in 0..k {
                let (f_lo, f_hi) = valid_range(f, fo, s, kj, pad);
                let row = (ci * k + ki) * k + kj;
                let src = &cols[row * n..(row + 1) * n];
                for ot in t_lo..t_hi {
                    let it = ot * s + ki - pad;
                    let drow = &mut plane[it * f..(it + 1) * f];
                    let srow = &src[ot * fo + f_lo..ot * fo + f_hi];
                    if s == 1 {
                        let j0 = f_lo + kj - pad;
                        for (d, &v) in drow[j0..j0 + srow.len()].iter_mut().zip(srow) {
                            *d += v;
                        }
                    } else {
                        for (&v, of) in srow.iter().zip(f_lo..) {
                            drow[of * s + kj - pad] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Bias-free 2-D convolution with "same" zero padding. `w` is
/// `[cout][cin][k][k]`.
pub fn conv2d_forward<T: Real>(x: &FMap<T>, w: &[T], spec: ConvSpec) -> FMap<T> {
    debug_assert_eq!(x.c, spec.cin);
    let to = spec.out_len(x.t);
    let fo = spec.out_len(x.f);
    let mut y = FMap::zeros(spec.cout, to, fo);
    if spec.kernel == 1 && spec.stride == 1 {
        matmul(w, false, &x.data, false, &mut y.data, spec.cout, spec.cin, to * fo, false);
    } else {
        let cols = im2col(x, spec, to, fo);
        matmul(w, false, &cols, false, &mut y.data, spec.cout, spec.patch(), to * fo, false);
    }
    y
}

/// Accumulates the weight gradient into `dw` and returns the input gradient.
pub fn conv2d_backward<T: Real>(x: &FMap<T>, dy: &FMap<T>, w: &[T], spec: ConvSpec, dw: &mut [T]) -> FMap<T> {
    let (to, fo) = (dy.t, dy.f);
    let n = to * fo;
    let mut dx = FMap::zeros(x.c, x.t, x.f);
    if spec.kernel == 1 && spec.stride == 1 {
        matmul(&dy.data, false, &x.data, true, dw, spec.cout, n, spec.cin, true);
        matmul(w, true, &dy.data, false, &mut dx.data, spec.cin, spec.cout, n, false);
    } else {
        let cols = im2col(x, spec, to, fo);
        matmul(&dy.data, false, &cols, true, dw, spec.cout, n, spec.patch(), true);
        let mut dcols = vec![T::zero(); spec.patch() * n];
        matmul(w, true, &dy.data, false, &mut dcols, spec.patch(), spec.cout, n, false);
        col2im(&dcols, spec, &mut dx, to, fo);
    }
    dx
}

/// Saved state of a training-mode batch-norm pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub xhat: Vec<FMap<T>>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    /// Biased batch variance.
    pub var: Vec<T>,
    pub count: usize,
}

/// Per-channel batch normalization over every position of every item.
pub fn batchnorm_forward_train<T: Real>(
    xs: &[FMap<T>],
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> (Vec<FMap<T>>, BnCache<T>) {
    let c = gamma.len();
    let count: usize = xs.iter().map(|x| x.plane()).sum();
    let nf = T::from_usize(count.max(1)).unwrap();
    let mut mean = vec![T::zero(); c];
    for x in xs {
        for (m, chunk) in mean.iter_mut().zip(x.data.chunks_exact(x.plane().max(1))) {
            *m += sum(chunk);
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut var = vec![T::zero(); c];
    for x in xs {
        for ((v, &m), chunk) in var.iter_mut().zip(&mean).zip(x.data.chunks_exact(x.plane().max(1))) {
            *v += sum_sq_dev(chunk, m);
        }
    }
    var.iter_mut().for_each(|v| *v /= nf);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

    let mut xhat = Vec::with_capacity(xs.len());
    let mut ys = Vec::with_capacity(xs.len());
    for x in xs {
        let p = x.plane().max(1);
        let mut h = x.clone();
        let mut y = x.clone();
        for ch in 0..c {
            let (m, is, g, b) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
            let hs = &mut h.data[ch * p..(ch + 1) * p];
            let ysl = &mut y.data[ch * p..(ch + 1) * p];
            for (hv, yv) in hs.iter_mut().zip(ysl.iter_mut()) {
                let v = (*hv - m) * is;
                *hv = v;
                *yv = g * v + b;
            }
        }
        xhat.push(h);
        ys.push(y);
    }
    (ys, BnCache { xhat, inv_std, mean, var, count })
}

/// Reductions accumulate in 64-bit; single-precision sums over a whole
/// batch otherwise dominate the error of the batch-norm backward pass.
fn sum<T: Real>(v: &[T]) -> T {
    T::from_f64(v.iter().map(|x| x.to_f64().unwrap()).sum::<f64>()).unwrap()
}

fn sum_sq_dev<T: Real>(v: &[T], m: T) -> T {
    let m = m.to_f64().unwrap();
    T::from_f64(v.iter().map(|x| (x.to_f64().unwrap() - m).powi(2)).sum::<f64>()).unwrap()
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    T::from_f64(a.iter().zip(b).map(|(x, y)| x.to_f64().unwrap() * y.to_f64().unwrap()).sum::<f64>()).unwrap()
}

pub fn batchnorm_forward_eval<T: Real>(
    xs: Vec<FMap<T>>,
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
    eps: T,
) -> Vec<FMap<T>> {
    let scale: Vec<T> = gamma.iter().zip(running_var).map(|(&g, &v)| g / (v + eps).sqrt()).collect();
    let shift: Vec<T> = beta.iter().zip(running_mean).zip(&scale).map(|((&b, &m), &s)| b - m * s).collect();
    xs.into_iter()
        .map(|mut x| {
            let p = x.plane();
            for (ch, chunk) in x.data.chunks_mut(p.max(1)).enumerate().take(gamma.len()) {
                for v in chunk {
                    *v = *v * scale[ch] + shift[ch];
                }
            }
            x
        })
        .collect()
}

/// Accumulates into `dgamma`/`dbeta` and returns the input gradients.
pub fn batchnorm_backward<T: Real>(
    dys: &[FMap<T>],
    cache: &BnCache<T>,
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Vec<FMap<T>> {
    let c = gamma.len();
    let mut sum_dy = vec![T::zero(); c];
    let mut sum_dy_xhat = vec![T::zero(); c];
    for (dy, h) in dys.iter().zip(&cache.xhat) {
        let p = dy.plane().max(1);
        for ch in 0..c {
            let d = &dy.data[ch * p..(ch + 1) * p];
            sum_dy[ch] += sum(d);
            sum_dy_xhat[ch] += dot(d, &h.data[ch * p..(ch + 1) * p]);
        }
    }
    for ch in 0..c {
        dgamma[ch] += sum_dy_xhat[ch];
        dbeta[ch] += sum_dy[ch];
    }
    let n = cache.count.max(1) as f64;
    dys.iter()
        .zip(&cache.xhat)
        .map(|(dy, h)| {
            let p = dy.plane().max(1);
            let mut dx = dy.clone();
            for ch in 0..c {
                let k = (gamma[ch] * cache.inv_std[ch]).to_f64().unwrap() / n;
                let a = sum_dy[ch].to_f64().unwrap();
                let b = sum_dy_xhat[ch].to_f64().unwrap();
                for (d, &hv) in dx.data[ch * p..(ch + 1) * p].iter_mut().zip(&h.data[ch * p..(ch + 1) * p]) {
                    let v = k * (n * d.to_f64().unwrap() - a - hv.to_f64().unwrap() * b);
                    *d = T::from_f64(v).unwrap();
                }
            }
            dx
        })
        .collect()
}

pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Masks `dy` in place where the ReLU output `y` was clamped.
pub fn relu_backward_inplace<T: Real>(dy: &mut [T], y: &[T]) {
    for (d, &o) in dy.iter_mut().zip(y) {
        if o <= T::zero() {
            *d = T::zero();
        }
    }
}

pub fn add_inplace<T: Real>(acc: &mut FMap<T>, other: &FMap<T>) {
    debug_assert!(acc.same_shape(other));
    for (a, &b) in acc.data.iter_mut().zip(&other.data) {
        *a += b;
    }
}

pub const POOL_EPS: f64 = 1e-5;

/// Mean and standard deviation over the first `valid` rows of a
/// `rows × channels` matrix. Rows beyond `valid` are ignored.
pub fn stats_pool<T: Real>(frames: &[T], rows: usize, channels: usize, valid: usize) -> Result<Vec<T>> {
    if valid == 0 {
        return Err(Error::EmptySegment);
    }
    if valid > rows || frames.len() < rows * channels {
        return Err(Error::ShapeError(format!(
            "{valid} valid rows of a {rows}x{channels} matrix backed by {} values",
            frames.len()
        )));
    }
    let n = T::from_usize(valid).unwrap();
    let eps = T::lit(POOL_EPS);
    let mut out = vec![T::zero(); 2 * channels];
    for ch in 0..channels {
        let mean = (0..valid).map(|r| frames[r * channels + ch]).sum::<T>() / n;
        let var = (0..valid).map(|r| (frames[r * channels + ch] - mean).powi(2)).sum::<T>() / n;
        out[ch] = mean;
        out[channels + ch] = (var + eps).sqrt();
    }
    Ok(out)
}

/// Statistics pooling of a feature map over time; output is
/// `[means (c, f)..., stds (c, f)...]`.
pub fn stats_pool_fmap<T: Real>(x: &FMap<T>) -> Vec<T> {
    let d = x.c * x.f;
    let n = T::from_usize(x.t).unwrap();
    let eps = T::lit(POOL_EPS);
    let mut out = vec![T::zero(); 2 * d];
    for ch in 0..x.c {
        let plane = &x.data[ch * x.plane()..(ch + 1) * x.plane()];
        for fi in 0..x.f {
            let mut s = T::zero();
            for ti in 0..x.t {
                s += plane[ti * x.f + fi];
            }
            let mean = s / n;
            let mut v = T::zero();
            for ti in 0..x.t {
                let e = plane[ti * x.f + fi] - mean;
                v += e * e;
            }
            out[ch * x.f + fi] = mean;
            out[d + ch * x.f + fi] = (v / n + eps).sqrt();
        }
    }
    out
}

pub fn stats_pool_fmap_backward<T: Real>(x: &FMap<T>, pooled: &[T], dpooled: &[T]) -> FMap<T> {
    let d = x.c * x.f;
    let n = T::from_usize(x.t).unwrap();
    let mut dx = FMap::zeros(x.c, x.t, x.f);
    for ch in 0..x.c {
        let p = ch * x.plane();
        for fi in 0..x.f {
            let j = ch * x.f + fi;
            let (mean, std) = (pooled[j], pooled[d + j]);
            let dm = dpooled[j] / n;
            let ds = dpooled[d + j] / (n * std);
            for ti in 0..x.t {
                let i = p + ti * x.f + fi;
                dx.data[i] = dm + ds * (x.data[i] - mean);
            }
        }
    }
    dx
}

/// `y (rows × out) = x (rows × in) · wᵀ + b`, with `w` stored `[out][in]`.
pub fn dense_forward<T: Real>(x: &[T], rows: usize, w: &[T], b: &[T]) -> Vec<T> {
    let out = b.len();
    let inp = w.len() / out.max(1);
    let mut y = vec![T::zero(); rows * out];
    for r in 0..rows {
        y[r * out..(r + 1) * out].copy_from_slice(b);
    }
    matmul(x, false, w, true, &mut y, rows, inp, out, true);
    y
}

/// Accumulates `dw`, `db`; returns `dx`.
pub fn dense_backward<T: Real>(x: &[T], rows: usize, w: &[T], dy: &[T], dw: &mut [T], db: &mut [T]) -> Vec<T> {
    let out = db.len();
    let inp = w.len() / out.max(1);
    matmul(dy, true, x, false, dw, out, rows, inp, true);
    for r in 0..rows {
        for (g, &d) in db.iter_mut().zip(&dy[r * out..(r + 1) * out]) {
            *g += d;
        }
    }
    let mut dx = vec![T::zero(); rows * inp];
    matmul(dy, false, w, false, &mut dx, rows, out, inp, false);
    dx
}

/// Row-wise softmax.
pub fn softmax<T: Real>(logits: &[T], classes: usize) -> Vec<T> {
    let mut p = logits.to_vec();
    for row in p.chunks_mut(classes) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut s = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    p
}

/// Mean cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Real>(logits: &[T], labels: &[usize], classes: usize) -> Result<(T, Vec<T>)> {
    if logits.len() != labels.len() * classes {
        return Err(Error::ShapeError(format!("{} logits for {} labels", logits.len(), labels.len())));
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::BadLabel(bad));
    }
    let b = T::from_usize(labels.len()).unwrap();
    let mut grad = softmax(logits, classes);
    let mut loss = T::zero();
    for (row, (&label, logit_row)) in labels.iter().zip(logits.chunks(classes)).enumerate() {
        let m = logit_row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + logit_row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
        loss += lse - logit_row[label];
        let g = &mut grad[row * classes..(row + 1) * classes];
        g[label] -= T::one();
        g.iter_mut().for_each(|v| *v /= b);
    }
    Ok((loss / b, grad))
}
