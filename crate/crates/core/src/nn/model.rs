//! Residual embedding network with statistics pooling, the segment-feature
//! dense path, and the fused classifier.
//!
//! Wiring per variant:
//! - `baseline`: slot embedding → linear → 6 logits.
//! - `sf`, `sf_ctx`: embeddings of all `2n + 1` slots are concatenated with
//!   `relu(dense(flattened segment features))`, passed through a ReLU fusion
//!   layer, then a linear output layer.
//!
//! The convolutional stack is shared by all slots; placeholder slots skip it
//! and contribute an exact zero embedding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::Batch;
use super::layers::{self, BnCache, ConvSpec, FMap};
use super::real::Real;
use crate::error::{Error, Result};
use crate::tone::N_TONES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    Sf,
    SfCtx,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Sf => "sf",
            Variant::SfCtx => "sf_ctx",
        }
    }

    pub fn uses_segment_features(self) -> bool {
        self != Variant::Baseline
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "sf" => Ok(Variant::Sf),
            "sf_ctx" => Ok(Variant::SfCtx),
            other => Err(Error::InvalidConfig(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub context_size: usize,
    pub channels: Vec<usize>,
    pub blocks: Vec<usize>,
    /// Stride of the stem convolution along both time and frequency.
    pub stem_stride: usize,
    pub embedding_dim: usize,
    pub sf_dense_dim: usize,
    pub fusion_hidden_dim: usize,
    pub n_classes: usize,
    pub vocab_size: usize,
    pub n_mels: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::SfCtx,
            context_size: 1,
            channels: vec![8, 16, 32, 64],
            blocks: vec![1, 1, 1, 1],
            stem_stride: 1,
            embedding_dim: 128,
            sf_dense_dim: 32,
            fusion_hidden_dim: 128,
            n_classes: N_TONES,
            vocab_size: 0,
            n_mels: 64,
            bn_eps: 1e-5,
            bn_momentum: 0.9,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.channels.is_empty() || self.channels.len() != self.blocks.len() {
            return bad("channels and blocks must be non-empty and of equal length".into());
        }
        if self.channels.iter().chain(&self.blocks).any(|&v| v == 0) {
            return bad("channel and block counts must be positive".into());
        }
        if self.embedding_dim == 0 || self.n_mels == 0 || self.stem_stride == 0 {
            return bad("embedding_dim, n_mels and stem_stride must be positive".into());
        }
        if self.n_classes != N_TONES {
            return bad(format!("n_classes must be {N_TONES}"));
        }
        if self.variant.uses_segment_features() {
            if self.vocab_size == 0 {
                return bad("segment-feature variants need vocab_size > 0".into());
            }
            if self.sf_dense_dim == 0 || self.fusion_hidden_dim == 0 {
                return bad("sf_dense_dim and fusion_hidden_dim must be positive".into());
            }
        }
        if self.variant != Variant::SfCtx && self.context_size != 0 {
            return bad(format!("variant {} takes no context (context_size must be 0)", self.variant.as_str()));
        }
        if !(self.bn_eps > 0.0) || !(0.0..1.0).contains(&self.bn_momentum) {
            return bad("bn_eps must be positive and bn_momentum in [0, 1)".into());
        }
        Ok(())
    }

    pub fn slots(&self) -> usize {
        2 * self.context_size + 1
    }

    pub fn feat_len(&self) -> usize {
        1 + self.vocab_size
    }

    /// Frequency width after the convolutional stack.
    pub fn pooled_freq(&self) -> usize {
        let mut f = self.n_mels.div_ceil(self.stem_stride);
        for _ in 1..self.channels.len() {
            f = f.div_ceil(2);
        }
        f
    }

    pub fn pooled_dim(&self) -> usize {
        2 * self.channels.last().copied().unwrap_or(0) * self.pooled_freq()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    pub trainable: bool,
}

/// One gradient buffer per parameter (empty-valued for non-trainable ones).
pub type Grads<T> = Vec<Vec<T>>;

#[derive(Debug, Clone, Copy)]
struct ConvBn {
    spec: ConvSpec,
    w: usize,
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    a: ConvBn,
    b: ConvBn,
    proj: Option<ConvBn>,
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: usize,
    b: usize,
    inp: usize,
    out: usize,
}

enum Init {
    He(usize),
    Zero,
    One,
}

struct Builder<T> {
    params: Vec<Param<T>>,
    inits: Vec<Init>,
}

impl<T: Real> Builder<T> {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init, trainable: bool) -> usize {
        let len = shape.iter().product();
        self.params.push(Param { name, shape, data: vec![T::zero(); len], trainable });
        self.inits.push(init);
        self.params.len() - 1
    }

    fn conv_bn(&mut self, prefix: &str, spec: ConvSpec) -> ConvBn {
        let c = spec.cout;
        ConvBn {
            spec,
            w: self.add(
                format!("{prefix}.conv.w"),
                vec![c, spec.cin, spec.kernel, spec.kernel],
                Init::He(spec.cin * spec.kernel * spec.kernel),
                true,
            ),
            gamma: self.add(format!("{prefix}.bn.gamma"), vec![c], Init::One, true),
            beta: self.add(format!("{prefix}.bn.beta"), vec![c], Init::Zero, true),
            mean: self.add(format!("{prefix}.bn.running_mean"), vec![c], Init::Zero, false),
            var: self.add(format!("{prefix}.bn.running_var"), vec![c], Init::One, false),
        }
    }

    fn dense(&mut self, prefix: &str, inp: usize, out: usize) -> Dense {
        Dense {
            w: self.add(format!("{prefix}.w"), vec![out, inp], Init::He(inp), true),
            b: self.add(format!("{prefix}.b"), vec![out], Init::Zero, true),
            inp,
            out,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    cfg: ModelConfig,
    pub params: Vec<Param<T>>,
    stem: ConvBn,
    blocks: Vec<Block>,
    embed: Dense,
    sf: Option<Dense>,
    fusion: Option<Dense>,
    out: Dense,
}

/// Result of a forward pass. Training-mode passes keep the activations
/// needed by [`Model::backward`].
pub struct Forward<T> {
    pub logits: Vec<T>,
    pub n_samples: usize,
    cache: Option<Cache<T>>,
}

impl<T: Real> Forward<T> {
    /// Sign pattern of every ReLU output in a training-mode pass (empty for
    /// eval passes). Two parameter settings with equal patterns lie on the
    /// same smooth piece of the loss.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let Some(c) = &self.cache else { return Vec::new() };
        let maps = c.acts.iter().chain(c.blocks.iter().map(|b| &b.a_out)).flatten();
        maps.flat_map(|m| m.data.iter())
            .chain(&c.sf_h)
            .chain(&c.fuse_h)
            .map(|v| *v > T::zero())
            .collect()
    }
}

struct BlockCache<T> {
    a_bn: BnCache<T>,
    /// Post-ReLU output of the first conv.
    a_out: Vec<FMap<T>>,
    b_bn: BnCache<T>,
    proj_bn: Option<BnCache<T>>,
}

struct Cache<T> {
    items: Vec<(usize, usize)>,
    inputs: Vec<FMap<T>>,
    stem_bn: BnCache<T>,
    /// `acts[0]` is the stem output, `acts[k + 1]` the output of block `k`.
    acts: Vec<Vec<FMap<T>>>,
    blocks: Vec<BlockCache<T>>,
    pooled: Vec<T>,
    pooled_items: Vec<Vec<T>>,
    head_in: Vec<T>,
    sf_in: Vec<T>,
    sf_h: Vec<T>,
    fuse_h: Vec<T>,
}

impl<T: Real> Model<T> {
    /// Deterministic He-uniform initialization.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut b = Builder { params: Vec::new(), inits: Vec::new() };
        let c0 = cfg.channels[0];
        let stem = b.conv_bn("stem", ConvSpec { cin: 1, cout: c0, kernel: 3, stride: cfg.stem_stride });
        let mut blocks = Vec::new();
        let mut cin = c0;
        for (s, (&cout, &count)) in cfg.channels.iter().zip(&cfg.blocks).enumerate() {
            for k in 0..count {
                let stride = if s > 0 && k == 0 { 2 } else { 1 };
                let p = format!("stage{s}.block{k}");
                let a = b.conv_bn(&format!("{p}.a"), ConvSpec { cin, cout, kernel: 3, stride });
                let bb = b.conv_bn(&format!("{p}.b"), ConvSpec { cin: cout, cout, kernel: 3, stride: 1 });
                let proj = (stride != 1 || cin != cout)
                    .then(|| b.conv_bn(&format!("{p}.proj"), ConvSpec { cin, cout, kernel: 1, stride }));
                blocks.push(Block { a, b: bb, proj });
                cin = cout;
            }
        }
        let embed = b.dense("embed", cfg.pooled_dim(), cfg.embedding_dim);
        let (sf, fusion, out) = if cfg.variant.uses_segment_features() {
            let sf = b.dense("sf_dense", cfg.slots() * cfg.feat_len(), cfg.sf_dense_dim);
            let fusion = b.dense(
                "fusion",
                cfg.slots() * cfg.embedding_dim + cfg.sf_dense_dim,
                cfg.fusion_hidden_dim,
            );
            let out = b.dense("out", cfg.fusion_hidden_dim, cfg.n_classes);
            (Some(sf), Some(fusion), out)
        } else {
            (None, None, b.dense("out", cfg.embedding_dim, cfg.n_classes))
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (p, init) in b.params.iter_mut().zip(&b.inits) {
            match *init {
                Init::He(fan_in) => {
                    let limit = (6.0 / fan_in as f64).sqrt();
                    for v in &mut p.data {
                        *v = T::lit(rng.gen_range(-limit..limit));
                    }
                }
                Init::Zero => {}
                Init::One => p.data.iter_mut().for_each(|v| *v = T::one()),
            }
        }
        Ok(Self { cfg, params: b.params, stem, blocks, embed, sf, fusion, out })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn num_trainable(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.data.len()).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn zero_grads(&self) -> Grads<T> {
        self.params
            .iter()
            .map(|p| if p.trainable { vec![T::zero(); p.data.len()] } else { Vec::new() })
            .collect()
    }

    /// Same model in another precision.
    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            cfg: self.cfg.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|v| U::from_f64(v.to_f64().unwrap()).unwrap()).collect(),
                    trainable: p.trainable,
                })
                .collect(),
            stem: self.stem,
            blocks: self.blocks.clone(),
            embed: self.embed,
            sf: self.sf,
            fusion: self.fusion,
            out: self.out,
        }
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        let cfg = &self.cfg;
        if batch.n_slots != cfg.slots() {
            return Err(Error::ShapeError(format!(
                "batch has {} slots, model expects {}",
                batch.n_slots,
                cfg.slots()
            )));
        }
        if batch.n_bins != cfg.n_mels {
            return Err(Error::ShapeError(format!("batch has {} bins, model expects {}", batch.n_bins, cfg.n_mels)));
        }
        if cfg.variant.uses_segment_features() && batch.feat_len != cfg.feat_len() {
            return Err(Error::ShapeError(format!(
                "segment features have length {}, model expects {}",
                batch.feat_len,
                cfg.feat_len()
            )));
        }
        let center = cfg.context_size;
        for b in 0..batch.n_samples {
            if !batch.slot_mask[b * batch.n_slots + center] {
                return Err(Error::EmptySegment);
            }
        }
        Ok(())
    }

    fn conv_bn(&self, xs: &[FMap<T>], layer: &ConvBn, mode: Mode) -> (Vec<FMap<T>>, Option<BnCache<T>>) {
        let w = &self.params[layer.w].data;
        let ys: Vec<FMap<T>> = xs.iter().map(|x| layers::conv2d_forward(x, w, layer.spec)).collect();
        let gamma = &self.params[layer.gamma].data;
        let beta = &self.params[layer.beta].data;
        let eps = T::lit(self.cfg.bn_eps);
        match mode {
            Mode::Train => {
                let (out, cache) = layers::batchnorm_forward_train(&ys, gamma, beta, eps);
                (out, Some(cache))
            }
            Mode::Eval => {
                let out = layers::batchnorm_forward_eval(
                    ys,
                    gamma,
                    beta,
                    &self.params[layer.mean].data,
                    &self.params[layer.var].data,
                    eps,
                );
                (out, None)
            }
        }
    }

    pub fn forward(&self, batch: &Batch, mode: Mode) -> Result<Forward<T>> {
        self.check_batch(batch)?;
        let cfg = &self.cfg;
        let slots = batch.n_slots;
        let mut items = Vec::new();
        let mut inputs = Vec::new();
        for b in 0..batch.n_samples {
            for s in 0..slots {
                if batch.slot_mask[b * slots + s] {
                    let frames = batch.frame_mask[b * slots + s];
                    if frames == 0 {
                        return Err(Error::EmptySegment);
                    }
                    let data = batch.slot_frames(b, s).iter().map(|&v| T::lit(v as f64)).collect();
                    items.push((b, s));
                    inputs.push(FMap { c: 1, t: frames, f: batch.n_bins, data });
                }
            }
        }

        let train = mode == Mode::Train;
        let (mut h, stem_bn) = self.conv_bn(&inputs, &self.stem, mode);
        h.iter_mut().for_each(|x| layers::relu_inplace(&mut x.data));
        let mut acts = Vec::new();
        let mut block_caches = Vec::new();
        for block in &self.blocks {
            let (mut a, a_bn) = self.conv_bn(&h, &block.a, mode);
            a.iter_mut().for_each(|x| layers::relu_inplace(&mut x.data));
            let (mut y, b_bn) = self.conv_bn(&a, &block.b, mode);
            let proj_bn = match &block.proj {
                Some(p) => {
                    let (sc, pc) = self.conv_bn(&h, p, mode);
                    y.iter_mut().zip(&sc).for_each(|(y, s)| layers::add_inplace(y, s));
                    pc
                }
                None => {
                    y.iter_mut().zip(&h).for_each(|(y, s)| layers::add_inplace(y, s));
                    None
                }
            };
            y.iter_mut().for_each(|x| layers::relu_inplace(&mut x.data));
            if train {
                block_caches.push(BlockCache {
                    a_bn: a_bn.unwrap(),
                    a_out: a,
                    b_bn: b_bn.unwrap(),
                    proj_bn,
                });
                acts.push(std::mem::replace(&mut h, y));
            } else {
                h = y;
            }
        }

        let pdim = cfg.pooled_dim();
        let pooled_items: Vec<Vec<T>> = h.iter().map(layers::stats_pool_fmap).collect();
        let mut pooled = Vec::with_capacity(items.len() * pdim);
        for p in &pooled_items {
            pooled.extend_from_slice(p);
        }
        let emb = layers::dense_forward(
            &pooled,
            items.len(),
            &self.params[self.embed.w].data,
            &self.params[self.embed.b].data,
        );

        let e = cfg.embedding_dim;
        let n = batch.n_samples;
        let mut slot_emb = vec![T::zero(); n * slots * e];
        for (row, &(b, s)) in items.iter().enumerate() {
            slot_emb[(b * slots + s) * e..(b * slots + s + 1) * e].copy_from_slice(&emb[row * e..(row + 1) * e]);
        }

        let (logits, sf_in, sf_h, fuse_h) = match (&self.sf, &self.fusion) {
            (Some(sf), Some(fusion)) => {
                let sf_in: Vec<T> = batch.seg_feats.iter().map(|&v| T::lit(v as f64)).collect();
                let mut sf_h = layers::dense_forward(&sf_in, n, &self.params[sf.w].data, &self.params[sf.b].data);
                layers::relu_inplace(&mut sf_h);
                let se = slots * e;
                let fw = se + sf.out;
                let mut fuse_in = vec![T::zero(); n * fw];
                for b in 0..n {
                    fuse_in[b * fw..b * fw + se].copy_from_slice(&slot_emb[b * se..(b + 1) * se]);
                    fuse_in[b * fw + se..(b + 1) * fw].copy_from_slice(&sf_h[b * sf.out..(b + 1) * sf.out]);
                }
                let mut fuse_h =
                    layers::dense_forward(&fuse_in, n, &self.params[fusion.w].data, &self.params[fusion.b].data);
                layers::relu_inplace(&mut fuse_h);
                let logits =
                    layers::dense_forward(&fuse_h, n, &self.params[self.out.w].data, &self.params[self.out.b].data);
                (logits, sf_in, sf_h, fuse_h)
            }
            _ => {
                let logits =
                    layers::dense_forward(&slot_emb, n, &self.params[self.out.w].data, &self.params[self.out.b].data);
                (logits, Vec::new(), Vec::new(), Vec::new())
            }
        };
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericError("logits".into()));
        }

        let cache = train.then(|| {
            acts.push(h);
            Cache {
                items,
                inputs,
                stem_bn: stem_bn.unwrap(),
                acts,
                blocks: block_caches,
                pooled,
                pooled_items,
                head_in: slot_emb,
                sf_in,
                sf_h,
                fuse_h,
            }
        });
        Ok(Forward { logits, n_samples: n, cache })
    }

    /// Mean cross-entropy of a training-mode pass and the gradient of every
    /// trainable parameter.
    pub fn backward(&self, fwd: &Forward<T>, labels: &[usize]) -> Result<(T, Grads<T>)> {
        let cache = fwd
            .cache
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("backward needs a training-mode forward pass".into()))?;
        if labels.len() != fwd.n_samples {
            return Err(Error::ShapeError(format!("{} labels for {} samples", labels.len(), fwd.n_samples)));
        }
        let cfg = &self.cfg;
        let (loss, dlogits) = layers::softmax_cross_entropy(&fwd.logits, labels, cfg.n_classes)?;
        if !loss.is_finite() {
            return Err(Error::NumericError("loss".into()));
        }
        let mut g = self.zero_grads();
        let n = fwd.n_samples;
        let slots = cfg.slots();
        let e = cfg.embedding_dim;

        let d_slot_emb = match (&self.sf, &self.fusion) {
            (Some(sf), Some(fusion)) => {
                let mut dh = dense_back(self, &mut g, &self.out, &cache.fuse_h, n, &dlogits);
                layers::relu_backward_inplace(&mut dh, &cache.fuse_h);
                let se = slots * e;
                let fw = se + sf.out;
                let mut fuse_in = vec![T::zero(); n * fw];
                for b in 0..n {
                    fuse_in[b * fw..b * fw + se].copy_from_slice(&cache.head_in[b * se..(b + 1) * se]);
                    fuse_in[b * fw + se..(b + 1) * fw].copy_from_slice(&cache.sf_h[b * sf.out..(b + 1) * sf.out]);
                }
                let dfuse = dense_back(self, &mut g, fusion, &fuse_in, n, &dh);
                let mut d_slot = vec![T::zero(); n * se];
                let mut dsf = vec![T::zero(); n * sf.out];
                for b in 0..n {
                    d_slot[b * se..(b + 1) * se].copy_from_slice(&dfuse[b * fw..b * fw + se]);
                    dsf[b * sf.out..(b + 1) * sf.out].copy_from_slice(&dfuse[b * fw + se..(b + 1) * fw]);
                }
                layers::relu_backward_inplace(&mut dsf, &cache.sf_h);
                dense_back(self, &mut g, sf, &cache.sf_in, n, &dsf);
                d_slot
            }
            _ => dense_back(self, &mut g, &self.out, &cache.head_in, n, &dlogits),
        };

        let rows = cache.items.len();
        let mut demb = vec![T::zero(); rows * e];
        for (row, &(b, s)) in cache.items.iter().enumerate() {
            demb[row * e..(row + 1) * e].copy_from_slice(&d_slot_emb[(b * slots + s) * e..(b * slots + s + 1) * e]);
        }
        let dpooled = dense_back(self, &mut g, &self.embed, &cache.pooled, rows, &demb);
        let pdim = cfg.pooled_dim();
        let last = cache.acts.last().expect("stem output is cached");
        let mut dh: Vec<FMap<T>> = last
            .iter()
            .zip(&cache.pooled_items)
            .enumerate()
            .map(|(row, (x, p))| layers::stats_pool_fmap_backward(x, p, &dpooled[row * pdim..(row + 1) * pdim]))
            .collect();

        for (k, block) in self.blocks.iter().enumerate().rev() {
            let bc = &cache.blocks[k];
            let x = &cache.acts[k];
            let y = &cache.acts[k + 1];
            dh.iter_mut().zip(y).for_each(|(d, y)| layers::relu_backward_inplace(&mut d.data, &y.data));
            let mut dx = match (&block.proj, &bc.proj_bn) {
                (Some(p), Some(pbn)) => conv_bn_back(self, &mut g, p, pbn, x, &dh),
                _ => dh.clone(),
            };
            let mut da = conv_bn_back(self, &mut g, &block.b, &bc.b_bn, &bc.a_out, &dh);
            da.iter_mut().zip(&bc.a_out).for_each(|(d, a)| layers::relu_backward_inplace(&mut d.data, &a.data));
            let dxa = conv_bn_back(self, &mut g, &block.a, &bc.a_bn, x, &da);
            dx.iter_mut().zip(&dxa).for_each(|(d, o)| layers::add_inplace(d, o));
            dh = dx;
        }
        dh.iter_mut()
            .zip(&cache.acts[0])
            .for_each(|(d, y)| layers::relu_backward_inplace(&mut d.data, &y.data));
        conv_bn_back(self, &mut g, &self.stem, &cache.stem_bn, &cache.inputs, &dh);
        Ok((loss, g))
    }

    /// Fold the batch statistics of a training-mode pass into the running
    /// estimates: `running ← m·running + (1 − m)·batch`.
    pub fn update_running_stats(&mut self, fwd: &Forward<T>) {
        let Some(cache) = &fwd.cache else { return };
        let m = T::lit(self.cfg.bn_momentum);
        let mut pairs: Vec<(ConvBn, &BnCache<T>)> = vec![(self.stem, &cache.stem_bn)];
        for (block, bc) in self.blocks.iter().zip(&cache.blocks) {
            pairs.push((block.a, &bc.a_bn));
            pairs.push((block.b, &bc.b_bn));
            if let (Some(p), Some(pbn)) = (block.proj, &bc.proj_bn) {
                pairs.push((p, pbn));
            }
        }
        for (layer, bn) in pairs {
            let unbias = if bn.count > 1 {
                T::from_usize(bn.count).unwrap() / T::from_usize(bn.count - 1).unwrap()
            } else {
                T::one()
            };
            for ch in 0..bn.mean.len() {
                let rm = &mut self.params[layer.mean].data[ch];
                *rm = m * *rm + (T::one() - m) * bn.mean[ch];
                let rv = &mut self.params[layer.var].data[ch];
                *rv = m * *rv + (T::one() - m) * bn.var[ch] * unbias;
            }
        }
    }

    /// Convenience: training-mode forward, loss and gradients.
    pub fn loss_and_grads(&self, batch: &Batch) -> Result<(T, Grads<T>, Forward<T>)> {
        let fwd = self.forward(batch, Mode::Train)?;
        let (loss, grads) = self.backward(&fwd, &batch.labels)?;
        Ok((loss, grads, fwd))
    }

    /// Training-mode loss only (batch statistics, no state change).
    pub fn train_loss(&self, batch: &Batch) -> Result<T> {
        let fwd = self.forward(batch, Mode::Train)?;
        Ok(layers::softmax_cross_entropy(&fwd.logits, &batch.labels, self.cfg.n_classes)?.0)
    }

    pub fn predict(&self, batch: &Batch) -> Result<Vec<usize>> {
        let fwd = self.forward(batch, Mode::Eval)?;
        Ok(argmax_rows(&fwd.logits, self.cfg.n_classes))
    }
}

pub fn argmax_rows<T: Real>(logits: &[T], classes: usize) -> Vec<usize> {
    logits
        .chunks(classes)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

fn dense_back<T: Real>(model: &Model<T>, g: &mut Grads<T>, d: &Dense, x: &[T], rows: usize, dy: &[T]) -> Vec<T> {
    let mut dw = std::mem::take(&mut g[d.w]);
    let mut db = std::mem::take(&mut g[d.b]);
    let dx = layers::dense_backward(x, rows, &model.params[d.w].data, dy, &mut dw, &mut db);
    g[d.w] = dw;
    g[d.b] = db;
    debug_assert_eq!(dx.len(), rows * d.inp);
    dx
}

fn conv_bn_back<T: Real>(
    model: &Model<T>,
    g: &mut Grads<T>,
    layer: &ConvBn,
    bn: &BnCache<T>,
    inputs: &[FMap<T>],
    dy: &[FMap<T>],
) -> Vec<FMap<T>> {
    let mut dgamma = std::mem::take(&mut g[layer.gamma]);
    let mut dbeta = std::mem::take(&mut g[layer.beta]);
    let dconv = layers::batchnorm_backward(dy, bn, &model.params[layer.gamma].data, &mut dgamma, &mut dbeta);
    g[layer.gamma] = dgamma;
    g[layer.beta] = dbeta;
    let mut dw = std::mem::take(&mut g[layer.w]);
    let w = &model.params[layer.w].data;
    let dx = inputs
        .iter()
        .zip(&dconv)
        .map(|(x, d)| layers::conv2d_backward(x, d, w, layer.spec, &mut dw))
        .collect();
    g[layer.w] = dw;
    dx
}
