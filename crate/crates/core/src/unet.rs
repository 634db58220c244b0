//! Encoder-decoder network with concatenated skip connections, its training
//! loop and single-image prediction.

use std::fmt;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::dataset::{make_pair, plan_epoch, PairOptions, TrainingPair, DEFAULT_BATCH_SIZE};
use crate::error::{Error, Result};
use crate::image::{luminance, ColorImage, LdrImage, RadianceMap, DEFAULT_EPS};
use crate::nn::{
    adam_step, batchnorm_backward, batchnorm_eval, batchnorm_train, concat_channels, conv2d, conv2d_backward, he_init,
    maxpool2, maxpool2_backward, mse_loss, relu, relu_backward, sigmoid, sigmoid_backward, split_channels,
    transposed_conv2d, transposed_conv2d_backward, AdamConfig, BatchNormCache, Moments, RunningStats, Tensor,
    BN_MOMENTUM,
};
use crate::reinhard::{inverse_tonemap, DEFAULT_KEY, SATURATION_DELTA};
use crate::rng;
use crate::scalar::Scalar;

/// Network shape. Channel widths are `base_channels · 2^i` scaled by
/// `scale_num / scale_den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UNetConfig {
    pub base_channels: u32,
    /// Number of pooling stages.
    pub depth: u32,
    pub input_size: u32,
    pub scale_num: u32,
    pub scale_den: u32,
}

impl UNetConfig {
    /// Full-size network: 32 base channels, 5 stages, 512 px input.
    pub fn full() -> Self {
        UNetConfig { base_channels: 32, depth: 5, input_size: 512, scale_num: 1, scale_den: 1 }
    }

    /// Reduced network for quick experiments: 1/8 width, 64 px input.
    pub fn desk() -> Self {
        UNetConfig { input_size: 64, scale_num: 1, scale_den: 8, ..Self::full() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("{self}: {m}")));
        if self.base_channels == 0 {
            return bad("base_channels must be at least 1".into());
        }
        if self.depth == 0 || self.depth > 12 {
            return bad("depth must be in 1..=12".into());
        }
        if self.scale_num == 0 || self.scale_den == 0 {
            return bad("channel scale must be a positive ratio".into());
        }
        let step = 1u32 << self.depth;
        if self.input_size == 0 || !self.input_size.is_multiple_of(step) {
            return bad(format!("input_size must be a positive multiple of {step}"));
        }
        Ok(())
    }

    /// Width of encoder level `i` (level `depth` is the bottleneck).
    pub fn level_width(&self, i: u32) -> usize {
        let full = self.base_channels as u64 * (1u64 << i) * self.scale_num as u64;
        let den = self.scale_den as u64;
        ((full + den / 2) / den).max(1) as usize
    }

    /// Block widths from the first encoder block through the bottleneck to
    /// the last decoder block.
    pub fn widths(&self) -> Vec<usize> {
        let down: Vec<usize> = (0..=self.depth).map(|i| self.level_width(i)).collect();
        let mut all = down.clone();
        all.extend(down.iter().rev().skip(1));
        all
    }
}

impl fmt::Display for UNetConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "base={} depth={} size={} scale={}/{}",
            self.base_channels, self.depth, self.input_size, self.scale_num, self.scale_den
        )
    }
}

/// One named parameter tensor. Vectors are stored as `[len, 1, 1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub value: Tensor<T>,
    /// Running statistics are state, not optimized.
    pub trainable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ConvIdx {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BnIdx {
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BlockIdx {
    c1: ConvIdx,
    n1: BnIdx,
    c2: ConvIdx,
    n2: BnIdx,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    enc: Vec<BlockIdx>,
    mid: BlockIdx,
    up: Vec<ConvIdx>,
    dec: Vec<BlockIdx>,
    out: ConvIdx,
}

struct Builder<'r, T> {
    params: Vec<Param<T>>,
    rng: &'r mut rng::Rng,
}

impl<T: Scalar> Builder<'_, T> {
    fn push(&mut self, name: String, dims: Vec<usize>, value: Tensor<T>, trainable: bool) -> usize {
        self.params.push(Param { name, dims, value, trainable });
        self.params.len() - 1
    }

    fn vector(&mut self, name: String, len: usize, v: T, trainable: bool) -> usize {
        self.push(name, vec![len], Tensor::filled([len, 1, 1, 1], v), trainable)
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize) -> ConvIdx {
        let shape = [cout, cin, 3, 3];
        let w = he_init(shape, cin * 9, self.rng);
        let w = self.push(format!("{name}.weight"), shape.to_vec(), w, true);
        let b = self.vector(format!("{name}.bias"), cout, T::zero(), true);
        ConvIdx { w, b }
    }

    fn up(&mut self, name: &str, cin: usize, cout: usize) -> ConvIdx {
        let shape = [cin, cout, 4, 4];
        let w = he_init(shape, cin * 16, self.rng);
        let w = self.push(format!("{name}.weight"), shape.to_vec(), w, true);
        let b = self.vector(format!("{name}.bias"), cout, T::zero(), true);
        ConvIdx { w, b }
    }

    fn bn(&mut self, name: &str, c: usize) -> BnIdx {
        BnIdx {
            gamma: self.vector(format!("{name}.gamma"), c, T::one(), true),
            beta: self.vector(format!("{name}.beta"), c, T::zero(), true),
            mean: self.vector(format!("{name}.running_mean"), c, T::zero(), false),
            var: self.vector(format!("{name}.running_var"), c, T::one(), false),
        }
    }

    fn block(&mut self, name: &str, cin: usize, cout: usize) -> BlockIdx {
        BlockIdx {
            c1: self.conv(&format!("{name}.conv1"), cin, cout),
            n1: self.bn(&format!("{name}.bn1"), cout),
            c2: self.conv(&format!("{name}.conv2"), cout, cout),
            n2: self.bn(&format!("{name}.bn2"), cout),
        }
    }
}

fn layout<T: Scalar>(config: &UNetConfig, rng: &mut rng::Rng) -> (Vec<Param<T>>, Layout) {
    let mut b = Builder { params: Vec::new(), rng };
    let depth = config.depth;
    let mut enc = Vec::new();
    let mut cin = 3;
    for i in 0..depth {
        let w = config.level_width(i);
        enc.push(b.block(&format!("enc{i}"), cin, w));
        cin = w;
    }
    let mid = b.block("mid", cin, config.level_width(depth));
    let mut up = Vec::new();
    let mut dec = Vec::new();
    let mut below = config.level_width(depth);
    for j in 0..depth {
        let level = depth - 1 - j;
        let w = config.level_width(level);
        up.push(b.up(&format!("up{j}"), below, w));
        dec.push(b.block(&format!("dec{j}"), 2 * w, w));
        below = w;
    }
    let out = b.conv("out", below, 3);
    (b.params, Layout { enc, mid, up, dec, out })
}

/// Activations kept from a training-mode forward pass.
struct BlockCache<T> {
    x: Tensor<T>,
    a1: Tensor<T>,
    bn1: BatchNormCache<T>,
    h1: Tensor<T>,
    a2: Tensor<T>,
    bn2: BatchNormCache<T>,
}

struct UpCache<T> {
    input: Tensor<T>,
    pre: Tensor<T>,
    skip_channels: usize,
}

pub struct ForwardCache<T> {
    enc: Vec<BlockCache<T>>,
    pool: Vec<([usize; 4], Vec<usize>)>,
    mid: BlockCache<T>,
    up: Vec<UpCache<T>>,
    dec: Vec<BlockCache<T>>,
    out_input: Tensor<T>,
    output: Tensor<T>,
}

impl<T> ForwardCache<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }
}

/// Per-epoch progress passed to the training callback.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    /// Key value of the Reinhard targets.
    pub a: f64,
    pub seed: u64,
    pub eps: f64,
    pub quantize_x: bool,
    pub adam: AdamConfig,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            epochs: 1,
            batch_size: DEFAULT_BATCH_SIZE,
            a: DEFAULT_KEY,
            seed: 0,
            eps: DEFAULT_EPS,
            quantize_x: false,
            adam: AdamConfig::default(),
        }
    }
}

/// Where training pairs come from.
#[derive(Debug, Clone, Copy)]
pub enum PairSource<'a> {
    /// Fresh random pairs are drawn from each image every epoch.
    Images(&'a [(String, RadianceMap<f32>)]),
    /// A fixed, pre-generated set.
    Pairs(&'a [TrainingPair<f32>]),
}

impl PairSource<'_> {
    fn len(&self) -> usize {
        match self {
            PairSource::Images(v) => v.len(),
            PairSource::Pairs(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub iterations: usize,
    pub wall_time: Duration,
    pub seed: u64,
    pub config: UNetConfig,
}

impl TrainReport {
    /// `key=value` lines, one per epoch plus a summary. Wall time is left
    /// out so that seeded runs produce identical text.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, l) in self.epoch_losses.iter().enumerate() {
            s.push_str(&format!("event=epoch epoch={} mean_loss={l:.9}\n", i + 1));
        }
        s.push_str(&format!(
            "event=summary epochs={} iterations={} seed={} config=\"{}\"\n",
            self.epoch_losses.len(),
            self.iterations,
            self.seed,
            self.config
        ));
        s
    }
}

/// Gradients for every parameter, zero-filled for non-trainable ones.
pub type Grads<T> = Vec<Vec<T>>;

#[derive(Debug, Clone, PartialEq)]
pub struct UNet<T> {
    config: UNetConfig,
    params: Vec<Param<T>>,
    layout: Layout,
}

impl<T: Scalar> UNet<T> {
    /// He-initialized network. Running BN statistics start at zero mean and
    /// unit variance so that evaluation works before any training.
    pub fn build(config: UNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, &[2]);
        let (params, layout) = layout::<T>(&config, &mut rng);
        Ok(UNet { config, params, layout })
    }

    /// Reassembles a network from stored parameters, checking that names and
    /// shapes match what `config` builds.
    pub fn from_params(config: UNetConfig, params: Vec<(String, Vec<usize>, Vec<T>)>) -> Result<Self> {
        let template = Self::build(config, 0)?;
        if template.params.len() != params.len() {
            return Err(Error::InvalidConfig(format!(
                "{config} has {} tensors, got {}",
                template.params.len(),
                params.len()
            )));
        }
        let mut out = Vec::with_capacity(params.len());
        for (t, (name, dims, data)) in template.params.iter().zip(params) {
            if t.name != name || t.dims != dims {
                return Err(Error::InvalidConfig(format!(
                    "tensor {name} {dims:?} does not match expected {} {:?} for {config}",
                    t.name, t.dims
                )));
            }
            let value = Tensor::new(t.value.shape(), data)?;
            out.push(Param { value, ..t.clone() });
        }
        Ok(UNet { config, params: out, layout: template.layout })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    /// `name dims` per tensor, in storage order.
    pub fn manifest(&self) -> Vec<(String, Vec<usize>)> {
        self.params.iter().map(|p| (p.name.clone(), p.dims.clone())).collect()
    }

    pub fn cast<U: Scalar>(&self) -> UNet<U> {
        UNet {
            config: self.config,
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    dims: p.dims.clone(),
                    value: p.value.cast(),
                    trainable: p.trainable,
                })
                .collect(),
            layout: self.layout.clone(),
        }
    }

    fn p(&self, i: usize) -> &Tensor<T> {
        &self.params[i].value
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let step = 1usize << self.config.depth;
        let [_, c, h, w] = x.shape();
        if c != 3 || h % step != 0 || w % step != 0 {
            return Err(Error::shape(
                "unet",
                format!("input {:?} needs 3 channels and sides divisible by {step}", x.shape()),
            ));
        }
        Ok(())
    }

    fn block_eval(&self, b: &BlockIdx, x: &Tensor<T>) -> Result<Tensor<T>> {
        let bn = |t: &Tensor<T>, n: &BnIdx| {
            let stats = RunningStats { mean: self.p(n.mean).data().to_vec(), var: self.p(n.var).data().to_vec() };
            batchnorm_eval(t, self.p(n.gamma).data(), self.p(n.beta).data(), Some(&stats))
        };
        let h = bn(&relu(&conv2d(x, self.p(b.c1.w), self.p(b.c1.b).data())?), &b.n1)?;
        bn(&relu(&conv2d(&h, self.p(b.c2.w), self.p(b.c2.b).data())?), &b.n2)
    }

    /// Evaluation-mode forward pass on an NCHW batch.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let l = self.layout.clone();
        let mut skips = Vec::with_capacity(l.enc.len());
        let mut h = x.clone();
        for b in &l.enc {
            let e = self.block_eval(b, &h)?;
            h = maxpool2(&e)?.0;
            skips.push(e);
        }
        h = self.block_eval(&l.mid, &h)?;
        for (j, (u, b)) in l.up.iter().zip(&l.dec).enumerate() {
            let up = relu(&transposed_conv2d(&h, self.p(u.w), self.p(u.b).data())?);
            let skip = &skips[skips.len() - 1 - j];
            h = self.block_eval(b, &concat_channels(skip, &up)?)?;
        }
        let out = sigmoid(&conv2d(&h, self.p(l.out.w), self.p(l.out.b).data())?);
        out.check_finite("unet forward")?;
        Ok(out)
    }

    fn bn_train(&mut self, n: &BnIdx, t: &Tensor<T>) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        let (out, cache, stats) = batchnorm_train(t, self.p(n.gamma).data(), self.p(n.beta).data())?;
        let m = BN_MOMENTUM;
        for (v, b) in self.params[n.mean].value.data_mut().iter_mut().zip(&stats.mean) {
            *v = T::of(m * v.f64() + (1.0 - m) * b);
        }
        for (v, b) in self.params[n.var].value.data_mut().iter_mut().zip(&stats.unbiased_var) {
            *v = T::of(m * v.f64() + (1.0 - m) * b);
        }
        Ok((out, cache))
    }

    fn block_train(&mut self, b: &BlockIdx, x: Tensor<T>) -> Result<(Tensor<T>, BlockCache<T>)> {
        let a1 = conv2d(&x, self.p(b.c1.w), self.p(b.c1.b).data())?;
        let (h1, bn1) = self.bn_train(&b.n1, &relu(&a1))?;
        let a2 = conv2d(&h1, self.p(b.c2.w), self.p(b.c2.b).data())?;
        let (h2, bn2) = self.bn_train(&b.n2, &relu(&a2))?;
        Ok((h2, BlockCache { x, a1, bn1, h1, a2, bn2 }))
    }

    /// Training-mode forward pass: batch statistics, running-stat updates and
    /// a cache for [`UNet::backward`].
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<ForwardCache<T>> {
        self.check_input(x)?;
        let l = self.layout.clone();
        let mut enc = Vec::new();
        let mut pool = Vec::new();
        let mut skips = Vec::new();
        let mut h = x.clone();
        for b in &l.enc {
            let (e, c) = self.block_train(b, h)?;
            let (p, arg) = maxpool2(&e)?;
            pool.push((e.shape(), arg));
            skips.push(e);
            enc.push(c);
            h = p;
        }
        let (mut h, mid) = self.block_train(&l.mid, h)?;
        let mut up = Vec::new();
        let mut dec = Vec::new();
        for (j, (u, b)) in l.up.iter().zip(&l.dec).enumerate() {
            let pre = transposed_conv2d(&h, self.p(u.w), self.p(u.b).data())?;
            let skip = &skips[skips.len() - 1 - j];
            let cat = concat_channels(skip, &relu(&pre))?;
            up.push(UpCache { input: h, pre, skip_channels: skip.channels() });
            let (next, c) = self.block_train(b, cat)?;
            dec.push(c);
            h = next;
        }
        let output = sigmoid(&conv2d(&h, self.p(l.out.w), self.p(l.out.b).data())?);
        Ok(ForwardCache { enc, pool, mid, up, dec, out_input: h, output })
    }

    fn block_backward(&self, b: &BlockIdx, c: &BlockCache<T>, d: &Tensor<T>, g: &mut Grads<T>) -> Result<Tensor<T>> {
        let (d, dg, db) = batchnorm_backward(&c.bn2, self.p(b.n2.gamma).data(), d)?;
        g[b.n2.gamma] = dg;
        g[b.n2.beta] = db;
        let d = relu_backward(&c.a2, &d)?;
        let lg = conv2d_backward(&c.h1, self.p(b.c2.w), &d)?;
        g[b.c2.w] = lg.d_weight;
        g[b.c2.b] = lg.d_bias;
        let (d, dg, db) = batchnorm_backward(&c.bn1, self.p(b.n1.gamma).data(), &lg.d_input)?;
        g[b.n1.gamma] = dg;
        g[b.n1.beta] = db;
        let d = relu_backward(&c.a1, &d)?;
        let lg = conv2d_backward(&c.x, self.p(b.c1.w), &d)?;
        g[b.c1.w] = lg.d_weight;
        g[b.c1.b] = lg.d_bias;
        Ok(lg.d_input)
    }

    /// Gradients of the loss for upstream gradient `d_out` on the output.
    /// Also returns the gradient with respect to the network input.
    pub fn backward(&self, cache: &ForwardCache<T>, d_out: &Tensor<T>) -> Result<(Grads<T>, Tensor<T>)> {
        let l = self.layout.clone();
        let mut g: Grads<T> = self.params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
        let d = sigmoid_backward(&cache.output, d_out)?;
        let lg = conv2d_backward(&cache.out_input, self.p(l.out.w), &d)?;
        g[l.out.w] = lg.d_weight;
        g[l.out.b] = lg.d_bias;
        let mut d = lg.d_input;
        let depth = l.enc.len();
        let mut d_skips: Vec<Option<Tensor<T>>> = vec![None; depth];
        for j in (0..depth).rev() {
            let d_cat = self.block_backward(&l.dec[j], &cache.dec[j], &d, &mut g)?;
            let uc = &cache.up[j];
            let (d_skip, d_up) = split_channels(&d_cat, uc.skip_channels)?;
            d_skips[depth - 1 - j] = Some(d_skip);
            let d_pre = relu_backward(&uc.pre, &d_up)?;
            let lg = transposed_conv2d_backward(&uc.input, self.p(l.up[j].w), &d_pre)?;
            g[l.up[j].w] = lg.d_weight;
            g[l.up[j].b] = lg.d_bias;
            d = lg.d_input;
        }
        d = self.block_backward(&l.mid, &cache.mid, &d, &mut g)?;
        for i in (0..depth).rev() {
            let (shape, arg) = &cache.pool[i];
            let routed = maxpool2_backward(*shape, arg, &d)?;
            let d_e = routed.axpby(T::one(), d_skips[i].as_ref().expect("decoder visited every level"), T::one())?;
            d = self.block_backward(&l.enc[i], &cache.enc[i], &d_e, &mut g)?;
        }
        Ok((g, d))
    }

    /// Adam update of every trainable tensor. `t` counts steps from 1.
    pub fn apply_grads(&mut self, grads: &Grads<T>, state: &mut [Moments], cfg: &AdamConfig, t: u64) -> Result<()> {
        for ((p, g), s) in self.params.iter_mut().zip(grads).zip(state.iter_mut()) {
            if p.trainable {
                adam_step(cfg, p.value.data_mut(), g, s, t)?;
            }
        }
        Ok(())
    }

    /// Zeroed optimizer state matching the parameter list.
    pub fn adam_state(&self) -> Vec<Moments> {
        self.params.iter().map(|p| Moments::zeros(if p.trainable { p.value.len() } else { 0 })).collect()
    }

    /// One optimization step on a batch; returns the loss before the update.
    pub fn train_step(
        &mut self,
        x: &Tensor<T>,
        y: &Tensor<T>,
        state: &mut [Moments],
        cfg: &AdamConfig,
        t: u64,
    ) -> Result<f64> {
        let cache = self.forward_train(x)?;
        let (loss, d) = mse_loss(&cache.output, y)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: 0, iteration: t as usize, dump: String::new() });
        }
        let (g, _) = self.backward(&cache, &d)?;
        self.apply_grads(&g, state, cfg, t)?;
        Ok(loss)
    }

    fn state_dump(&self, batch: &[usize], seeds: &[u64]) -> String {
        let mut s = format!("config=\"{}\" batch={batch:?} pair_seeds={seeds:?}", self.config);
        for p in &self.params {
            let bad = p.value.data().iter().filter(|v| !v.is_finite()).count();
            if bad > 0 {
                s.push_str(&format!(" {}_nonfinite={bad}", p.name));
            }
        }
        s
    }

    /// Trains in place. Each epoch shuffles the sources into full batches;
    /// with [`PairSource::Images`] every source contributes a freshly drawn
    /// pair. `on_epoch` sees each epoch's mean loss.
    pub fn train(
        &mut self,
        source: PairSource<'_>,
        hyper: &TrainHyper,
        mut on_epoch: impl FnMut(&EpochStats),
    ) -> Result<TrainReport> {
        let start = Instant::now();
        let n = source.len();
        if hyper.epochs > 0 && n < hyper.batch_size {
            return Err(Error::InvalidConfig(format!(
                "{n} training sources cannot fill a batch of {}",
                hyper.batch_size
            )));
        }
        let size = self.config.input_size as usize;
        let opts = PairOptions { out_size: size, a: hyper.a, eps: hyper.eps, quantize_x: hyper.quantize_x };
        let mut state = self.adam_state();
        let mut step = 0u64;
        let mut epoch_losses = Vec::with_capacity(hyper.epochs);
        for epoch in 0..hyper.epochs {
            let plan = plan_epoch(n, hyper.batch_size, &mut rng::stream(hyper.seed, &[0, epoch as u64]))?;
            let mut sum = 0.0;
            for batch in &plan.batches {
                let seeds: Vec<u64> =
                    batch.iter().map(|&i| rng::derive_seed(hyper.seed, &[1, epoch as u64, i as u64])).collect();
                let pairs: Vec<TrainingPair<T>> = match source {
                    PairSource::Images(imgs) => batch
                        .par_iter()
                        .zip(&seeds)
                        .map(|(&i, &seed)| {
                            let p = make_pair(&imgs[i].1, &imgs[i].0, seed, &opts)?;
                            Ok(TrainingPair { x: p.x.cast(), y: p.y.cast(), provenance: p.provenance })
                        })
                        .collect::<Result<_>>()?,
                    PairSource::Pairs(all) => batch
                        .iter()
                        .map(|&i| TrainingPair {
                            x: all[i].x.cast(),
                            y: all[i].y.cast(),
                            provenance: all[i].provenance.clone(),
                        })
                        .collect(),
                };
                let x = batch_tensor(pairs.iter().map(|p| &p.x))?;
                let y = batch_tensor(pairs.iter().map(|p| &p.y))?;
                step += 1;
                let cache = self.forward_train(&x)?;
                let (loss, d) = mse_loss(&cache.output, &y)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch: epoch + 1,
                        iteration: step as usize,
                        dump: self.state_dump(batch, &seeds),
                    });
                }
                let (g, _) = self.backward(&cache, &d)?;
                self.apply_grads(&g, &mut state, &hyper.adam, step)?;
                sum += loss;
            }
            let mean_loss = sum / plan.batches.len() as f64;
            on_epoch(&EpochStats { epoch: epoch + 1, mean_loss, iterations: step as usize });
            epoch_losses.push(mean_loss);
        }
        Ok(TrainReport {
            epoch_losses,
            iterations: step as usize,
            wall_time: start.elapsed(),
            seed: hyper.seed,
            config: self.config,
        })
    }

    /// Evaluation-mode prediction for one image.
    pub fn predict(&self, x: &LdrImage<T>) -> Result<LdrImage<T>> {
        let out = self.forward(&batch_tensor(std::iter::once(x))?)?;
        Ok(unbatch(&out).remove(0))
    }

    /// Predicts the Reinhard image of `x` and inverts it to radiance.
    ///
    /// Output pixels whose luminance falls below half an 8-bit level are
    /// treated as black, which supplies the zero set needed to recover the
    /// absolute scale.
    pub fn predict_hdr(&self, x: &LdrImage<T>, a: f64, eps: f64, g_override: Option<f64>) -> Result<RadianceMap<T>> {
        let y_hat = threshold_black(&self.predict(x)?)?;
        inverse_tonemap(&y_hat, a, eps, g_override)
    }
}

/// Zeroes every pixel whose luminance is below `1/512`.
pub fn threshold_black<T: Scalar>(img: &LdrImage<T>) -> Result<LdrImage<T>> {
    let luma = luminance(img);
    let px = img
        .pixels()
        .iter()
        .zip(luma.data())
        .map(|(p, l)| if l.f64() < SATURATION_DELTA { [T::zero(); 3] } else { *p })
        .collect();
    LdrImage::new(img.width(), img.height(), px)
}

/// Stacks equally sized images into an `(N, 3, H, W)` tensor.
pub fn batch_tensor<'a, T: Scalar + 'a>(imgs: impl IntoIterator<Item = &'a LdrImage<T>>) -> Result<Tensor<T>> {
    let imgs: Vec<&LdrImage<T>> = imgs.into_iter().collect();
    let first = imgs.first().ok_or_else(|| Error::shape("batch_tensor", "empty batch"))?;
    let (w, h) = first.dims();
    let plane = w * h;
    let mut data = vec![T::zero(); imgs.len() * 3 * plane];
    for (n, img) in imgs.iter().enumerate() {
        if img.dims() != (w, h) {
            return Err(Error::DimensionMismatch {
                expected: format!("{w}x{h}"),
                found: format!("{}x{}", img.width(), img.height()),
            });
        }
        for (i, p) in img.pixels().iter().enumerate() {
            for c in 0..3 {
                data[(n * 3 + c) * plane + i] = p[c];
            }
        }
    }
    Tensor::new([imgs.len(), 3, h, w], data)
}

/// Splits an `(N, 3, H, W)` tensor of values in `[0, 1]` into images.
pub fn unbatch<T: Scalar>(t: &Tensor<T>) -> Vec<LdrImage<T>> {
    let [n, _, h, w] = t.shape();
    let plane = h * w;
    (0..n)
        .map(|s| {
            let d = t.sample(s);
            let px = (0..plane).map(|i| [d[i], d[plane + i], d[2 * plane + i]]).collect();
            LdrImage::from_pixels_clamped(w, h, px)
        })
        .collect()
}
