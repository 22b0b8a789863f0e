//! Compact 1D residual CNN with hand-written backpropagation.
//!
//! Each block is `conv - norm - relu - conv - norm`, added to a strided
//! 1x1 projection of the block input and passed through a relu. The first
//! block keeps the input length, later blocks halve it. Global average
//! pooling and a linear layer give the embedding; a linear layer on the
//! embedding gives one output per proxy task.
//!
//! Normalization is a per-channel affine map `gain * (x - mean) /
//! sqrt(var + eps) + shift` whose `mean` and `var` are running statistics.
//! They are constants for the forward and backward pass and are refreshed
//! between optimizer steps, so a forward pass never depends on the rest of
//! the batch.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tasks::{multitask_loss, ProxyTargets, NUM_TASKS};
use crate::error::{Error, Result};
use crate::rng::{keyed, stream};
use crate::signal::Waveform;

pub const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_length: usize,
    /// Output channels of each residual block.
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub embedding_dim: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            input_length: crate::signal::CANONICAL_LENGTH,
            channels: vec![8, 16, 16],
            kernel_size: 3,
            embedding_dim: 16,
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_length == 0 || self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::invalid("encoder needs a positive input length and channel counts"));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::invalid("encoder kernel size must be odd"));
        }
        if self.embedding_dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        Ok(())
    }

    fn stride(block: usize) -> usize {
        if block == 0 {
            1
        } else {
            2
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BlockLayout {
    cin: usize,
    cout: usize,
    lin: usize,
    lout: usize,
    stride: usize,
    conv1_w: usize,
    conv1_b: usize,
    gain1: usize,
    shift1: usize,
    conv2_w: usize,
    conv2_b: usize,
    gain2: usize,
    shift2: usize,
    skip_w: usize,
    skip_b: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    tensors: Vec<TensorInfo>,
    blocks: Vec<BlockLayout>,
    proj_w: usize,
    proj_b: usize,
    head_w: usize,
    head_b: usize,
    total: usize,
}

impl Layout {
    fn new(arch: &Architecture) -> Self {
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut add = |name: String, shape: Vec<usize>| {
            let t = TensorInfo { name, offset, shape };
            offset += t.len();
            let o = t.offset;
            tensors.push(t);
            o
        };
        let k = arch.kernel_size;
        let mut blocks = Vec::new();
        let (mut cin, mut lin) = (1, arch.input_length);
        for (b, &cout) in arch.channels.iter().enumerate() {
            let stride = Architecture::stride(b);
            let lout = (lin - 1) / stride + 1;
            let p = |s: &str| format!("block{b}.{s}");
            blocks.push(BlockLayout {
                cin,
                cout,
                lin,
                lout,
                stride,
                conv1_w: add(p("conv1.weight"), vec![cout, cin, k]),
                conv1_b: add(p("conv1.bias"), vec![cout]),
                gain1: add(p("norm1.gain"), vec![cout]),
                shift1: add(p("norm1.shift"), vec![cout]),
                conv2_w: add(p("conv2.weight"), vec![cout, cout, k]),
                conv2_b: add(p("conv2.bias"), vec![cout]),
                gain2: add(p("norm2.gain"), vec![cout]),
                shift2: add(p("norm2.shift"), vec![cout]),
                skip_w: add(p("skip.weight"), vec![cout, cin, 1]),
                skip_b: add(p("skip.bias"), vec![cout]),
            });
            cin = cout;
            lin = lout;
        }
        let e = arch.embedding_dim;
        let proj_w = add("proj.weight".into(), vec![e, cin]);
        let proj_b = add("proj.bias".into(), vec![e]);
        let head_w = add("heads.weight".into(), vec![NUM_TASKS, e]);
        let head_b = add("heads.bias".into(), vec![NUM_TASKS]);
        Layout {
            tensors,
            blocks,
            proj_w,
            proj_b,
            head_w,
            head_b,
            total: offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub arch: Architecture,
    pub params: Vec<f64>,
    /// Two entries per block, in forward order.
    pub norms: Vec<NormStats>,
    layout: Layout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub embedding: Vec<f64>,
    /// Logits for classification tasks, a standardized value for age.
    pub heads: Vec<f64>,
}

/// Per-channel sums of pre-normalization activations, used to refresh the
/// running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMoments {
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
    pub count: usize,
}

impl ChannelMoments {
    fn of(x: &[f64], c: usize, l: usize) -> Self {
        let mut m = ChannelMoments {
            sum: vec![0.0; c],
            sum_sq: vec![0.0; c],
            count: l,
        };
        for ch in 0..c {
            for &v in &x[ch * l..(ch + 1) * l] {
                m.sum[ch] += v;
                m.sum_sq[ch] += v * v;
            }
        }
        m
    }

    pub fn merge(&mut self, other: &ChannelMoments) {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        self.count += other.count;
    }

    pub fn mean_var(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.count as f64;
        let mean: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let var = self
            .sum_sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / n - m * m).max(0.0))
            .collect();
        (mean, var)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub loss: f64,
    pub task_losses: [Option<f64>; NUM_TASKS],
    /// Same layout as [`Encoder::params`].
    pub grad: Vec<f64>,
    pub moments: Vec<ChannelMoments>,
}

struct BlockCache {
    input: Vec<f64>,
    h1: Vec<f64>,
    n1: Vec<f64>,
    r1: Vec<f64>,
    h2: Vec<f64>,
    z: Vec<f64>,
}

struct Trace {
    blocks: Vec<BlockCache>,
    pooled: Vec<f64>,
    embedding: Vec<f64>,
    dropped: Vec<f64>,
    heads: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    x: &[f64],
    cin: usize,
    lin: usize,
    w: &[f64],
    b: &[f64],
    cout: usize,
    k: usize,
    stride: usize,
    lout: usize,
) -> Vec<f64> {
    let pad = k / 2;
    let mut y = vec![0.0; cout * lout];
    for o in 0..cout {
        let row = &mut y[o * lout..(o + 1) * lout];
        row.fill(b[o]);
        for c in 0..cin {
            let xc = &x[c * lin..(c + 1) * lin];
            let wk = &w[(o * cin + c) * k..(o * cin + c + 1) * k];
            for (t, out) in row.iter_mut().enumerate() {
                let base = (t * stride) as isize - pad as isize;
                for (j, &wj) in wk.iter().enumerate() {
                    let p = base + j as isize;
                    if p >= 0 && (p as usize) < lin {
                        *out += wj * xc[p as usize];
                    }
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    cin: usize,
    lin: usize,
    w: &[f64],
    cout: usize,
    k: usize,
    stride: usize,
    lout: usize,
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    mut dx: Option<&mut [f64]>,
) {
    let pad = k / 2;
    for o in 0..cout {
        let dyo = &dy[o * lout..(o + 1) * lout];
        db[o] += dyo.iter().sum::<f64>();
        for c in 0..cin {
            let base_w = (o * cin + c) * k;
            for (t, &g) in dyo.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let base = (t * stride) as isize - pad as isize;
                for j in 0..k {
                    let p = base + j as isize;
                    if p >= 0 && (p as usize) < lin {
                        let p = p as usize;
                        dw[base_w + j] += g * x[c * lin + p];
                        if let Some(dx) = dx.as_deref_mut() {
                            dx[c * lin + p] += g * w[base_w + j];
                        }
                    }
                }
            }
        }
    }
}

fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

impl Encoder {
    /// Every parameter zero, running statistics at mean 0 and variance 1.
    pub fn zeros(arch: &Architecture) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(arch);
        let norms = arch
            .channels
            .iter()
            .flat_map(|&c| {
                std::iter::repeat_n(
                    NormStats {
                        mean: vec![0.0; c],
                        var: vec![1.0; c],
                    },
                    2,
                )
            })
            .collect();
        Ok(Encoder {
            arch: arch.clone(),
            params: vec![0.0; layout.total],
            norms,
            layout,
        })
    }

    /// He-normal convolution weights, unit gains, zero biases and shifts.
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        let mut enc = Self::zeros(arch)?;
        let mut rng = keyed(&[seed, stream::INIT]);
        let tensors = enc.layout.tensors.clone();
        for t in &tensors {
            let fill = if t.name.ends_with(".gain") {
                Some(1.0)
            } else if t.name.ends_with(".weight") {
                None
            } else {
                Some(0.0)
            };
            match fill {
                Some(v) => enc.params[t.range()].fill(v),
                None => {
                    let fan_in: usize = t.shape[1..].iter().product();
                    let gain = if t.name.starts_with("block") { 2.0 } else { 1.0 };
                    let dist = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive sd");
                    for v in &mut enc.params[t.range()] {
                        *v = dist.sample(&mut rng);
                    }
                }
            }
        }
        Ok(enc)
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.layout.tensors
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &self.params[t.range()])
    }

    fn norm(&self, h: &[f64], idx: usize, gain: usize, shift: usize, c: usize, l: usize) -> Vec<f64> {
        let st = &self.norms[idx];
        let p = &self.params;
        let mut y = vec![0.0; c * l];
        for ch in 0..c {
            let inv = 1.0 / (st.var[ch] + NORM_EPS).sqrt();
            let (g, s, m) = (p[gain + ch], p[shift + ch], st.mean[ch]);
            for t in 0..l {
                y[ch * l + t] = g * (h[ch * l + t] - m) * inv + s;
            }
        }
        y
    }

    fn check_len(&self, w: &Waveform) -> Result<()> {
        if w.len() != self.arch.input_length {
            return Err(Error::invalid(format!(
                "waveform length {} does not match encoder input length {}",
                w.len(),
                self.arch.input_length
            )));
        }
        Ok(())
    }

    fn run(&self, x: &[f64], dropout_scale: Option<&[f64]>) -> Trace {
        let k = self.arch.kernel_size;
        let p = &self.params;
        let mut cur = x.to_vec();
        let mut blocks = Vec::with_capacity(self.layout.blocks.len());
        for (b, bl) in self.layout.blocks.iter().enumerate() {
            let BlockLayout { cin, cout, lin, lout, stride, .. } = *bl;
            let h1 = conv_forward(
                &cur,
                cin,
                lin,
                &p[bl.conv1_w..],
                &p[bl.conv1_b..],
                cout,
                k,
                stride,
                lout,
            );
            let n1 = self.norm(&h1, 2 * b, bl.gain1, bl.shift1, cout, lout);
            let r1 = relu(&n1);
            let h2 = conv_forward(&r1, cout, lout, &p[bl.conv2_w..], &p[bl.conv2_b..], cout, k, 1, lout);
            let n2 = self.norm(&h2, 2 * b + 1, bl.gain2, bl.shift2, cout, lout);
            let skip = conv_forward(&cur, cin, lin, &p[bl.skip_w..], &p[bl.skip_b..], cout, 1, stride, lout);
            let z: Vec<f64> = n2.iter().zip(&skip).map(|(a, b)| a + b).collect();
            let out = relu(&z);
            blocks.push(BlockCache {
                input: std::mem::replace(&mut cur, out),
                h1,
                n1,
                r1,
                h2,
                z,
            });
        }
        let last = self.layout.blocks.last().expect("at least one block");
        let (c, l) = (last.cout, last.lout);
        let pooled: Vec<f64> = (0..c)
            .map(|ch| cur[ch * l..(ch + 1) * l].iter().sum::<f64>() / l as f64)
            .collect();
        let e = self.arch.embedding_dim;
        let embedding: Vec<f64> = (0..e)
            .map(|i| {
                p[self.layout.proj_b + i]
                    + (0..c).map(|j| p[self.layout.proj_w + i * c + j] * pooled[j]).sum::<f64>()
            })
            .collect();
        let dropped: Vec<f64> = match dropout_scale {
            Some(m) => embedding.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => embedding.clone(),
        };
        let heads = (0..NUM_TASKS)
            .map(|t| {
                p[self.layout.head_b + t]
                    + (0..e).map(|i| p[self.layout.head_w + t * e + i] * dropped[i]).sum::<f64>()
            })
            .collect();
        Trace {
            blocks,
            pooled,
            embedding,
            dropped,
            heads,
        }
    }

    /// Evaluation-mode forward pass.
    pub fn forward(&self, w: &Waveform) -> Result<ForwardOutput> {
        self.check_len(w)?;
        let t = self.run(&w.samples, None);
        Ok(ForwardOutput {
            embedding: t.embedding,
            heads: t.heads,
        })
    }

    pub fn embed(&self, w: &Waveform) -> Result<Vec<f64>> {
        Ok(self.forward(w)?.embedding)
    }

    /// Pre-normalization moments of every norm layer for one input.
    pub fn moments(&self, w: &Waveform) -> Result<Vec<ChannelMoments>> {
        self.check_len(w)?;
        let t = self.run(&w.samples, None);
        Ok(self.collect_moments(&t))
    }

    fn collect_moments(&self, t: &Trace) -> Vec<ChannelMoments> {
        let mut out = Vec::with_capacity(2 * t.blocks.len());
        for (bc, bl) in t.blocks.iter().zip(&self.layout.blocks) {
            out.push(ChannelMoments::of(&bc.h1, bl.cout, bl.lout));
            out.push(ChannelMoments::of(&bc.h2, bl.cout, bl.lout));
        }
        out
    }

    /// Exact gradient of the multitask loss with respect to every
    /// parameter, running statistics held fixed.
    pub fn backward(&self, w: &Waveform, targets: &ProxyTargets) -> Result<Gradient> {
        self.backward_with_dropout(w, targets, None)
    }

    /// As [`Encoder::backward`], with an inverted-dropout scale per
    /// embedding unit (0 for dropped units, `1 / (1 - rate)` otherwise).
    pub fn backward_with_dropout(
        &self,
        w: &Waveform,
        targets: &ProxyTargets,
        dropout_scale: Option<&[f64]>,
    ) -> Result<Gradient> {
        self.check_len(w)?;
        let tr = self.run(&w.samples, dropout_scale);
        let (loss, task_losses, dheads) = multitask_loss(&tr.heads, targets)?;
        let p = &self.params;
        let ly = &self.layout;
        let mut g = vec![0.0; ly.total];
        let e = self.arch.embedding_dim;

        let mut ddrop = vec![0.0; e];
        for (t, &dh) in dheads.iter().enumerate() {
            if dh == 0.0 {
                continue;
            }
            g[ly.head_b + t] += dh;
            for i in 0..e {
                g[ly.head_w + t * e + i] += dh * tr.dropped[i];
                ddrop[i] += dh * p[ly.head_w + t * e + i];
            }
        }
        let demb: Vec<f64> = match dropout_scale {
            Some(m) => ddrop.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => ddrop,
        };
        let last = *ly.blocks.last().expect("at least one block");
        let c = last.cout;
        let mut dpool = vec![0.0; c];
        for i in 0..e {
            g[ly.proj_b + i] += demb[i];
            for j in 0..c {
                g[ly.proj_w + i * c + j] += demb[i] * tr.pooled[j];
                dpool[j] += demb[i] * p[ly.proj_w + i * c + j];
            }
        }
        let mut dout: Vec<f64> = (0..c * last.lout)
            .map(|i| dpool[i / last.lout] / last.lout as f64)
            .collect();

        let k = self.arch.kernel_size;
        for (b, (bl, bc)) in ly.blocks.iter().zip(&tr.blocks).enumerate().rev() {
            let BlockLayout { cin, cout, lin, lout, stride, .. } = *bl;
            let dz: Vec<f64> = dout.iter().zip(&bc.z).map(|(d, z)| if *z > 0.0 { *d } else { 0.0 }).collect();
            let mut dx = vec![0.0; cin * lin];
            let need_dx = b > 0;

            {
                let (dw, db) = split2(&mut g, bl.skip_w, cout * cin, bl.skip_b, cout);
                conv_backward(
                    &bc.input,
                    cin,
                    lin,
                    &p[bl.skip_w..],
                    cout,
                    1,
                    stride,
                    lout,
                    &dz,
                    dw,
                    db,
                    need_dx.then_some(&mut dx[..]),
                );
            }
            let dh2 = self.norm_backward(&dz, &bc.h2, 2 * b + 1, bl.gain2, bl.shift2, cout, lout, &mut g);
            let mut dr1 = vec![0.0; cout * lout];
            {
                let (dw, db) = split2(&mut g, bl.conv2_w, cout * cout * k, bl.conv2_b, cout);
                conv_backward(&bc.r1, cout, lout, &p[bl.conv2_w..], cout, k, 1, lout, &dh2, dw, db, Some(&mut dr1));
            }
            let dn1: Vec<f64> = dr1.iter().zip(&bc.n1).map(|(d, n)| if *n > 0.0 { *d } else { 0.0 }).collect();
            let dh1 = self.norm_backward(&dn1, &bc.h1, 2 * b, bl.gain1, bl.shift1, cout, lout, &mut g);
            {
                let (dw, db) = split2(&mut g, bl.conv1_w, cout * cin * k, bl.conv1_b, cout);
                conv_backward(
                    &bc.input,
                    cin,
                    lin,
                    &p[bl.conv1_w..],
                    cout,
                    k,
                    stride,
                    lout,
                    &dh1,
                    dw,
                    db,
                    need_dx.then_some(&mut dx[..]),
                );
            }
            dout = dx;
        }

        Ok(Gradient {
            loss,
            task_losses,
            grad: g,
            moments: self.collect_moments(&tr),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn norm_backward(
        &self,
        dy: &[f64],
        h: &[f64],
        idx: usize,
        gain: usize,
        shift: usize,
        c: usize,
        l: usize,
        g: &mut [f64],
    ) -> Vec<f64> {
        let st = &self.norms[idx];
        let mut dh = vec![0.0; c * l];
        for ch in 0..c {
            let inv = 1.0 / (st.var[ch] + NORM_EPS).sqrt();
            let gv = self.params[gain + ch];
            for t in 0..l {
                let d = dy[ch * l + t];
                g[gain + ch] += d * (h[ch * l + t] - st.mean[ch]) * inv;
                g[shift + ch] += d;
                dh[ch * l + t] = d * gv * inv;
            }
        }
        dh
    }

    /// Exponential moving average update of the running statistics.
    pub fn update_norms(&mut self, batch: &[ChannelMoments], momentum: f64) {
        for (st, m) in self.norms.iter_mut().zip(batch) {
            let (mean, var) = m.mean_var();
            for ch in 0..st.mean.len() {
                st.mean[ch] = (1.0 - momentum) * st.mean[ch] + momentum * mean[ch];
                st.var[ch] = (1.0 - momentum) * st.var[ch] + momentum * var[ch];
            }
        }
    }

    /// Sets each norm layer's statistics to the moments of `inputs`, layer
    /// by layer so every layer sees inputs normalized by the ones before it.
    pub fn calibrate_norms(&mut self, inputs: &[Waveform]) -> Result<()> {
        if inputs.is_empty() {
            return Ok(());
        }
        for layer in 0..self.norms.len() {
            let mut acc: Option<ChannelMoments> = None;
            for w in inputs {
                let m = self.moments(w)?.swap_remove(layer);
                match &mut acc {
                    Some(a) => a.merge(&m),
                    None => acc = Some(m),
                }
            }
            let (mean, var) = acc.expect("nonempty").mean_var();
            self.norms[layer] = NormStats { mean, var };
        }
        Ok(())
    }
}

/// Two disjoint mutable windows into the gradient buffer; the weight
/// window always precedes the bias window in the layout.
fn split2(g: &mut [f64], a: usize, alen: usize, b: usize, blen: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a + alen <= b);
    let (left, right) = g.split_at_mut(b);
    (&mut left[a..a + alen], &mut right[..blen])
}
