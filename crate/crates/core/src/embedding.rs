//! Temporal encoder.
//!
//! For snapshot `t` and window `k`, the pre-activation is a sum over the
//! offsets `o` in `-k..=k` for which `t + o` is a valid snapshot:
//!
//! ```text
//! Z_t = sum_o c_{t,o} * A_{t+o} X W_o        H_t = act(Z_t)
//! ```
//!
//! `W_0` is `w1`, `W_{-i}` is `w_past[i-1]` and `W_{+j}` is `w_future[j-1]`.
//! In [`AggregationMode::Sum`] every coefficient is 1. In
//! [`AggregationMode::Attention`] the coefficients are a softmax of the
//! per-offset logits restricted to the valid offsets at `t`. Node features
//! are shared by all snapshots.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, ArrayView2};
use rand::distr::Uniform;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::graph::{Snapshot, TemporalGraph};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `max(0, x)`, with derivative 0 at 0.
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    /// Unit weight on every valid offset.
    #[default]
    Sum,
    /// Softmax-weighted offsets.
    Attention,
}

/// Node feature matrix shared across snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub x: Array2<f64>,
}

impl FeatureSet {
    pub fn new(x: Array2<f64>) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return input("feature matrix has non-finite entries");
        }
        Ok(Self { x })
    }

    pub fn d_in(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_nodes(&self) -> usize {
        self.x.nrows()
    }

    /// Rows for the given node ids, in the given order.
    pub fn select_rows(&self, nodes: &[usize]) -> FeatureSet {
        FeatureSet {
            x: self.x.select(ndarray::Axis(0), nodes),
        }
    }
}

/// Structural + random features for graphs without node attributes.
///
/// Column 0 is each node's mean degree across snapshots, min-max scaled to
/// `[0, 1]` (all zero when constant). The remaining columns are standard
/// normal draws scaled by `1/sqrt(d_in - 1)`.
pub fn default_features(g: &TemporalGraph, d_in: usize, seed: u64) -> Result<FeatureSet> {
    if d_in < 2 {
        return input(format!("feature dimension {d_in} must be at least 2"));
    }
    let n = g.n_nodes();
    let t = g.len() as f64;
    let mean_deg: Vec<f64> = (0..n)
        .map(|i| g.snapshots().iter().map(|s| s.degree(i)).sum::<f64>() / t)
        .collect();
    let lo = mean_deg.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mean_deg.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let scale = 1.0 / ((d_in - 1) as f64).sqrt();
    let mut rng = seeded(seed);
    let mut x = Array2::zeros((n, d_in));
    for i in 0..n {
        x[[i, 0]] = if hi > lo { (mean_deg[i] - lo) / (hi - lo) } else { 0.0 };
        for j in 1..d_in {
            let z: f64 = rng.sample(StandardNormal);
            x[[i, j]] = z * scale;
        }
    }
    FeatureSet::new(x)
}

/// Learnable encoder weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub w1: Array2<f64>,
    /// `w_past[i - 1]` multiplies `A_{t-i}`.
    pub w_past: Vec<Array2<f64>>,
    /// `w_future[j - 1]` multiplies `A_{t+j}`.
    pub w_future: Vec<Array2<f64>>,
    /// One logit per offset, index `o + k` for offset `o`.
    pub attn_logits: Array1<f64>,
    pub activation: Activation,
    pub mode: AggregationMode,
}

/// Glorot-uniform weights, zero logits, ReLU, sum mode.
pub fn init_params(d_in: usize, d_out: usize, window: usize, seed: u64) -> ModelParams {
    let bound = (6.0 / (d_in + d_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bounds");
    let mut rng = seeded(seed);
    let mut draw = || Array2::from_shape_simple_fn((d_in, d_out), || rng.sample(dist));
    let w1 = draw();
    let w_past = (0..window).map(|_| draw()).collect();
    let w_future = (0..window).map(|_| draw()).collect();
    ModelParams {
        w1,
        w_past,
        w_future,
        attn_logits: Array1::zeros(2 * window + 1),
        activation: Activation::default(),
        mode: AggregationMode::default(),
    }
}

impl ModelParams {
    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_mode(mut self, mode: AggregationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn window(&self) -> usize {
        self.w_past.len()
    }

    pub fn d_in(&self) -> usize {
        self.w1.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.w1.ncols()
    }

    /// Weight matrix for a temporal offset in `-k..=k`.
    pub fn weight(&self, offset: isize) -> &Array2<f64> {
        match offset {
            0 => &self.w1,
            o if o < 0 => &self.w_past[(-o) as usize - 1],
            o => &self.w_future[o as usize - 1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.w1.dim();
        let k = self.window();
        if self.w_future.len() != k {
            return Err(Error::Shape(format!(
                "{} past weights but {} future weights",
                k,
                self.w_future.len()
            )));
        }
        if let Some(w) = self.w_past.iter().chain(&self.w_future).find(|w| w.dim() != shape) {
            return Err(Error::Shape(format!(
                "weight of shape {:?} differs from w1 {:?}",
                w.dim(),
                shape
            )));
        }
        if self.attn_logits.len() != 2 * k + 1 {
            return Err(Error::Shape(format!(
                "{} attention logits for window {k}",
                self.attn_logits.len()
            )));
        }
        if self.attn_logits.iter().any(|v| !v.is_finite()) {
            return input("attention logits must be finite");
        }
        Ok(())
    }

    /// Weight tensors flattened in wire order: `w1`, `w_past..`, `w_future..`,
    /// `attn_logits`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = vec![self.w1.as_slice().expect("standard layout")];
        for w in self.w_past.iter().chain(&self.w_future) {
            out.push(w.as_slice().expect("standard layout"));
        }
        out.push(self.attn_logits.as_slice().expect("contiguous"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = vec![self.w1.as_slice_mut().expect("standard layout")];
        for w in self.w_past.iter_mut().chain(self.w_future.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
        }
        out.push(self.attn_logits.as_slice_mut().expect("contiguous"));
        out
    }

    /// Shapes of [`ModelParams::tensors`].
    pub fn tensor_shapes(&self) -> Vec<Vec<usize>> {
        let (r, c) = self.w1.dim();
        let mut out = vec![vec![r, c]; 1 + 2 * self.window()];
        out.push(vec![self.attn_logits.len()]);
        out
    }

    pub fn element_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Per-snapshot node embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    pub h: Vec<Array2<f64>>,
}

impl EmbeddingSequence {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// `(1/T) sum_t H_t`.
    pub fn time_average(&self) -> Array2<f64> {
        let mut acc = Array2::zeros(self.h[0].dim());
        for h in &self.h {
            acc += h;
        }
        acc / self.h.len() as f64
    }
}

/// `A X W`, before activation.
pub fn spatial_aggregate(s: &Snapshot, x: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if x.nrows() != s.n_nodes() || x.ncols() != w.nrows() {
        return Err(Error::Shape(format!(
            "A is {0}x{0}, X is {1:?}, W is {2:?}",
            s.n_nodes(),
            x.dim(),
            w.dim()
        )));
    }
    Ok(s.adjacency_mul(x).dot(&w))
}

/// Offsets in `-k..=k` that land inside `0..t_count` from snapshot `t`.
pub fn valid_offsets(t: usize, t_count: usize, window: usize) -> Vec<isize> {
    let k = window as isize;
    (-k..=k)
        .filter(|&o| {
            let s = t as isize + o;
            s >= 0 && s < t_count as isize
        })
        .collect()
}

/// Softmax of the logits restricted to `offsets`.
pub fn attention_weights(p: &ModelParams, offsets: &[isize]) -> Vec<f64> {
    let k = p.window() as isize;
    let logits: Vec<f64> = offsets
        .iter()
        .map(|&o| p.attn_logits[(o + k) as usize])
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Mixing coefficients `c_{t,o}` for each valid offset at `t`.
pub(crate) fn offset_coefficients(p: &ModelParams, offsets: &[isize]) -> Vec<f64> {
    match p.mode {
        AggregationMode::Sum => vec![1.0; offsets.len()],
        AggregationMode::Attention => attention_weights(p, offsets),
    }
}

/// Intermediate values of a forward pass, kept for back-propagation.
pub(crate) struct ForwardCache {
    /// `A_s X` for every snapshot.
    pub ax: Vec<Array2<f64>>,
    pub offsets: Vec<Vec<isize>>,
    pub coeffs: Vec<Vec<f64>>,
    /// Pre-activations `Z_t`.
    pub z: Vec<Array2<f64>>,
    pub h: Vec<Array2<f64>>,
}

fn check_shapes(g: &TemporalGraph, x: &FeatureSet, p: &ModelParams) -> Result<()> {
    p.validate()?;
    if x.n_nodes() != g.n_nodes() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} nodes",
            x.n_nodes(),
            g.n_nodes()
        )));
    }
    if x.d_in() != p.d_in() {
        return Err(Error::Shape(format!(
            "features have {} columns, weights expect {}",
            x.d_in(),
            p.d_in()
        )));
    }
    Ok(())
}

pub(crate) fn forward_cached(g: &TemporalGraph, x: &FeatureSet, p: &ModelParams) -> Result<ForwardCache> {
    check_shapes(g, x, p)?;
    let t_count = g.len();
    let ax: Vec<Array2<f64>> = g
        .snapshots()
        .par_iter()
        .map(|s| s.adjacency_mul(x.x.view()))
        .collect();
    let offsets: Vec<Vec<isize>> = (0..t_count)
        .map(|t| valid_offsets(t, t_count, p.window()))
        .collect();
    let coeffs: Vec<Vec<f64>> = offsets.iter().map(|o| offset_coefficients(p, o)).collect();
    let z: Vec<Array2<f64>> = (0..t_count)
        .into_par_iter()
        .map(|t| {
            let mut acc = Array2::zeros((g.n_nodes(), p.d_out()));
            for (&o, &c) in offsets[t].iter().zip(&coeffs[t]) {
                let s = (t as isize + o) as usize;
                acc.scaled_add(c, &ax[s].dot(p.weight(o)));
            }
            acc
        })
        .collect();
    let act = p.activation;
    let h = z.iter().map(|zt| zt.mapv(|v| act.apply(v))).collect();
    Ok(ForwardCache {
        ax,
        offsets,
        coeffs,
        z,
        h,
    })
}

/// Embeddings `H_1..H_T` for every snapshot.
pub fn forward_all(g: &TemporalGraph, x: &FeatureSet, p: &ModelParams) -> Result<EmbeddingSequence> {
    Ok(EmbeddingSequence {
        h: forward_cached(g, x, p)?.h,
    })
}

/// Text dump: per snapshot a `t n d_out` header followed by `n` rows.
pub fn format_embeddings(h: &EmbeddingSequence) -> String {
    let mut out = String::new();
    for (t, ht) in h.h.iter().enumerate() {
        let _ = writeln!(out, "{t} {} {}", ht.nrows(), ht.ncols());
        for row in ht.rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
    }
    out
}

pub fn parse_embeddings(text: &str) -> Result<EmbeddingSequence> {
    let mut lines = text.lines().enumerate();
    let mut h = Vec::new();
    let bad = |line: usize, msg: &str| Error::Parse {
        line: line + 1,
        msg: msg.to_string(),
    };
    while let Some((ln, header)) = lines.next() {
        if header.trim().is_empty() {
            continue;
        }
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(ln, "bad header field")))
            .collect::<Result<_>>()?;
        if dims.len() != 3 || dims[0] != h.len() {
            return Err(bad(ln, "expected header `t n d_out`"));
        }
        let (n, d) = (dims[1], dims[2]);
        let mut m = Array2::zeros((n, d));
        for i in 0..n {
            let (rl, row) = lines.next().ok_or_else(|| bad(ln, "truncated matrix"))?;
            let vals: Vec<f64> = row
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad(rl, "bad float")))
                .collect::<Result<_>>()?;
            if vals.len() != d {
                return Err(bad(rl, "wrong row width"));
            }
            m.row_mut(i).assign(&Array1::from(vals));
        }
        h.push(m);
    }
    Ok(EmbeddingSequence { h })
}

const PARAMS_MAGIC: &[u8; 8] = b"FTGCPRM1";

/// Binary params file.
///
/// ```text
/// magic "FTGCPRM1" | window:u32 | d_in:u32 | d_out:u32 | mode:u8 | activation:u8
/// then every entry of `ModelParams::tensors()` in order as f64, little-endian
/// ```
///
/// `mode` is 0 for sum, 1 for attention. `activation` is 0 relu, 1 tanh,
/// 2 identity.
pub fn encode_params(p: &ModelParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(22 + 8 * p.element_count());
    out.extend_from_slice(PARAMS_MAGIC);
    for v in [p.window(), p.d_in(), p.d_out()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(match p.mode {
        AggregationMode::Sum => 0,
        AggregationMode::Attention => 1,
    });
    out.push(match p.activation {
        Activation::Relu => 0,
        Activation::Tanh => 1,
        Activation::Identity => 2,
    });
    for t in p.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_params(buf: &[u8]) -> Result<ModelParams> {
    let err = |offset: usize, msg: &str| Error::Decode {
        offset,
        msg: msg.to_string(),
    };
    if buf.len() < 8 || &buf[..8] != PARAMS_MAGIC {
        return Err(err(0, "bad magic"));
    }
    if buf.len() < 22 {
        return Err(err(buf.len(), "truncated header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().expect("4 bytes")) as usize;
    let (window, d_in, d_out) = (u32_at(8), u32_at(12), u32_at(16));
    let mode = match buf[20] {
        0 => AggregationMode::Sum,
        1 => AggregationMode::Attention,
        _ => return Err(err(20, "unknown aggregation mode")),
    };
    let activation = match buf[21] {
        0 => Activation::Relu,
        1 => Activation::Tanh,
        2 => Activation::Identity,
        _ => return Err(err(21, "unknown activation")),
    };
    if d_in == 0 || d_out == 0 {
        return Err(err(12, "zero weight dimension"));
    }
    let count = (2 * window + 1)
        .checked_mul(d_in * d_out)
        .and_then(|c| c.checked_add(2 * window + 1))
        .ok_or_else(|| err(8, "shape overflow"))?;
    let body = &buf[22..];
    if body.len() / 8 < count {
        return Err(err(buf.len(), "truncated body"));
    }
    if body.len() != count * 8 {
        return Err(err(22 + count * 8, "trailing bytes"));
    }
    let mut p = init_params(d_in, d_out, window, 0)
        .with_mode(mode)
        .with_activation(activation);
    let mut values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v = values.next().expect("length checked");
        }
    }
    Ok(p)
}
