//! Local training loss, its analytic gradient, and the clustering objective.
//!
//! The local loss over a temporal graph is
//!
//! ```text
//! sum_{t=1..T} tr(H_t^T L_t H_t)  +  alpha * sum_{t=2..T} ||H_t - H_{t-1}||_F^2
//! ```
//!
//! and the clustering objective has the same form with one-hot assignment
//! matrices `F_t` in place of `H_t` and `beta` in place of `alpha`.

use ndarray::{Array1, Array2, Zip};
use rayon::prelude::*;

use crate::clustering::ClusterAssignment;
use crate::embedding::{forward_cached, AggregationMode, EmbeddingSequence, FeatureSet, ModelParams};
use crate::error::{Error, Result};
use crate::graph::{LaplacianKind, Snapshot, TemporalGraph};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub trace_term: f64,
    pub smooth_term: f64,
    pub total: f64,
    pub alpha: f64,
}

/// Gradient (or update) with the same tensor layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub w1: Array2<f64>,
    pub w_past: Vec<Array2<f64>>,
    pub w_future: Vec<Array2<f64>>,
    pub attn_logits: Array1<f64>,
}

impl ParamGradient {
    pub fn zeros_like(p: &ModelParams) -> Self {
        Self {
            w1: Array2::zeros(p.w1.dim()),
            w_past: p.w_past.iter().map(|w| Array2::zeros(w.dim())).collect(),
            w_future: p.w_future.iter().map(|w| Array2::zeros(w.dim())).collect(),
            attn_logits: Array1::zeros(p.attn_logits.len()),
        }
    }

    fn weight_mut(&mut self, offset: isize) -> &mut Array2<f64> {
        match offset {
            0 => &mut self.w1,
            o if o < 0 => &mut self.w_past[(-o) as usize - 1],
            o => &mut self.w_future[o as usize - 1],
        }
    }

    /// Tensors in wire order, as in [`ModelParams::tensors`].
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

    /// True when every tensor has the same length as the matching one in `p`.
    pub fn conforms_to(&self, p: &ModelParams) -> bool {
        self.w1.dim() == p.w1.dim()
            && self.w_past.len() == p.w_past.len()
            && self.w_future.len() == p.w_future.len()
            && self.attn_logits.len() == p.attn_logits.len()
            && self
                .w_past
                .iter()
                .chain(&self.w_future)
                .all(|w| w.dim() == p.w1.dim())
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `tr(H^T L H)`.
pub fn spectral_trace(h: &Array2<f64>, s: &Snapshot, kind: LaplacianKind) -> f64 {
    let lh = s.laplacian_mul(h.view(), kind);
    Zip::from(h).and(&lh).fold(0.0, |acc, a, b| acc + a * b)
}

fn frobenius_sq_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + (x - y).powi(2))
}

/// Local loss with the combinatorial Laplacian.
pub fn local_loss(g: &TemporalGraph, h: &EmbeddingSequence, alpha: f64) -> LossBreakdown {
    local_loss_with_kind(g, h, alpha, LaplacianKind::Combinatorial)
}

pub fn local_loss_with_kind(
    g: &TemporalGraph,
    h: &EmbeddingSequence,
    alpha: f64,
    kind: LaplacianKind,
) -> LossBreakdown {
    let traces: Vec<f64> = g
        .snapshots()
        .par_iter()
        .zip(h.h.par_iter())
        .map(|(s, ht)| spectral_trace(ht, s, kind))
        .collect();
    let trace_term: f64 = traces.iter().sum();
    let smooth_term: f64 = h
        .h
        .windows(2)
        .map(|w| frobenius_sq_diff(&w[1], &w[0]))
        .sum();
    LossBreakdown {
        trace_term,
        smooth_term,
        total: trace_term + alpha * smooth_term,
        alpha,
    }
}

/// Analytic gradient of `local_loss(forward_all(g, x, p))` for every weight
/// and, in attention mode, every logit.
pub fn loss_gradient(g: &TemporalGraph, x: &FeatureSet, p: &ModelParams, alpha: f64) -> Result<ParamGradient> {
    Ok(loss_and_gradient(g, x, p, alpha, LaplacianKind::Combinatorial)?.1)
}

/// Loss and gradient from a single forward pass.
pub fn loss_and_gradient(
    g: &TemporalGraph,
    x: &FeatureSet,
    p: &ModelParams,
    alpha: f64,
    kind: LaplacianKind,
) -> Result<(LossBreakdown, ParamGradient)> {
    let cache = forward_cached(g, x, p)?;
    let t_count = g.len();
    let h = &cache.h;
    let act = p.activation;
    let k = p.window() as isize;

    // dLoss/dZ_t
    let dz: Vec<Array2<f64>> = (0..t_count)
        .into_par_iter()
        .map(|t| {
            let mut dh = g.snapshot(t).laplacian_mul(h[t].view(), kind) * 2.0;
            if t > 0 {
                dh.scaled_add(2.0 * alpha, &(&h[t] - &h[t - 1]));
            }
            if t + 1 < t_count {
                dh.scaled_add(-2.0 * alpha, &(&h[t + 1] - &h[t]));
            }
            Zip::from(&mut dh)
                .and(&cache.z[t])
                .for_each(|d, &z| *d *= act.derivative(z));
            dh
        })
        .collect();

    // Per-snapshot contributions, reduced below in ascending t.
    let parts: Vec<(Vec<(isize, Array2<f64>)>, Vec<(isize, f64)>)> = (0..t_count)
        .into_par_iter()
        .map(|t| {
            let offsets = &cache.offsets[t];
            let coeffs = &cache.coeffs[t];
            let mut w_parts = Vec::with_capacity(offsets.len());
            let mut logit_parts = Vec::new();
            let mut inner = Vec::with_capacity(offsets.len());
            for (&o, &c) in offsets.iter().zip(coeffs) {
                let ax = &cache.ax[(t as isize + o) as usize];
                w_parts.push((o, ax.t().dot(&dz[t]) * c));
                if p.mode == AggregationMode::Attention {
                    let term = ax.dot(p.weight(o));
                    inner.push(Zip::from(&term).and(&dz[t]).fold(0.0, |a, x, y| a + x * y));
                }
            }
            if p.mode == AggregationMode::Attention {
                let mean: f64 = coeffs.iter().zip(&inner).map(|(c, v)| c * v).sum();
                for ((&o, &c), &v) in offsets.iter().zip(coeffs).zip(&inner) {
                    logit_parts.push((o, c * (v - mean)));
                }
            }
            (w_parts, logit_parts)
        })
        .collect();

    let mut grad = ParamGradient::zeros_like(p);
    for (w_parts, logit_parts) in parts {
        for (o, gw) in w_parts {
            *grad.weight_mut(o) += &gw;
        }
        for (o, gl) in logit_parts {
            grad.attn_logits[(o + k) as usize] += gl;
        }
    }

    let loss = local_loss_with_kind(g, &EmbeddingSequence { h: cache.h }, alpha, kind);
    Ok((loss, grad))
}

/// `sum_t tr(F_t^T L_t F_t) + beta * sum_{t>=2} ||F_t - F_{t-1}||_F^2` with
/// combinatorial Laplacians. For one-hot rows the trace is twice the cut
/// weight and the smoothness norm is twice the number of relabeled nodes.
pub fn clustering_objective(g: &TemporalGraph, f: &ClusterAssignment, beta: f64) -> Result<f64> {
    if f.len() != g.len() || f.n_nodes() != g.n_nodes() {
        return Err(Error::Shape(format!(
            "assignment is {}x{} (T x n), graph is {}x{}",
            f.len(),
            f.n_nodes(),
            g.len(),
            g.n_nodes()
        )));
    }
    let mut total = 0.0;
    for (t, s) in g.snapshots().iter().enumerate() {
        let labels = f.labels_at(t);
        let cut: f64 = s
            .edges()
            .filter(|&(i, j, _)| labels[i] != labels[j])
            .map(|(_, _, w)| w)
            .sum();
        total += 2.0 * cut;
    }
    for t in 1..f.len() {
        let changed = f
            .labels_at(t)
            .iter()
            .zip(f.labels_at(t - 1))
            .filter(|(a, b)| a != b)
            .count();
        total += beta * 2.0 * changed as f64;
    }
    Ok(total)
}
