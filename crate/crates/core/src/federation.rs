//! Simulated federated training.
//!
//! Every round, each client starts from the current global parameters, runs
//! `local_steps` full-batch gradient-descent steps on its own subgraph, and
//! sends back the parameter delta (optionally compressed). The server only
//! ever sees those deltas and replaces the global parameters with
//! `p + mean(deltas)`.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::compression::{compress_update, decode_update, decompress_update, encode_update, CompressionConfig};
use crate::data::FederationSplit;
use crate::embedding::{default_features, init_params, Activation, AggregationMode, FeatureSet, ModelParams};
use crate::error::{input, Error, Result};
use crate::graph::{LaplacianKind, TemporalGraph};
use crate::objective::{loss_and_gradient, ParamGradient};
use crate::rng::derive_seed;

/// Stream id used to derive the parameter-initialization seed.
const INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct FedConfig {
    pub clients: usize,
    pub rounds: usize,
    pub local_steps: usize,
    pub lr: f64,
    pub alpha: f64,
    pub compression: Option<CompressionConfig>,
    pub seed: u64,
    pub mode: AggregationMode,
    pub activation: Activation,
    pub window: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub laplacian: LaplacianKind,
    /// Weight client deltas by node count instead of the plain mean.
    pub weighted_aggregation: bool,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            clients: 4,
            rounds: 30,
            local_steps: 2,
            lr: 1e-4,
            alpha: 0.5,
            compression: None,
            seed: 0,
            mode: AggregationMode::Sum,
            activation: Activation::Identity,
            window: 1,
            d_in: 16,
            d_out: 16,
            laplacian: LaplacianKind::Combinatorial,
            weighted_aggregation: false,
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 || self.rounds == 0 || self.local_steps == 0 {
            return input("clients, rounds and local_steps must be at least 1");
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return input(format!("learning rate {} must be finite and nonnegative", self.lr));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return input(format!("alpha {} must be finite and nonnegative", self.alpha));
        }
        if self.d_in < 2 || self.d_out == 0 {
            return input("d_in must be at least 2 and d_out at least 1");
        }
        if let Some(c) = &self.compression {
            c.validate()?;
        }
        Ok(())
    }

    /// Initial global parameters for this configuration.
    pub fn initial_params(&self) -> ModelParams {
        init_params(self.d_in, self.d_out, self.window, derive_seed(self.seed, INIT_STREAM))
            .with_activation(self.activation)
            .with_mode(self.mode)
    }

    fn active_compression(&self) -> Option<&CompressionConfig> {
        self.compression.as_ref().filter(|c| c.enabled)
    }
}

/// Everything one client holds locally.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: usize,
    pub graph: TemporalGraph,
    pub features: FeatureSet,
    pub rng_seed: u64,
}

impl ClientState {
    /// Client with locally generated default features.
    pub fn new(client_id: usize, graph: TemporalGraph, cfg: &FedConfig) -> Result<Self> {
        let rng_seed = derive_seed(cfg.seed, client_id as u64);
        let features = default_features(&graph, cfg.d_in, rng_seed)?;
        Ok(Self {
            client_id,
            graph,
            features,
            rng_seed,
        })
    }

    pub fn with_features(mut self, features: FeatureSet) -> Result<Self> {
        if features.n_nodes() != self.graph.n_nodes() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} nodes",
                features.n_nodes(),
                self.graph.n_nodes()
            )));
        }
        self.features = features;
        Ok(self)
    }

    pub fn from_split(split: &FederationSplit, cfg: &FedConfig) -> Result<Vec<Self>> {
        split
            .client_graphs
            .iter()
            .enumerate()
            .map(|(id, g)| Self::new(id, g.clone(), cfg))
            .collect()
    }
}

/// What a client sends back after local training, as seen by the server.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    /// Parameter delta after the wire round-trip (lossy when compressed).
    pub delta: ParamGradient,
    /// Local loss at the parameters the client started from.
    pub local_loss: f64,
    /// Local node count, used only by weighted aggregation.
    pub sample_count: usize,
    pub bytes_raw: usize,
    pub bytes_sent: usize,
}

/// Runs `local_steps` gradient steps from `p` and returns the (possibly
/// compressed and decoded) delta.
pub fn client_update(p: &ModelParams, c: &ClientState, cfg: &FedConfig) -> Result<ClientUpdate> {
    let mut local = p.clone();
    let mut first_loss = None;
    for _ in 0..cfg.local_steps {
        let (loss, grad) = loss_and_gradient(&c.graph, &c.features, &local, cfg.alpha, cfg.laplacian)?;
        first_loss.get_or_insert(loss.total);
        for (w, gw) in local.tensors_mut().into_iter().zip(grad.tensors()) {
            for (a, b) in w.iter_mut().zip(gw) {
                *a -= cfg.lr * b;
            }
        }
    }

    let mut delta = ParamGradient::zeros_like(p);
    for ((d, after), before) in delta
        .tensors_mut()
        .into_iter()
        .zip(local.tensors())
        .zip(p.tensors())
    {
        for ((x, a), b) in d.iter_mut().zip(after).zip(before) {
            *x = a - b;
        }
    }

    let bytes_raw = 8 * p.element_count();
    let (delta, bytes_sent) = match cfg.active_compression() {
        Some(comp) => {
            let wire = encode_update(&compress_update(&delta, &p.tensor_shapes(), comp)?);
            let decoded = decompress_update(&decode_update(&wire)?, p)?;
            (decoded, wire.len())
        }
        None => (delta, bytes_raw),
    };
    Ok(ClientUpdate {
        client_id: c.client_id,
        delta,
        local_loss: first_loss.expect("local_steps >= 1"),
        sample_count: c.graph.n_nodes(),
        bytes_raw,
        bytes_sent,
    })
}

/// `p + sum_k w_k delta_k`, or `p + (sum_k delta_k) / K` when `weights` is `None`.
fn combine(deltas: &[&ParamGradient], weights: Option<&[f64]>, p: &ModelParams) -> Result<ModelParams> {
    if deltas.is_empty() {
        return input("cannot aggregate zero client updates");
    }
    if let Some(i) = deltas.iter().position(|d| !d.conforms_to(p)) {
        return Err(Error::Shape(format!("delta {i} does not match the model shape")));
    }
    let mut acc = ParamGradient::zeros_like(p);
    for (k, d) in deltas.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[k]);
        for (dst, src) in acc.tensors_mut().into_iter().zip(d.tensors()) {
            for (a, s) in dst.iter_mut().zip(src) {
                *a += w * s;
            }
        }
    }
    if weights.is_none() {
        let k = deltas.len() as f64;
        for t in acc.tensors_mut() {
            t.iter_mut().for_each(|v| *v /= k);
        }
    }
    let mut out = p.clone();
    for (dst, src) in out.tensors_mut().into_iter().zip(acc.tensors()) {
        for (a, s) in dst.iter_mut().zip(src) {
            *a += s;
        }
    }
    Ok(out)
}

/// `p + (1/K) sum_k delta_k`, summed in the given order.
pub fn aggregate(deltas: &[ParamGradient], p: &ModelParams) -> Result<ModelParams> {
    let refs: Vec<&ParamGradient> = deltas.iter().collect();
    combine(&refs, None, p)
}

/// Server side of a round. It accepts only client updates, never graph or
/// feature data.
#[derive(Debug, Clone)]
pub struct Server {
    pub params: ModelParams,
    pub weighted: bool,
}

impl Server {
    pub fn new(params: ModelParams, weighted: bool) -> Self {
        Self { params, weighted }
    }

    /// Applies one round of updates, combined in ascending client id.
    pub fn apply(&mut self, updates: &[ClientUpdate]) -> Result<()> {
        let mut ordered: Vec<&ClientUpdate> = updates.iter().collect();
        ordered.sort_by_key(|u| u.client_id);
        let deltas: Vec<&ParamGradient> = ordered.iter().map(|u| &u.delta).collect();
        self.params = if self.weighted {
            let total: usize = ordered.iter().map(|u| u.sample_count).sum();
            let weights: Vec<f64> = ordered
                .iter()
                .map(|u| u.sample_count as f64 / total.max(1) as f64)
                .collect();
            combine(&deltas, Some(&weights), &self.params)?
        } else {
            combine(&deltas, None, &self.params)?
        };
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based round number.
    pub round: usize,
    /// Sum of client local losses at the start of the round.
    pub global_loss: f64,
    pub client_losses: Vec<f64>,
    pub bytes_raw: usize,
    pub bytes_compressed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub rounds: Vec<RoundRecord>,
    /// Sum of client local losses at the final parameters.
    pub final_loss: f64,
}

impl TrainHistory {
    pub fn initial_loss(&self) -> f64 {
        self.rounds.first().map_or(self.final_loss, |r| r.global_loss)
    }

    /// Sum of client losses after `round` rounds (0 gives the initial loss).
    pub fn loss_after(&self, round: usize) -> f64 {
        self.rounds
            .get(round)
            .map_or(self.final_loss, |r| r.global_loss)
    }

    /// One `round, global_loss, bytes_raw, bytes_compressed` line per round.
    pub fn to_records(&self) -> String {
        let mut out = String::from("round,global_loss,bytes_raw,bytes_compressed\n");
        for r in &self.rounds {
            let _ = writeln!(
                out,
                "{},{:e},{},{}",
                r.round, r.global_loss, r.bytes_raw, r.bytes_compressed
            );
        }
        out
    }
}

fn total_loss(clients: &[ClientState], p: &ModelParams, cfg: &FedConfig) -> Result<f64> {
    let losses = clients
        .par_iter()
        .map(|c| {
            let h = crate::embedding::forward_all(&c.graph, &c.features, p)?;
            Ok(crate::objective::local_loss_with_kind(&c.graph, &h, cfg.alpha, cfg.laplacian).total)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum())
}

/// Federated training over prepared clients.
pub fn run_training_with_clients(
    clients: &[ClientState],
    init: ModelParams,
    cfg: &FedConfig,
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    if clients.is_empty() {
        return input("no clients");
    }
    let mut server = Server::new(init, cfg.weighted_aggregation);
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for round in 1..=cfg.rounds {
        let global = &server.params;
        let updates = clients
            .par_iter()
            .map(|c| client_update(global, c, cfg))
            .collect::<Result<Vec<_>>>()?;
        rounds.push(RoundRecord {
            round,
            global_loss: updates.iter().map(|u| u.local_loss).sum(),
            client_losses: updates.iter().map(|u| u.local_loss).collect(),
            bytes_raw: updates.iter().map(|u| u.bytes_raw).sum(),
            bytes_compressed: updates.iter().map(|u| u.bytes_sent).sum(),
        });
        server.apply(&updates)?;
    }
    let final_loss = total_loss(clients, &server.params, cfg)?;
    Ok((server.params, TrainHistory { rounds, final_loss }))
}

/// Builds clients from a split (local default features) and trains from
/// [`FedConfig::initial_params`].
pub fn run_training(split: &FederationSplit, cfg: &FedConfig) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    let clients = ClientState::from_split(split, cfg)?;
    run_training_with_clients(&clients, cfg.initial_params(), cfg)
}
