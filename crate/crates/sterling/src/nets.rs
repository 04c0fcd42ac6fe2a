//! Encoder, projector, and cluster networks in online (θ) and target (φ)
//! variants, plus the EMA target update and its cosine τ schedule.
//!
//! Parameters live in [`ParamSet`]s keyed by stable names (`u0`, `enc.u.w1.0`,
//! `proj.v.b2`, …). Forward passes are tape builders: the caller binds each
//! set onto a [`Tape`] (θ as differentiable leaves, φ as constants) and the
//! functions here compose the ops.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bigraph::BipartiteGraph;
use crate::diff::{NodeId, ParamSet, Tape, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum NetsError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectorKind {
    Identity,
    Mlp,
}

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Embedding dimension d.
    pub d: usize,
    /// Message-passing layers L.
    pub layers: usize,
    pub skip_connection: bool,
    pub projector_kind: ProjectorKind,
    /// Co-cluster count (shared by both sides).
    pub n_clusters: usize,
    /// Metapath hops n for the structural prior.
    pub n_hops: usize,
    /// Positive neighbors mined per node.
    pub n_knn: usize,
    /// Noise-filter threshold offset: entries below mean + alpha·std are dropped.
    pub alpha: f64,
    pub lambda_uv: f64,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub lr: f64,
    pub epochs: usize,
    pub tau_init: f64,
    pub metapath_binarize: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 128,
            layers: 1,
            skip_connection: false,
            projector_kind: ProjectorKind::Identity,
            n_clusters: 10,
            n_hops: 1,
            n_knn: 10,
            alpha: 0.0,
            lambda_uv: 1.0,
            lambda_u: 1.0,
            lambda_v: 1.0,
            lr: 5e-4,
            epochs: 10,
            tau_init: 0.99,
            metapath_binarize: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NetsError> {
        if self.d < 1 {
            return Err(NetsError::InvalidConfig("d must be ≥ 1".into()));
        }
        if self.layers < 1 {
            return Err(NetsError::InvalidConfig("layers must be ≥ 1".into()));
        }
        if self.n_clusters < 2 {
            return Err(NetsError::InvalidConfig("n_clusters must be ≥ 2".into()));
        }
        if !(0.0..=1.0).contains(&self.tau_init) {
            return Err(NetsError::InvalidConfig("tau_init must lie in [0,1]".into()));
        }
        if self.n_hops < 1 {
            return Err(NetsError::InvalidConfig("n_hops must be ≥ 1".into()));
        }
        if self.n_knn < 1 {
            return Err(NetsError::InvalidConfig("n_knn must be ≥ 1".into()));
        }
        if self.lr <= 0.0 {
            return Err(NetsError::InvalidConfig("lr must be positive".into()));
        }
        Ok(())
    }
}

/// Online (θ) and target (φ) parameters. φ tracks the encoder weights and
/// input embeddings only; projector and cluster networks exist just on the
/// online side, so θ is a strict superset of φ's name set.
#[derive(Debug, Clone)]
pub struct ModelState<S> {
    pub config: ModelConfig,
    pub theta: ParamSet<S>,
    pub phi: ParamSet<S>,
    /// τ used by the most recent EMA update.
    pub ema_tau: f64,
}

/// Names of the parameters the target network tracks, in insertion order.
fn phi_names(cfg: &ModelConfig) -> Vec<String> {
    let mut names = vec!["u0".to_string(), "v0".to_string()];
    for l in 0..cfg.layers {
        for side in ["u", "v"] {
            names.push(format!("enc.{side}.w1.{l}"));
            if cfg.skip_connection {
                names.push(format!("enc.{side}.w2.{l}"));
            }
        }
    }
    names
}

impl<S: Scalar> ModelState<S> {
    /// Initialize both networks. Input embeddings draw from
    /// uniform(−1/√d, 1/√d), weight matrices from the variance-preserving
    /// uniform(±√(6/(fan_in+fan_out))); biases start at zero. φ begins as a
    /// copy of the θ tensors it tracks.
    pub fn init(config: ModelConfig, n_u: usize, n_v: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d;
        let mut theta = ParamSet::new();

        let embedding = |rng: &mut ChaCha8Rng, rows: usize| {
            let bound = 1.0 / (d as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            Tensor::from_fn(rows, d, |_, _| S::from_f64(dist.sample(rng)))
        };
        let glorot = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| {
            let bound = (6.0 / (rows + cols) as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            Tensor::from_fn(rows, cols, |_, _| S::from_f64(dist.sample(rng)))
        };

        theta.insert("u0", embedding(&mut rng, n_u));
        theta.insert("v0", embedding(&mut rng, n_v));
        for l in 0..config.layers {
            for side in ["u", "v"] {
                theta.insert(format!("enc.{side}.w1.{l}"), glorot(&mut rng, d, d));
                if config.skip_connection {
                    theta.insert(format!("enc.{side}.w2.{l}"), glorot(&mut rng, 2 * d, d));
                }
            }
        }
        if config.projector_kind == ProjectorKind::Mlp {
            for side in ["u", "v"] {
                theta.insert(format!("proj.{side}.w1"), glorot(&mut rng, d, d));
                theta.insert(format!("proj.{side}.b1"), Tensor::zeros(1, d));
                theta.insert(format!("proj.{side}.w2"), glorot(&mut rng, d, d));
                theta.insert(format!("proj.{side}.b2"), Tensor::zeros(1, d));
            }
        }
        for side in ["u", "v"] {
            theta.insert(format!("clu.{side}.w1"), glorot(&mut rng, d, d));
            theta.insert(format!("clu.{side}.b1"), Tensor::zeros(1, d));
            theta.insert(
                format!("clu.{side}.w2"),
                glorot(&mut rng, d, config.n_clusters),
            );
            theta.insert(format!("clu.{side}.b2"), Tensor::zeros(1, config.n_clusters));
        }

        let mut phi = ParamSet::new();
        for name in phi_names(&config) {
            phi.insert(name.clone(), theta.get(&name).expect("θ superset of φ").clone());
        }

        ModelState {
            config,
            theta,
            phi,
            ema_tau: 1.0,
        }
    }

    /// φ ← τφ + (1−τ)θ over the tracked tensors.
    pub fn ema_update(&mut self, tau: f64) {
        self.ema_tau = tau;
        self.phi.ema_update(&self.theta, S::from_f64(tau));
    }
}

/// Epoch-indexed target decay: τ(k) = 1 − (1−τ_init)·(cos(πk/K)+1)/2.
/// Starts at τ_init and rises to 1 at the final epoch.
pub fn tau_schedule(tau_init: f64, epoch: usize, total_epochs: usize) -> f64 {
    if total_epochs == 0 {
        return 1.0;
    }
    let k = (epoch as f64 / total_epochs as f64).min(1.0);
    1.0 - (1.0 - tau_init) * ((PI * k).cos() + 1.0) / 2.0
}

/// Parameter names resolved to tape nodes.
pub type Binding = HashMap<String, NodeId>;

/// Put every tensor of a parameter set on the tape, as differentiable
/// leaves (`trainable`) or constants.
pub fn bind<S: Scalar>(tape: &mut Tape<S>, params: &ParamSet<S>, trainable: bool) -> Binding {
    let mut map = HashMap::new();
    for (name, tensor) in params.iter() {
        let id = if trainable {
            tape.param(tensor.clone())
        } else {
            tape.constant(tensor.clone())
        };
        map.insert(name.to_string(), id);
    }
    map
}

fn node(binding: &Binding, name: &str) -> NodeId {
    *binding
        .get(name)
        .unwrap_or_else(|| panic!("parameter `{name}` not bound on tape"))
}

/// L-layer message passing over the bipartite graph. Each layer aggregates
/// the opposite side's previous embeddings by neighborhood mean (empty
/// neighborhoods yield the zero vector), applies a side-specific linear map
/// and relu, and optionally mixes in the previous layer through a tanh skip
/// transform. Returns the final (U, V) embedding nodes.
pub fn encode<S: Scalar>(
    tape: &mut Tape<S>,
    binding: &Binding,
    cfg: &ModelConfig,
    g: &BipartiteGraph,
) -> (NodeId, NodeId) {
    let mut u_cur = node(binding, "u0");
    let mut v_cur = node(binding, "v0");
    for l in 0..cfg.layers {
        let mu = tape.neighbor_mean(v_cur, g.adj(crate::bigraph::Side::U).clone());
        let mv = tape.neighbor_mean(u_cur, g.adj(crate::bigraph::Side::V).clone());
        let w1u = node(binding, &format!("enc.u.w1.{l}"));
        let w1v = node(binding, &format!("enc.v.w1.{l}"));
        let hu = tape.matmul(mu, w1u);
        let hv = tape.matmul(mv, w1v);
        let mut u_new = tape.relu(hu);
        let mut v_new = tape.relu(hv);
        if cfg.skip_connection {
            let w2u = node(binding, &format!("enc.u.w2.{l}"));
            let w2v = node(binding, &format!("enc.v.w2.{l}"));
            let cu = tape.concat_cols(u_new, u_cur);
            let cv = tape.concat_cols(v_new, v_cur);
            let su = tape.matmul(cu, w2u);
            let sv = tape.matmul(cv, w2v);
            u_new = tape.tanh(su);
            v_new = tape.tanh(sv);
        }
        u_cur = u_new;
        v_cur = v_new;
    }
    (u_cur, v_cur)
}

/// Run the encoder outside any training step and return plain tensors.
pub fn encode_values<S: Scalar>(
    params: &ParamSet<S>,
    cfg: &ModelConfig,
    g: &BipartiteGraph,
) -> (Tensor<S>, Tensor<S>) {
    let mut tape = Tape::new();
    let binding = bind(&mut tape, params, false);
    let (u, v) = encode(&mut tape, &binding, cfg, g);
    (tape.value(u).clone(), tape.value(v).clone())
}

/// Plain-tensor outputs of one full forward pass (no gradients).
pub struct ForwardSnapshot<S> {
    pub u_emb: Tensor<S>,
    pub v_emb: Tensor<S>,
    pub u_proj: Tensor<S>,
    pub v_proj: Tensor<S>,
    pub u_probs: Tensor<S>,
    pub v_probs: Tensor<S>,
}

/// Encoder → projector → cluster head on a scratch tape, returning values
/// only. Downstream consumers (export, evaluation) read the pre-projector
/// embeddings; the cluster heads give each node's co-cluster distribution.
pub fn forward_snapshot<S: Scalar>(
    params: &ParamSet<S>,
    cfg: &ModelConfig,
    g: &BipartiteGraph,
) -> ForwardSnapshot<S> {
    let mut tape = Tape::new();
    let binding = bind(&mut tape, params, false);
    let (u, v) = encode(&mut tape, &binding, cfg, g);
    let up = project(&mut tape, &binding, cfg, "u", u);
    let vp = project(&mut tape, &binding, cfg, "v", v);
    let uc = cluster_probs(&mut tape, &binding, "u", up);
    let vc = cluster_probs(&mut tape, &binding, "v", vp);
    ForwardSnapshot {
        u_emb: tape.value(u).clone(),
        v_emb: tape.value(v).clone(),
        u_proj: tape.value(up).clone(),
        v_proj: tape.value(vp).clone(),
        u_probs: tape.value(uc).clone(),
        v_probs: tape.value(vc).clone(),
    }
}

/// Online projector: identity, or a two-layer MLP with tanh after each
/// affine layer, preserving the embedding dimension.
pub fn project<S: Scalar>(
    tape: &mut Tape<S>,
    binding: &Binding,
    cfg: &ModelConfig,
    side: &str,
    emb: NodeId,
) -> NodeId {
    match cfg.projector_kind {
        ProjectorKind::Identity => emb,
        ProjectorKind::Mlp => {
            let w1 = node(binding, &format!("proj.{side}.w1"));
            let b1 = node(binding, &format!("proj.{side}.b1"));
            let w2 = node(binding, &format!("proj.{side}.w2"));
            let b2 = node(binding, &format!("proj.{side}.b2"));
            let h = tape.matmul(emb, w1);
            let h = tape.add_row_vec(h, b1);
            let h = tape.tanh(h);
            let o = tape.matmul(h, w2);
            let o = tape.add_row_vec(o, b2);
            tape.tanh(o)
        }
    }
}

/// Online cluster network: tanh hidden layer, then a row softmax over the
/// cluster logits. Every output row is a categorical distribution.
pub fn cluster_probs<S: Scalar>(
    tape: &mut Tape<S>,
    binding: &Binding,
    side: &str,
    emb: NodeId,
) -> NodeId {
    let w1 = node(binding, &format!("clu.{side}.w1"));
    let b1 = node(binding, &format!("clu.{side}.b1"));
    let w2 = node(binding, &format!("clu.{side}.w2"));
    let b2 = node(binding, &format!("clu.{side}.b2"));
    let h = tape.matmul(emb, w1);
    let h = tape.add_row_vec(h, b1);
    let h = tape.tanh(h);
    let logits = tape.matmul(h, w2);
    let logits = tape.add_row_vec(logits, b2);
    tape.softmax_rows(logits)
}
