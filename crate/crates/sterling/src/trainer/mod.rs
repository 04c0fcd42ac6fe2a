//! Training orchestration: full-batch epochs over the joint objective,
//! Adam on the online network, cosine-scheduled EMA onto the target
//! network, per-epoch k-NN refresh, checkpointing and epoch logging.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bigraph::{
    build_neighbor_index, metapath_adjacency, select_knn_batch, BigraphError, BipartiteGraph,
    IdMap, NeighborIndex, Side, SimilarityMode,
};
use crate::diff::{Adam, DiffError, Tape, Tensor};
use crate::nets::{
    bind, cluster_probs, encode, encode_values, forward_snapshot, project, tau_schedule,
    ModelConfig, ModelState, NetsError,
};
use crate::objectives::{
    embedding_adjacency, joint_cluster_distribution, joint_node_distribution, loss_intra,
    loss_local, loss_total, loss_uv, mutual_information_node, AdjacencyOptions, DeltaKind,
    LossWeights, ObjectiveError,
};
use crate::scalar::Scalar;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}; training aborted, last completed checkpoint retained")]
    NonFinite { epoch: usize },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Net(#[from] NetsError),
    #[error(transparent)]
    Graph(#[from] BigraphError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
}

/// Switches that remove or replace one ingredient of the objective,
/// leaving everything else untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Drop the inter-type loss term.
    NoLuv,
    /// Drop the intra-type loss on the U side.
    NoLu,
    /// Drop the intra-type loss on the V side.
    NoLv,
    /// Drop the co-cluster mutual-information loss.
    NoLglb,
    /// Replace the metapath adjacency with all-ones.
    AMetaOnes,
    /// Replace the embedding adjacency with all-ones.
    AEmbOnes,
    /// Disable the noise filter on the embedding adjacency.
    NoFilter,
    /// Use relu instead of |·| when forming the embedding adjacency.
    DeltaRelu,
    /// Set the structural similarity to 1 on all k-NN candidates.
    SAaOne,
    /// Set the embedding similarity to 1 during k-NN selection.
    SEmbOne,
}

impl Ablation {
    pub const ALL: [Ablation; 10] = [
        Ablation::NoLuv,
        Ablation::NoLu,
        Ablation::NoLv,
        Ablation::NoLglb,
        Ablation::AMetaOnes,
        Ablation::AEmbOnes,
        Ablation::NoFilter,
        Ablation::DeltaRelu,
        Ablation::SAaOne,
        Ablation::SEmbOne,
    ];
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        // serde's snake_case spelling is the canonical one
        let s = serde_json::to_value(self).unwrap();
        write!(f, "{}", s.as_str().unwrap())
    }
}

impl std::str::FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
            let known: Vec<String> = Ablation::ALL.iter().map(|a| a.to_string()).collect();
            format!("unknown ablation `{s}`; expected one of {}", known.join(", "))
        })
    }
}

/// Run-level settings that sit alongside the model hyperparameters in the
/// same flat JSON config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    /// Dataset name recorded in results files.
    pub dataset: Option<String>,
    pub train_edges: Option<PathBuf>,
    pub test_edges: Option<PathBuf>,
    /// TSV of `raw_id<TAB>class` rows for co-cluster evaluation.
    pub labels: Option<PathBuf>,
    /// Which side the label file refers to.
    pub label_side: Side,
    /// Whether edge files carry a third weight column (kept when > 0).
    pub edge_weights: bool,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub ablate: Vec<Ablation>,
    /// Optional minibatch size over edges; the full edge set per step
    /// otherwise. Node-level and global terms stay full-graph either way.
    pub batch_edges: Option<usize>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            dataset: None,
            train_edges: None,
            test_edges: None,
            labels: None,
            label_side: Side::U,
            edge_weights: false,
            seed: 0,
            out_dir: None,
            ablate: Vec::new(),
            batch_edges: None,
        }
    }
}

/// A parsed run configuration: model hyperparameters plus run settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub settings: RunSettings,
}

const RUN_KEYS: [&str; 10] = [
    "dataset",
    "train_edges",
    "test_edges",
    "labels",
    "label_side",
    "edge_weights",
    "seed",
    "out_dir",
    "ablate",
    "batch_edges",
];

impl RunConfig {
    /// Parse the flat JSON config: run-level keys are split off, everything
    /// else must be a model hyperparameter. Unknown keys are rejected with
    /// the offending field named.
    pub fn from_json(text: &str) -> Result<RunConfig, TrainError> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| TrainError::Config(format!("invalid JSON: {e}")))?;
        Self::from_value(value)
    }

    pub fn from_value(value: serde_json::Value) -> Result<RunConfig, TrainError> {
        let mut obj = match value {
            serde_json::Value::Object(m) => m,
            other => {
                return Err(TrainError::Config(format!(
                    "config must be a JSON object, got {other}"
                )))
            }
        };
        let mut run_obj = serde_json::Map::new();
        for key in RUN_KEYS {
            if let Some(v) = obj.remove(key) {
                run_obj.insert(key.to_string(), v);
            }
        }
        let settings: RunSettings = serde_json::from_value(run_obj.into())
            .map_err(|e| TrainError::Config(e.to_string()))?;
        let model: ModelConfig = serde_json::from_value(obj.into())
            .map_err(|e| TrainError::Config(e.to_string()))?;
        let cfg = RunConfig { model, settings };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.model.validate()?;
        let ab = &self.settings.ablate;
        if ab.contains(&Ablation::SAaOne) && ab.contains(&Ablation::SEmbOne) {
            return Err(TrainError::Config(
                "s_aa_one and s_emb_one together leave no k-NN selection signal".into(),
            ));
        }
        if self.settings.batch_edges == Some(0) {
            return Err(TrainError::Config("batch_edges must be positive".into()));
        }
        Ok(())
    }

    /// The flat JSON object this config round-trips with.
    pub fn to_value(&self) -> serde_json::Value {
        let mut obj = match serde_json::to_value(&self.model).unwrap() {
            serde_json::Value::Object(m) => m,
            _ => unreachable!(),
        };
        if let serde_json::Value::Object(run) = serde_json::to_value(&self.settings).unwrap() {
            obj.extend(run);
        }
        serde_json::Value::Object(obj)
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { model: ModelConfig::default(), settings: RunSettings::default() }
    }
}

/// Set `path` (dot-separated keys) to `value` inside a JSON object,
/// parsing `value` as JSON when possible and as a bare string otherwise.
pub fn set_json_path(
    root: &mut serde_json::Value,
    path: &str,
    value: &str,
) -> Result<(), TrainError> {
    let parsed: serde_json::Value = serde_json::from_str(value)
        .unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(TrainError::Config(format!("empty key in override path `{path}`")));
        }
        let obj = cur.as_object_mut().ok_or_else(|| {
            TrainError::Config(format!("override path `{path}` descends into a non-object"))
        })?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    unreachable!()
}

/// One line of the epoch log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    #[serde(rename = "L_loc")]
    pub l_loc: f64,
    #[serde(rename = "L_glb")]
    pub l_glb: f64,
    /// Co-cluster mutual information I(K;L) in nats (−L_glb when the
    /// global term is active).
    #[serde(rename = "I_KL")]
    pub i_kl: f64,
    pub tau: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct AblationSet {
    no_luv: bool,
    no_lu: bool,
    no_lv: bool,
    no_lglb: bool,
    a_meta_ones: bool,
    a_emb_ones: bool,
    no_filter: bool,
    delta_relu: bool,
    s_aa_one: bool,
    s_emb_one: bool,
}

impl AblationSet {
    fn from_list(list: &[Ablation]) -> Self {
        let mut s = AblationSet::default();
        for a in list {
            match a {
                Ablation::NoLuv => s.no_luv = true,
                Ablation::NoLu => s.no_lu = true,
                Ablation::NoLv => s.no_lv = true,
                Ablation::NoLglb => s.no_lglb = true,
                Ablation::AMetaOnes => s.a_meta_ones = true,
                Ablation::AEmbOnes => s.a_emb_ones = true,
                Ablation::NoFilter => s.no_filter = true,
                Ablation::DeltaRelu => s.delta_relu = true,
                Ablation::SAaOne => s.s_aa_one = true,
                Ablation::SEmbOne => s.s_emb_one = true,
            }
        }
        s
    }

    fn knn_mode(&self) -> SimilarityMode {
        match (self.s_aa_one, self.s_emb_one) {
            (true, false) => SimilarityMode::EmbeddingOnly,
            (false, true) => SimilarityMode::StructureOnly,
            _ => SimilarityMode::Product,
        }
    }
}

/// Owns everything one training run mutates. One instance per run; clone
/// the model state out for concurrent evaluation.
pub struct Trainer<S: Scalar> {
    graph: Arc<BipartiteGraph>,
    pub config: RunConfig,
    pub state: ModelState<S>,
    pub optimizer: Adam<S>,
    pub epoch: usize,
    pub history: Vec<EpochStats>,
    ablate: AblationSet,
    a_meta: Tensor<S>,
    nbr_u: NeighborIndex,
    nbr_v: NeighborIndex,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(graph: Arc<BipartiteGraph>, config: RunConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let state = ModelState::init(
            config.model.clone(),
            graph.n(Side::U),
            graph.n(Side::V),
            config.settings.seed,
        );
        let optimizer = Adam::new(&state.theta, S::from_f64(config.model.lr));
        Self::assemble(graph, config, state, optimizer, 0)
    }

    /// Continue from a saved checkpoint. The stored config wins for model
    /// hyperparameters; run settings come from `config`.
    pub fn from_checkpoint(
        graph: Arc<BipartiteGraph>,
        mut config: RunConfig,
        ckpt: Checkpoint<S>,
    ) -> Result<Self, TrainError> {
        config.model = ckpt.state.config.clone();
        config.validate()?;
        Self::assemble(graph, config, ckpt.state, ckpt.optimizer, ckpt.epoch)
    }

    fn assemble(
        graph: Arc<BipartiteGraph>,
        config: RunConfig,
        state: ModelState<S>,
        optimizer: Adam<S>,
        epoch: usize,
    ) -> Result<Self, TrainError> {
        let ablate = AblationSet::from_list(&config.settings.ablate);
        let a_meta = if ablate.a_meta_ones {
            Tensor::filled(graph.n(Side::U), graph.n(Side::V), S::from_f64(1.0))
        } else {
            let meta = metapath_adjacency(&graph, config.model.n_hops, config.model.metapath_binarize)?;
            Tensor::from_f64_tensor(&meta.matrix)
        };
        let nbr_u = build_neighbor_index(&graph, Side::U, config.model.n_knn);
        let nbr_v = build_neighbor_index(&graph, Side::V, config.model.n_knn);
        Ok(Trainer {
            graph,
            config,
            state,
            optimizer,
            epoch,
            history: Vec::new(),
            ablate,
            a_meta,
            nbr_u,
            nbr_v,
        })
    }

    pub fn graph(&self) -> &Arc<BipartiteGraph> {
        &self.graph
    }

    /// One epoch: refresh k-NN lists from start-of-epoch embeddings, take
    /// one optimizer step per edge batch (a single full batch by default),
    /// then move the target network.
    pub fn epoch_step(&mut self) -> Result<EpochStats, TrainError> {
        let start = Instant::now();
        let cfg = self.config.model.clone();
        let tau = tau_schedule(cfg.tau_init, self.epoch, cfg.epochs);

        let (phi_u, phi_v) = encode_values(&self.state.phi, &cfg, &self.graph);
        let (theta_u, theta_v) = encode_values(&self.state.theta, &cfg, &self.graph);
        let mode = self.ablate.knn_mode();
        let knn_u = select_knn_batch(&self.nbr_u, &theta_u, &phi_u, cfg.n_knn, mode);
        let knn_v = select_knn_batch(&self.nbr_v, &theta_v, &phi_v, cfg.n_knn, mode);
        drop((theta_u, theta_v));

        let batches: Vec<Vec<(u32, u32)>> = match self.config.settings.batch_edges {
            None => vec![self.graph.edges().to_vec()],
            Some(b) => {
                let mut order = self.graph.edges().to_vec();
                let mut rng = ChaCha8Rng::seed_from_u64(
                    self.config.settings.seed ^ (self.epoch as u64).wrapping_mul(0x9e3779b97f4a7c15),
                );
                order.shuffle(&mut rng);
                order.chunks(b).map(<[(u32, u32)]>::to_vec).collect()
            }
        };

        let mut l_loc_sum = 0.0;
        let mut l_glb_sum = 0.0;
        for batch in &batches {
            let (l_loc, l_glb) = self.gradient_step(batch, &knn_u, &knn_v, &phi_u, &phi_v)?;
            l_loc_sum += l_loc;
            l_glb_sum += l_glb;
        }
        let n_steps = batches.len() as f64;

        self.state.ema_update(tau);
        self.epoch += 1;
        let stats = EpochStats {
            epoch: self.epoch,
            l_loc: l_loc_sum / n_steps,
            l_glb: l_glb_sum / n_steps,
            i_kl: if self.ablate.no_lglb { 0.0 } else { -l_glb_sum / n_steps },
            tau,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        self.history.push(stats.clone());
        Ok(stats)
    }

    fn gradient_step(
        &mut self,
        edges: &[(u32, u32)],
        knn_u: &[Vec<u32>],
        knn_v: &[Vec<u32>],
        phi_u: &Tensor<S>,
        phi_v: &Tensor<S>,
    ) -> Result<(f64, f64), TrainError> {
        let cfg = &self.config.model;
        let ab = self.ablate;
        let mut tape = Tape::new();
        let binding = bind(&mut tape, &self.state.theta, true);
        let (u_emb, v_emb) = encode(&mut tape, &binding, cfg, &self.graph);
        let u_proj = project(&mut tape, &binding, cfg, "u", u_emb);
        let v_proj = project(&mut tape, &binding, cfg, "v", v_emb);
        let u_phi = tape.constant(phi_u.clone());
        let v_phi = tape.constant(phi_v.clone());
        let zero = tape.constant(Tensor::scalar(S::from_f64(0.0)));

        let l_uv = if ab.no_luv {
            zero
        } else {
            loss_uv(&mut tape, u_proj, v_proj, u_phi, v_phi, edges)?
        };
        let l_u = if ab.no_lu {
            zero
        } else {
            loss_intra(&mut tape, u_proj, u_phi, knn_u, cfg.n_knn)
        };
        let l_v = if ab.no_lv {
            zero
        } else {
            loss_intra(&mut tape, v_proj, v_phi, knn_v, cfg.n_knn)
        };
        let weights = LossWeights {
            lambda_uv: cfg.lambda_uv,
            lambda_u: cfg.lambda_u,
            lambda_v: cfg.lambda_v,
        };
        let l_loc = loss_local(&mut tape, l_uv, l_u, l_v, &weights);

        let l_glb = if ab.no_lglb {
            zero
        } else {
            let a_emb = if ab.a_emb_ones {
                tape.constant(Tensor::filled(
                    self.graph.n(Side::U),
                    self.graph.n(Side::V),
                    S::from_f64(1.0),
                ))
            } else {
                let opts = AdjacencyOptions {
                    delta: if ab.delta_relu { DeltaKind::Relu } else { DeltaKind::Abs },
                    filter_alpha: if ab.no_filter { None } else { Some(cfg.alpha) },
                };
                embedding_adjacency(&mut tape, u_emb, v_emb, u_phi, v_phi, &opts)
            };
            let a_meta = tape.constant(self.a_meta.clone());
            let joint = joint_node_distribution(&mut tape, a_meta, a_emb)?;
            let p_k = cluster_probs(&mut tape, &binding, "u", u_proj);
            let p_l = cluster_probs(&mut tape, &binding, "v", v_proj);
            let p_kl = joint_cluster_distribution(&mut tape, p_k, p_l, joint.p)?;
            let mi = mutual_information_node(&mut tape, p_kl);
            tape.scale(mi, S::from_f64(-1.0))
        };

        let total = loss_total(&mut tape, l_loc, l_glb);
        let l_loc_val = tape.value(l_loc).item().as_f64();
        let l_glb_val = tape.value(l_glb).item().as_f64();
        if !tape.value(total).item().as_f64().is_finite() {
            return Err(TrainError::NonFinite { epoch: self.epoch });
        }

        let mut grads = tape.backward(total);
        let mut by_name: HashMap<String, Tensor<S>> = HashMap::new();
        for (name, id) in &binding {
            if let Some(g) = grads.take(*id) {
                by_name.insert(name.clone(), g);
            }
        }
        drop(tape); // release forward values before the optimizer allocates
        self.optimizer.apply(&mut self.state.theta, &by_name)?;
        Ok((l_loc_val, l_glb_val))
    }

    /// Drive the run to `epochs`, appending one JSON line per epoch to
    /// `epochs.jsonl` and saving a checkpoint after every epoch when an
    /// output directory is configured. On an abort, the last completed
    /// epoch's checkpoint is left in place.
    pub fn run(&mut self, idmap_ref: &str) -> Result<(), TrainError> {
        let out_dir = self.config.settings.out_dir.clone();
        let mut log = match &out_dir {
            Some(dir) => {
                fs::create_dir_all(dir)
                    .map_err(|source| TrainError::Io { path: dir.clone(), source })?;
                let path = dir.join("epochs.jsonl");
                Some((
                    fs::OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(&path)
                        .map_err(|source| TrainError::Io { path: path.clone(), source })?,
                    path,
                ))
            }
            None => None,
        };
        while self.epoch < self.config.model.epochs {
            let stats = self.epoch_step()?;
            log::info!(
                "epoch {} L_loc {:.6} L_glb {:.6} I_KL {:.6} tau {:.4} ({} ms)",
                stats.epoch, stats.l_loc, stats.l_glb, stats.i_kl, stats.tau, stats.wall_ms
            );
            if let Some((f, path)) = &mut log {
                let line = serde_json::to_string(&stats)
                    .map_err(|e| TrainError::Config(format!("serializing epoch stats: {e}")))?;
                writeln!(f, "{line}")
                    .map_err(|source| TrainError::Io { path: path.clone(), source })?;
            }
            if let Some(dir) = &out_dir {
                save_checkpoint(
                    &checkpoint::checkpoint_path(dir),
                    &self.state,
                    &self.optimizer,
                    self.epoch,
                    idmap_ref,
                )?;
            }
        }
        Ok(())
    }
}

/// Value-form view of the global objective's ingredients for a trained
/// model: the joint node distribution p(u,v) and the co-cluster joint
/// p(k,l), computed with the same graph ops training uses.
pub struct GlobalSnapshot {
    pub p_uv: Tensor<f64>,
    pub cluster_joint: crate::objectives::JointClusterDistribution,
}

pub fn global_snapshot<S: Scalar>(
    state: &ModelState<S>,
    graph: &BipartiteGraph,
    ablate: &[Ablation],
) -> Result<GlobalSnapshot, TrainError> {
    let ab = AblationSet::from_list(ablate);
    let cfg = &state.config;
    let mut tape = Tape::new();
    let binding = bind(&mut tape, &state.theta, false);
    let (u_emb, v_emb) = encode(&mut tape, &binding, cfg, graph);
    let u_proj = project(&mut tape, &binding, cfg, "u", u_emb);
    let v_proj = project(&mut tape, &binding, cfg, "v", v_emb);
    let (phi_u, phi_v) = encode_values(&state.phi, cfg, graph);
    let u_phi = tape.constant(phi_u);
    let v_phi = tape.constant(phi_v);

    let a_emb = if ab.a_emb_ones {
        tape.constant(Tensor::filled(
            graph.n(Side::U),
            graph.n(Side::V),
            S::from_f64(1.0),
        ))
    } else {
        let opts = AdjacencyOptions {
            delta: if ab.delta_relu { DeltaKind::Relu } else { DeltaKind::Abs },
            filter_alpha: if ab.no_filter { None } else { Some(cfg.alpha) },
        };
        embedding_adjacency(&mut tape, u_emb, v_emb, u_phi, v_phi, &opts)
    };
    let a_meta = if ab.a_meta_ones {
        tape.constant(Tensor::filled(
            graph.n(Side::U),
            graph.n(Side::V),
            S::from_f64(1.0),
        ))
    } else {
        let meta = metapath_adjacency(graph, cfg.n_hops, cfg.metapath_binarize)?;
        tape.constant(Tensor::from_f64_tensor(&meta.matrix))
    };
    let joint = joint_node_distribution(&mut tape, a_meta, a_emb)?;
    let p_k = cluster_probs(&mut tape, &binding, "u", u_proj);
    let p_l = cluster_probs(&mut tape, &binding, "v", v_proj);
    let p_kl = joint_cluster_distribution(&mut tape, p_k, p_l, joint.p)?;
    let p_uv = tape.value(joint.p).to_f64();
    let cluster_joint =
        crate::objectives::JointClusterDistribution::from_joint(tape.value(p_kl).to_f64());
    Ok(GlobalSnapshot { p_uv, cluster_joint })
}

fn write_matrix_tsv<S: Scalar>(
    path: &Path,
    t: &Tensor<S>,
    row_id: impl Fn(usize) -> String,
) -> Result<(), TrainError> {
    let io_err = |source| TrainError::Io { path: path.to_path_buf(), source };
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for r in 0..t.rows() {
        let mut line = row_id(r);
        for &x in t.row(r) {
            line.push('\t');
            line.push_str(&format!("{:.8e}", x.as_f64()));
        }
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Write the online embeddings (pre-projector) and cluster probabilities,
/// one TSV row per node: raw id, then the values with 9 significant digits.
pub fn emit_embeddings<S: Scalar>(
    state: &ModelState<S>,
    graph: &BipartiteGraph,
    idmap: Option<&IdMap>,
    out_dir: &Path,
) -> Result<(), TrainError> {
    fs::create_dir_all(out_dir)
        .map_err(|source| TrainError::Io { path: out_dir.to_path_buf(), source })?;
    let snap = forward_snapshot(&state.theta, &state.config, graph);
    let id_for = |side: Side| {
        move |i: usize| match idmap {
            Some(m) => m.raw(side, i as u32).to_string(),
            None => i.to_string(),
        }
    };
    write_matrix_tsv(&out_dir.join("u_embeddings.tsv"), &snap.u_emb, id_for(Side::U))?;
    write_matrix_tsv(&out_dir.join("v_embeddings.tsv"), &snap.v_emb, id_for(Side::V))?;
    write_matrix_tsv(&out_dir.join("u_clusters.tsv"), &snap.u_probs, id_for(Side::U))?;
    write_matrix_tsv(&out_dir.join("v_clusters.tsv"), &snap.v_probs, id_for(Side::V))?;
    Ok(())
}

/// Parse a TSV written by [`emit_embeddings`] back into ids and a matrix.
pub fn read_matrix_tsv(path: &Path) -> Result<(Vec<String>, Tensor<f64>), TrainError> {
    let io_err = |source| TrainError::Io { path: path.to_path_buf(), source };
    let text = fs::read_to_string(path).map_err(io_err)?;
    let mut ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        ids.push(fields.next().unwrap_or_default().to_string());
        let vals: Result<Vec<f64>, _> = fields.map(str::parse).collect();
        rows.push(vals.map_err(|e| TrainError::Checkpoint {
            path: path.to_path_buf(),
            msg: format!("line {}: {e}", ln + 1),
        })?);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(TrainError::Checkpoint {
            path: path.to_path_buf(),
            msg: "ragged rows".into(),
        });
    }
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    Ok((ids, Tensor::from_vec(data.len() / cols.max(1), cols.max(1), data)))
}

/// Read a `raw_id<TAB>class` label file and align it with interned indices.
/// Returns one class index per node; unlabeled nodes error out.
pub fn read_labels(
    path: &Path,
    idmap: &IdMap,
    side: Side,
    n: usize,
) -> Result<Vec<usize>, TrainError> {
    let io_err = |source| TrainError::Io { path: path.to_path_buf(), source };
    let text = fs::read_to_string(path).map_err(io_err)?;
    let mut class_ids: HashMap<String, usize> = HashMap::new();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (raw, class) = match (fields.next(), fields.next()) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(TrainError::Checkpoint {
                    path: path.to_path_buf(),
                    msg: format!("line {}: expected `raw_id class`", ln + 1),
                })
            }
        };
        let Some(idx) = idmap.lookup(side, raw) else { continue };
        let next = class_ids.len();
        let c = *class_ids.entry(class.to_string()).or_insert(next);
        labels[idx as usize] = Some(c);
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            l.ok_or_else(|| TrainError::Checkpoint {
                path: path.to_path_buf(),
                msg: format!("node index {i} has no label"),
            })
        })
        .collect()
}
