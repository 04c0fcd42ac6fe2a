//! `sterling` — train bipartite-graph embeddings and evaluate them on
//! recommendation, link prediction and co-clustering tasks.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, config, or paths),
//! 2 runtime failure. Log verbosity via `STERLING_LOG={error,info,debug}`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sterling::bigraph::{ingest_edge_list, BipartiteGraph, IdMap, Side};
use sterling::evalkit::{
    cocluster_score, config_hash, link_prediction_auc, mean_pairwise_cosine, mi_bound_diagnostic,
    rank_by_cosine, recommend_metrics, sample_negatives, ResultsFile,
};
use sterling::nets::forward_snapshot;
use sterling::scalar::Scalar;
use sterling::trainer::{
    emit_embeddings, global_snapshot, load_checkpoint, read_labels, set_json_path, Ablation,
    RunConfig, Trainer,
};

#[derive(Parser)]
#[command(name = "sterling", version, about = "Bipartite graph embeddings without negative sampling")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Train a model, checkpointing every epoch
    Train(Common),
    /// Export embeddings and cluster probabilities from a checkpoint
    Embed(Common),
    /// Top-K recommendation metrics against the test edges
    EvalRec(EvalRecArgs),
    /// Link-prediction AUC with a logistic-regression probe
    EvalLp(Common),
    /// Co-clustering NMI/ACC against a label file
    EvalCc(Common),
    /// Compare co-cluster mutual information with a quantized estimate
    DiagMi(DiagMiArgs),
    /// Finite-difference validation of every gradient rule
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct Common {
    /// JSON run config (flat: model hyperparameters + run settings)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for dense algebra (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (overrides the config's out_dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite outputs that already exist
    #[arg(long)]
    force: bool,
    /// Float width for parameters and math
    #[arg(long, value_enum, default_value_t = PrecisionArg::F32)]
    precision: PrecisionArg,
    /// Comma-separated ablation switches (e.g. no_luv,no_filter)
    #[arg(long, value_delimiter = ',')]
    ablate: Vec<String>,
    /// Config overrides, dot-path=JSON-value (e.g. --set d=256)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct EvalRecArgs {
    #[command(flatten)]
    common: Common,
    /// Cutoffs for F1/NDCG/MAP/MRR
    #[arg(long, value_delimiter = ',', default_value = "10")]
    k: Vec<usize>,
}

#[derive(Args)]
struct DiagMiArgs {
    #[command(flatten)]
    common: Common,
    /// Codes per side for the quantized estimate
    #[arg(long, default_value_t = 16)]
    bins: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

enum CliError {
    /// Bad input: flags, config contents, missing files.
    Validation(String),
    /// The run itself failed.
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "run failed: {m}"),
        }
    }
}

fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn runtime(err: impl std::fmt::Display) -> CliError {
    CliError::Runtime(err.to_string())
}

fn main() {
    env_logger::Builder::from_env(
        env_logger::Env::default().filter_or("STERLING_LOG", "info"),
    )
    .format_timestamp(None)
    .init();

    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("sterling: {e}");
            std::process::exit(e.code());
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.verb {
        Verb::Gradcheck(args) => gradcheck(args),
        Verb::Train(c) => with_precision(c, train::<f32>, train::<f64>),
        Verb::Embed(c) => with_precision(c, embed::<f32>, embed::<f64>),
        Verb::EvalRec(args) => {
            let k = args.k.clone();
            with_precision(
                args.common,
                move |ctx| eval_rec::<f32>(ctx, &k),
                {
                    let k = args.k;
                    move |ctx| eval_rec::<f64>(ctx, &k)
                },
            )
        }
        Verb::EvalLp(c) => with_precision(c, eval_lp::<f32>, eval_lp::<f64>),
        Verb::EvalCc(c) => with_precision(c, eval_cc::<f32>, eval_cc::<f64>),
        Verb::DiagMi(args) => {
            let bins = args.bins;
            with_precision(
                args.common,
                move |ctx| diag_mi::<f32>(ctx, bins),
                move |ctx| diag_mi::<f64>(ctx, bins),
            )
        }
    }
}

/// Everything a command needs after flag/config resolution.
struct Ctx {
    config: RunConfig,
    resolved: serde_json::Value,
    out_dir: Option<PathBuf>,
    force: bool,
}

impl Ctx {
    fn out_dir(&self) -> Result<&Path, CliError> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| validation("no output directory: pass --out or set out_dir in the config"))
    }

    fn dataset(&self) -> String {
        self.config.settings.dataset.clone().unwrap_or_else(|| "unnamed".into())
    }

    fn split(&self) -> String {
        self.config
            .settings
            .test_edges
            .as_ref()
            .and_then(|p| p.file_stem())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "test".into())
    }
}

fn resolve(common: &Common) -> Result<Ctx, CliError> {
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(validation("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| validation(format!("thread pool: {e}")))?;
    }

    let mut value = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| validation(format!("reading {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| validation(format!("{}: invalid JSON: {e}", path.display())))?
        }
        None => RunConfig::default().to_value(),
    };
    for kv in &common.set {
        let (key, val) = kv
            .split_once('=')
            .ok_or_else(|| validation(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        set_json_path(&mut value, key, val).map_err(|e| validation(e.to_string()))?;
    }
    if let Some(seed) = common.seed {
        set_json_path(&mut value, "seed", &seed.to_string()).map_err(|e| validation(e.to_string()))?;
    }
    if !common.ablate.is_empty() {
        let parsed: Result<Vec<Ablation>, String> =
            common.ablate.iter().map(|s| s.parse()).collect();
        let list = serde_json::to_value(parsed.map_err(validation_msg)?).unwrap();
        set_json_path(&mut value, "ablate", &list.to_string())
            .map_err(|e| validation(e.to_string()))?;
    }
    if let Some(out) = &common.out {
        let quoted = serde_json::to_string(out).map_err(|e| validation(e.to_string()))?;
        set_json_path(&mut value, "out_dir", &quoted).map_err(|e| validation(e.to_string()))?;
    }

    let config = RunConfig::from_value(value).map_err(|e| validation(e.to_string()))?;
    let resolved = config.to_value();
    println!("{}", serde_json::to_string_pretty(&resolved).unwrap());
    let out_dir = config.settings.out_dir.clone();
    Ok(Ctx { config, resolved, out_dir, force: common.force })
}

fn validation_msg(m: String) -> CliError {
    CliError::Validation(m)
}

fn with_precision<A, B>(common: Common, f32_run: A, f64_run: B) -> Result<(), CliError>
where
    A: FnOnce(Ctx) -> Result<(), CliError>,
    B: FnOnce(Ctx) -> Result<(), CliError>,
{
    let precision = common.precision;
    let ctx = resolve(&common)?;
    match precision {
        PrecisionArg::F32 => f32_run(ctx),
        PrecisionArg::F64 => f64_run(ctx),
    }
}

fn load_graph(ctx: &Ctx) -> Result<(Arc<BipartiteGraph>, IdMap), CliError> {
    let path = ctx
        .config
        .settings
        .train_edges
        .as_ref()
        .ok_or_else(|| validation("config field train_edges is required"))?;
    let (graph, idmap) = ingest_edge_list(path, ctx.config.settings.edge_weights)
        .map_err(|e| validation(e.to_string()))?;
    log::info!(
        "graph: {} U-nodes, {} V-nodes, {} edges",
        graph.n(Side::U),
        graph.n(Side::V),
        graph.edges().len()
    );
    Ok((Arc::new(graph), idmap))
}

fn refuse_overwrite(path: &Path, force: bool) -> Result<(), CliError> {
    if path.exists() && !force {
        return Err(validation(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

fn train<S: Scalar>(ctx: Ctx) -> Result<(), CliError> {
    let (graph, idmap) = load_graph(&ctx)?;
    let out_dir = ctx.out_dir()?.to_path_buf();
    refuse_overwrite(&out_dir.join("checkpoint.bin"), ctx.force)?;
    fs::create_dir_all(&out_dir).map_err(|e| runtime(format!("{}: {e}", out_dir.display())))?;
    if ctx.force {
        // a fresh run must not append to a stale epoch log
        let _ = fs::remove_file(out_dir.join("epochs.jsonl"));
    }
    let idmap_path = out_dir.join("idmap.tsv");
    idmap.write_tsv(&idmap_path).map_err(runtime)?;
    fs::write(
        out_dir.join("config.json"),
        serde_json::to_string_pretty(&ctx.resolved).unwrap(),
    )
    .map_err(|e| runtime(format!("writing config.json: {e}")))?;

    let mut trainer: Trainer<S> = Trainer::new(graph.clone(), ctx.config.clone()).map_err(runtime)?;
    trainer.run("idmap.tsv").map_err(runtime)?;
    emit_embeddings(&trainer.state, &graph, Some(&idmap), &out_dir).map_err(runtime)?;

    let non_collapse = {
        let snap = forward_snapshot(&trainer.state.theta, &trainer.state.config, &graph);
        mean_pairwise_cosine(&snap.u_emb, 100, ctx.config.settings.seed)
    };
    println!(
        "trained {} epochs; final L_loc {:.6}, L_glb {:.6}, mean pairwise cos(U) {:.4}",
        trainer.history.len(),
        trainer.history.last().map_or(f64::NAN, |s| s.l_loc),
        trainer.history.last().map_or(f64::NAN, |s| s.l_glb),
        non_collapse
    );
    println!("outputs in {}", out_dir.display());
    Ok(())
}

/// Load the checkpoint plus the graph it was trained on.
fn load_trained<S: Scalar>(
    ctx: &Ctx,
) -> Result<(Arc<BipartiteGraph>, IdMap, sterling::nets::ModelState<S>), CliError> {
    let (graph, idmap) = load_graph(ctx)?;
    let out_dir = ctx.out_dir()?;
    let ckpt_path = out_dir.join("checkpoint.bin");
    let ckpt = load_checkpoint::<S>(&ckpt_path).map_err(|e| runtime(e))?;
    let state = ckpt.state;
    if state.theta.get("u0").map(|t| t.rows()) != Some(graph.n(Side::U)) {
        return Err(validation(format!(
            "checkpoint {} was trained on a different graph",
            ckpt_path.display()
        )));
    }
    Ok((graph, idmap, state))
}

fn embed<S: Scalar>(ctx: Ctx) -> Result<(), CliError> {
    let (graph, idmap, state) = load_trained::<S>(&ctx)?;
    let out_dir = ctx.out_dir()?;
    refuse_overwrite(&out_dir.join("u_embeddings.tsv"), ctx.force)?;
    emit_embeddings(&state, &graph, Some(&idmap), out_dir).map_err(runtime)?;
    println!("wrote embeddings and cluster probabilities to {}", out_dir.display());
    Ok(())
}

fn write_results(ctx: &Ctx, name: &str, results: &ResultsFile) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(results).unwrap();
    println!("{text}");
    if let Some(dir) = &ctx.out_dir {
        let path = dir.join(name);
        refuse_overwrite(&path, ctx.force)?;
        fs::write(&path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn test_pairs(ctx: &Ctx, idmap: &IdMap) -> Result<Vec<(u32, u32)>, CliError> {
    let path = ctx
        .config
        .settings
        .test_edges
        .as_ref()
        .ok_or_else(|| validation("config field test_edges is required"))?;
    let (pairs, skipped) = idmap
        .map_edge_file(path, ctx.config.settings.edge_weights)
        .map_err(|e| validation(e.to_string()))?;
    if skipped > 0 {
        log::warn!("{skipped} test pairs referenced nodes outside the training graph");
    }
    Ok(pairs)
}

fn eval_rec<S: Scalar>(ctx: Ctx, k_values: &[usize]) -> Result<(), CliError> {
    if k_values.is_empty() || k_values.contains(&0) {
        return Err(validation("--k expects positive cutoffs"));
    }
    let (graph, idmap, state) = load_trained::<S>(&ctx)?;
    let test = test_pairs(&ctx, &idmap)?;
    let snap = forward_snapshot(&state.theta, &state.config, &graph);
    let lists = rank_by_cosine(&snap.u_emb, &snap.v_emb, graph.adj(Side::U), &test);
    let table = recommend_metrics(&lists, k_values);
    let mut metrics = BTreeMap::new();
    for row in &table {
        metrics.insert(format!("f1@{}", row.k), row.f1);
        metrics.insert(format!("ndcg@{}", row.k), row.ndcg);
        metrics.insert(format!("map@{}", row.k), row.map);
        metrics.insert(format!("mrr@{}", row.k), row.mrr);
    }
    let results = ResultsFile {
        dataset: ctx.dataset(),
        split: ctx.split(),
        metrics,
        config_hash: config_hash(&ctx.resolved),
        seed: ctx.config.settings.seed,
    };
    write_results(&ctx, "results-rec.json", &results)
}

fn eval_lp<S: Scalar>(ctx: Ctx) -> Result<(), CliError> {
    let (graph, idmap, state) = load_trained::<S>(&ctx)?;
    let test_pos = test_pairs(&ctx, &idmap)?;
    if test_pos.is_empty() {
        return Err(validation("test_edges mapped to zero usable pairs"));
    }
    let seed = ctx.config.settings.seed;
    let train_pos = graph.edges();
    let negs = sample_negatives(&graph, train_pos.len() + test_pos.len(), seed);
    let (train_neg, test_neg) = negs.split_at(train_pos.len());
    let snap = forward_snapshot(&state.theta, &state.config, &graph);
    let report = link_prediction_auc(
        &snap.u_emb,
        &snap.v_emb,
        train_pos,
        train_neg,
        &test_pos,
        test_neg,
        1e-4,
        10_000,
    )
    .map_err(runtime)?;
    log::info!(
        "probe: {} iterations, final gradient norm {:.2e}",
        report.probe_iterations,
        report.probe_grad_norm
    );
    let mut metrics = BTreeMap::new();
    metrics.insert("auc".to_string(), report.auc);
    let results = ResultsFile {
        dataset: ctx.dataset(),
        split: ctx.split(),
        metrics,
        config_hash: config_hash(&ctx.resolved),
        seed,
    };
    write_results(&ctx, "results-lp.json", &results)
}

fn eval_cc<S: Scalar>(ctx: Ctx) -> Result<(), CliError> {
    let (graph, idmap, state) = load_trained::<S>(&ctx)?;
    let labels_path = ctx
        .config
        .settings
        .labels
        .as_ref()
        .ok_or_else(|| validation("config field labels is required"))?;
    let side = ctx.config.settings.label_side;
    let labels = read_labels(labels_path, &idmap, side, graph.n(side))
        .map_err(|e| validation(e.to_string()))?;
    let snap = forward_snapshot(&state.theta, &state.config, &graph);
    let probs = match side {
        Side::U => &snap.u_probs,
        Side::V => &snap.v_probs,
    };
    let score = cocluster_score(probs, &labels);
    let mut metrics = BTreeMap::new();
    metrics.insert("nmi".to_string(), 100.0 * score.nmi);
    metrics.insert("acc".to_string(), 100.0 * score.acc);
    let results = ResultsFile {
        dataset: ctx.dataset(),
        split: format!("{side} labels"),
        metrics,
        config_hash: config_hash(&ctx.resolved),
        seed: ctx.config.settings.seed,
    };
    write_results(&ctx, "results-cc.json", &results)
}

fn diag_mi<S: Scalar>(ctx: Ctx, bins: usize) -> Result<(), CliError> {
    if bins == 0 {
        return Err(validation("--bins must be at least 1"));
    }
    let (graph, _idmap, state) = load_trained::<S>(&ctx)?;
    let snap = forward_snapshot(&state.theta, &state.config, &graph);
    let global =
        global_snapshot(&state, &graph, &ctx.config.settings.ablate).map_err(runtime)?;
    let diag = mi_bound_diagnostic(&snap.u_emb, &snap.v_emb, &global.p_uv, &global.cluster_joint, bins);
    let report = serde_json::json!({
        "i_cluster_nats": diag.i_cluster,
        "i_quantized_nats": diag.i_quantized,
        "bins": diag.bins,
        "bound_satisfied": diag.i_quantized >= diag.i_cluster - 0.05,
        "note": diag.note,
    });
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    if let Some(dir) = &ctx.out_dir {
        let path = dir.join("diag-mi.json");
        refuse_overwrite(&path, ctx.force)?;
        fs::write(&path, serde_json::to_string_pretty(&report).unwrap())
            .map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    let reports = sterling::gradcheck::run_suite(args.seed);
    let mut failed = 0usize;
    for r in &reports {
        println!("{r}");
        if !r.passed {
            failed += 1;
        }
    }
    println!("{} checks, {} failed", reports.len(), failed);
    if failed > 0 {
        return Err(CliError::Runtime(format!("{failed} gradient checks failed")));
    }
    Ok(())
}
