//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 data or file error, 4 numeric
//! failure.

mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::error::{LedaError, Result};
use crate::eval::{
    self, embed, embedding_kind, fewshot_eval, graph_eval, linear_probe, mi_diagnostic, to_sorted_json,
    write_embeddings_tsv, EvalReport, ProbeConfig,
};
use crate::graph::{generate_sbm, load_dataset, save_dataset, DomainGraph, GraphCollection, TaskKind};
use crate::train::{load_checkpoint, pretrain, save_checkpoint, Checkpoint, Variant};

pub use config::{EvalSection, ModelSection, RunConfig, TrainSection};

#[derive(Parser, Debug)]
#[command(name = "leda", version, about = "Multi-domain graph pre-training and evaluation")]
struct Cli {
    /// Worker threads; 1 runs everything on the calling thread.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train on every domain of a dataset and write a checkpoint.
    Pretrain(PretrainArgs),
    /// Export node embeddings of one domain as TSV.
    Embed(EmbedArgs),
    /// Linear-probe accuracy on one domain.
    EvalLinear(EvalLinearArgs),
    /// k-shot prototype accuracy on one domain.
    EvalFewshot(EvalFewshotArgs),
    /// Graph classification with prototypes from a labeled support split.
    EvalGraph(EvalGraphArgs),
    /// Train ablation variants without a held-out domain and compare k-shot accuracy on it.
    Ablate(AblateArgs),
    /// Mutual-information proxy between two domains' embeddings.
    MiDiag(MiDiagArgs),
    /// Write a synthetic stochastic-block-model dataset.
    GenSbm(GenSbmArgs),
}

#[derive(Args, Debug)]
struct PretrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's `data`.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    variant: Option<Variant>,
    /// Train the projection unit alone before the joint phase.
    #[arg(long)]
    two_phase: bool,
}

#[derive(Args, Debug)]
struct Target {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Optional run config supplying evaluation defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra propagation steps (overrides the config's per-domain value).
    #[arg(long)]
    t: Option<usize>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    domain: String,
    #[arg(long, default_value_t = 0)]
    t: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalLinearArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long)]
    domain: String,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    train_frac: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct EvalFewshotArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long)]
    domain: String,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct EvalGraphArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long)]
    support: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated variants (full, no-dpu, no-lda, dpu-cl).
    #[arg(long, value_delimiter = ',', default_value = "full,no-dpu,no-lda,dpu-cl")]
    variant: Vec<Variant>,
    #[arg(long)]
    test_domain: String,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MiDiagArgs {
    #[command(flatten)]
    target: Target,
    /// Two comma-separated domain ids.
    #[arg(long, value_delimiter = ',')]
    domains: Vec<String>,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = 66666)]
    seed: u64,
}

#[derive(Args, Debug)]
struct GenSbmArgs {
    #[arg(long, default_value_t = 3)]
    blocks: usize,
    /// Nodes per block.
    #[arg(long, default_value_t = 30)]
    nodes: usize,
    #[arg(long, default_value_t = 0.2)]
    pin: f64,
    #[arg(long, default_value_t = 0.02)]
    pout: f64,
    /// Feature dimension; a comma-separated list writes one domain per entry with seeds
    /// `seed`, `seed + 1`, ...
    #[arg(long, value_delimiter = ',', default_value = "16")]
    dim: Vec<usize>,
    #[arg(long, default_value_t = 2.0)]
    sep: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.threads {
        Some(0) => Err(LedaError::Config("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| LedaError::Config(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| dispatch(cli.command))),
        None => dispatch(cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Pretrain(a) => cmd_pretrain(a),
        Command::Embed(a) => cmd_embed(a),
        Command::EvalLinear(a) => cmd_eval_linear(a),
        Command::EvalFewshot(a) => cmd_eval_fewshot(a),
        Command::EvalGraph(a) => cmd_eval_graph(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::MiDiag(a) => cmd_mi_diag(a),
        Command::GenSbm(a) => cmd_gen_sbm(a),
    }
}

fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Adds the single top-level timestamp and writes sorted JSON to `out` or stdout.
fn emit(mut doc: Value, out: Option<&Path>) -> Result<()> {
    if let Value::Object(map) = &mut doc {
        map.insert("timestamp".into(), json!(timestamp()));
    }
    let text = to_sorted_json(&doc)? + "\n";
    match out {
        Some(path) => fs::write(path, text).map_err(|e| LedaError::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| LedaError::InvalidArgument(format!("json: {e}")))
}

fn optional_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn node_domain<'a>(collection: &'a GraphCollection, id: &str, manifest: &Path) -> Result<&'a DomainGraph> {
    if collection.task_kind != TaskKind::NodeLevel {
        return Err(LedaError::Dataset(format!(
            "{} is graph-level; use eval-graph",
            manifest.display()
        )));
    }
    collection.domain(id).ok_or_else(|| {
        LedaError::Dataset(format!(
            "domain '{id}' not found in {} (available: {})",
            manifest.display(),
            collection.domain_ids().join(", ")
        ))
    })
}

/// Config echo shared by the evaluation commands.
fn eval_echo(ckpt_path: &Path, manifest: &Path, ckpt: &Checkpoint, extra: Value) -> Result<Value> {
    let mut v = json!({
        "checkpoint": ckpt_path.display().to_string(),
        "manifest": manifest.display().to_string(),
        "train": to_value(&ckpt.config)?,
        "embedding": embedding_kind(ckpt.config.variant),
    });
    if let (Value::Object(into), Value::Object(from)) = (&mut v, extra) {
        into.extend(from);
    }
    Ok(v)
}

fn report_doc(mut report: EvalReport, echo: Value) -> Result<Value> {
    report.config = echo;
    to_value(&report)
}

fn cmd_pretrain(a: PretrainArgs) -> Result<()> {
    let mut run = RunConfig::load(&a.config)?;
    if let Some(m) = a.manifest {
        run.data = Some(m);
    }
    if let Some(e) = a.epochs {
        run.train.epochs = e;
    }
    if let Some(s) = a.seed {
        run.train.seed = s;
    }
    if let Some(v) = a.variant {
        run.train.variant = v;
    }
    run.train.two_phase |= a.two_phase;
    let manifest = run
        .data
        .clone()
        .ok_or_else(|| LedaError::Config("no dataset: set `data` in the config or pass --manifest".into()))?;
    let collection = load_dataset(&manifest)?;
    let ckpt = pretrain(&collection, &run.train_config())?;
    save_checkpoint(&ckpt, &a.out)?;
    let last = ckpt.final_loss.as_ref().map_or(f64::NAN, |r| r.total);
    eprintln!(
        "trained {} on {} domain(s) for {} epochs, final loss {last:.6}; wrote {}",
        ckpt.config.variant,
        ckpt.domains.len(),
        ckpt.epoch,
        a.out.display()
    );
    Ok(())
}

fn cmd_embed(a: EmbedArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.ckpt)?;
    let collection = load_dataset(&a.manifest)?;
    let domain = node_domain(&collection, &a.domain, &a.manifest)?;
    let set = embed(domain, &ckpt, a.t)?;
    write_embeddings_tsv(&set, &a.out)
}

fn cmd_eval_linear(a: EvalLinearArgs) -> Result<()> {
    let run = optional_config(a.target.config.as_deref())?;
    let ckpt = load_checkpoint(&a.target.ckpt)?;
    let collection = load_dataset(&a.target.manifest)?;
    let domain = node_domain(&collection, &a.domain, &a.target.manifest)?;
    let t = a.target.t.unwrap_or_else(|| run.eval.t_for(&a.domain));
    let probe = ProbeConfig {
        train_frac: a.train_frac.unwrap_or(run.eval.train_frac),
        runs: a.runs.unwrap_or(run.eval.runs),
        ..Default::default()
    };
    let seed = a.seed.unwrap_or(run.eval.seed);
    let set = embed(domain, &ckpt, t)?;
    let mut report = linear_probe(&set, &probe, seed)?;
    flag_domain(&mut report, domain, t);
    let echo = eval_echo(
        &a.target.ckpt,
        &a.target.manifest,
        &ckpt,
        json!({"domain": a.domain, "t": t, "probe": to_value(&probe)?, "seed": seed}),
    )?;
    emit(report_doc(report, echo)?, a.target.out.as_deref())
}

fn flag_domain(report: &mut EvalReport, domain: &DomainGraph, t: usize) {
    report.flags.push(format!("t_propagate={t}"));
    if domain.degree_featurized {
        report.flags.push("degree-featurized".into());
    }
}

fn cmd_eval_fewshot(a: EvalFewshotArgs) -> Result<()> {
    let run = optional_config(a.target.config.as_deref())?;
    let ckpt = load_checkpoint(&a.target.ckpt)?;
    let collection = load_dataset(&a.target.manifest)?;
    let domain = node_domain(&collection, &a.domain, &a.target.manifest)?;
    let t = a.target.t.unwrap_or_else(|| run.eval.t_for(&a.domain));
    let k = a.k.unwrap_or(run.eval.k_shot);
    let repeats = a.repeats.unwrap_or(run.eval.repeats);
    let seed = a.seed.unwrap_or(run.eval.seed);
    let set = embed(domain, &ckpt, t)?;
    let mut report = fewshot_eval(&set, k, repeats, seed)?;
    flag_domain(&mut report, domain, t);
    let echo = eval_echo(
        &a.target.ckpt,
        &a.target.manifest,
        &ckpt,
        json!({"domain": a.domain, "t": t, "k": k, "repeats": repeats, "seed": seed}),
    )?;
    emit(report_doc(report, echo)?, a.target.out.as_deref())
}

fn cmd_eval_graph(a: EvalGraphArgs) -> Result<()> {
    let run = optional_config(a.target.config.as_deref())?;
    let ckpt = load_checkpoint(&a.target.ckpt)?;
    let collection = load_dataset(&a.target.manifest)?;
    let t = a.target.t.unwrap_or(0);
    let support = a.support.unwrap_or(run.eval.support_per_class);
    let repeats = a.repeats.unwrap_or(run.eval.repeats);
    let seed = a.seed.unwrap_or(run.eval.seed);
    let mut report = graph_eval(&collection, &ckpt, support, repeats, seed, t)?;
    report.flags.push(format!("t_propagate={t}"));
    let echo = eval_echo(
        &a.target.ckpt,
        &a.target.manifest,
        &ckpt,
        json!({"support_per_class": support, "t": t, "repeats": repeats, "seed": seed}),
    )?;
    emit(report_doc(report, echo)?, a.target.out.as_deref())
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let mut run = RunConfig::load(&a.config)?;
    if let Some(m) = a.manifest {
        run.data = Some(m);
    }
    if let Some(e) = a.epochs {
        run.train.epochs = e;
    }
    let manifest = run
        .data
        .clone()
        .ok_or_else(|| LedaError::Config("no dataset: set `data` in the config or pass --manifest".into()))?;
    let collection = load_dataset(&manifest)?;
    let test = node_domain(&collection, &a.test_domain, &manifest)?.clone();
    let keep: Vec<String> = collection
        .domain_ids()
        .into_iter()
        .filter(|id| *id != a.test_domain)
        .collect();
    if keep.is_empty() {
        return Err(LedaError::Dataset("ablation needs at least one training domain besides the test domain".into()));
    }
    let train_set = collection.subset(&keep.iter().map(String::as_str).collect::<Vec<_>>());
    let k = a.k.unwrap_or(run.eval.k_shot);
    let repeats = a.repeats.unwrap_or(run.eval.repeats);
    let seed = a.seed.unwrap_or(run.eval.seed);
    let t = run.eval.t_for(&a.test_domain);

    let mut rows = Vec::new();
    for variant in &a.variant {
        let mut cfg = run.train_config();
        cfg.variant = *variant;
        let ckpt = pretrain(&train_set, &cfg)?;
        let set = embed(&test, &ckpt, t)?;
        let report = fewshot_eval(&set, k, repeats, seed)?;
        rows.push(json!({
            "variant": variant.name(),
            "embedding": embedding_kind(*variant),
            "mean_accuracy": report.mean_accuracy,
            "std": report.std,
            "repeats": report.repeats,
        }));
        eprintln!("{:>7}: {:.2} ± {:.2}", variant.name(), report.mean_accuracy, report.std);
    }
    let doc = json!({
        "task": format!("fewshot-{k}"),
        "test_domain": a.test_domain,
        "train_domains": keep,
        "seed": seed,
        "rows": rows,
        "config": {
            "run": to_value(&run)?,
            "k": k,
            "repeats": repeats,
            "t": t,
        },
    });
    emit(doc, a.out.as_deref())
}

fn cmd_mi_diag(a: MiDiagArgs) -> Result<()> {
    if a.domains.len() != 2 {
        return Err(LedaError::Config(format!(
            "--domains takes exactly two ids, got {}",
            a.domains.len()
        )));
    }
    let run = optional_config(a.target.config.as_deref())?;
    let ckpt = load_checkpoint(&a.target.ckpt)?;
    let collection = load_dataset(&a.target.manifest)?;
    let mut sets = Vec::new();
    for id in &a.domains {
        let domain = node_domain(&collection, id, &a.target.manifest)?;
        let t = a.target.t.unwrap_or_else(|| run.eval.t_for(id));
        sets.push(embed(domain, &ckpt, t)?);
    }
    let record = mi_diagnostic(&sets[0], &sets[1], a.tau, a.seed)?;
    let mut doc = to_value(&record)?;
    let echo = eval_echo(
        &a.target.ckpt,
        &a.target.manifest,
        &ckpt,
        json!({"domains": a.domains, "tau": a.tau, "seed": a.seed}),
    )?;
    if let Value::Object(map) = &mut doc {
        map.insert("config".into(), echo);
        let entropies: serde_json::Map<String, Value> = a
            .domains
            .iter()
            .map(|id| -> Result<(String, Value)> {
                let d = node_domain(&collection, id, &a.target.manifest)?;
                let h = eval::diagnostics_entropy(&ckpt, d)?;
                Ok((id.clone(), if h.degenerate { json!("degenerate") } else { json!(h.nats) }))
            })
            .collect::<Result<_>>()?;
        map.insert("entropy".into(), Value::Object(entropies));
    }
    emit(doc, a.target.out.as_deref())
}

fn cmd_gen_sbm(a: GenSbmArgs) -> Result<()> {
    if a.dim.is_empty() {
        return Err(LedaError::Config("--dim needs at least one value".into()));
    }
    let graphs = a
        .dim
        .iter()
        .enumerate()
        .map(|(i, &d)| generate_sbm(a.blocks, a.nodes, a.pin, a.pout, d, a.sep, a.seed + i as u64))
        .collect::<Result<Vec<_>>>()?;
    let collection = GraphCollection::node_level(graphs)?;
    fs::create_dir_all(&a.out).map_err(|e| LedaError::io(&a.out, e))?;
    let manifest = save_dataset(&collection, &a.out)?;
    println!("{}", manifest.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["leda", "no-such-command"]), 2);
        assert_eq!(run(["leda", "pretrain"]), 2);
        assert_eq!(run(["leda", "--help"]), 0);
    }

    #[test]
    fn unknown_variant_is_usage_error() {
        assert_eq!(
            run(["leda", "ablate", "--config", "x.json", "--test-domain", "a", "--variant", "bogus"]),
            2
        );
    }

    #[test]
    fn missing_config_exits_two() {
        assert_eq!(
            run(["leda", "pretrain", "--config", "/nonexistent/run.json", "--out", "/tmp/x.ckpt"]),
            2
        );
    }
}
