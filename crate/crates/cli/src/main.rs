mod args;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde::Serialize;
use stgad_core::bench::{run_bench, write_bench_csv};
use stgad_core::config::RunConfig;
use stgad_core::graph_store::{load_dataset, load_labels, save_dataset, split_temporal};
use stgad_core::inject::inject_all;
use stgad_core::pipeline::ablation_suite;
use stgad_core::scoring::{evaluate, score_nodes, Variant};
use stgad_core::synthetic::generate;
use stgad_core::training::{load_checkpoint, save_checkpoint, train, write_loss_history};
use stgad_core::{Error, ModelParameters, Result};

use args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cli.apply(&mut cfg);
    cfg.validate()?;
    if cli.dump_config {
        print!("{}", cfg.to_toml_string()?);
        return Ok(());
    }
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Generate(_) => cmd_generate(&cfg),
        Command::Inject(_) => cmd_inject(&cfg),
        Command::Train(_) => cmd_train(&cfg),
        Command::Score(_) => cmd_score(&cfg, false),
        Command::Eval(_) => cmd_score(&cfg, true),
        Command::Ablate(_) => cmd_ablate(&cfg),
        Command::Bench(_) => cmd_bench(&cfg),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(value: &impl Serialize, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn require_output(cfg: &RunConfig) -> Result<&Path> {
    cfg.output
        .as_deref()
        .ok_or_else(|| Error::Config("no output directory given (set `output` or pass --output)".into()))
}

fn cmd_generate(cfg: &RunConfig) -> Result<()> {
    let out = require_output(cfg)?;
    let graph = generate(&cfg.synthetic)?;
    save_dataset(&graph, None, out)?;
    println!("wrote {} snapshots of {} nodes to {}", graph.num_snapshots(), graph.node_count(), out.display());
    Ok(())
}

fn cmd_inject(cfg: &RunConfig) -> Result<()> {
    let out = require_output(cfg)?;
    let graph = load_dataset(cfg.data_dir()?)?;
    let (_, test_ts) = split_temporal(&graph, cfg.train_ratio, cfg.model.window)?;
    let (injected, mut labels) = inject_all(&graph, &test_ts, &cfg.injection)?;
    if let Some(existing) = load_labels(cfg.data_dir()?)? {
        labels.extend(&existing);
    }
    save_dataset(&injected, Some(&labels), out)?;
    println!("planted {} anomalies over {} test snapshots into {}", labels.total(), test_ts.len(), out.display());
    Ok(())
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let graph = load_dataset(cfg.data_dir()?)?;
    let mut model = cfg.effective_model();
    model.input_dim = graph.feature_dim();
    let (train_ts, _) = split_temporal(&graph, cfg.train_ratio, model.window)?;
    let started = Instant::now();
    let outcome = train(&graph, &train_ts, &model, &cfg.train)?;
    let ckpt = cfg.checkpoint_path();
    if let Some(parent) = ckpt.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let out = cfg.output_dir();
    ensure_dir(&out)?;
    save_checkpoint(&outcome.params, &ckpt, cfg.precision)?;
    write_loss_history(&outcome.history, out.join("loss.csv"))?;
    let last = outcome.epoch_means().last().copied();
    println!(
        "trained {} parameters in {:.1}s; final epoch loss {}; checkpoint {}",
        outcome.params.num_parameters(),
        started.elapsed().as_secs_f64(),
        last.map_or("n/a".to_string(), |l| format!("{l:.6}")),
        ckpt.display()
    );
    Ok(())
}

fn load_params(cfg: &RunConfig) -> Result<ModelParameters> {
    let path = cfg.checkpoint_path();
    if !path.exists() {
        return Err(Error::io(&path, std::io::Error::new(std::io::ErrorKind::NotFound, "checkpoint not found")));
    }
    load_checkpoint(&path)
}

fn cmd_score(cfg: &RunConfig, report: bool) -> Result<()> {
    let data = cfg.data_dir()?;
    let graph = load_dataset(data)?;
    let params = load_params(cfg)?;
    let (_, test_ts) = split_temporal(&graph, cfg.train_ratio, params.config.window)?;
    let started = Instant::now();
    let table = score_nodes(&params, &graph, &test_ts, &cfg.score)?;
    let score_s = started.elapsed().as_secs_f64();
    let out = cfg.output_dir();
    ensure_dir(&out)?;
    table.write_csv(out.join("scores.csv"))?;
    println!("scored {} (node, timestamp) rows in {score_s:.2}s", table.rows.len());
    if !report {
        return Ok(());
    }
    let Some(labels) = load_labels(data)? else {
        log::warn!("no labels.csv in {}; wrote scores only", data.display());
        return Ok(());
    };
    let mut r = evaluate(&table, &labels, cfg.threshold_rule)?;
    r.timings.score_s = score_s;
    r.config = serde_json::json!({
        "model": params.config,
        "score": cfg.score,
        "train_ratio": cfg.train_ratio,
        "checkpoint": cfg.checkpoint_path(),
    });
    write_json(&r, &out.join("report.json"))?;
    println!("auc {:.4}  precision {:.4}  macro_f1 {:.4}", r.auc, r.precision, r.macro_f1);
    Ok(())
}

#[derive(Serialize)]
struct AblationEntry<'a> {
    variant: Variant,
    report: &'a stgad_core::scoring::EvalReport,
}

fn cmd_ablate(cfg: &RunConfig) -> Result<()> {
    let data = cfg.data_dir()?;
    let graph = load_dataset(data)?;
    let labels = load_labels(data)?
        .ok_or_else(|| Error::Config(format!("ablation needs labels.csv in {}", data.display())))?;
    let mut base = cfg.experiment();
    // The variant list drives this command, so it is not folded into the base.
    base.model = cfg.model.clone();
    base.model.input_dim = graph.feature_dim();
    let variants = if cfg.ablate.is_empty() { Variant::ALL.to_vec() } else { cfg.ablate.clone() };
    let results = ablation_suite(&graph, &labels, &base, &variants)?;
    let out = cfg.output_dir();
    ensure_dir(&out)?;
    let entries: Vec<AblationEntry> = results.iter().map(|(v, r)| AblationEntry { variant: *v, report: r }).collect();
    write_json(&entries, &out.join("ablation.json"))?;
    for (v, r) in &results {
        println!("{:<16} auc {:.4}  precision {:.4}  macro_f1 {:.4}", v.name(), r.auc, r.precision, r.macro_f1);
    }
    Ok(())
}

fn cmd_bench(cfg: &RunConfig) -> Result<()> {
    let report = run_bench(&cfg.bench, &cfg.effective_model())?;
    let out = cfg.output_dir();
    ensure_dir(&out)?;
    write_bench_csv(&report, out.join("bench.csv"))?;
    write_json(&report, &out.join("bench.json"))?;
    for r in &report.rows {
        println!("n={:<7} train {:.3}s  infer {:.3}s", r.n, r.train_s, r.infer_s);
    }
    for (label, fit, ratios) in [
        ("train", report.train_fit, &report.train_ratios),
        ("infer", report.infer_fit, &report.infer_ratios),
    ] {
        println!(
            "{label}: time = {:.3e}·n + {:.3e} (r² {:.4}); doubling ratios {:?}",
            fit.slope, fit.intercept, fit.r2, ratios
        );
    }
    Ok(())
}
