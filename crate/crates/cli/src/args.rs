//! Command-line flags. Every flag overrides exactly one `RunConfig` field.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use stgad_core::config::RunConfig;
use stgad_core::scoring::{ScoreAttribution, ThresholdRule, Variant};
use stgad_core::training::Precision;

/// Parses a flag value through the same kebab-case names the config file uses.
fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn variant(s: &str) -> Result<Variant, String> {
    kebab(s)
}
fn attribution(s: &str) -> Result<ScoreAttribution, String> {
    kebab(s)
}
fn threshold(s: &str) -> Result<ThresholdRule, String> {
    kebab(s)
}
fn precision(s: &str) -> Result<Precision, String> {
    kebab(s)
}

#[derive(Parser, Debug)]
#[command(name = "stgad", version, about = "Spatial-temporal memory graph autoencoder for dynamic-graph anomaly detection")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
    /// Worker thread cap (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic community-structured dynamic graph.
    Generate(GenerateArgs),
    /// Plant clique and attribute anomalies into the test snapshots.
    Inject(InjectArgs),
    /// Train a model and write a checkpoint plus loss history.
    Train(TrainArgs),
    /// Score test snapshots with a trained checkpoint.
    Score(ScoreArgs),
    /// Score and, when labels exist, report detection metrics.
    Eval(EvalArgs),
    /// Train and evaluate each ablation variant on a labeled dataset.
    Ablate(AblateArgs),
    /// Time training and inference over a ladder of graph sizes.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Default)]
pub struct Paths {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct ModelFlags {
    /// Window size τ.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub kernel_width: Option<usize>,
    #[arg(long)]
    pub spatial_layers: Option<usize>,
    #[arg(long)]
    pub temporal_layers: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub spatial_items: Option<usize>,
    #[arg(long)]
    pub temporal_items: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub use_bias: Option<bool>,
    /// Keep memory items unnormalized after writes.
    #[arg(long)]
    pub no_mem_renorm: bool,
    #[arg(long)]
    pub dense_cap: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub train_ratio: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct ScoreFlags {
    /// Scoring rounds R.
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub edge_dropout: Option<f64>,
    #[arg(long, value_parser = attribution)]
    pub attribution: Option<ScoreAttribution>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub snapshots: Option<usize>,
    #[arg(long)]
    pub avg_degree: Option<f64>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    /// Generator seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct InjectArgs {
    #[command(flatten)]
    pub paths: Paths,
    /// Clique size N_p.
    #[arg(long = "np")]
    pub clique_size: Option<usize>,
    /// Cliques per snapshot q.
    #[arg(long = "q")]
    pub clique_count: Option<usize>,
    /// Candidate pool k for attribute swaps.
    #[arg(long = "k")]
    pub candidate_pool: Option<usize>,
    #[arg(long)]
    pub train_ratio: Option<f64>,
    /// Window size τ, which bounds the training split.
    #[arg(long)]
    pub window: Option<usize>,
    /// Injection seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub paths: Paths,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Ablation variant applied to the model; repeatable.
    #[arg(long, value_parser = variant)]
    pub ablate: Vec<Variant>,
    #[arg(long, value_parser = precision)]
    pub precision: Option<Precision>,
    /// Model initialization seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub paths: Paths,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub train_ratio: Option<f64>,
    #[command(flatten)]
    pub score: ScoreFlags,
    /// Edge dropout seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub inner: ScoreArgs,
    #[arg(long, value_parser = threshold)]
    pub threshold_rule: Option<ThresholdRule>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub paths: Paths,
    #[command(flatten)]
    pub model: ModelFlags,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub score: ScoreFlags,
    /// Variants to run; repeatable. Defaults to all of them.
    #[arg(long, value_parser = variant)]
    pub ablate: Vec<Variant>,
    #[arg(long, value_parser = threshold)]
    pub threshold_rule: Option<ThresholdRule>,
    /// Model initialization seed shared by every variant.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Node counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ladder: Vec<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub avg_degree: Option<f64>,
    #[command(flatten)]
    pub model: ModelFlags,
    /// Generator seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Paths {
    fn apply(&self, c: &mut RunConfig) {
        set(&mut c.data, self.data.clone().map(Some));
        set(&mut c.output, self.output.clone().map(Some));
    }
}

impl ModelFlags {
    fn apply(&self, c: &mut RunConfig) {
        let m = &mut c.model;
        set(&mut m.window, self.window);
        set(&mut m.kernel_width, self.kernel_width);
        set(&mut m.spatial_layers, self.spatial_layers);
        set(&mut m.temporal_layers, self.temporal_layers);
        set(&mut m.hidden_dim, self.hidden_dim);
        set(&mut m.spatial_items, self.spatial_items);
        set(&mut m.temporal_items, self.temporal_items);
        set(&mut m.top_k, self.top_k);
        set(&mut m.alpha, self.alpha);
        set(&mut m.margin, self.margin);
        set(&mut m.use_bias, self.use_bias);
        set(&mut m.dense_cap, self.dense_cap);
        if self.no_mem_renorm {
            m.mem_renorm = false;
        }
    }
}

impl TrainFlags {
    fn apply(&self, c: &mut RunConfig) {
        set(&mut c.train.epochs, self.epochs);
        set(&mut c.train.learning_rate, self.learning_rate);
        set(&mut c.train_ratio, self.train_ratio);
    }
}

impl ScoreFlags {
    fn apply(&self, c: &mut RunConfig) {
        set(&mut c.score.rounds, self.rounds);
        set(&mut c.score.edge_dropout, self.edge_dropout);
        set(&mut c.score.attribution, self.attribution);
    }
}

impl ScoreArgs {
    fn apply(&self, c: &mut RunConfig) {
        self.paths.apply(c);
        set(&mut c.checkpoint, self.checkpoint.clone().map(Some));
        set(&mut c.train_ratio, self.train_ratio);
        self.score.apply(c);
        set(&mut c.score.seed, self.seed);
    }
}

impl Cli {
    /// Writes every flag given on the command line into `c`.
    pub fn apply(&self, c: &mut RunConfig) {
        set(&mut c.threads, self.threads);
        match &self.command {
            Command::Generate(a) => {
                set(&mut c.output, a.output.clone().map(Some));
                set(&mut c.synthetic.nodes, a.nodes);
                set(&mut c.synthetic.snapshots, a.snapshots);
                set(&mut c.synthetic.avg_degree, a.avg_degree);
                set(&mut c.synthetic.feature_dim, a.feature_dim);
                set(&mut c.synthetic.seed, a.seed);
            }
            Command::Inject(a) => {
                a.paths.apply(c);
                set(&mut c.injection.clique_size, a.clique_size);
                set(&mut c.injection.clique_count, a.clique_count);
                set(&mut c.injection.candidate_pool, a.candidate_pool);
                set(&mut c.train_ratio, a.train_ratio);
                set(&mut c.model.window, a.window);
                set(&mut c.injection.seed, a.seed);
            }
            Command::Train(a) => {
                a.paths.apply(c);
                set(&mut c.checkpoint, a.checkpoint.clone().map(Some));
                a.model.apply(c);
                a.train.apply(c);
                if !a.ablate.is_empty() {
                    c.ablate = a.ablate.clone();
                }
                set(&mut c.precision, a.precision);
                set(&mut c.model.seed, a.seed);
            }
            Command::Score(a) => a.apply(c),
            Command::Eval(a) => {
                a.inner.apply(c);
                set(&mut c.threshold_rule, a.threshold_rule);
            }
            Command::Ablate(a) => {
                a.paths.apply(c);
                a.model.apply(c);
                a.train.apply(c);
                a.score.apply(c);
                if !a.ablate.is_empty() {
                    c.ablate = a.ablate.clone();
                }
                set(&mut c.threshold_rule, a.threshold_rule);
                set(&mut c.model.seed, a.seed);
            }
            Command::Bench(a) => {
                set(&mut c.output, a.output.clone().map(Some));
                if !a.ladder.is_empty() {
                    c.bench.ladder = a.ladder.clone();
                }
                set(&mut c.bench.repeats, a.repeats);
                set(&mut c.bench.avg_degree, a.avg_degree);
                a.model.apply(c);
                set(&mut c.bench.seed, a.seed);
            }
        }
    }
}
