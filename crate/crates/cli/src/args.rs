//! Command-line argument definitions.

use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "riskmgr",
    version,
    about = "Vulnerability intelligence, score prediction, and replica configuration advice"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Parse the intelligence files and write a merged snapshot (JSON).
    Ingest {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Train the score predictor on analyzed CVEs from a feed.
    Train {
        /// CVE feed (JSON Lines).
        #[arg(long)]
        cve: PathBuf,
        /// Ignore records published after this date.
        #[arg(long = "as-of")]
        as_of: Option<NaiveDate>,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        forest: ForestArgs,
        /// Where to write the model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict scores for Received CVEs in a feed using a saved model.
    Predict {
        /// Model file written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cve: PathBuf,
        /// Embedding CSV; required when the model was trained on embeddings.
        #[arg(long)]
        emb: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster CVE descriptions and export the labels.
    Cluster {
        #[arg(long)]
        cve: PathBuf,
        #[arg(long = "as-of")]
        as_of: Option<NaiveDate>,
        #[command(flatten)]
        cluster: ClusterArgs,
        #[command(flatten)]
        features: FeatureArgs,
        /// Seed for the k-means baseline.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the OPTICS reachability plot to this path.
        #[arg(long)]
        reachability: Option<PathBuf>,
    },
    /// Reassess every CVE (factor score and EPSS-weighted score).
    Assess {
        #[command(flatten)]
        input: InputArgs,
        /// Model for predicting Received CVEs, if the feed has any.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Embedding CSV for embedding-trained models.
        #[arg(long)]
        emb: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline and rank node configurations.
    Advise {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        output: OutputArgs,
        /// Include per-pair shared-CVE detail in the JSON output.
        #[arg(long)]
        explain: bool,
    },
    /// Monthly timeline: inject each month's CVEs and re-run the pipeline.
    Simulate {
        #[command(flatten)]
        input: InputArgs,
        /// Number of months after the cutoff (`--as-of`).
        #[arg(long, default_value_t = 12)]
        months: usize,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Benchmark the score predictor on records with known scores.
    Bench {
        #[arg(long)]
        cve: PathBuf,
        /// Extra ground truth CSV `cve_id,score` (covers Received records).
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Training fraction of the split.
        #[arg(long, default_value_t = 0.8)]
        split: f64,
        /// Shuffle labels to measure the null-model baseline.
        #[arg(long = "shuffle-labels")]
        shuffle_labels: bool,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        forest: ForestArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the pipeline per (algorithm, featurization) cell and compare.
    CompareClustering {
        #[command(flatten)]
        input: InputArgs,
        /// Comma-separated algorithms to compare.
        #[arg(long, value_delimiter = ',', default_values_t = vec![AlgoChoice::Dbscan, AlgoChoice::Optics, AlgoChoice::Kmeans])]
        algos: Vec<AlgoChoice>,
        /// Comma-separated featurizations to compare.
        #[arg(long, value_delimiter = ',', default_values_t = vec![FeatChoice::Bow])]
        feats: Vec<FeatChoice>,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Generate a synthetic dataset (feed, EPSS, exploits, catalog,
    /// embeddings, ground truth).
    Generate {
        #[arg(long, value_enum, default_value_t = Preset::Synthetic)]
        preset: Preset,
        #[arg(long, default_value_t = 400)]
        total: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "2022-01-01")]
        start: NaiveDate,
        #[arg(long, default_value = "2023-12-31")]
        end: NaiveDate,
        #[arg(long = "received-fraction", default_value_t = 0.2)]
        received_fraction: f64,
        #[arg(long, default_value_t = 9)]
        families: usize,
        #[arg(long = "shared-groups", default_value_t = 6)]
        shared_groups: usize,
        #[arg(long = "group-size", default_value_t = 6)]
        group_size: usize,
        /// Dimension of the emitted embedding vectors.
        #[arg(long = "emb-dim", default_value_t = 32)]
        emb_dim: usize,
        /// Directory to write the dataset files into.
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve advisory queries over HTTP.
    Serve {
        /// Address to bind, e.g. 127.0.0.1:8080.
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        /// Preload a snapshot from these inputs.
        #[command(flatten)]
        input: OptionalInputArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
}

#[derive(Args, Debug)]
pub struct InputArgs {
    /// CVE feed (JSON Lines).
    #[arg(long)]
    pub cve: PathBuf,
    /// EPSS CSV export.
    #[arg(long)]
    pub epss: Option<PathBuf>,
    /// Exploit index CSV with a `codes` column.
    #[arg(long)]
    pub exploits: Option<PathBuf>,
    /// Node catalog JSON; defaults to the built-in sixteen-node catalog.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Snapshot date (YYYY-MM-DD); the simulated "now".
    #[arg(long = "as-of")]
    pub as_of: NaiveDate,
}

#[derive(Args, Debug)]
pub struct OptionalInputArgs {
    #[arg(long)]
    pub cve: Option<PathBuf>,
    #[arg(long)]
    pub epss: Option<PathBuf>,
    #[arg(long)]
    pub exploits: Option<PathBuf>,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long = "as-of")]
    pub as_of: Option<NaiveDate>,
}

#[derive(Args, Debug)]
pub struct FeatureArgs {
    /// Featurization for descriptions.
    #[arg(long, value_enum, default_value_t = FeatChoice::Bow)]
    pub feat: FeatChoice,
    /// Embedding CSV `id,v0,v1,...`; required with `--feat emb`.
    #[arg(long)]
    pub emb: Option<PathBuf>,
    /// Minimum document frequency for vocabulary terms.
    #[arg(long = "min-df", default_value_t = 1)]
    pub min_df: usize,
    /// Strip common English suffixes during tokenization.
    #[arg(long)]
    pub stem: bool,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    #[arg(long, value_enum, default_value_t = AlgoChoice::Optics)]
    pub algo: AlgoChoice,
    /// DBSCAN neighborhood radius (cosine distance).
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long = "min-samples", default_value_t = 5)]
    pub min_samples: usize,
    /// OPTICS steepness threshold.
    #[arg(long, default_value_t = 0.05)]
    pub xi: f64,
    /// Cluster count for the k-means baseline.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Args, Debug)]
pub struct ForestArgs {
    #[arg(long = "bin-width", default_value_t = 1.0)]
    pub bin_width: f64,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long = "max-depth", default_value_t = 32)]
    pub max_depth: usize,
    #[arg(long = "min-leaf", default_value_t = 2)]
    pub min_leaf: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Pipeline-level knobs shared by advise/simulate/compare/serve.
#[derive(Args, Debug)]
pub struct PipelineArgs {
    /// Nodes per configuration.
    #[arg(long, default_value_t = 4)]
    pub nodes: usize,
    #[arg(long, value_enum, default_value_t = PolicyChoice::ResilienceFirst)]
    pub policy: PolicyChoice,
    /// Weight on resilience for `--policy weighted`.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[command(flatten)]
    pub cluster: ClusterArgs,
    #[command(flatten)]
    pub features: FeatureArgs,
    #[command(flatten)]
    pub forest: ForestArgs,
}

#[derive(Args, Debug)]
pub struct OutputArgs {
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatChoice>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlgoChoice {
    Dbscan,
    Optics,
    Kmeans,
}

impl std::fmt::Display for AlgoChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AlgoChoice::Dbscan => f.write_str("dbscan"),
            AlgoChoice::Optics => f.write_str("optics"),
            AlgoChoice::Kmeans => f.write_str("kmeans"),
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatChoice {
    Bow,
    Emb,
}

impl std::fmt::Display for FeatChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatChoice::Bow => f.write_str("bow"),
            FeatChoice::Emb => f.write_str("emb"),
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyChoice {
    /// Ascending (resilience, security).
    ResilienceFirst,
    /// Ascending (security, resilience).
    SecurityFirst,
    /// Ascending alpha * resilience + (1 - alpha) * security.
    Weighted,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormatChoice {
    Csv,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Seeded random corpus shaped by the generator flags.
    Synthetic,
    /// Small fixed corpus with a known worked example and a planted
    /// cross-node duplicate-description group.
    Demo,
}
