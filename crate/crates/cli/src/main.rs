mod commands;
mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use deep_ed::Error;

#[derive(Debug, Parser)]
#[command(name = "deep-ed", version, about = "Document-level entity disambiguation")]
pub struct Cli {
    /// Flat `key = value` file of option defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 1 makes every run bit-reproducible. 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Base directory for relative paths.
    #[arg(long, global = true, env = "DEEPED_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Log more (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn path(&self, p: &Path) -> PathBuf {
        match &self.data_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }
}

#[derive(Debug, Args)]
pub struct StoreArgs {
    /// Word vectors (`.bin` binary, anything else text).
    #[arg(long, visible_alias = "word-vectors")]
    pub words: PathBuf,
    /// Entity vectors.
    #[arg(long)]
    pub entities: Option<PathBuf>,
    /// Whitespace-separated stop-word list replacing the bundled one.
    #[arg(long)]
    pub stop_words: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectionArgs {
    #[arg(long)]
    pub prior: PathBuf,
    /// Candidates kept per mention.
    #[arg(long, default_value_t = 7)]
    pub cand_size: usize,
    /// Candidates taken by prior before context ranking.
    #[arg(long, default_value_t = 4)]
    pub prior_top: usize,
    /// Prior cut applied before selection.
    #[arg(long, default_value_t = 30)]
    pub pre_cut: usize,
    /// Entity names (one per line) treated as persons for mention merging.
    #[arg(long)]
    pub persons: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScorerArgs {
    /// Context words around a mention.
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    /// Words kept by hard attention.
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub margin: f64,
    /// Hidden widths of the combination network.
    #[arg(long, value_delimiter = ',', default_value = "100,100")]
    pub hidden: Vec<usize>,
    /// Frobenius radius of each combination-network weight matrix.
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 500)]
    pub patience: usize,
    #[arg(long, default_value_t = 1)]
    pub batch_docs: usize,
    /// `sgd` or `adam`.
    #[arg(long, default_value = "adam")]
    pub optimizer: String,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// `THRESHOLD:LR`, switch the learning rate once validation accuracy passes THRESHOLD.
    #[arg(long)]
    pub lr_drop: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SpecArgs {
    #[arg(long, default_value_t = 200)]
    pub kb_size: usize,
    #[arg(long, default_value_t = 20)]
    pub topics: usize,
    #[arg(long, default_value_t = 10)]
    pub signature_words: usize,
    #[arg(long, default_value_t = 3000)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 200)]
    pub docs: usize,
    #[arg(long, default_value_t = 6)]
    pub mentions_per_doc: usize,
    #[arg(long, default_value_t = 4)]
    pub ambiguity: usize,
    #[arg(long, default_value_t = 0.9)]
    pub coherence: f64,
    #[arg(long, default_value_t = 0.5)]
    pub noise_rate: f64,
    #[arg(long, default_value_t = 20)]
    pub context_words: usize,
    #[arg(long, default_value_t = 0.3)]
    pub uninformative_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub prior_skew: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Trains entity vectors from description pages and hyperlink contexts.
    TrainEmbeddings {
        #[arg(long, visible_alias = "word-vectors")]
        words: PathBuf,
        #[arg(long)]
        stop_words: Option<PathBuf>,
        /// `entity<TAB>tokens` description pages.
        #[arg(long)]
        descriptions: Option<PathBuf>,
        /// Annotated corpus whose gold mentions serve as hyperlink anchors.
        #[arg(long)]
        links: Option<PathBuf>,
        /// `entity<TAB>word<TAB>count` hyperlink co-occurrence counts.
        #[arg(long, visible_alias = "counts")]
        link_counts: Option<PathBuf>,
        /// Relatedness queries for early stopping.
        #[arg(long)]
        validation: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, visible_alias = "gamma", default_value_t = 0.1)]
        margin: f64,
        #[arg(long, default_value_t = 20)]
        positives: usize,
        #[arg(long, default_value_t = 5)]
        negatives: usize,
        #[arg(long, visible_alias = "lr", default_value_t = 0.3)]
        embed_lr: f64,
        #[arg(long, default_value_t = 400)]
        description_iterations: usize,
        #[arg(long, default_value_t = 2000)]
        max_hyperlink_iterations: usize,
        #[arg(long, default_value_t = 50)]
        embed_eval_every: usize,
        #[arg(long, default_value_t = 3)]
        embed_patience: usize,
        #[arg(long, default_value_t = 20)]
        window: usize,
        #[arg(long, default_value_t = 0.6)]
        alpha: f64,
        #[arg(long)]
        step_per_pair: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Scores entity vectors on relatedness queries.
    EvalRelatedness {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        queries: PathBuf,
    },
    /// Merges mention-entity indexes into one prior.
    BuildPrior {
        /// `PATH[:counts|uniform[:WEIGHT]]`, repeatable.
        #[arg(long = "source", required = true)]
        sources: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Writes candidate sets for a corpus and reports gold recall.
    SelectCandidates {
        #[command(flatten)]
        store: StoreArgs,
        #[command(flatten)]
        selection: SelectionArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trains the local attention model.
    TrainLocal {
        #[command(flatten)]
        store: StoreArgs,
        #[command(flatten)]
        selection: SelectionArgs,
        #[command(flatten)]
        scorer: ScorerArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Trains the global model with unrolled message passing.
    TrainGlobal {
        #[command(flatten)]
        store: StoreArgs,
        #[command(flatten)]
        selection: SelectionArgs,
        #[command(flatten)]
        scorer: ScorerArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long, default_value_t = 10)]
        layers: usize,
        /// Start from a trained local model.
        #[arg(long)]
        init_local: Option<PathBuf>,
    },
    /// Disambiguates a corpus with a trained model.
    Predict {
        #[command(flatten)]
        store: StoreArgs,
        #[command(flatten)]
        selection: SelectionArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Attention dump (local models only).
        #[arg(long)]
        attention: Option<PathBuf>,
    },
    /// Scores predictions against gold annotations.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Entity vectors defining the KB; without it every gold entity counts as in-KB.
        #[arg(long)]
        entities: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy by gold-entity frequency and prior.
    Breakdown {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        prior: PathBuf,
        /// Corpus whose gold annotations give entity frequencies.
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy as a function of T, R or the damping on the synthetic benchmark.
    Sweep {
        /// JSON experiment configuration; defaults apply to missing fields.
        #[arg(long)]
        experiment: Option<PathBuf>,
        /// `T`, `R` or `delta`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Writes a synthetic benchmark.
    GenerateSynthetic {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Nearest words of an entity vector.
    InspectNeighbors {
        #[command(flatten)]
        store: StoreArgs,
        #[arg(long)]
        entity: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long, default_value_t = 0)]
        min_freq: u64,
    },
    /// Compares analytic and finite-difference gradients on random instances.
    GradCheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long, default_value_t = 1e-4)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, value_delimiter = ',', default_value = "10,10")]
        hidden: Vec<usize>,
    },
    /// Runs generation, training and evaluation end to end on the synthetic benchmark.
    RunExperiment {
        #[arg(long)]
        experiment: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_io() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn parse(args: Vec<OsString>) -> Result<Cli, ExitCode> {
    let args = match config::config_path(&args) {
        Some(p) => {
            let merged = config::read_pairs(Path::new(&p)).and_then(|pairs| config::merge(&Cli::command(), args, &pairs));
            match merged {
                Ok(a) => a,
                Err(e) => {
                    eprintln!("error: {e}");
                    return Err(exit_code(&e));
                }
            }
        }
        None => args,
    };
    Cli::try_parse_from(args).map_err(|e| {
        let _ = e.print();
        if e.use_stderr() {
            ExitCode::from(1)
        } else {
            ExitCode::SUCCESS
        }
    })
}

fn main() -> ExitCode {
    let cli = match parse(std::env::args_os().collect()) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
