//! Corpus I/O, the synthetic benchmark, evaluation metrics and end-to-end
//! experiment runs.

mod corpus;
mod eval;
mod experiment;
mod gradcheck;
mod model_io;
mod pipeline;
mod sweep;
mod synthetic;

pub use corpus::{check_disjoint, load_corpus, Corpus, CorpusFormat, CorpusStats, Document, Mention, Split};
pub use eval::{
    breakdown_report, evaluate, Breakdown, BreakdownRow, Bucket, Metrics, Outcome, FREQUENCY_BOUNDS, PRIOR_BOUNDS,
};
pub use experiment::{
    attention_dump, build_bench, gold_frequencies, predict_all, prepare_splits, prior_metrics, run_experiment,
    run_on_bench, signature_hits, test_metrics, train_global, train_local, Bench, ExperimentConfig, ExperimentOutput,
    ExperimentReport, FitSummary, PreparedSplits,
};
pub use gradcheck::{check_global, check_local, random_doc, random_global, random_local, GradCheckShape};
pub use model_io::SavedModel;
pub use pipeline::{
    aggregate_attention, attention_tsv, breakdown_rows, hyperlinks, join_predictions, outcomes, predict_prior, predictions,
    prepare_doc, prepare_docs, read_predictions, write_predictions, AttentionRow, Prediction, Prepared,
};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
pub use sweep::{line_plot_svg, run_sweep, SweepParam, SweepPoint, SweepResult};
