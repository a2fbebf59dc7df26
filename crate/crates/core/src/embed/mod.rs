//! Entity embeddings bootstrapped from pre-trained word vectors.
//!
//! Each entity vector `z` is fit on the unit sphere so that words drawn
//! from the entity's co-occurrence distribution score higher (by inner
//! product) than words drawn from a smoothed unigram distribution, under a
//! hinge `max(0, γ − ⟨z, x⁺ − x⁻⟩)`. Entities are trained independently.

mod counts;
mod relatedness;
mod train;

pub use counts::{
    ingest_counts, read_counts_file, read_descriptions, CooccurrenceCounts, CountSource, DescriptionDoc, HyperlinkContext, DEFAULT_ALPHA,
};
pub use relatedness::{
    average_precision, eval_relatedness, ndcg_at, rank_metrics, read_queries, write_queries, RelatednessMetrics,
    RelatednessQuery,
};
pub use train::{
    fnv1a, hinge_embed, hinge_loss, init_entity_vector, train_embeddings, train_entity, EmbedReport, EmbedTrainConfig,
};
