use std::sync::Arc;

use crate::candidates::CandidateSet;
use crate::diff::Tensor;
use crate::store::{EmbeddingStore, EntityId, WordId};
use crate::{Error, Result};

/// Priors are clamped from below before taking logs.
pub const PRIOR_FLOOR: f64 = 1e-12;

/// Context word ids around a mention span: `k / 2` raw tokens on each
/// side, truncated at the document bounds, with unknown tokens and stop
/// words dropped afterwards.
pub fn context_window(
    tokens: &[String],
    start: usize,
    end: usize,
    k: usize,
    store: &EmbeddingStore,
) -> Vec<WordId> {
    let half = k / 2;
    let start = start.min(tokens.len());
    let end = end.clamp(start, tokens.len());
    let left = &tokens[start.saturating_sub(half)..start];
    let right = &tokens[end..(end + half).min(tokens.len())];
    left.iter()
        .chain(right)
        .filter_map(|t| store.word_id(t))
        .filter(|w| !store.word_vocab().is_stop(w.0))
        .collect()
}

/// Everything the scorers need about one mention, gathered once.
#[derive(Debug, Clone)]
pub struct PreparedMention {
    pub entities: Vec<EntityId>,
    /// Candidate embeddings, one row per entity.
    pub cand: Arc<Tensor>,
    pub words: Vec<WordId>,
    /// Context word embeddings, one row per word.
    pub ctx: Arc<Tensor>,
    /// `log max(p̂(e|m), floor)` per candidate.
    pub log_prior: Tensor,
    /// Gold entity when annotated and known to the store.
    pub gold_entity: Option<EntityId>,
    /// Position of the gold entity in `entities`.
    pub gold: Option<usize>,
}

impl PreparedMention {
    pub fn new(store: &EmbeddingStore, set: &CandidateSet, words: Vec<WordId>, gold: Option<EntityId>) -> Result<Self> {
        let entities = set.entities();
        let d = store.dim();
        let cand = Tensor::new(entities.len(), d, store.gather_entities(&entities)?);
        let ctx = Tensor::new(words.len(), d, store.gather_words(&words)?);
        let log_prior = Tensor::vector(set.candidates.iter().map(|c| c.prior.max(PRIOR_FLOOR).ln()).collect());
        if !log_prior.is_finite() {
            return Err(Error::invalid(format!("non-finite prior for mention `{}`", set.mention)));
        }
        Ok(Self {
            gold: gold.and_then(|g| set.position(g)),
            entities,
            cand: Arc::new(cand),
            words,
            ctx: Arc::new(ctx),
            log_prior,
            gold_entity: gold,
        })
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Index of the largest score, ties going to the smaller entity id.
    pub fn best(&self, scores: &[f64]) -> Option<usize> {
        (0..scores.len()).reduce(|b, i| {
            if scores[i] > scores[b] || (scores[i] == scores[b] && self.entities[i] < self.entities[b]) {
                i
            } else {
                b
            }
        })
    }
}

/// A document ready for scoring. Mentions keep their document order;
/// mentions with an empty candidate set are carried along but never scored.
#[derive(Debug, Clone, Default)]
pub struct PreparedDoc {
    pub id: String,
    pub mentions: Vec<PreparedMention>,
}

impl PreparedDoc {
    /// Indices of the mentions that have at least one candidate.
    pub fn active(&self) -> Vec<usize> {
        (0..self.mentions.len()).filter(|&i| !self.mentions[i].is_empty()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{VectorTable, Vocab};
    use std::collections::HashSet;

    fn store(words: &[&str]) -> EmbeddingStore {
        let mut vocab = Vocab::new();
        for w in words {
            vocab.intern(w);
        }
        let mut s = EmbeddingStore::new(VectorTable { dim: 1, vocab, data: vec![1.0; words.len()] }).unwrap();
        s.word_vocab_mut().mark_stop_words(&HashSet::from(["the".to_string()]));
        s
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn window_takes_half_k_each_side_then_filters() {
        let s = store(&["a", "b", "c", "d", "e", "the"]);
        let t = toks("a b the c M M d zz e f");
        let w = context_window(&t, 4, 6, 6, &s);
        let names: Vec<&str> = w.iter().map(|&w| s.word_name(w).unwrap()).collect();
        assert_eq!(names, vec!["b", "c", "d", "e"]);
    }

    #[test]
    fn window_truncates_at_document_bounds() {
        let s = store(&["a", "b"]);
        let t = toks("M a b");
        assert_eq!(context_window(&t, 0, 1, 100, &s).len(), 2);
        assert!(context_window(&t, 0, 3, 100, &s).is_empty());
    }
}
