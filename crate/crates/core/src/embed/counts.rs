use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::store::{EmbeddingStore, Vocab, WordId};
use crate::{Error, Result};

/// Default smoothing exponent of the negative-word distribution.
pub const DEFAULT_ALPHA: f64 = 0.6;

/// A tokenized entity description page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptionDoc {
    pub entity: String,
    pub tokens: Vec<String>,
}

/// A hyperlink anchor to `entity` at `tokens[start..end]`.
#[derive(Debug, Clone)]
pub struct HyperlinkContext {
    pub entity: String,
    pub tokens: Vec<String>,
    pub start: usize,
    pub end: usize,
}

/// Word–entity co-occurrence statistics from description pages and
/// hyperlink windows, plus the global unigram frequencies used for
/// negative sampling.
#[derive(Debug, Clone)]
pub struct CooccurrenceCounts {
    entities: Vocab,
    description: Vec<BTreeMap<WordId, u64>>,
    hyperlink: Vec<BTreeMap<WordId, u64>>,
    word_freq: Vec<u64>,
    alpha: f64,
}

/// Which co-occurrence source to draw positives from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountSource {
    Description,
    Hyperlink,
    Merged,
}

impl CooccurrenceCounts {
    pub fn new(num_words: usize, alpha: f64) -> Self {
        Self {
            entities: Vocab::new(),
            description: Vec::new(),
            hyperlink: Vec::new(),
            word_freq: vec![0; num_words],
            alpha,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.alpha = alpha;
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    fn slot(&mut self, entity: &str) -> usize {
        let id = self.entities.intern(entity) as usize;
        if id == self.description.len() {
            self.description.push(BTreeMap::new());
            self.hyperlink.push(BTreeMap::new());
        }
        id
    }

    /// Registers an entity without any counts (it will be untrainable).
    pub fn register(&mut self, entity: &str) -> usize {
        self.slot(entity)
    }

    pub fn add(&mut self, entity: &str, word: WordId, count: u64, source: CountSource) {
        let e = self.slot(entity);
        if count == 0 {
            return;
        }
        let table = match source {
            CountSource::Hyperlink => &mut self.hyperlink[e],
            _ => &mut self.description[e],
        };
        *table.entry(word).or_insert(0) += count;
        self.word_freq[word.index()] += count;
    }

    /// Replaces the unigram table, e.g. with corpus-wide word counts.
    pub fn set_word_frequencies(&mut self, freq: Vec<u64>) -> Result<()> {
        if freq.len() != self.word_freq.len() {
            return Err(Error::invalid("word frequency table does not match the vocabulary"));
        }
        self.word_freq = freq;
        Ok(())
    }

    pub fn word_frequencies(&self) -> &[u64] {
        &self.word_freq
    }

    /// Sparse `#(w, e)` for entity index `e`, sorted by word id.
    pub fn counts(&self, e: usize, source: CountSource) -> Vec<(WordId, u64)> {
        match source {
            CountSource::Description => self.description[e].iter().map(|(&w, &c)| (w, c)).collect(),
            CountSource::Hyperlink => self.hyperlink[e].iter().map(|(&w, &c)| (w, c)).collect(),
            CountSource::Merged => {
                let mut m = self.description[e].clone();
                for (&w, &c) in &self.hyperlink[e] {
                    *m.entry(w).or_insert(0) += c;
                }
                m.into_iter().collect()
            }
        }
    }

    pub fn count(&self, e: usize, w: WordId) -> u64 {
        self.description[e].get(&w).copied().unwrap_or(0) + self.hyperlink[e].get(&w).copied().unwrap_or(0)
    }

    pub fn is_trainable(&self, e: usize) -> bool {
        !self.description[e].is_empty() || !self.hyperlink[e].is_empty()
    }

    /// `p̂(w|e) ∝ #(w, e)` over the entity's support.
    pub fn positive_distribution(&self, e: usize, source: CountSource) -> Vec<(WordId, f64)> {
        let c = self.counts(e, source);
        let total: u64 = c.iter().map(|p| p.1).sum();
        c.into_iter().map(|(w, n)| (w, n as f64 / total as f64)).collect()
    }

    /// `q(w) ∝ p̂(w)^α` over the whole vocabulary.
    pub fn negative_distribution(&self) -> Vec<f64> {
        let total: u64 = self.word_freq.iter().sum();
        if total == 0 {
            return vec![0.0; self.word_freq.len()];
        }
        let un: Vec<f64> = self
            .word_freq
            .iter()
            .map(|&f| if f == 0 { 0.0 } else { (f as f64 / total as f64).powf(self.alpha) })
            .collect();
        let z: f64 = un.iter().sum();
        un.into_iter().map(|v| v / z).collect()
    }
}

fn resolve(store: &EmbeddingStore, tok: &str) -> Option<WordId> {
    let w = store.word_id(tok)?;
    (!store.word_vocab().is_stop(w.0)).then_some(w)
}

/// Builds counts from description pages and hyperlink windows of `window`
/// tokens on each side of the anchor. Unknown tokens and stop words (as
/// flagged in the store's word vocabulary) are skipped.
pub fn ingest_counts(
    store: &EmbeddingStore,
    descriptions: &[DescriptionDoc],
    hyperlinks: &[HyperlinkContext],
    window: usize,
    alpha: f64,
) -> CooccurrenceCounts {
    let mut counts = CooccurrenceCounts::new(store.num_words(), alpha);
    for d in descriptions {
        counts.register(&d.entity);
        for tok in &d.tokens {
            if let Some(w) = resolve(store, tok) {
                counts.add(&d.entity, w, 1, CountSource::Description);
            }
        }
    }
    for h in hyperlinks {
        counts.register(&h.entity);
        let lo = h.start.saturating_sub(window);
        let hi = (h.end + window).min(h.tokens.len());
        let left = &h.tokens[lo..h.start.min(h.tokens.len())];
        let right = &h.tokens[h.end.min(h.tokens.len())..hi];
        for tok in left.iter().chain(right) {
            if let Some(w) = resolve(store, tok) {
                counts.add(&h.entity, w, 1, CountSource::Hyperlink);
            }
        }
    }
    for e in 0..counts.num_entities() {
        if !counts.is_trainable(e) {
            log::warn!("entity `{}` has no resolvable context words", counts.entities.name(e as u32).unwrap_or("?"));
        }
    }
    counts
}

/// Reads `entity \t word \t count` lines into `counts` under `source`.
/// Words missing from the store and stop words are skipped.
pub fn read_counts_file(
    path: &Path,
    store: &EmbeddingStore,
    counts: &mut CooccurrenceCounts,
    source: CountSource,
) -> Result<()> {
    let name = path.display().to_string();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(&name, i + 1, "expected `entity<TAB>word<TAB>count`"));
        }
        let c: u64 = cols[2].trim().parse().map_err(|_| Error::parse(&name, i + 1, "bad count"))?;
        counts.register(cols[0]);
        if let Some(w) = resolve(store, cols[1]) {
            counts.add(cols[0], w, c, source);
        }
    }
    Ok(())
}

/// Reads description pages written as `entity \t space-separated tokens`.
pub fn read_descriptions(path: &Path) -> Result<Vec<DescriptionDoc>> {
    let name = path.display().to_string();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((entity, text)) = line.split_once('\t') else {
            return Err(Error::parse(&name, i + 1, "expected `entity<TAB>tokens`"));
        };
        docs.push(DescriptionDoc { entity: entity.to_owned(), tokens: text.split_whitespace().map(str::to_owned).collect() });
    }
    Ok(docs)
}
