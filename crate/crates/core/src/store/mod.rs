//! Identifiers, vocabularies and the shared word/entity embedding store.

mod io;
mod stopwords;
mod vocab;

pub use io::{read_vectors, write_vectors, VectorFormat, VectorTable};
pub use stopwords::{default_stop_words, parse_stop_words};
pub use vocab::Vocab;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WordId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

impl WordId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Tolerance on entity vector norms.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
struct Table {
    vocab: Vocab,
    data: Vec<f64>,
}

impl Table {
    fn empty() -> Self {
        Self { vocab: Vocab::new(), data: Vec::new() }
    }
}

/// Word and entity vectors in one `d`-dimensional space.
///
/// The word table is fixed once built. Entity rows may be replaced through
/// [`EmbeddingStore::set_entity`], which keeps every entity vector on the
/// unit sphere.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    words: Table,
    entities: Table,
}

fn normalized(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite vector component"));
    }
    let n = norm(v);
    if n == 0.0 {
        return Err(Error::invalid("cannot normalize a zero vector"));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

impl EmbeddingStore {
    /// Builds a store from a word table; the entity table starts empty.
    pub fn new(words: VectorTable) -> Result<Self> {
        if words.dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if words.data.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite word vector component"));
        }
        Ok(Self {
            dim: words.dim,
            words: Table { vocab: words.vocab, data: words.data },
            entities: Table::empty(),
        })
    }

    pub fn load_word_vectors(path: &Path, format: VectorFormat) -> Result<Self> {
        Self::new(read_vectors(path, format)?)
    }

    /// Adds every row of `table` as an entity vector, normalizing to unit length.
    pub fn load_entities(&mut self, table: VectorTable) -> Result<()> {
        if table.dim != self.dim {
            return Err(Error::invalid(format!(
                "entity dimension {} differs from word dimension {}",
                table.dim, self.dim
            )));
        }
        for (i, name) in table.vocab.names().iter().enumerate() {
            let row = &table.data[i * self.dim..(i + 1) * self.dim];
            self.push_entity(name, row)?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn word_vocab(&self) -> &Vocab {
        &self.words.vocab
    }

    /// Word metadata (stop flags, frequencies) is mutable; vectors are not.
    pub fn word_vocab_mut(&mut self) -> &mut Vocab {
        &mut self.words.vocab
    }

    pub fn entity_vocab(&self) -> &Vocab {
        &self.entities.vocab
    }

    pub fn num_words(&self) -> usize {
        self.words.vocab.len()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.vocab.len()
    }

    pub fn word_id(&self, name: &str) -> Option<WordId> {
        self.words.vocab.get(name).map(WordId)
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entities.vocab.get(name).map(EntityId)
    }

    pub fn entity_name(&self, e: EntityId) -> Option<&str> {
        self.entities.vocab.name(e.0)
    }

    pub fn word_name(&self, w: WordId) -> Option<&str> {
        self.words.vocab.name(w.0)
    }

    pub fn word(&self, w: WordId) -> Result<&[f64]> {
        let size = self.num_words();
        if w.index() >= size {
            return Err(Error::OutOfRange { kind: "word", id: w.index(), size });
        }
        Ok(&self.words.data[w.index() * self.dim..(w.index() + 1) * self.dim])
    }

    pub fn entity(&self, e: EntityId) -> Result<&[f64]> {
        let size = self.num_entities();
        if e.index() >= size {
            return Err(Error::OutOfRange { kind: "entity", id: e.index(), size });
        }
        Ok(&self.entities.data[e.index() * self.dim..(e.index() + 1) * self.dim])
    }

    /// Inserts or replaces an entity vector, projecting it onto the unit sphere.
    pub fn push_entity(&mut self, name: &str, v: &[f64]) -> Result<EntityId> {
        if v.len() != self.dim {
            return Err(Error::invalid(format!(
                "entity `{name}` has {} components, expected {}",
                v.len(),
                self.dim
            )));
        }
        let unit = normalized(v)?;
        match self.entities.vocab.get(name) {
            Some(id) => {
                self.write_entity_row(EntityId(id), &unit);
                Ok(EntityId(id))
            }
            None => {
                let id = self.entities.vocab.intern(name);
                self.entities.data.extend_from_slice(&unit);
                Ok(EntityId(id))
            }
        }
    }

    pub fn set_entity(&mut self, e: EntityId, v: &[f64]) -> Result<()> {
        self.entity(e)?;
        if v.len() != self.dim {
            return Err(Error::invalid("entity vector has the wrong dimension"));
        }
        let unit = normalized(v)?;
        self.write_entity_row(e, &unit);
        Ok(())
    }

    fn write_entity_row(&mut self, e: EntityId, unit: &[f64]) {
        let d = self.dim;
        self.entities.data[e.index() * d..(e.index() + 1) * d].copy_from_slice(unit);
    }

    pub fn entity_table(&self) -> VectorTable {
        VectorTable { dim: self.dim, vocab: self.entities.vocab.clone(), data: self.entities.data.clone() }
    }

    pub fn word_table(&self) -> VectorTable {
        VectorTable { dim: self.dim, vocab: self.words.vocab.clone(), data: self.words.data.clone() }
    }

    /// Stacks the vectors of the given entities into an `n x d` row-major buffer.
    pub fn gather_entities(&self, ids: &[EntityId]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(ids.len() * self.dim);
        for &e in ids {
            out.extend_from_slice(self.entity(e)?);
        }
        Ok(out)
    }

    pub fn gather_words(&self, ids: &[WordId]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(ids.len() * self.dim);
        for &w in ids {
            out.extend_from_slice(self.word(w)?);
        }
        Ok(out)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity; errors on mismatched dimensions or a zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("cosine of vectors with dimensions {} and {}", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine is undefined for a zero vector"));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Words closest to an entity by cosine, restricted to words seen at least
/// `min_freq` times. Ties are broken by ascending word id.
pub fn nearest_words(store: &EmbeddingStore, e: EntityId, k: usize, min_freq: u64) -> Result<Vec<(WordId, f64)>> {
    let ev = store.entity(e)?;
    if k == 0 {
        return Ok(Vec::new());
    }
    let vocab = store.word_vocab();
    let mut scored = Vec::new();
    for i in 0..store.num_words() {
        let w = WordId(i as u32);
        if vocab.freq(w.0) < min_freq {
            continue;
        }
        let wv = store.word(w)?;
        if norm(wv) == 0.0 {
            continue;
        }
        scored.push((w, cosine(ev, wv)?));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}
