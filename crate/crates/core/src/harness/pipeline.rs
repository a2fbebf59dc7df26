use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corpus::Document;
use super::eval::{BreakdownRow, Outcome};
use crate::candidates::{coref_person_merge, gold_recall, select_candidates, CandidateSet, PriorIndex, SelectionConfig};
use crate::local::{context_window, PreparedDoc, PreparedMention};
use crate::store::{EmbeddingStore, EntityId};
use crate::embed::HyperlinkContext;
use crate::{Error, Result};

/// Candidate sets and scorer inputs for a batch of documents.
#[derive(Debug, Clone, Default)]
pub struct Prepared {
    pub docs: Vec<PreparedDoc>,
    pub sets: Vec<Vec<CandidateSet>>,
    /// Whether each mention carries a gold annotation.
    pub annotated: Vec<Vec<bool>>,
}

impl Prepared {
    /// Share of gold-annotated mentions whose candidate set holds the gold entity, in percent.
    pub fn gold_recall(&self) -> f64 {
        let items = self
            .docs
            .iter()
            .zip(&self.sets)
            .zip(&self.annotated)
            .flat_map(|((d, s), a)| d.mentions.iter().zip(s).zip(a))
            .filter(|(_, &a)| a);
        gold_recall(items.map(|((m, s), _)| (m.gold_entity, s)))
    }
}

/// Resolves context windows and candidates for one document. Person
/// mentions are merged with longer mentions that contain them when
/// `is_person` says the top prior candidate is a person.
pub fn prepare_doc<F>(
    doc: &Document,
    store: &EmbeddingStore,
    prior: &PriorIndex,
    sel: &SelectionConfig,
    k: usize,
    is_person: F,
) -> Result<(PreparedDoc, Vec<CandidateSet>)>
where
    F: Fn(EntityId) -> bool,
{
    let mut windows = Vec::with_capacity(doc.mentions.len());
    let mut sets = Vec::with_capacity(doc.mentions.len());
    for m in &doc.mentions {
        let ctx = context_window(&doc.tokens, m.start, m.end, k, store);
        sets.push(select_candidates(&m.surface, &ctx, prior, store, sel)?);
        windows.push(ctx);
    }
    let surfaces: Vec<String> = doc.mentions.iter().map(|m| m.surface.clone()).collect();
    coref_person_merge(&surfaces, &mut sets, is_person, sel.size);
    let mut mentions = Vec::with_capacity(sets.len());
    for ((m, set), ctx) in doc.mentions.iter().zip(&sets).zip(windows) {
        let gold = m.gold.as_deref().and_then(|g| store.entity_id(g));
        mentions.push(PreparedMention::new(store, set, ctx, gold)?);
    }
    Ok((PreparedDoc { id: doc.id.clone(), mentions }, sets))
}

fn docs_annotated(docs: &[Document]) -> Vec<Vec<bool>> {
    docs.iter().map(|d| d.mentions.iter().map(|m| m.gold.is_some()).collect()).collect()
}

pub fn prepare_docs<F>(
    docs_in: &[Document],
    store: &EmbeddingStore,
    prior: &PriorIndex,
    sel: &SelectionConfig,
    k: usize,
    is_person: F,
) -> Result<Prepared>
where
    F: Fn(EntityId) -> bool + Sync,
{
    let parts: Vec<(PreparedDoc, Vec<CandidateSet>)> =
        docs_in.par_iter().map(|d| prepare_doc(d, store, prior, sel, k, &is_person)).collect::<Result<_>>()?;
    let (docs, sets) = parts.into_iter().unzip();
    let annotated = docs_annotated(docs_in);
    Ok(Prepared { docs, sets, annotated })
}

/// Gold-annotated mentions as hyperlink anchors for embedding training.
pub fn hyperlinks(docs: &[Document]) -> Vec<HyperlinkContext> {
    docs.iter()
        .flat_map(|d| {
            d.mentions.iter().filter_map(|m| {
                Some(HyperlinkContext { entity: m.gold.clone()?, tokens: d.tokens.clone(), start: m.start, end: m.end })
            })
        })
        .collect()
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub doc: String,
    pub mention: usize,
    pub surface: String,
    pub entity: Option<String>,
    /// Candidate entities the prediction was chosen from.
    #[serde(default)]
    pub candidates: Vec<String>,
}

pub fn predictions(
    docs: &[Document],
    prepared: &[PreparedDoc],
    preds: &[Vec<Option<EntityId>>],
    store: &EmbeddingStore,
) -> Vec<Prediction> {
    let name = |e: EntityId| store.entity_name(e).unwrap_or("?").to_owned();
    let mut out = Vec::new();
    for ((d, pd), ps) in docs.iter().zip(prepared).zip(preds) {
        for (i, ((m, pm), p)) in d.mentions.iter().zip(&pd.mentions).zip(ps).enumerate() {
            out.push(Prediction {
                doc: d.id.clone(),
                mention: i,
                surface: m.surface.clone(),
                entity: p.map(name),
                candidates: pm.entities.iter().map(|&e| name(e)).collect(),
            });
        }
    }
    out
}

pub fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for p in preds {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(&name, i + 1, e.to_string()))?);
    }
    Ok(out)
}

/// Joins predictions to the corpus by document id and mention index.
/// Mentions without a prediction count as unannotated; predictions that
/// match no mention are an error.
pub fn join_predictions(docs: &[Document], preds: &[Prediction], in_kb: impl Fn(&str) -> bool) -> Result<Vec<Outcome>> {
    let mut by_key: HashMap<(&str, usize), &Prediction> = HashMap::new();
    for p in preds {
        by_key.insert((p.doc.as_str(), p.mention), p);
    }
    let mut out = Vec::new();
    let mut used = 0;
    for d in docs {
        for (i, m) in d.mentions.iter().enumerate() {
            let p = by_key.get(&(d.id.as_str(), i));
            used += usize::from(p.is_some());
            out.push(Outcome {
                gold: m.gold.clone(),
                predicted: p.and_then(|p| p.entity.clone()),
                in_kb: m.gold.as_deref().is_some_and(&in_kb),
            });
        }
    }
    if used != by_key.len() {
        return Err(Error::invalid(format!("{} predictions do not match any corpus mention", by_key.len() - used)));
    }
    Ok(out)
}

/// Highest-prior candidate per mention.
pub fn predict_prior(doc: &PreparedDoc) -> Vec<Option<EntityId>> {
    doc.mentions.iter().map(|m| m.best(m.log_prior.data()).map(|i| m.entities[i])).collect()
}

/// Pairs each mention's prediction with its gold annotation.
pub fn outcomes(docs: &[Document], predictions: &[Vec<Option<EntityId>>], store: &EmbeddingStore) -> Vec<Outcome> {
    let mut out = Vec::new();
    for (d, preds) in docs.iter().zip(predictions) {
        for (m, p) in d.mentions.iter().zip(preds) {
            out.push(Outcome {
                gold: m.gold.clone(),
                predicted: p.and_then(|e| store.entity_name(e)).map(str::to_owned),
                in_kb: m.gold.as_deref().is_some_and(|g| store.entity_id(g).is_some()),
            });
        }
    }
    out
}

/// Breakdown rows for mentions whose gold entity made it into the candidate set.
pub fn breakdown_rows(
    docs: &[Document],
    prepared: &[PreparedDoc],
    predictions: &[Vec<Option<EntityId>>],
    prior: &PriorIndex,
    frequency: &HashMap<String, u64>,
) -> Vec<BreakdownRow> {
    let mut rows = Vec::new();
    for ((d, pd), preds) in docs.iter().zip(prepared).zip(predictions) {
        for ((m, pm), p) in d.mentions.iter().zip(&pd.mentions).zip(preds) {
            let (Some(gold), Some(_)) = (&m.gold, pm.gold) else { continue };
            rows.push(BreakdownRow {
                correct: *p == pm.gold_entity,
                frequency: frequency.get(gold).copied().unwrap_or(0),
                prior: prior.prior(&m.surface, gold),
            });
        }
    }
    rows
}

/// One mention of the attention dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionRow {
    pub doc: String,
    pub mention: usize,
    pub surface: String,
    pub gold: Option<String>,
    pub predicted: Option<String>,
    pub gold_prior: f64,
    /// Attended word types by descending total weight.
    pub words: Vec<(String, f64)>,
}

/// Sums attention over repeated occurrences of the same word and sorts
/// by descending weight.
pub fn aggregate_attention(store: &EmbeddingStore, att: &[(crate::store::WordId, f64)]) -> Vec<(String, f64)> {
    let mut by_word: Vec<(crate::store::WordId, f64)> = Vec::new();
    for &(w, b) in att {
        match by_word.iter_mut().find(|p| p.0 == w) {
            Some(p) => p.1 += b,
            None => by_word.push((w, b)),
        }
    }
    by_word.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    by_word.into_iter().map(|(w, b)| (store.word_name(w).unwrap_or("?").to_owned(), b)).collect()
}

pub fn attention_tsv(rows: &[AttentionRow]) -> String {
    let mut s = String::from("doc\tmention\tsurface\tgold\tpredicted\tgold_prior\twords\n");
    for r in rows {
        let words: Vec<String> = r.words.iter().map(|(w, b)| format!("{w}:{b:.4}")).collect();
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{:.4}\t{}\n",
            r.doc,
            r.mention,
            r.surface,
            r.gold.as_deref().unwrap_or("-"),
            r.predicted.as_deref().unwrap_or("-"),
            r.gold_prior,
            words.join(" ")
        ));
    }
    s
}
