use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;

use crate::store::{cosine, EmbeddingStore};
use crate::{Error, Result};

/// One target entity with candidates labelled related (`true`) or not.
#[derive(Debug, Clone, PartialEq)]
pub struct RelatednessQuery {
    pub target: String,
    pub candidates: Vec<(String, bool)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RelatednessMetrics {
    pub ndcg1: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub map: f64,
    /// Sum of the four metrics, used for early stopping.
    pub validation_score: f64,
    pub scored: usize,
    pub excluded: usize,
}

/// Binary-relevance NDCG@k with a log₂ discount. `ranked` holds the
/// relevance labels in ranked order.
pub fn ndcg_at(ranked: &[bool], k: usize) -> f64 {
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = ranked.iter().take(k).enumerate().filter(|(_, &r)| r).map(|(i, _)| discount(i)).sum();
    let relevant = ranked.iter().filter(|&&r| r).count();
    let idcg: f64 = (0..relevant.min(k)).map(discount).sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

pub fn average_precision(ranked: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &r) in ranked.iter().enumerate() {
        if r {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Ranks each query's candidates by descending `score` (stable on ties)
/// and averages NDCG@{1,5,10} and AP over the scorable queries. A query is
/// scorable when it has at least one related and one unrelated candidate
/// and `score` returns `Some` for every candidate.
pub fn rank_metrics<F>(queries: &[RelatednessQuery], mut score: F) -> RelatednessMetrics
where
    F: FnMut(&str, &str) -> Option<f64>,
{
    let mut m = RelatednessMetrics::default();
    'query: for q in queries {
        let pos = q.candidates.iter().filter(|c| c.1).count();
        if pos == 0 || pos == q.candidates.len() {
            m.excluded += 1;
            continue;
        }
        let mut scored = Vec::with_capacity(q.candidates.len());
        for (c, label) in &q.candidates {
            match score(&q.target, c) {
                Some(s) => scored.push((s, *label)),
                None => {
                    m.excluded += 1;
                    continue 'query;
                }
            }
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let ranked: Vec<bool> = scored.iter().map(|p| p.1).collect();
        m.ndcg1 += ndcg_at(&ranked, 1);
        m.ndcg5 += ndcg_at(&ranked, 5);
        m.ndcg10 += ndcg_at(&ranked, 10);
        m.map += average_precision(&ranked);
        m.scored += 1;
    }
    if m.scored > 0 {
        let n = m.scored as f64;
        m.ndcg1 /= n;
        m.ndcg5 /= n;
        m.ndcg10 /= n;
        m.map /= n;
    }
    m.validation_score = m.ndcg1 + m.ndcg5 + m.ndcg10 + m.map;
    m
}

/// Relatedness evaluation with candidates ranked by cosine to the target.
/// Queries touching an entity absent from the store are excluded.
pub fn eval_relatedness(queries: &[RelatednessQuery], store: &EmbeddingStore) -> RelatednessMetrics {
    let m = rank_metrics(queries, |t, c| {
        let t = store.entity(store.entity_id(t)?).ok()?;
        let c = store.entity(store.entity_id(c)?).ok()?;
        cosine(t, c).ok()
    });
    if m.excluded > 0 {
        log::info!("relatedness: {} queries excluded", m.excluded);
    }
    m
}

/// Reads `target \t candidate \t label` lines, grouping by target in order
/// of first appearance.
pub fn read_queries(path: &Path) -> Result<Vec<RelatednessQuery>> {
    let name = path.display().to_string();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<RelatednessQuery> = Vec::new();
    let mut slot: HashMap<String, usize> = HashMap::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(&name, i + 1, "expected `target<TAB>candidate<TAB>label`"));
        }
        let label = match cols[2].trim() {
            "1" => true,
            "0" => false,
            other => return Err(Error::parse(&name, i + 1, format!("label must be 0 or 1, got `{other}`"))),
        };
        let idx = *slot.entry(cols[0].to_owned()).or_insert_with(|| {
            out.push(RelatednessQuery { target: cols[0].to_owned(), candidates: Vec::new() });
            out.len() - 1
        });
        out[idx].candidates.push((cols[1].to_owned(), label));
    }
    Ok(out)
}

pub fn write_queries(path: &Path, queries: &[RelatednessQuery]) -> Result<()> {
    let mut s = String::new();
    for q in queries {
        for (c, l) in &q.candidates {
            s.push_str(&format!("{}\t{}\t{}\n", q.target, c, u8::from(*l)));
        }
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn query(labels: &[bool]) -> RelatednessQuery {
        RelatednessQuery {
            target: "t".into(),
            candidates: labels.iter().enumerate().map(|(i, &l)| (format!("c{i}"), l)).collect(),
        }
    }

    #[test]
    fn perfect_ranking() {
        let q = query(&[true, true, false, false]);
        let m = rank_metrics(&[q], |_, c| Some(-(c[1..].parse::<f64>().unwrap())));
        assert_abs_diff_eq!(m.ndcg1, 1.0);
        assert_abs_diff_eq!(m.ndcg5, 1.0);
        assert_abs_diff_eq!(m.ndcg10, 1.0);
        assert_abs_diff_eq!(m.map, 1.0);
        assert_abs_diff_eq!(m.validation_score, 4.0);
    }

    #[test]
    fn single_relevant_at_rank_two() {
        let q = query(&[false, true]);
        let m = rank_metrics(&[q], |_, c| Some(-(c[1..].parse::<f64>().unwrap())));
        assert_abs_diff_eq!(m.map, 0.5);
        assert_abs_diff_eq!(m.ndcg1, 0.0);
        // DCG = 1/log2(3), IDCG = 1.
        assert_abs_diff_eq!(m.ndcg5, 1.0 / 3f64.log2(), epsilon = 1e-12);
    }

    #[test]
    fn reversing_scores_with_positive_at_bottom_raises_map() {
        let q = query(&[false, false, false, true]);
        let fwd = rank_metrics(std::slice::from_ref(&q), |_, c| Some(-(c[1..].parse::<f64>().unwrap())));
        let rev = rank_metrics(&[q], |_, c| Some(c[1..].parse::<f64>().unwrap()));
        assert!(rev.map > fwd.map);
    }

    #[test]
    fn one_sided_and_unscorable_queries_are_excluded() {
        let m = rank_metrics(&[query(&[true, true]), query(&[true, false])], |_, c| (c != "c1").then_some(1.0));
        assert_eq!(m.scored, 0);
        assert_eq!(m.excluded, 2);
    }
}
