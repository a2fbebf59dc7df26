//! Mention–entity prior construction and candidate pruning.
//!
//! The top `pre_cut` entities by prior are kept first; of those the final
//! set takes the `prior_top` best by prior and fills up to `S` with the
//! entities whose embeddings best match the averaged context word vector.

mod prior;

pub use prior::{build_prior, normalize_mention, PriorIndex, PriorSource, SourceKind};

use serde::{Deserialize, Serialize};

use crate::store::{dot, EmbeddingStore, EntityId, WordId};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionReason {
    PriorTop,
    ContextTop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub entity: EntityId,
    pub prior: f64,
    pub reason: SelectionReason,
}

/// Pruned candidate list `Γ(m)` for one mention.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub mention: String,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn contains(&self, e: EntityId) -> bool {
        self.candidates.iter().any(|c| c.entity == e)
    }

    pub fn position(&self, e: EntityId) -> Option<usize> {
        self.candidates.iter().position(|c| c.entity == e)
    }

    pub fn entities(&self) -> Vec<EntityId> {
        self.candidates.iter().map(|c| c.entity).collect()
    }

    pub fn priors(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.prior).collect()
    }

    /// Entry with the highest prior (ties to the smaller id).
    pub fn top_by_prior(&self) -> Option<&Candidate> {
        self.candidates
            .iter()
            .min_by(|a, b| b.prior.total_cmp(&a.prior).then(a.entity.cmp(&b.entity)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Final set size `S`.
    pub size: usize,
    /// Entities kept by prior rank.
    pub prior_top: usize,
    /// Prior-ranked shortlist considered before pruning.
    pub pre_cut: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { size: 7, prior_top: 4, pre_cut: 30 }
    }
}

fn by_prior(a: &(EntityId, f64), b: &(EntityId, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Plain average of the known context word vectors; `None` if there are none.
pub fn average_context(store: &EmbeddingStore, context: &[WordId]) -> Result<Option<Vec<f64>>> {
    if context.is_empty() {
        return Ok(None);
    }
    let mut avg = vec![0.0; store.dim()];
    for &w in context {
        for (a, x) in avg.iter_mut().zip(store.word(w)?) {
            *a += x;
        }
    }
    let n = context.len() as f64;
    avg.iter_mut().for_each(|a| *a /= n);
    Ok(Some(avg))
}

/// Builds `Γ(m)` for one mention. Entities without an embedding are
/// ignored since no model can score them. An unknown mention yields an
/// empty set (the mention stays unannotated).
pub fn select_candidates(
    mention: &str,
    context: &[WordId],
    prior: &PriorIndex,
    store: &EmbeddingStore,
    cfg: &SelectionConfig,
) -> Result<CandidateSet> {
    let mut set = CandidateSet { mention: mention.to_owned(), candidates: Vec::new() };
    let Some(entries) = prior.lookup(mention) else {
        return Ok(set);
    };
    let mut ranked: Vec<(EntityId, f64)> =
        entries.iter().filter_map(|(name, p)| store.entity_id(name).map(|e| (e, *p))).collect();
    ranked.sort_by(by_prior);
    ranked.truncate(cfg.pre_cut);

    let take_prior = if ranked.len() <= cfg.size { ranked.len() } else { cfg.prior_top.min(cfg.size) };
    for &(entity, p) in &ranked[..take_prior] {
        set.candidates.push(Candidate { entity, prior: p, reason: SelectionReason::PriorTop });
    }
    let rest = &ranked[take_prior..];
    let room = cfg.size.saturating_sub(take_prior);
    if rest.is_empty() || room == 0 {
        return Ok(set);
    }
    let avg = average_context(store, context)?;
    let mut scored: Vec<(f64, f64, EntityId)> = Vec::with_capacity(rest.len());
    for &(e, p) in rest {
        let s = match &avg {
            Some(c) => dot(store.entity(e)?, c),
            None => 0.0,
        };
        scored.push((s, p, e));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    for &(_, p, entity) in scored.iter().take(room) {
        set.candidates.push(Candidate { entity, prior: p, reason: SelectionReason::ContextTop });
    }
    Ok(set)
}

fn contains_subsequence(hay: &[&str], needle: &[&str]) -> bool {
    !needle.is_empty() && needle.len() <= hay.len() && hay.windows(needle.len()).any(|w| w == needle)
}

/// Person coreference merge.
///
/// A mention whose top-prior candidate is a person, and whose words occur
/// as a contiguous run inside longer person mentions of the same document
/// ("Peter" inside "Peter Such"), takes the union of those mentions'
/// candidate sets, re-pruned to `size` by prior. Merged entries carry the
/// prior and reason from the containing mention they came from.
pub fn coref_person_merge<F>(surfaces: &[String], sets: &mut [CandidateSet], is_person: F, size: usize)
where
    F: Fn(EntityId) -> bool,
{
    assert_eq!(surfaces.len(), sets.len(), "one candidate set per mention");
    let words: Vec<Vec<&str>> = surfaces.iter().map(|s| s.split_whitespace().collect()).collect();
    let person: Vec<bool> = sets.iter().map(|s| s.top_by_prior().is_some_and(|c| is_person(c.entity))).collect();
    let snapshot: Vec<CandidateSet> = sets.to_vec();
    for i in 0..sets.len() {
        if !person[i] {
            continue;
        }
        let containing: Vec<usize> = (0..sets.len())
            .filter(|&j| j != i && person[j] && words[j].len() > words[i].len())
            .filter(|&j| contains_subsequence(&words[j], &words[i]))
            .collect();
        if containing.is_empty() {
            continue;
        }
        let mut merged: Vec<Candidate> = Vec::new();
        for &j in &containing {
            for c in &snapshot[j].candidates {
                match merged.iter_mut().find(|m| m.entity == c.entity) {
                    Some(m) if c.prior > m.prior => *m = c.clone(),
                    Some(_) => {}
                    None => merged.push(c.clone()),
                }
            }
        }
        merged.sort_by(|a, b| b.prior.total_cmp(&a.prior).then(a.entity.cmp(&b.entity)));
        merged.truncate(size);
        sets[i].candidates = merged;
    }
}

/// Percentage of gold-annotated mentions whose candidate set contains the
/// gold entity. A `None` gold is an entity unknown to the store and counts
/// as a miss. Returns 0 when there are no gold mentions.
pub fn gold_recall<'a, I>(items: I) -> f64
where
    I: IntoIterator<Item = (Option<EntityId>, &'a CandidateSet)>,
{
    let (mut hit, mut total) = (0usize, 0usize);
    for (gold, set) in items {
        total += 1;
        if gold.is_some_and(|g| set.contains(g)) {
            hit += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        100.0 * hit as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{VectorTable, Vocab};

    /// Store with words w0..w3 along the axes of R^4 and entities
    /// e0..e{n-1} with chosen vectors.
    fn store(entities: &[(&str, [f64; 4])]) -> EmbeddingStore {
        let mut vocab = Vocab::new();
        let mut data = Vec::new();
        for i in 0..4 {
            vocab.intern(&format!("w{i}"));
            let mut v = [0.0; 4];
            v[i] = 1.0;
            data.extend(v);
        }
        let mut s = EmbeddingStore::new(VectorTable { dim: 4, vocab, data }).unwrap();
        for (n, v) in entities {
            s.push_entity(n, v).unwrap();
        }
        s
    }

    fn prior_for(m: &str, entries: &[(&str, f64)]) -> PriorIndex {
        let mut src = PriorSource::new(SourceKind::Counts, 1.0);
        for (e, c) in entries {
            src.add(m, e, *c);
        }
        build_prior(&[src])
    }

    #[test]
    fn few_candidates_are_all_kept() {
        let s = store(&[("a", [1.0, 0.0, 0.0, 0.0]), ("b", [0.0, 1.0, 0.0, 0.0]), ("c", [0.0, 0.0, 1.0, 0.0])]);
        let p = prior_for("m", &[("a", 3.0), ("b", 2.0), ("c", 1.0)]);
        let set = select_candidates("m", &[], &p, &s, &SelectionConfig::default()).unwrap();
        assert_eq!(set.len(), 3);
        assert!(set.candidates.iter().all(|c| c.reason == SelectionReason::PriorTop));
    }

    #[test]
    fn unknown_mention_has_no_candidates() {
        let s = store(&[("a", [1.0, 0.0, 0.0, 0.0])]);
        let p = prior_for("m", &[("a", 1.0)]);
        let set = select_candidates("zzz", &[], &p, &s, &SelectionConfig::default()).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn context_top_skips_prior_top_entities() {
        // 9 entities; prior order e0 > e1 > ... > e8. Context points along w0.
        // e0 (prior-top) is the best context match, so the context step must
        // take the next three: e8, e7, e6 (descending w0 component).
        let names: Vec<String> = (0..9).map(|i| format!("e{i}")).collect();
        let ents: Vec<(&str, [f64; 4])> = names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let w0 = match i {
                    0 => 1.0,
                    8 => 0.9,
                    7 => 0.8,
                    6 => 0.7,
                    _ => 0.01,
                };
                (n.as_str(), [w0, 0.5, 0.0, 0.0])
            })
            .collect();
        let s = store(&ents);
        let pri: Vec<(&str, f64)> = names.iter().enumerate().map(|(i, n)| (n.as_str(), 20.0 - i as f64)).collect();
        let p = prior_for("m", &pri);
        let set = select_candidates("m", &[WordId(0)], &p, &s, &SelectionConfig::default()).unwrap();
        let got: Vec<&str> = set.candidates.iter().map(|c| s.entity_name(c.entity).unwrap()).collect();
        assert_eq!(got, vec!["e0", "e1", "e2", "e3", "e8", "e7", "e6"]);
        let reasons: Vec<SelectionReason> = set.candidates.iter().map(|c| c.reason).collect();
        assert_eq!(reasons.iter().filter(|&&r| r == SelectionReason::PriorTop).count(), 4);
        assert_eq!(reasons.iter().filter(|&&r| r == SelectionReason::ContextTop).count(), 3);
        for c in &set.candidates {
            assert_eq!(c.prior, p.prior("m", s.entity_name(c.entity).unwrap()));
        }
    }

    fn person_sets(s: &EmbeddingStore, p: &PriorIndex, surfaces: &[String]) -> Vec<CandidateSet> {
        surfaces
            .iter()
            .map(|m| select_candidates(m, &[], p, s, &SelectionConfig::default()).unwrap())
            .collect()
    }

    #[test]
    fn short_person_mention_inherits_candidates() {
        let s = store(&[
            ("Peter_Such", [1.0, 0.0, 0.0, 0.0]),
            ("Peter_Pan", [0.0, 1.0, 0.0, 0.0]),
            ("Peter_Lorre", [0.0, 0.0, 1.0, 0.0]),
        ]);
        let mut a = PriorSource::new(SourceKind::Counts, 1.0);
        a.add("Peter Such", "Peter_Such", 5.0);
        a.add("Peter", "Peter_Pan", 5.0);
        a.add("Peter", "Peter_Lorre", 1.0);
        let p = build_prior(&[a]);
        let surfaces = vec!["Peter Such".to_string(), "Peter".to_string()];
        let mut sets = person_sets(&s, &p, &surfaces);
        coref_person_merge(&surfaces, &mut sets, |_| true, 7);
        assert_eq!(sets[1].entities(), vec![s.entity_id("Peter_Such").unwrap()]);
        assert_eq!(sets[0].entities(), vec![s.entity_id("Peter_Such").unwrap()]);
    }

    #[test]
    fn non_person_mention_is_unchanged() {
        let s = store(&[("Paris_Hilton", [1.0, 0.0, 0.0, 0.0]), ("Paris", [0.0, 1.0, 0.0, 0.0])]);
        let mut a = PriorSource::new(SourceKind::Counts, 1.0);
        a.add("Paris Hilton", "Paris_Hilton", 5.0);
        a.add("Paris", "Paris", 5.0);
        let p = build_prior(&[a]);
        let surfaces = vec!["Paris Hilton".to_string(), "Paris".to_string()];
        let mut sets = person_sets(&s, &p, &surfaces);
        let before = sets.clone();
        let city = s.entity_id("Paris").unwrap();
        coref_person_merge(&surfaces, &mut sets, |e| e != city, 7);
        assert_eq!(sets, before);
    }

    #[test]
    fn two_containing_mentions_union_deduplicated_and_pruned() {
        let s = store(&[
            ("A", [1.0, 0.0, 0.0, 0.0]),
            ("B", [0.0, 1.0, 0.0, 0.0]),
            ("C", [0.0, 0.0, 1.0, 0.0]),
            ("D", [0.0, 0.0, 0.0, 1.0]),
        ]);
        let mut a = PriorSource::new(SourceKind::Counts, 1.0);
        a.add("John Smith", "A", 6.0);
        a.add("John Smith", "B", 4.0);
        a.add("John Smith Jr", "B", 7.0);
        a.add("John Smith Jr", "C", 3.0);
        a.add("Smith", "D", 1.0);
        let p = build_prior(&[a]);
        let surfaces = vec!["John Smith".to_string(), "John Smith Jr".to_string(), "Smith".to_string()];
        let mut sets = person_sets(&s, &p, &surfaces);
        coref_person_merge(&surfaces, &mut sets, |_| true, 2);
        let id = |n| s.entity_id(n).unwrap();
        // Union {A .6, B max(.4,.7)=.7, C .3} pruned to 2 by prior.
        assert_eq!(sets[2].entities(), vec![id("B"), id("A")]);
        // "John Smith" is contained in "John Smith Jr".
        assert_eq!(sets[0].entities(), vec![id("B"), id("C")]);
    }

    #[test]
    fn gold_recall_counts() {
        let set = |ids: &[u32]| CandidateSet {
            mention: String::new(),
            candidates: ids
                .iter()
                .map(|&i| Candidate { entity: EntityId(i), prior: 0.5, reason: SelectionReason::PriorTop })
                .collect(),
        };
        let sets = [set(&[0, 1]), set(&[2]), set(&[3]), set(&[4])];
        let all = [Some(EntityId(1)), Some(EntityId(2)), Some(EntityId(3)), Some(EntityId(4))];
        assert_eq!(gold_recall(all.iter().copied().zip(&sets)), 100.0);
        let one_missing = [Some(EntityId(1)), Some(EntityId(2)), Some(EntityId(3)), Some(EntityId(9))];
        assert_eq!(gold_recall(one_missing.iter().copied().zip(&sets)), 75.0);
        assert_eq!(gold_recall(std::iter::empty()), 0.0);
    }
}
