use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::counts::{CooccurrenceCounts, CountSource};
use super::relatedness::{eval_relatedness, RelatednessMetrics, RelatednessQuery};
use crate::store::{dot, EmbeddingStore, WordId};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedTrainConfig {
    /// Hinge margin between positive and negative words.
    pub margin: f64,
    /// Positive words sampled per iteration.
    pub positives: usize,
    /// Negative words sampled per positive.
    pub negatives_per_positive: usize,
    pub learning_rate: f64,
    /// Iterations on description-page counts.
    pub description_iterations: usize,
    /// Upper bound on hyperlink-phase iterations.
    pub max_hyperlink_iterations: usize,
    /// Hyperlink-phase iterations between validation evaluations.
    pub eval_every: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    /// Hyperlink context tokens on each side of an anchor.
    pub window: usize,
    /// Take one step per (w⁺, w⁻) pair instead of one per iteration batch.
    pub step_per_pair: bool,
    pub seed: u64,
}

impl Default for EmbedTrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.1,
            positives: 20,
            negatives_per_positive: 5,
            learning_rate: 0.3,
            description_iterations: 400,
            max_hyperlink_iterations: 2000,
            eval_every: 50,
            patience: 3,
            window: 20,
            step_per_pair: false,
            seed: 1,
        }
    }
}

impl EmbedTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.learning_rate > 0.0) {
            return Err(Error::invalid("margin and learning rate must be positive"));
        }
        if self.positives == 0 || self.negatives_per_positive == 0 || self.window == 0 {
            return Err(Error::invalid("sample counts and window must be positive"));
        }
        if self.eval_every == 0 || self.patience == 0 {
            return Err(Error::invalid("eval_every and patience must be positive"));
        }
        Ok(())
    }
}

/// `max(0, γ − ⟨z, x⁺ − x⁻⟩)`.
pub fn hinge_embed(z: &[f64], pos: &[f64], neg: &[f64], margin: f64) -> f64 {
    let gap: f64 = z.iter().zip(pos).zip(neg).map(|((a, p), n)| a * (p - n)).sum();
    (margin - gap).max(0.0)
}

/// [`hinge_embed`] with word vectors looked up in `store`.
pub fn hinge_loss(store: &EmbeddingStore, z: &[f64], pos: WordId, neg: WordId, margin: f64) -> Result<f64> {
    Ok(hinge_embed(z, store.word(pos)?, store.word(neg)?, margin))
}

/// 64-bit FNV-1a hash, used to derive a stable per-entity seed from its name.
pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn entity_rng(seed: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name))
}

/// Standard-normal draw projected onto the unit sphere.
pub fn init_entity_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = dot(&v, &v).sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

struct Sampler {
    words: Vec<WordId>,
    alias: WeightedAliasIndex<f64>,
}

impl Sampler {
    fn new(dist: Vec<(WordId, f64)>) -> Option<Self> {
        if dist.is_empty() {
            return None;
        }
        let (words, weights): (Vec<_>, Vec<_>) = dist.into_iter().unzip();
        WeightedAliasIndex::new(weights).ok().map(|alias| Self { words, alias })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> WordId {
        self.words[self.alias.sample(rng)]
    }
}

/// Training state of one entity: its vector, Adagrad accumulator and rng.
struct EntityState {
    name: String,
    index: usize,
    z: Vec<f64>,
    accum: Vec<f64>,
    rng: ChaCha8Rng,
}

struct Trainer<'a> {
    store: &'a EmbeddingStore,
    cfg: &'a EmbedTrainConfig,
    negatives: Sampler,
}

impl Trainer<'_> {
    fn new<'a>(store: &'a EmbeddingStore, counts: &CooccurrenceCounts, cfg: &'a EmbedTrainConfig) -> Result<Trainer<'a>> {
        let q = counts.negative_distribution();
        let dist = q.into_iter().enumerate().map(|(i, p)| (WordId(i as u32), p)).collect();
        let negatives = Sampler::new(dist).ok_or_else(|| Error::invalid("no words available for negative sampling"))?;
        Ok(Trainer { store, cfg, negatives })
    }

    fn apply(&self, st: &mut EntityState, grad: &[f64]) {
        let lr = self.cfg.learning_rate;
        for ((z, a), &g) in st.z.iter_mut().zip(st.accum.iter_mut()).zip(grad) {
            if g == 0.0 {
                continue;
            }
            *a += g * g;
            *z -= lr * g / (a.sqrt() + 1e-10);
        }
        let n = dot(&st.z, &st.z).sqrt();
        if n > 0.0 {
            st.z.iter_mut().for_each(|x| *x /= n);
        }
    }

    /// One iteration: positives × negatives sampled pairs, Adagrad step(s), projection.
    fn iterate(&self, st: &mut EntityState, positives: &Sampler) {
        let d = self.store.dim();
        let mut grad = vec![0.0; d];
        for _ in 0..self.cfg.positives {
            let wp = positives.draw(&mut st.rng);
            let xp = self.store.word(wp).expect("sampled word id is in range");
            for _ in 0..self.cfg.negatives_per_positive {
                let wn = self.negatives.draw(&mut st.rng);
                let xn = self.store.word(wn).expect("sampled word id is in range");
                if hinge_embed(&st.z, xp, xn, self.cfg.margin) > 0.0 {
                    for k in 0..d {
                        grad[k] -= xp[k] - xn[k];
                    }
                }
                if self.cfg.step_per_pair {
                    self.apply(st, &grad);
                    grad.iter_mut().for_each(|g| *g = 0.0);
                }
            }
        }
        if !self.cfg.step_per_pair {
            self.apply(st, &grad);
        }
    }

    fn run(&self, st: &mut EntityState, positives: &Sampler, iterations: usize) {
        for _ in 0..iterations {
            self.iterate(st, positives);
        }
    }
}

fn positive_sampler(counts: &CooccurrenceCounts, e: usize, source: CountSource) -> Option<Sampler> {
    Sampler::new(counts.positive_distribution(e, source))
}

/// Trains a single entity in isolation: description iterations, then
/// `max_hyperlink_iterations` on hyperlink windows (no early stopping).
/// Returns `None` for an entity without any co-occurring words.
pub fn train_entity(
    e: usize,
    counts: &CooccurrenceCounts,
    cfg: &EmbedTrainConfig,
    store: &EmbeddingStore,
) -> Result<Option<Vec<f64>>> {
    cfg.validate()?;
    if e >= counts.num_entities() {
        return Err(Error::OutOfRange { kind: "entity", id: e, size: counts.num_entities() });
    }
    if !counts.is_trainable(e) {
        log::warn!("skipping untrainable entity `{}`", counts.entities().name(e as u32).unwrap_or("?"));
        return Ok(None);
    }
    let trainer = Trainer::new(store, counts, cfg)?;
    let mut st = new_state(counts, e, cfg.seed, store.dim());
    if let Some(p) = positive_sampler(counts, e, CountSource::Description) {
        trainer.run(&mut st, &p, cfg.description_iterations);
    }
    st.accum.iter_mut().for_each(|a| *a = 0.0);
    if let Some(p) = positive_sampler(counts, e, CountSource::Hyperlink) {
        trainer.run(&mut st, &p, cfg.max_hyperlink_iterations);
    }
    Ok(Some(st.z))
}

fn new_state(counts: &CooccurrenceCounts, e: usize, seed: u64, dim: usize) -> EntityState {
    let name = counts.entities().name(e as u32).expect("entity index in range").to_owned();
    let mut rng = entity_rng(seed, &name);
    let z = init_entity_vector(&mut rng, dim);
    EntityState { name, index: e, z, accum: vec![0.0; dim], rng }
}

/// Outcome of [`train_embeddings`].
#[derive(Debug, Clone, Default, Serialize)]
pub struct EmbedReport {
    pub trained: usize,
    pub skipped: usize,
    pub hyperlink_iterations: usize,
    /// Validation metrics after the description phase and at each checkpoint.
    pub history: Vec<(usize, RelatednessMetrics)>,
    pub best: Option<RelatednessMetrics>,
}

fn publish(store: &mut EmbeddingStore, states: &[EntityState]) -> Result<()> {
    for st in states {
        store.push_entity(&st.name, &st.z)?;
    }
    Ok(())
}

/// Trains every entity in `counts` and writes the vectors into `store`.
///
/// Entities are independent: each owns its vector, accumulator and an rng
/// seeded from the configured seed and the entity name, so the result does
/// not depend on order or thread count. The hyperlink phase stops once the
/// validation score on `validation` has not improved for `patience`
/// consecutive checkpoints; the best checkpoint is kept.
pub fn train_embeddings(
    store: &mut EmbeddingStore,
    counts: &CooccurrenceCounts,
    cfg: &EmbedTrainConfig,
    validation: &[RelatednessQuery],
) -> Result<EmbedReport> {
    cfg.validate()?;
    let dim = store.dim();
    let mut report = EmbedReport::default();
    let mut states: Vec<EntityState> = Vec::new();
    for e in 0..counts.num_entities() {
        if counts.is_trainable(e) {
            states.push(new_state(counts, e, cfg.seed, dim));
        } else {
            log::warn!("skipping untrainable entity `{}`", counts.entities().name(e as u32).unwrap_or("?"));
            report.skipped += 1;
        }
    }
    report.trained = states.len();
    {
        let trainer = Trainer::new(store, counts, cfg)?;
        states.par_iter_mut().for_each(|st| {
            if let Some(p) = positive_sampler(counts, st.index, CountSource::Description) {
                trainer.run(st, &p, cfg.description_iterations);
            }
            st.accum.iter_mut().for_each(|a| *a = 0.0);
        });
    }
    publish(store, &states)?;

    let has_links = states.iter().any(|st| !counts.counts(st.index, CountSource::Hyperlink).is_empty());
    if !has_links {
        if !validation.is_empty() {
            let m = eval_relatedness(validation, store);
            report.history.push((0, m));
            report.best = Some(m);
        }
        return Ok(report);
    }

    let link_samplers: Vec<Option<Sampler>> =
        states.iter().map(|st| positive_sampler(counts, st.index, CountSource::Hyperlink)).collect();
    let mut best_score = f64::NEG_INFINITY;
    let mut best_vectors: Vec<Vec<f64>> = states.iter().map(|s| s.z.clone()).collect();
    if !validation.is_empty() {
        let m = eval_relatedness(validation, store);
        report.history.push((0, m));
        best_score = m.validation_score;
        report.best = Some(m);
    }
    let mut done = 0;
    let mut stale = 0;
    while done < cfg.max_hyperlink_iterations {
        let chunk = cfg.eval_every.min(cfg.max_hyperlink_iterations - done);
        {
            let trainer = Trainer::new(store, counts, cfg)?;
            states.par_iter_mut().zip(&link_samplers).for_each(|(st, p)| {
                if let Some(p) = p {
                    trainer.run(st, p, chunk);
                }
            });
        }
        done += chunk;
        if validation.is_empty() {
            continue;
        }
        publish(store, &states)?;
        let m = eval_relatedness(validation, store);
        report.history.push((done, m));
        if m.validation_score > best_score {
            best_score = m.validation_score;
            best_vectors = states.iter().map(|s| s.z.clone()).collect();
            report.best = Some(m);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    report.hyperlink_iterations = done;
    if validation.is_empty() {
        best_vectors = states.iter().map(|s| s.z.clone()).collect();
    }
    for (st, v) in states.iter().zip(&best_vectors) {
        store.push_entity(&st.name, v)?;
    }
    Ok(report)
}
