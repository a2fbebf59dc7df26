use std::collections::HashSet;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, Document, Mention, Split};
use crate::candidates::{build_prior, PriorIndex, PriorSource, SourceKind};
use crate::embed::{ingest_counts, write_queries, CooccurrenceCounts, DescriptionDoc, RelatednessQuery, DEFAULT_ALPHA};
use crate::store::{write_vectors, EmbeddingStore, VectorFormat, VectorTable, Vocab};
use crate::{Error, Result};

/// Knobs of the synthetic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub kb_size: usize,
    pub topics: usize,
    /// Words owned by each entity.
    pub signature_words: usize,
    /// Total word vocabulary (signature plus noise words).
    pub vocab_size: usize,
    pub dim: usize,
    /// Documents over all splits (60/20/20 train/validation/test).
    pub docs: usize,
    pub mentions_per_doc: usize,
    /// Candidate entities per surface form.
    pub ambiguity: usize,
    /// Probability that a gold entity comes from the document topic.
    pub coherence: f64,
    /// Probability that a context token is a noise word.
    pub noise_rate: f64,
    /// Context tokens emitted on each side of a mention.
    pub context_words: usize,
    /// Share of mentions whose context carries no signature word at all.
    pub uninformative_rate: f64,
    /// Spread of the log prior weights inside a surface form.
    pub prior_skew: f64,
    /// Weight of the topic direction in signature word vectors.
    pub topic_weight: f64,
    pub description_length: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            kb_size: 200,
            topics: 20,
            signature_words: 10,
            vocab_size: 3000,
            dim: 32,
            docs: 200,
            mentions_per_doc: 6,
            ambiguity: 4,
            coherence: 0.9,
            noise_rate: 0.5,
            context_words: 20,
            uninformative_rate: 0.3,
            prior_skew: 1.0,
            topic_weight: 1.0,
            description_length: 200,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.kb_size,
            self.topics,
            self.signature_words,
            self.vocab_size,
            self.dim,
            self.docs,
            self.mentions_per_doc,
            self.ambiguity,
            self.context_words,
            self.description_length,
        ];
        if positive.contains(&0) {
            return Err(Error::invalid("synthetic sizes must be positive"));
        }
        if self.ambiguity > self.kb_size {
            return Err(Error::invalid("ambiguity degree exceeds the KB size"));
        }
        if self.ambiguity > self.topics {
            return Err(Error::invalid("ambiguity degree exceeds the topic count"));
        }
        if self.topics > self.kb_size {
            return Err(Error::invalid("more topics than entities"));
        }
        if self.kb_size * self.signature_words >= self.vocab_size {
            return Err(Error::invalid("signature words exceed the vocabulary"));
        }
        for (name, p) in [("coherence", self.coherence), ("noise rate", self.noise_rate), ("uninformative rate", self.uninformative_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.docs < 3 {
            return Err(Error::invalid("at least three documents are needed for the splits"));
        }
        Ok(())
    }
}

/// Everything the generator produces.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    /// Word vectors (no entity vectors yet).
    pub store: EmbeddingStore,
    pub descriptions: Vec<DescriptionDoc>,
    pub prior_source: PriorSource,
    pub prior: PriorIndex,
    pub train: Corpus,
    pub validation: Corpus,
    pub test: Corpus,
    pub queries_validation: Vec<RelatednessQuery>,
    pub queries_test: Vec<RelatednessQuery>,
    pub entity_names: Vec<String>,
    pub entity_topics: Vec<usize>,
    pub signatures: Vec<Vec<String>>,
    /// Surface form of each entity.
    pub surfaces: Vec<String>,
}

fn unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Groups entity ids into surface forms of `size` members with distinct topics.
fn ambiguity_groups<R: Rng>(rng: &mut R, topics: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..topics.len()).collect();
    order.shuffle(rng);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for e in order {
        let open = groups.iter_mut().find(|g| g.len() < size && g.iter().all(|&o| topics[o] != topics[e]));
        match open {
            Some(g) => g.push(e),
            None => groups.push(vec![e]),
        }
    }
    groups
}

/// Builds the benchmark. Entity `e` belongs to topic `e mod topics`; its
/// signature words point along its topic direction plus an entity-specific
/// direction, and noise words are random unit vectors. Each surface form
/// is shared by `ambiguity` entities of distinct topics, so the topic of the
/// context decides the referent.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim;
    let centroids: Vec<Vec<f64>> = (0..spec.topics).map(|_| unit(&mut rng, d)).collect();
    let entity_names: Vec<String> = (0..spec.kb_size).map(|e| format!("E{e:04}")).collect();
    let entity_topics: Vec<usize> = (0..spec.kb_size).map(|e| e % spec.topics).collect();

    let mut vocab = Vocab::new();
    let mut data = Vec::with_capacity(spec.vocab_size * d);
    let mut signatures = Vec::with_capacity(spec.kb_size);
    for e in 0..spec.kb_size {
        let own = unit(&mut rng, d);
        let mut words = Vec::with_capacity(spec.signature_words);
        for k in 0..spec.signature_words {
            let name = format!("s{e:04}_{k}");
            let jitter = unit(&mut rng, d);
            let v: Vec<f64> = (0..d)
                .map(|i| spec.topic_weight * centroids[entity_topics[e]][i] + own[i] + 0.3 * jitter[i])
                .collect();
            vocab.intern(&name);
            data.extend(normalized(v));
            words.push(name);
        }
        signatures.push(words);
    }
    let noise_words: Vec<String> = (vocab.len()..spec.vocab_size).map(|i| format!("w{i:05}")).collect();
    for w in &noise_words {
        vocab.intern(w);
        data.extend(unit(&mut rng, d));
    }
    let store = EmbeddingStore::new(VectorTable { dim: d, vocab, data })?;

    // Surface forms and skewed priors.
    let groups = ambiguity_groups(&mut rng, &entity_topics, spec.ambiguity);
    let mut surfaces = vec![String::new(); spec.kb_size];
    let mut prior_source = PriorSource::new(SourceKind::Counts, 1.0);
    let mut weight = vec![0.0; spec.kb_size];
    for (g, members) in groups.iter().enumerate() {
        let surface = format!("M{g:03}");
        for &e in members {
            let z: f64 = StandardNormal.sample(&mut rng);
            weight[e] = (spec.prior_skew * z).exp();
        }
        let total: f64 = members.iter().map(|&e| weight[e]).sum();
        for &e in members {
            let count = (1000.0 * weight[e] / total).round().max(1.0);
            prior_source.add(&surface, &entity_names[e], count);
            surfaces[e] = surface.clone();
        }
    }
    let prior = build_prior(std::slice::from_ref(&prior_source));

    // Description pages: signature words with a sprinkling of noise.
    let descriptions: Vec<DescriptionDoc> = (0..spec.kb_size)
        .map(|e| {
            let tokens = (0..spec.description_length)
                .map(|_| {
                    if rng.random::<f64>() < 0.2 {
                        noise_words.choose(&mut rng).expect("noise vocabulary").clone()
                    } else {
                        signatures[e].choose(&mut rng).expect("signature words").clone()
                    }
                })
                .collect();
            DescriptionDoc { entity: entity_names[e].clone(), tokens }
        })
        .collect();

    // Documents.
    let by_topic: Vec<Vec<usize>> = (0..spec.topics).map(|t| (t..spec.kb_size).step_by(spec.topics).collect()).collect();
    let mut docs = Vec::with_capacity(spec.docs);
    for di in 0..spec.docs {
        let topic = rng.random_range(0..spec.topics);
        let mut tokens = Vec::new();
        let mut mentions = Vec::new();
        for _ in 0..spec.mentions_per_doc {
            let pool: &[usize] = if rng.random::<f64>() < spec.coherence { &by_topic[topic] } else { &[] };
            let gold = if pool.is_empty() {
                rng.random_range(0..spec.kb_size)
            } else {
                let w: Vec<f64> = pool.iter().map(|&e| weight[e]).collect();
                let pick = rand::distr::weighted::WeightedIndex::new(&w).map_err(|e| Error::invalid(e.to_string()))?;
                pool[pick.sample(&mut rng)]
            };
            let informative = rng.random::<f64>() >= spec.uninformative_rate;
            let side = |rng: &mut ChaCha8Rng, tokens: &mut Vec<String>| {
                for _ in 0..spec.context_words {
                    let noise = !informative || rng.random::<f64>() < spec.noise_rate;
                    let pool = if noise { &noise_words } else { &signatures[gold] };
                    tokens.push(pool.choose(rng).expect("nonempty word pool").clone());
                }
            };
            side(&mut rng, &mut tokens);
            let start = tokens.len();
            tokens.push(surfaces[gold].clone());
            mentions.push(Mention { start, end: start + 1, surface: surfaces[gold].clone(), gold: Some(entity_names[gold].clone()) });
            side(&mut rng, &mut tokens);
        }
        docs.push(Document { id: format!("doc{di:05}"), tokens, mentions });
    }
    let n_train = spec.docs * 3 / 5;
    let n_val = (spec.docs - n_train) / 2;
    let test_docs = docs.split_off(n_train + n_val);
    let val_docs = docs.split_off(n_train);

    // Relatedness queries: same topic counts as related, three unrelated
    // entities per related one.
    let mut queries = Vec::with_capacity(spec.kb_size);
    for e in 0..spec.kb_size {
        let t = entity_topics[e];
        let mut pos: Vec<usize> = by_topic[t].iter().copied().filter(|&o| o != e).collect();
        pos.shuffle(&mut rng);
        pos.truncate(9);
        let mut neg: Vec<usize> = (0..spec.kb_size).filter(|&o| entity_topics[o] != t).collect();
        neg.shuffle(&mut rng);
        neg.truncate(3 * pos.len());
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let mut candidates: Vec<(String, bool)> = pos
            .iter()
            .map(|&o| (entity_names[o].clone(), true))
            .chain(neg.iter().map(|&o| (entity_names[o].clone(), false)))
            .collect();
        candidates.shuffle(&mut rng);
        queries.push(RelatednessQuery { target: entity_names[e].clone(), candidates });
    }
    let queries_test = queries.split_off(queries.len() / 2);

    Ok(SyntheticData {
        spec: spec.clone(),
        store,
        descriptions,
        prior_source,
        prior,
        train: Corpus::new(Split::Train, docs),
        validation: Corpus::new(Split::Validation, val_docs),
        test: Corpus::new(Split::Test, test_docs),
        queries_validation: queries,
        queries_test,
        entity_names,
        entity_topics,
        signatures,
        surfaces,
    })
}

impl SyntheticData {
    /// Co-occurrence counts from the description pages and the hyperlink
    /// windows of the training documents.
    pub fn counts(&self, window: usize) -> CooccurrenceCounts {
        let links = super::pipeline::hyperlinks(&self.train.docs);
        ingest_counts(&self.store, &self.descriptions, &links, window, DEFAULT_ALPHA)
    }

    pub fn signature_set(&self, entity: &str) -> HashSet<&str> {
        self.entity_names
            .iter()
            .position(|n| n == entity)
            .map(|e| self.signatures[e].iter().map(String::as_str).collect())
            .unwrap_or_default()
    }

    /// Writes word vectors, description pages, the prior, the three splits
    /// and the relatedness queries under `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_vectors(&dir.join("words.txt"), VectorFormat::Text, &self.store.word_table())?;
        let mut desc = String::new();
        for d in &self.descriptions {
            desc.push_str(&format!("{}\t{}\n", d.entity, d.tokens.join(" ")));
        }
        let p = dir.join("descriptions.tsv");
        std::fs::write(&p, desc).map_err(|e| Error::io(&p, e))?;
        self.prior.write(&dir.join("prior.tsv"))?;
        self.train.write_jsonl(&dir.join("train.jsonl"))?;
        self.validation.write_jsonl(&dir.join("validation.jsonl"))?;
        self.test.write_jsonl(&dir.join("test.jsonl"))?;
        write_queries(&dir.join("relatedness_validation.tsv"), &self.queries_validation)?;
        write_queries(&dir.join("relatedness_test.tsv"), &self.queries_test)?;
        Ok(())
    }
}
