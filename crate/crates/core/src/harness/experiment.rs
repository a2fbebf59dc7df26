use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{CorpusStats, Document};
use super::eval::{breakdown_report, evaluate, Breakdown, Metrics};
use super::pipeline::{aggregate_attention, attention_tsv, breakdown_rows, outcomes, predict_prior, prepare_docs, AttentionRow, Prepared};
use super::synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
use crate::candidates::SelectionConfig;
use crate::embed::{eval_relatedness, train_embeddings, EmbedReport, EmbedTrainConfig, RelatednessMetrics};
use crate::global::{GlobalConfig, GlobalParams};
use crate::local::{LocalConfig, LocalParams, PreparedDoc};
use crate::nn::{fit, FitConfig, FitReport, Trainable};
use crate::store::{EmbeddingStore, EntityId};
use crate::{Error, Result};

/// Every knob of an end-to-end run on the synthetic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub synthetic: SyntheticSpec,
    pub embed: EmbedTrainConfig,
    pub selection: SelectionConfig,
    pub local: LocalConfig,
    pub local_fit: FitConfig,
    pub global: GlobalConfig,
    pub global_fit: FitConfig,
    /// Skip the global model entirely.
    pub skip_global: bool,
    /// Initialize the global model's `A`, `B` and `f` from the trained local model.
    pub global_from_local: bool,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let fit = FitConfig {
            epochs: 30,
            eval_every: 2,
            patience: 10,
            batch_docs: 4,
            optimizer: crate::nn::OptimizerKind::Adam,
            lr: 0.01,
            lr_drop: None,
            seed: 1,
        };
        Self {
            synthetic: SyntheticSpec::default(),
            embed: EmbedTrainConfig { margin: 1.0, description_iterations: 400, max_hyperlink_iterations: 200, ..Default::default() },
            selection: SelectionConfig::default(),
            local: LocalConfig { k: 40, r: 10, f: small_f(), ..Default::default() },
            local_fit: fit.clone(),
            global: GlobalConfig { k: 40, r: 10, f: small_f(), ..Default::default() },
            global_fit: FitConfig { epochs: 20, ..fit },
            skip_global: false,
            global_from_local: true,
            seed: 1,
        }
    }
}

fn small_f() -> crate::nn::FNetConfig {
    crate::nn::FNetConfig { hidden: vec![16, 16], ..Default::default() }
}

/// Benchmark data with trained entity embeddings, shared by several runs.
#[derive(Debug, Clone)]
pub struct Bench {
    pub data: SyntheticData,
    pub store: EmbeddingStore,
    pub embed_report: EmbedReport,
    pub relatedness: RelatednessMetrics,
}

/// Generates the benchmark and trains its entity embeddings.
pub fn build_bench(spec: &SyntheticSpec, embed: &EmbedTrainConfig) -> Result<Bench> {
    let data = generate_synthetic(spec).map_err(|e| e.in_stage("generate"))?;
    let counts = data.counts(embed.window);
    let mut store = data.store.clone();
    let embed_report =
        train_embeddings(&mut store, &counts, embed, &data.queries_validation).map_err(|e| e.in_stage("train-embeddings"))?;
    let relatedness = eval_relatedness(&data.queries_test, &store);
    Ok(Bench { data, store, embed_report, relatedness })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: Option<f64>,
    pub final_loss: f64,
}

impl From<&FitReport> for FitSummary {
    fn from(r: &FitReport) -> Self {
        Self {
            epochs_run: r.epochs_run,
            best_epoch: r.best_epoch,
            best_val_accuracy: r.best_val_accuracy,
            final_loss: r.history.last().map_or(0.0, |s| s.loss),
        }
    }
}

/// The machine-readable result of a run. Holds no timings, so reruns with
/// the same configuration serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub train: CorpusStats,
    pub test: CorpusStats,
    pub gold_recall_test: f64,
    pub relatedness: RelatednessMetrics,
    pub prior: Metrics,
    pub local: Metrics,
    pub global: Option<Metrics>,
    pub local_fit: FitSummary,
    pub global_fit: Option<FitSummary>,
    /// Breakdown of the final model (global when trained, else local).
    pub breakdown: Breakdown,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub attention: Vec<AttentionRow>,
    pub local: LocalParams,
    pub global: Option<GlobalParams>,
}

/// Prepared train, validation and test documents for one context size.
#[derive(Debug, Clone)]
pub struct PreparedSplits {
    pub train: Prepared,
    pub validation: Prepared,
    pub test: Prepared,
}

pub fn prepare_splits(bench: &Bench, sel: &SelectionConfig, k: usize) -> Result<PreparedSplits> {
    let prep = |docs: &[Document]| prepare_docs(docs, &bench.store, &bench.data.prior, sel, k, |_| false);
    Ok(PreparedSplits {
        train: prep(&bench.data.train.docs)?,
        validation: prep(&bench.data.validation.docs)?,
        test: prep(&bench.data.test.docs)?,
    })
}

pub fn predict_all<M: Trainable>(model: &M, docs: &[PreparedDoc]) -> Result<Vec<Vec<Option<EntityId>>>> {
    docs.iter().map(|d| model.predict(d)).collect()
}

pub fn train_local(bench: &Bench, splits: &PreparedSplits, cfg: &LocalConfig, fit_cfg: &FitConfig, seed: u64) -> Result<(LocalParams, FitReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = LocalParams::new(bench.store.dim(), cfg.clone(), &mut rng)?;
    let report = fit(&mut model, &splits.train.docs, &splits.validation.docs, fit_cfg)?;
    Ok((model, report))
}

pub fn train_global(
    bench: &Bench,
    splits: &PreparedSplits,
    cfg: &GlobalConfig,
    fit_cfg: &FitConfig,
    init: Option<&LocalParams>,
    seed: u64,
) -> Result<(GlobalParams, FitReport)> {
    let mut model = match init {
        Some(local) => GlobalParams::from_local(local, cfg.clone())?,
        None => GlobalParams::new(bench.store.dim(), cfg.clone(), &mut ChaCha8Rng::seed_from_u64(seed))?,
    };
    let report = fit(&mut model, &splits.train.docs, &splits.validation.docs, fit_cfg)?;
    Ok((model, report))
}

/// Test-set metrics of a trained model.
pub fn test_metrics<M: Trainable>(bench: &Bench, splits: &PreparedSplits, model: &M) -> Result<Metrics> {
    let preds = predict_all(model, &splits.test.docs)?;
    Ok(evaluate(&outcomes(&bench.data.test.docs, &preds, &bench.store)))
}

pub fn prior_metrics(bench: &Bench, splits: &PreparedSplits) -> Metrics {
    let preds: Vec<_> = splits.test.docs.iter().map(predict_prior).collect();
    evaluate(&outcomes(&bench.data.test.docs, &preds, &bench.store))
}

/// Attention dump for the test mentions under a local model.
pub fn attention_dump(bench: &Bench, splits: &PreparedSplits, local: &LocalParams) -> Result<Vec<AttentionRow>> {
    let mut rows = Vec::new();
    for (doc, pd) in bench.data.test.docs.iter().zip(&splits.test.docs) {
        let preds = local.predict(pd)?;
        for (i, ((m, pm), p)) in doc.mentions.iter().zip(&pd.mentions).zip(preds).enumerate() {
            if pm.is_empty() {
                continue;
            }
            rows.push(AttentionRow {
                doc: doc.id.clone(),
                mention: i,
                surface: m.surface.clone(),
                gold: m.gold.clone(),
                predicted: p.and_then(|e| bench.store.entity_name(e)).map(str::to_owned),
                gold_prior: m.gold.as_deref().map_or(0.0, |g| bench.data.prior.prior(&m.surface, g)),
                words: aggregate_attention(&bench.store, &local.attention(pm)?),
            });
        }
    }
    Ok(rows)
}

/// `(hits, total)` over correctly solved mentions whose gold entity is not
/// the top-prior candidate: a hit has at least one signature word of the
/// gold entity among the attended words.
pub fn signature_hits(bench: &Bench, rows: &[AttentionRow]) -> (usize, usize) {
    let (mut hits, mut total) = (0, 0);
    for r in rows {
        let Some(gold) = r.gold.as_deref() else { continue };
        if r.predicted.as_deref() != Some(gold) {
            continue;
        }
        let top = bench.data.prior.lookup(&r.surface).and_then(|d| d.first()).map(|p| p.0.as_str());
        if top == Some(gold) {
            continue;
        }
        total += 1;
        let sig = bench.data.signature_set(gold);
        if r.words.iter().any(|(w, _)| sig.contains(w.as_str())) {
            hits += 1;
        }
    }
    (hits, total)
}

/// Runs prior baseline, local and global models on a prepared benchmark.
pub fn run_on_bench(bench: &Bench, cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let local_splits = prepare_splits(bench, &cfg.selection, cfg.local.k).map_err(|e| e.in_stage("select-candidates"))?;
    let (local, local_fit) =
        train_local(bench, &local_splits, &cfg.local, &cfg.local_fit, cfg.seed).map_err(|e| e.in_stage("train-local"))?;
    let local_metrics = test_metrics(bench, &local_splits, &local).map_err(|e| e.in_stage("evaluate"))?;
    let prior = prior_metrics(bench, &local_splits);
    let attention = attention_dump(bench, &local_splits, &local).map_err(|e| e.in_stage("evaluate"))?;

    let frequency = gold_frequencies(&bench.data.train.docs);
    let breakdown_of = |splits: &PreparedSplits, preds: &[Vec<Option<EntityId>>]| {
        breakdown_report(&breakdown_rows(&bench.data.test.docs, &splits.test.docs, preds, &bench.data.prior, &frequency))
    };

    let (global, global_metrics, global_fit, breakdown) = if cfg.skip_global {
        let preds = predict_all(&local, &local_splits.test.docs)?;
        (None, None, None, breakdown_of(&local_splits, &preds))
    } else {
        let splits = if cfg.global.k == cfg.local.k {
            local_splits.clone()
        } else {
            prepare_splits(bench, &cfg.selection, cfg.global.k).map_err(|e| e.in_stage("select-candidates"))?
        };
        let init = if cfg.global_from_local { Some(&local) } else { None };
        let (g, rep) = train_global(bench, &splits, &cfg.global, &cfg.global_fit, init, cfg.seed)
            .map_err(|e| e.in_stage("train-global"))?;
        let preds = predict_all(&g, &splits.test.docs).map_err(|e| e.in_stage("evaluate"))?;
        let m = evaluate(&outcomes(&bench.data.test.docs, &preds, &bench.store));
        let b = breakdown_of(&splits, &preds);
        (Some(g), Some(m), Some(FitSummary::from(&rep)), b)
    };

    let report = ExperimentReport {
        seed: cfg.synthetic.seed,
        train: bench.data.train.stats(),
        test: bench.data.test.stats(),
        gold_recall_test: local_splits.test.gold_recall(),
        relatedness: bench.relatedness,
        prior,
        local: local_metrics,
        global: global_metrics,
        local_fit: FitSummary::from(&local_fit),
        global_fit,
        breakdown,
    };
    Ok(ExperimentOutput { report, attention, local, global })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let bench = build_bench(&cfg.synthetic, &cfg.embed)?;
    run_on_bench(&bench, cfg)
}

fn metrics_row(out: &mut String, name: &str, m: &Metrics) {
    let _ = writeln!(
        out,
        "{name:<8} {:>9.2} {:>9.2} {:>9.2} {:>9.2}",
        100.0 * m.accuracy,
        100.0 * m.precision,
        100.0 * m.recall,
        100.0 * m.f1
    );
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// `model, accuracy, precision, recall, f1` rows.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("model\taccuracy\tprecision\trecall\tf1\n");
        let mut row = |name: &str, m: &Metrics| {
            let _ = writeln!(s, "{name}\t{:.4}\t{:.4}\t{:.4}\t{:.4}", m.accuracy, m.precision, m.recall, m.f1);
        };
        row("prior", &self.prior);
        row("local", &self.local);
        if let Some(g) = &self.global {
            row("global", g);
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>9} {:>9} {:>9} {:>9}", "model", "acc", "P", "R", "F1");
        metrics_row(&mut s, "prior", &self.prior);
        metrics_row(&mut s, "local", &self.local);
        if let Some(g) = &self.global {
            metrics_row(&mut s, "global", g);
        }
        let _ = writeln!(s, "\ngold recall (test): {:.2}%", self.gold_recall_test);
        let _ = writeln!(s, "relatedness MAP: {:.3}  NDCG@1: {:.3}", self.relatedness.map, self.relatedness.ndcg1);
        let _ = writeln!(s, "\n{:<12} {:>6} {:>9}", "frequency", "count", "acc");
        for b in &self.breakdown.by_frequency {
            let _ = writeln!(s, "{:<12} {:>6} {:>9.2}", b.label, b.count, 100.0 * b.accuracy);
        }
        let _ = writeln!(s, "\n{:<12} {:>6} {:>9}", "prior", "count", "acc");
        for b in &self.breakdown.by_prior {
            let _ = writeln!(s, "{:<12} {:>6} {:>9.2}", b.label, b.count, 100.0 * b.accuracy);
        }
        s
    }
}

impl ExperimentOutput {
    /// Writes `report.json`, `report.tsv`, `report.txt` and `attention.tsv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files: [(&str, String); 4] = [
            ("report.json", self.report.to_json()?),
            ("report.tsv", self.report.to_tsv()),
            ("report.txt", self.report.to_table()),
            ("attention.tsv", attention_tsv(&self.attention)),
        ];
        for (name, body) in files {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Training frequency of each gold entity over a document set.
pub fn gold_frequencies(docs: &[Document]) -> HashMap<String, u64> {
    let mut f = HashMap::new();
    for g in docs.iter().flat_map(|d| &d.mentions).filter_map(|m| m.gold.clone()) {
        *f.entry(g).or_insert(0) += 1;
    }
    f
}
