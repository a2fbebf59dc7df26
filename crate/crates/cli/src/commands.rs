use std::collections::HashSet;
use std::path::{Path, PathBuf};

use deep_ed::candidates::{build_prior, gold_recall, PriorIndex, PriorSource, SelectionConfig, SourceKind};
use deep_ed::embed::{
    eval_relatedness, ingest_counts, read_counts_file, read_descriptions, read_queries, train_embeddings, CountSource,
    EmbedTrainConfig,
};
use deep_ed::global::{GlobalConfig, GlobalParams};
use deep_ed::harness::{
    attention_tsv, breakdown_report, build_bench, check_global, check_local, evaluate, gold_frequencies, hyperlinks,
    join_predictions, load_corpus, predictions, prepare_docs, read_predictions, run_on_bench, run_sweep,
    aggregate_attention, write_predictions, AttentionRow, BreakdownRow, Corpus, CorpusFormat, ExperimentConfig,
    GradCheckShape, Metrics, Prepared, SavedModel, Split, SweepParam, SyntheticSpec,
};
use deep_ed::local::{LocalConfig, LocalParams};
use deep_ed::nn::{fit, FNetConfig, FitConfig, FitReport, Trainable};
use deep_ed::store::{
    default_stop_words, nearest_words, parse_stop_words, read_vectors, write_vectors, EmbeddingStore, EntityId,
    VectorFormat,
};
use deep_ed::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Cli, Command, FitArgs, ScorerArgs, SelectionArgs, SpecArgs, StoreArgs};

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn corpus(cli: &Cli, path: &Path, split: Split) -> Result<Corpus> {
    let p = cli.path(path);
    load_corpus(&p, CorpusFormat::from_path(&p), split)
}

fn words_store(cli: &Cli, words: &Path, stop_words: Option<&PathBuf>) -> Result<EmbeddingStore> {
    let p = cli.path(words);
    let mut store = EmbeddingStore::load_word_vectors(&p, VectorFormat::from_path(&p))?;
    let stops = match stop_words {
        Some(s) => parse_stop_words(&read_text(&cli.path(s))?),
        None => default_stop_words(),
    };
    store.word_vocab_mut().mark_stop_words(&stops);
    Ok(store)
}

fn load_store(cli: &Cli, args: &StoreArgs) -> Result<EmbeddingStore> {
    let mut store = words_store(cli, &args.words, args.stop_words.as_ref())?;
    let Some(e) = &args.entities else {
        return Err(Error::invalid("--entities is required"));
    };
    let p = cli.path(e);
    store.load_entities(read_vectors(&p, VectorFormat::from_path(&p))?)?;
    Ok(store)
}

fn selection(cli: &Cli, args: &SelectionArgs) -> Result<(PriorIndex, SelectionConfig, HashSet<String>)> {
    let prior = PriorIndex::read(&cli.path(&args.prior))?;
    let cfg = SelectionConfig { size: args.cand_size, prior_top: args.prior_top, pre_cut: args.pre_cut };
    if cfg.size == 0 || cfg.prior_top > cfg.size {
        return Err(Error::invalid("candidate size must be positive and at least --prior-top"));
    }
    let persons = match &args.persons {
        Some(p) => read_text(&cli.path(p))?.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned).collect(),
        None => HashSet::new(),
    };
    Ok((prior, cfg, persons))
}

fn prepare(
    store: &EmbeddingStore,
    prior: &PriorIndex,
    sel: &SelectionConfig,
    persons: &HashSet<String>,
    c: &Corpus,
    k: usize,
) -> Result<Prepared> {
    let is_person = |e: EntityId| store.entity_name(e).is_some_and(|n| persons.contains(n));
    prepare_docs(&c.docs, store, prior, sel, k, is_person)
}

fn fit_config(a: &FitArgs) -> Result<FitConfig> {
    let lr_drop = match &a.lr_drop {
        Some(s) => {
            let (t, lr) = s.split_once(':').ok_or_else(|| Error::invalid("--lr-drop expects THRESHOLD:LR"))?;
            let parse = |v: &str| v.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad number `{v}` in --lr-drop")));
            Some((parse(t)?, parse(lr)?))
        }
        None => None,
    };
    let cfg = FitConfig {
        epochs: a.epochs,
        eval_every: a.eval_every,
        patience: a.patience,
        batch_docs: a.batch_docs,
        optimizer: a.optimizer.parse()?,
        lr: a.lr,
        lr_drop,
        seed: a.seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn f_config(s: &ScorerArgs) -> FNetConfig {
    FNetConfig { hidden: s.hidden.clone(), radius: s.radius }
}

fn log_fit(report: &FitReport) {
    log::info!(
        "trained {} epochs; best validation accuracy {:?} at epoch {}",
        report.epochs_run,
        report.best_val_accuracy,
        report.best_epoch
    );
}

fn metrics_table(m: &Metrics) -> String {
    format!(
        "accuracy\t{:.4}\nprecision\t{:.4}\nrecall\t{:.4}\nf1\t{:.4}\ngold\t{}\nin_kb\t{}\npredicted\t{}\ncorrect\t{}\n",
        m.accuracy, m.precision, m.recall, m.f1, m.gold, m.in_kb, m.predicted, m.correct
    )
}

fn experiment_config(cli: &Cli, path: Option<&PathBuf>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = match path {
        Some(p) => serde_json::from_str(&read_text(&cli.path(p))?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg.synthetic.seed = s;
        cfg.seed = s;
    }
    Ok(cfg)
}

fn spec(a: &SpecArgs) -> SyntheticSpec {
    SyntheticSpec {
        kb_size: a.kb_size,
        topics: a.topics,
        signature_words: a.signature_words,
        vocab_size: a.vocab_size,
        dim: a.dim,
        docs: a.docs,
        mentions_per_doc: a.mentions_per_doc,
        ambiguity: a.ambiguity,
        coherence: a.coherence,
        noise_rate: a.noise_rate,
        context_words: a.context_words,
        uninformative_rate: a.uninformative_rate,
        prior_skew: a.prior_skew,
        seed: a.seed,
        ..Default::default()
    }
}

fn parse_source(s: &str) -> Result<(PathBuf, SourceKind, f64)> {
    let mut parts = s.splitn(3, ':');
    let path = PathBuf::from(parts.next().unwrap_or_default());
    let kind = parts.next().map_or(Ok(SourceKind::Counts), str::parse)?;
    let weight = match parts.next() {
        Some(w) => w.parse::<f64>().map_err(|_| Error::invalid(format!("bad source weight `{w}`")))?,
        None => 1.0,
    };
    if !(weight > 0.0) {
        return Err(Error::invalid("source weights must be positive"));
    }
    Ok((path, kind, weight))
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::TrainEmbeddings {
            words,
            stop_words,
            descriptions,
            links,
            link_counts,
            validation,
            out,
            margin,
            positives,
            negatives,
            embed_lr,
            description_iterations,
            max_hyperlink_iterations,
            embed_eval_every,
            embed_patience,
            window,
            alpha,
            step_per_pair,
            seed,
        } => {
            let mut store = words_store(cli, words, stop_words.as_ref())?;
            let desc = match descriptions {
                Some(p) => read_descriptions(&cli.path(p))?,
                None => Vec::new(),
            };
            let anchors = match links {
                Some(p) => hyperlinks(&corpus(cli, p, Split::Train)?.docs),
                None => Vec::new(),
            };
            let mut counts = ingest_counts(&store, &desc, &anchors, *window, *alpha);
            if let Some(p) = link_counts {
                read_counts_file(&cli.path(p), &store, &mut counts, CountSource::Hyperlink)?;
            }
            if counts.num_entities() == 0 {
                return Err(Error::invalid("no entities: give --descriptions, --links or --link-counts"));
            }
            let queries = match validation {
                Some(p) => read_queries(&cli.path(p))?,
                None => Vec::new(),
            };
            let cfg = EmbedTrainConfig {
                margin: *margin,
                positives: *positives,
                negatives_per_positive: *negatives,
                learning_rate: *embed_lr,
                description_iterations: *description_iterations,
                max_hyperlink_iterations: *max_hyperlink_iterations,
                eval_every: *embed_eval_every,
                patience: *embed_patience,
                window: *window,
                step_per_pair: *step_per_pair,
                seed: *seed,
            };
            let report = train_embeddings(&mut store, &counts, &cfg, &queries)?;
            let p = cli.path(out);
            write_vectors(&p, VectorFormat::from_path(&p), &store.entity_table())?;
            println!("trained {} entities, skipped {}", report.trained, report.skipped);
            if let Some(b) = report.best {
                println!("validation MAP {:.4}, NDCG@1 {:.4}", b.map, b.ndcg1);
            }
        }
        Command::EvalRelatedness { store, queries } => {
            let store = load_store(cli, store)?;
            let m = eval_relatedness(&read_queries(&cli.path(queries))?, &store);
            println!(
                "ndcg@1\t{:.4}\nndcg@5\t{:.4}\nndcg@10\t{:.4}\nmap\t{:.4}\nscored\t{}\nexcluded\t{}",
                m.ndcg1, m.ndcg5, m.ndcg10, m.map, m.scored, m.excluded
            );
        }
        Command::BuildPrior { sources, out } => {
            let mut loaded = Vec::new();
            for s in sources {
                let (path, kind, weight) = parse_source(s)?;
                loaded.push(PriorSource::read(&cli.path(&path), kind, weight)?);
            }
            let prior = build_prior(&loaded);
            prior.write(&cli.path(out))?;
            println!("{} mentions", prior.len());
        }
        Command::SelectCandidates { store, selection: sel_args, corpus: c, k, out } => {
            let store = load_store(cli, store)?;
            let (prior, sel, persons) = selection(cli, sel_args)?;
            let c = corpus(cli, c, Split::Test)?;
            let p = prepare(&store, &prior, &sel, &persons, &c, *k)?;
            if let Some(out) = out {
                let mut body = String::new();
                for (d, sets) in c.docs.iter().zip(&p.sets) {
                    for (i, set) in sets.iter().enumerate() {
                        let names: Vec<(&str, f64, String)> = set
                            .candidates
                            .iter()
                            .map(|x| (store.entity_name(x.entity).unwrap_or("?"), x.prior, format!("{:?}", x.reason)))
                            .collect();
                        body.push_str(&serde_json::to_string(&(&d.id, i, &set.mention, names))?);
                        body.push('\n');
                    }
                }
                write_text(&cli.path(out), &body)?;
            }
            let items = c
                .docs
                .iter()
                .zip(&p.docs)
                .zip(&p.sets)
                .flat_map(|((d, pd), s)| d.mentions.iter().zip(&pd.mentions).zip(s))
                .filter(|((m, _), _)| m.gold.is_some())
                .map(|((_, pm), s)| (pm.gold_entity, s));
            println!("gold recall {:.2}%", gold_recall(items));
        }
        Command::TrainLocal { store, selection: sel_args, scorer, fit: fit_args, corpus: cargs } => {
            let store = load_store(cli, store)?;
            let (prior, sel, persons) = selection(cli, sel_args)?;
            let cfg = LocalConfig { k: scorer.k, r: scorer.r.unwrap_or(50), margin: scorer.margin, f: f_config(scorer) };
            cfg.validate()?;
            let fit_cfg = fit_config(fit_args)?;
            let train = prepare(&store, &prior, &sel, &persons, &corpus(cli, &cargs.train, Split::Train)?, cfg.k)?;
            let val = match &cargs.validation {
                Some(v) => prepare(&store, &prior, &sel, &persons, &corpus(cli, v, Split::Validation)?, cfg.k)?.docs,
                None => Vec::new(),
            };
            let mut model = LocalParams::new(store.dim(), cfg, &mut ChaCha8Rng::seed_from_u64(fit_cfg.seed))?;
            let report = fit(&mut model, &train.docs, &val, &fit_cfg)?;
            log_fit(&report);
            SavedModel::Local(model).save(&cli.path(&cargs.out))?;
        }
        Command::TrainGlobal { store, selection: sel_args, scorer, fit: fit_args, corpus: cargs, delta, layers, init_local } => {
            let store = load_store(cli, store)?;
            let (prior, sel, persons) = selection(cli, sel_args)?;
            let cfg = GlobalConfig {
                k: scorer.k,
                r: scorer.r.unwrap_or(25),
                margin: scorer.margin,
                delta: *delta,
                layers: *layers,
                f: f_config(scorer),
            };
            cfg.validate()?;
            let fit_cfg = fit_config(fit_args)?;
            let train = prepare(&store, &prior, &sel, &persons, &corpus(cli, &cargs.train, Split::Train)?, cfg.k)?;
            let val = match &cargs.validation {
                Some(v) => prepare(&store, &prior, &sel, &persons, &corpus(cli, v, Split::Validation)?, cfg.k)?.docs,
                None => Vec::new(),
            };
            let mut model = match init_local {
                Some(p) => match SavedModel::load(&cli.path(p))? {
                    SavedModel::Local(l) => GlobalParams::from_local(&l, cfg)?,
                    SavedModel::Global(_) => return Err(Error::invalid("--init-local expects a local model")),
                },
                None => GlobalParams::new(store.dim(), cfg, &mut ChaCha8Rng::seed_from_u64(fit_cfg.seed))?,
            };
            let report = fit(&mut model, &train.docs, &val, &fit_cfg)?;
            log_fit(&report);
            SavedModel::Global(model).save(&cli.path(&cargs.out))?;
        }
        Command::Predict { store, selection: sel_args, model, corpus: c, out, attention } => {
            let store = load_store(cli, store)?;
            let (prior, sel, persons) = selection(cli, sel_args)?;
            let model = SavedModel::load(&cli.path(model))?;
            let c = corpus(cli, c, Split::Test)?;
            let k = match &model {
                SavedModel::Local(m) => m.cfg.k,
                SavedModel::Global(m) => m.cfg.k,
            };
            let p = prepare(&store, &prior, &sel, &persons, &c, k)?;
            let preds: Vec<Vec<Option<EntityId>>> = match &model {
                SavedModel::Local(m) => p.docs.iter().map(|d| m.predict(d)).collect::<Result<_>>()?,
                SavedModel::Global(m) => p.docs.iter().map(|d| m.predict(d)).collect::<Result<_>>()?,
            };
            write_predictions(&cli.path(out), &predictions(&c.docs, &p.docs, &preds, &store))?;
            if let Some(att) = attention {
                let SavedModel::Local(m) = &model else {
                    return Err(Error::invalid("--attention needs a local model"));
                };
                let mut rows = Vec::new();
                for ((d, pd), ps) in c.docs.iter().zip(&p.docs).zip(&preds) {
                    for (i, ((mention, pm), pred)) in d.mentions.iter().zip(&pd.mentions).zip(ps).enumerate() {
                        if pm.is_empty() {
                            continue;
                        }
                        rows.push(AttentionRow {
                            doc: d.id.clone(),
                            mention: i,
                            surface: mention.surface.clone(),
                            gold: mention.gold.clone(),
                            predicted: pred.and_then(|e| store.entity_name(e)).map(str::to_owned),
                            gold_prior: mention.gold.as_deref().map_or(0.0, |g| prior.prior(&mention.surface, g)),
                            words: aggregate_attention(&store, &m.attention(pm)?),
                        });
                    }
                }
                write_text(&cli.path(att), &attention_tsv(&rows))?;
            }
        }
        Command::Evaluate { corpus: c, predictions: preds, entities, out } => {
            let c = corpus(cli, c, Split::Test)?;
            let preds = read_predictions(&cli.path(preds))?;
            let kb: Option<HashSet<String>> = match entities {
                Some(p) => {
                    let p = cli.path(p);
                    Some(read_vectors(&p, VectorFormat::from_path(&p))?.vocab.names().iter().cloned().collect())
                }
                None => None,
            };
            let outcomes = join_predictions(&c.docs, &preds, |g| kb.as_ref().is_none_or(|k| k.contains(g)))?;
            let m = evaluate(&outcomes);
            print!("{}", metrics_table(&m));
            if let Some(o) = out {
                write_text(&cli.path(o), &(serde_json::to_string_pretty(&m)? + "\n"))?;
            }
        }
        Command::Breakdown { corpus: c, predictions: preds, prior, train, out } => {
            let c = corpus(cli, c, Split::Test)?;
            let preds = read_predictions(&cli.path(preds))?;
            let prior = PriorIndex::read(&cli.path(prior))?;
            let freq = gold_frequencies(&corpus(cli, train, Split::Train)?.docs);
            let by_key: std::collections::HashMap<(&str, usize), _> =
                preds.iter().map(|p| ((p.doc.as_str(), p.mention), p)).collect();
            let mut rows = Vec::new();
            for d in &c.docs {
                for (i, m) in d.mentions.iter().enumerate() {
                    let (Some(gold), Some(p)) = (&m.gold, by_key.get(&(d.id.as_str(), i))) else { continue };
                    if !p.candidates.iter().any(|e| e == gold) {
                        continue;
                    }
                    rows.push(BreakdownRow {
                        correct: p.entity.as_deref() == Some(gold.as_str()),
                        frequency: freq.get(gold).copied().unwrap_or(0),
                        prior: prior.prior(&m.surface, gold),
                    });
                }
            }
            let b = breakdown_report(&rows);
            let mut body = String::from("group\tbucket\tcount\taccuracy\n");
            for (group, buckets) in [("frequency", &b.by_frequency), ("prior", &b.by_prior)] {
                for x in buckets {
                    body.push_str(&format!("{group}\t{}\t{}\t{:.4}\n", x.label, x.count, x.accuracy));
                }
            }
            print!("{body}");
            if let Some(o) = out {
                write_text(&cli.path(o), &body)?;
            }
        }
        Command::Sweep { experiment, param, values, seed, out } => {
            let cfg = experiment_config(cli, experiment.as_ref(), *seed)?;
            let param: SweepParam = param.parse()?;
            let bench = build_bench(&cfg.synthetic, &cfg.embed)?;
            let result = run_sweep(&bench, &cfg, param, values)?;
            let dir = cli.path(out);
            let stem = format!("sweep_{}", param.label());
            write_text(&dir.join(format!("{stem}.tsv")), &result.to_tsv())?;
            write_text(&dir.join(format!("{stem}.txt")), &result.to_table())?;
            write_text(&dir.join(format!("{stem}.svg")), &result.to_svg())?;
            print!("{}", result.to_table());
        }
        Command::GenerateSynthetic { spec: s, out } => {
            let s = spec(s);
            let data = deep_ed::harness::generate_synthetic(&s)?;
            let dir = cli.path(out);
            data.write_dir(&dir)?;
            write_text(&dir.join("spec.json"), &(serde_json::to_string_pretty(&s)? + "\n"))?;
            let st = data.train.stats();
            println!("{} entities, {} train docs, {} mentions", s.kb_size, st.docs, st.mentions);
        }
        Command::InspectNeighbors { store, entity, top, min_freq } => {
            let store = load_store(cli, store)?;
            let e = store.entity_id(entity).ok_or_else(|| Error::Unknown { kind: "entity", name: entity.clone() })?;
            for (w, s) in nearest_words(&store, e, *top, *min_freq)? {
                println!("{}\t{s:.4}", store.word_name(w).unwrap_or("?"));
            }
        }
        Command::GradCheck { seeds, epsilon, tolerance, dim, hidden } => {
            let mut failed = 0;
            let mut worst = (0.0f64, 0.0f64);
            for seed in 0..*seeds {
                let l = check_local(seed, GradCheckShape { mentions: 2, candidates: 3, context: 10, dim: *dim }, 5, hidden, *epsilon, *tolerance)?;
                let g = check_global(seed, GradCheckShape { mentions: 3, candidates: 3, context: 10, dim: *dim }, 3, 0.5, hidden, *epsilon, *tolerance)?;
                worst = (worst.0.max(l.max_rel_error), worst.1.max(g.max_rel_error));
                failed += usize::from(!l.passed()) + usize::from(!g.passed());
            }
            println!("local max relative error {:.3e}\nglobal max relative error {:.3e}", worst.0, worst.1);
            if failed > 0 {
                return Err(Error::invalid(format!("{failed} gradient checks above tolerance {tolerance:e}")));
            }
        }
        Command::RunExperiment { experiment, seed, out } => {
            let cfg = experiment_config(cli, experiment.as_ref(), *seed)?;
            let bench = build_bench(&cfg.synthetic, &cfg.embed)?;
            let result = run_on_bench(&bench, &cfg)?;
            result.write(&cli.path(out))?;
            print!("{}", result.report.to_table());
        }
    }
    Ok(())
}
