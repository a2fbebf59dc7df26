use std::path::Path;

use deep_ed::candidates::PriorIndex;
use deep_ed::embed::{ingest_counts, read_descriptions, read_queries, train_embeddings, EmbedTrainConfig, DEFAULT_ALPHA};
use deep_ed::harness::{
    generate_synthetic, hyperlinks, join_predictions, load_corpus, predictions, prepare_docs, read_predictions,
    write_predictions, CorpusFormat, SavedModel, Split, SyntheticSpec,
};
use deep_ed::local::{LocalConfig, LocalParams};
use deep_ed::nn::{fit, FNetConfig, FitConfig, Trainable};
use deep_ed::store::{read_vectors, write_vectors, EmbeddingStore, VectorFormat};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spec() -> SyntheticSpec {
    SyntheticSpec { kb_size: 40, topics: 8, vocab_size: 900, dim: 12, docs: 24, seed: 4, ..Default::default() }
}

fn corpus(dir: &Path, name: &str, split: Split) -> deep_ed::harness::Corpus {
    let p = dir.join(name);
    load_corpus(&p, CorpusFormat::from_path(&p), split).unwrap()
}

#[test]
fn written_benchmark_reads_back() {
    let data = generate_synthetic(&spec()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    data.write_dir(d).unwrap();

    let train = corpus(d, "train.jsonl", Split::Train);
    assert_eq!(train.docs, data.train.docs);
    assert_eq!(corpus(d, "test.jsonl", Split::Test).docs, data.test.docs);
    assert_eq!(read_queries(&d.join("relatedness_test.tsv")).unwrap(), data.queries_test);
    assert_eq!(read_descriptions(&d.join("descriptions.tsv")).unwrap(), data.descriptions);

    let prior = PriorIndex::read(&d.join("prior.tsv")).unwrap();
    for (m, dist) in data.prior.mentions() {
        let got = prior.lookup(m).unwrap();
        assert_eq!(got.len(), dist.len());
        for ((a, p), (b, q)) in got.iter().zip(dist) {
            assert_eq!(a, b);
            assert!((p - q).abs() < 1e-9);
        }
    }
    let p = d.join("words.txt");
    let words = read_vectors(&p, VectorFormat::from_path(&p)).unwrap();
    assert_eq!(words.len(), data.store.num_words());
}

#[test]
fn train_save_load_predict_from_files() {
    let data = generate_synthetic(&spec()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    data.write_dir(d).unwrap();

    // Embeddings from the written description pages and training anchors.
    let p = d.join("words.txt");
    let mut store = EmbeddingStore::load_word_vectors(&p, VectorFormat::from_path(&p)).unwrap();
    let train = corpus(d, "train.jsonl", Split::Train);
    let descriptions = read_descriptions(&d.join("descriptions.tsv")).unwrap();
    let counts = ingest_counts(&store, &descriptions, &hyperlinks(&train.docs), 20, DEFAULT_ALPHA);
    let cfg = EmbedTrainConfig { margin: 1.0, description_iterations: 30, max_hyperlink_iterations: 10, ..Default::default() };
    train_embeddings(&mut store, &counts, &cfg, &[]).unwrap();
    let ent = d.join("entities.txt");
    write_vectors(&ent, VectorFormat::from_path(&ent), &store.entity_table()).unwrap();

    let mut reloaded = EmbeddingStore::load_word_vectors(&p, VectorFormat::from_path(&p)).unwrap();
    reloaded.load_entities(read_vectors(&ent, VectorFormat::from_path(&ent)).unwrap()).unwrap();
    assert_eq!(reloaded.num_entities(), store.num_entities());
    for e in 0..store.num_entities() {
        let id = deep_ed::store::EntityId(e as u32);
        let (a, b) = (store.entity(id).unwrap(), reloaded.entity(id).unwrap());
        assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-9));
    }

    let prior = PriorIndex::read(&d.join("prior.tsv")).unwrap();
    let sel = Default::default();
    let k = 20;
    let tr = prepare_docs(&train.docs, &reloaded, &prior, &sel, k, |_| false).unwrap();
    let test = corpus(d, "test.jsonl", Split::Test);
    let te = prepare_docs(&test.docs, &reloaded, &prior, &sel, k, |_| false).unwrap();
    let lcfg = LocalConfig { k, r: 5, f: FNetConfig { hidden: vec![6], ..Default::default() }, ..Default::default() };
    let mut model = LocalParams::new(reloaded.dim(), lcfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let fit_cfg = FitConfig { epochs: 3, eval_every: 1, ..Default::default() };
    fit(&mut model, &tr.docs, &[], &fit_cfg).unwrap();

    let mp = d.join("local.json");
    SavedModel::Local(model.clone()).save(&mp).unwrap();
    let SavedModel::Local(loaded) = SavedModel::load(&mp).unwrap() else { panic!("wrong kind") };
    let preds: Vec<_> = te.docs.iter().map(|doc| loaded.predict(doc).unwrap()).collect();
    let direct: Vec<_> = te.docs.iter().map(|doc| model.predict(doc).unwrap()).collect();
    assert_eq!(preds, direct);

    let pp = d.join("pred.jsonl");
    let rows = predictions(&test.docs, &te.docs, &preds, &reloaded);
    write_predictions(&pp, &rows).unwrap();
    let back = read_predictions(&pp).unwrap();
    assert_eq!(back, rows);
    let outcomes = join_predictions(&test.docs, &back, |_| true).unwrap();
    assert_eq!(outcomes.len(), test.docs.iter().map(|d| d.mentions.len()).sum::<usize>());
}
