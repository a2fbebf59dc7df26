use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diff::{grad_check, GradCheckReport, Tensor};
use crate::global::{GlobalConfig, GlobalParams};
use crate::local::{LocalConfig, LocalParams, PreparedDoc, PreparedMention};
use crate::nn::{FNetConfig, Trainable};
use crate::store::{EntityId, WordId};
use crate::Result;

/// Shape of the random documents used for gradient checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckShape {
    pub mentions: usize,
    pub candidates: usize,
    pub context: usize,
    pub dim: usize,
}

fn unit_rows<R: Rng>(rng: &mut R, rows: usize, d: usize) -> Tensor {
    let mut data = Vec::with_capacity(rows * d);
    for _ in 0..rows {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        data.extend(v.into_iter().map(|x| x / n));
    }
    Tensor::new(rows, d, data)
}

/// A document of random unit embeddings, random priors and a gold
/// entity per mention. Entity ids are distinct across the document.
pub fn random_doc<R: Rng>(rng: &mut R, shape: GradCheckShape) -> PreparedDoc {
    let mut next = 0u32;
    let mentions = (0..shape.mentions)
        .map(|_| {
            let entities: Vec<EntityId> = (0..shape.candidates).map(|i| EntityId(next + i as u32)).collect();
            next += shape.candidates as u32;
            let raw: Vec<f64> = (0..shape.candidates).map(|_| rng.random_range(0.05..1.0)).collect();
            let z: f64 = raw.iter().sum();
            let gold = rng.random_range(0..shape.candidates);
            PreparedMention {
                gold_entity: Some(entities[gold]),
                gold: Some(gold),
                entities,
                cand: Arc::new(unit_rows(rng, shape.candidates, shape.dim)),
                words: (0..shape.context as u32).map(WordId).collect(),
                ctx: Arc::new(unit_rows(rng, shape.context, shape.dim)),
                log_prior: Tensor::vector(raw.iter().map(|p| (p / z).ln()).collect()),
            }
        })
        .collect();
    PreparedDoc { id: "random".into(), mentions }
}

fn jitter<R: Rng>(rng: &mut R, t: &mut Tensor, lo: f64, hi: f64) {
    t.data_mut().iter_mut().for_each(|x| *x = rng.random_range(lo..hi));
}

/// Random local parameters; the large margin keeps most hinges active.
pub fn random_local<R: Rng>(rng: &mut R, dim: usize, r: usize, hidden: &[usize]) -> Result<LocalParams> {
    let cfg = LocalConfig { k: usize::MAX / 2, r, margin: 1.0, f: FNetConfig { hidden: hidden.to_vec(), radius: 1.0 } };
    let mut p = LocalParams::new(dim, cfg, rng)?;
    jitter(rng, &mut p.a, 0.5, 1.5);
    jitter(rng, &mut p.b, 0.5, 1.5);
    Ok(p)
}

pub fn random_global<R: Rng>(rng: &mut R, dim: usize, layers: usize, delta: f64, hidden: &[usize]) -> Result<GlobalParams> {
    let cfg = GlobalConfig {
        k: usize::MAX / 2,
        r: 25,
        margin: 1.0,
        delta,
        layers,
        f: FNetConfig { hidden: hidden.to_vec(), radius: 1.0 },
    };
    let mut p = GlobalParams::new(dim, cfg, rng)?;
    jitter(rng, &mut p.a, 0.5, 1.5);
    jitter(rng, &mut p.b, 0.5, 1.5);
    jitter(rng, &mut p.c, 0.5, 1.5);
    Ok(p)
}

/// Finite-difference check of the local ranking loss on one random instance.
pub fn check_local(seed: u64, shape: GradCheckShape, r: usize, hidden: &[usize], epsilon: f64, tol: f64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = random_local(&mut rng, shape.dim, r, hidden)?;
    let doc = random_doc(&mut rng, shape);
    check_model(&model, &doc, epsilon, tol)
}

/// Finite-difference check of the global ranking loss on one random instance.
pub fn check_global(
    seed: u64,
    shape: GradCheckShape,
    layers: usize,
    delta: f64,
    hidden: &[usize],
    epsilon: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = random_global(&mut rng, shape.dim, layers, delta, hidden)?;
    let doc = random_doc(&mut rng, shape);
    check_model(&model, &doc, epsilon, tol)
}

fn check_model<M: Trainable>(model: &M, doc: &PreparedDoc, epsilon: f64, tol: f64) -> Result<GradCheckReport> {
    let point: Vec<Tensor> = model.tensors().into_iter().cloned().collect();
    grad_check(
        |tape, vars| match model.doc_loss(tape, vars, doc)? {
            Some(l) => Ok(l),
            None => Ok(tape.constant(Tensor::scalar(0.0))),
        },
        &point,
        epsilon,
        tol,
    )
}
