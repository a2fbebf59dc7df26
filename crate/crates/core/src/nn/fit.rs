use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Optimizer, OptimizerKind};
use crate::diff::{Tape, Tensor, Var};
use crate::local::PreparedDoc;
use crate::store::EntityId;
use crate::{Error, Result};

/// A model trained by the document-minibatch loop in [`fit`].
pub trait Trainable: Clone + Sync {
    /// Parameter tensors in a fixed order; `doc_loss` receives them bound
    /// to tape variables in the same order.
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;
    /// Loss of one document, or `None` when no mention contributes.
    fn doc_loss(&self, tape: &mut Tape, vars: &[Var], doc: &PreparedDoc) -> Result<Option<Var>>;
    /// One prediction per mention of `doc`; `None` leaves it unannotated.
    fn predict(&self, doc: &PreparedDoc) -> Result<Vec<Option<EntityId>>>;
    /// Re-imposes parameter constraints after an update.
    fn project(&mut self);

    fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors().into_iter().map(|t| tape.param(t.clone())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub epochs: usize,
    /// Validate every this many epochs.
    pub eval_every: usize,
    /// Stop once validation accuracy has not improved for this many epochs.
    pub patience: usize,
    /// Documents per update; gradients within a batch are summed.
    pub batch_docs: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    /// `(accuracy threshold, new lr)`: switch learning rate once validation
    /// accuracy exceeds the threshold.
    pub lr_drop: Option<(f64, f64)>,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            eval_every: 5,
            patience: 500,
            batch_docs: 1,
            optimizer: OptimizerKind::Sgd,
            lr: 1e-3,
            lr_drop: None,
            seed: 1,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.eval_every == 0 || self.batch_docs == 0 {
            return Err(Error::invalid("epochs, eval_every and batch_docs must be positive"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub loss: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: Option<f64>,
    pub history: Vec<EpochStat>,
}

type DocGrad = Option<(f64, Option<Vec<Tensor>>)>;

fn doc_grad<M: Trainable>(model: &M, doc: &PreparedDoc) -> Result<DocGrad> {
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let Some(loss) = model.doc_loss(&mut tape, &vars, doc)? else {
        return Ok(None);
    };
    let l = tape.scalar(loss);
    if l == 0.0 {
        return Ok(Some((0.0, None)));
    }
    let g = tape.backward(loss)?;
    Ok(Some((l, Some(vars.iter().map(|&v| g.wrt(v)).collect()))))
}

/// Gradient of the summed loss of a set of documents, accumulated in
/// document order so the result does not depend on the thread count.
pub fn batch_gradient<M: Trainable>(model: &M, docs: &[&PreparedDoc]) -> Result<(f64, Option<Vec<Tensor>>)> {
    let parts: Vec<DocGrad> = docs.par_iter().map(|d| doc_grad(model, d)).collect::<Result<_>>()?;
    let mut loss = 0.0;
    let mut total: Option<Vec<Tensor>> = None;
    for (l, g) in parts.into_iter().flatten() {
        loss += l;
        let Some(g) = g else { continue };
        match &mut total {
            None => total = Some(g),
            Some(acc) => {
                for (a, x) in acc.iter_mut().zip(&g) {
                    a.data_mut().iter_mut().zip(x.data()).for_each(|(p, q)| *p += q);
                }
            }
        }
    }
    Ok((loss, total))
}

/// Fraction of mentions with a known gold entity that are predicted
/// correctly; mentions whose candidate set misses the gold count as errors.
pub fn accuracy<M: Trainable>(model: &M, docs: &[PreparedDoc]) -> Result<f64> {
    let counts: Vec<(usize, usize)> = docs
        .par_iter()
        .map(|d| {
            let pred = model.predict(d)?;
            let mut c = (0, 0);
            for (m, p) in d.mentions.iter().zip(pred) {
                if let Some(g) = m.gold_entity {
                    c.1 += 1;
                    if p == Some(g) {
                        c.0 += 1;
                    }
                }
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let (hit, total) = counts.into_iter().fold((0, 0), |a, c| (a.0 + c.0, a.1 + c.1));
    Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
}

/// Trains `model` in place. When validation documents are given, the
/// parameters with the best validation accuracy are restored at the end.
pub fn fit<M: Trainable>(model: &mut M, train: &[PreparedDoc], val: &[PreparedDoc], cfg: &FitConfig) -> Result<FitReport> {
    cfg.validate()?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = FitReport { epochs_run: 0, best_epoch: 0, best_val_accuracy: None, history: Vec::new() };
    let mut best: Option<M> = None;
    let mut dropped = false;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_docs) {
            let docs: Vec<&PreparedDoc> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, grads) = batch_gradient(model, &docs)?;
            epoch_loss += loss;
            if let Some(g) = grads {
                opt.apply(model.tensors_mut(), &g);
                model.project();
            }
        }
        report.epochs_run = epoch;
        let mut stat = EpochStat { epoch, loss: epoch_loss, val_accuracy: None };
        if !val.is_empty() && epoch % cfg.eval_every == 0 {
            let acc = accuracy(model, val)?;
            stat.val_accuracy = Some(acc);
            log::debug!("epoch {epoch}: loss {epoch_loss:.4}, validation accuracy {acc:.4}");
            if report.best_val_accuracy.is_none_or(|b| acc > b) {
                report.best_val_accuracy = Some(acc);
                report.best_epoch = epoch;
                best = Some(model.clone());
            }
            if let Some((threshold, lr)) = cfg.lr_drop {
                if !dropped && acc > threshold {
                    opt.set_lr(lr);
                    dropped = true;
                }
            }
        }
        report.history.push(stat);
        if report.best_val_accuracy.is_some() && epoch - report.best_epoch >= cfg.patience {
            break;
        }
    }
    if let Some(b) = best {
        *model = b;
    }
    Ok(report)
}
