//! Document-level model: a fully connected pairwise CRF over the mentions
//! of a document, with
//! `g(e) = Σᵢ Ψᵢ(eᵢ) + Σ_{i<j} Φ(eᵢ, eⱼ)` and
//! `Φ(e, e') = 2/(n−1) · xₑᵀ C x_{e'}` for a diagonal `C`.
//!
//! Inference is a fixed number of damped max-product message passing
//! rounds, each one a differentiable layer, so the whole stack is trained
//! end to end with a ranking loss on
//! `ρᵢ(e) = f(log μ̄ᵢ(e), log p̂(e|mᵢ))`, where `μ̄ᵢ` is the normalized
//! belief. Feeding the belief in log space puts it on the same scale as the
//! local model's score, so with `C = 0` the two models agree.

mod lbp;

pub use lbp::max_message_deviation;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{softmax_values, Tape, Tensor, Var};
use crate::local::{combine_on, context_scores_on, AttentionVars, LocalParams, PreparedDoc};
use crate::nn::{FNet, FNetConfig, Trainable};
use crate::store::EntityId;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalConfig {
    pub k: usize,
    /// Words kept by the unary scorer's hard attention.
    pub r: usize,
    pub margin: f64,
    /// Damping `δ ∈ (0, 1]`; 1 disables damping.
    pub delta: f64,
    /// Number of message passing layers `T`.
    pub layers: usize,
    pub f: FNetConfig,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self { k: 100, r: 25, margin: 0.01, delta: 0.5, layers: 10, f: FNetConfig::default() }
    }
}

impl GlobalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::invalid(format!("damping must lie in (0, 1], got {}", self.delta)));
        }
        if self.layers == 0 {
            return Err(Error::invalid("at least one message passing layer is required"));
        }
        if self.k == 0 || self.r == 0 {
            return Err(Error::invalid("K and R must be positive"));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::invalid("margin must be non-negative"));
        }
        if self.f.hidden.contains(&0) || !(self.f.radius > 0.0) {
            return Err(Error::invalid("hidden widths and the weight radius must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalParams {
    pub a: Tensor,
    pub b: Tensor,
    /// Diagonal of `C`.
    pub c: Tensor,
    pub f: FNet,
    pub cfg: GlobalConfig,
}

impl GlobalParams {
    /// Identity diagonals and a random `f`.
    pub fn new<R: Rng + ?Sized>(dim: usize, cfg: GlobalConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let one = Tensor::vector(vec![1.0; dim]);
        Ok(Self { a: one.clone(), b: one.clone(), c: one, f: FNet::random(&cfg.f, rng), cfg })
    }

    /// Starts from a trained local model's `A`, `B` and `f`.
    pub fn from_local(local: &LocalParams, cfg: GlobalConfig) -> Result<Self> {
        cfg.validate()?;
        if local.f.hidden() != cfg.f.hidden {
            return Err(Error::invalid("local and global combination networks differ in shape"));
        }
        Ok(Self {
            a: local.a.clone(),
            b: local.b.clone(),
            c: Tensor::vector(vec![1.0; local.dim()]),
            f: local.f.clone(),
            cfg,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn num_params(&self) -> usize {
        self.a.len() + self.b.len() + self.c.len() + self.f.num_params()
    }

    /// `ρ` for every active mention of `doc`, as `(mention index, S-vector)`.
    fn rho_on(&self, tape: &mut Tape, vars: &[Var], doc: &PreparedDoc) -> Result<Vec<(usize, Var)>> {
        let att = AttentionVars { a: vars[0], b: vars[1] };
        let (c, f) = (vars[2], &vars[3..]);
        let active = doc.active();
        let unary: Vec<Var> = active
            .iter()
            .map(|&i| context_scores_on(tape, att, &doc.mentions[i], self.cfg.r))
            .collect::<Result<_>>()?;
        let beliefs = if active.len() > 1 {
            let cand: Vec<&Arc<Tensor>> = active.iter().map(|&i| &doc.mentions[i].cand).collect();
            lbp::lbp_on(tape, &unary, &cand, c, self.cfg.delta, self.cfg.layers)?
        } else {
            unary
        };
        let mut out = Vec::with_capacity(active.len());
        for (&i, mu) in active.iter().zip(beliefs) {
            let log_mu_bar = tape.log_softmax(mu)?;
            out.push((i, combine_on(tape, f, log_mu_bar, &doc.mentions[i])));
        }
        Ok(out)
    }

    /// `ρᵢ(e)` per mention (empty for mentions without candidates).
    pub fn scores(&self, doc: &PreparedDoc) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let mut out = vec![Vec::new(); doc.mentions.len()];
        for (i, rho) in self.rho_on(&mut tape, &vars, doc)? {
            out[i] = tape.value(rho).data().to_vec();
        }
        Ok(out)
    }

    /// Normalized beliefs `μ̄ᵢ` per mention (empty for mentions without candidates).
    pub fn beliefs(&self, doc: &PreparedDoc) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let att = AttentionVars { a: tape.constant(self.a.clone()), b: tape.constant(self.b.clone()) };
        let c = tape.constant(self.c.clone());
        let active = doc.active();
        let unary: Vec<Var> = active
            .iter()
            .map(|&i| context_scores_on(&mut tape, att, &doc.mentions[i], self.cfg.r))
            .collect::<Result<_>>()?;
        let mu = if active.len() > 1 {
            let cand: Vec<&Arc<Tensor>> = active.iter().map(|&i| &doc.mentions[i].cand).collect();
            lbp::lbp_on(&mut tape, &unary, &cand, c, self.cfg.delta, self.cfg.layers)?
        } else {
            unary
        };
        let mut out = vec![Vec::new(); doc.mentions.len()];
        for (&i, m) in active.iter().zip(mu) {
            out[i] = softmax_values(tape.value(m).data())?;
        }
        Ok(out)
    }
}

impl Trainable for GlobalParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut t = vec![&self.a, &self.b, &self.c];
        t.extend(self.f.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut t = vec![&mut self.a, &mut self.b, &mut self.c];
        t.extend(self.f.tensors_mut());
        t
    }

    fn doc_loss(&self, tape: &mut Tape, vars: &[Var], doc: &PreparedDoc) -> Result<Option<Var>> {
        if !doc.mentions.iter().any(|m| m.gold.is_some()) {
            return Ok(None);
        }
        let mut terms = Vec::new();
        for (i, rho) in self.rho_on(tape, vars, doc)? {
            if let Some(g) = doc.mentions[i].gold {
                terms.push(tape.margin_ranking(rho, g, self.cfg.margin));
            }
        }
        Ok(tape.add_all(&terms))
    }

    fn predict(&self, doc: &PreparedDoc) -> Result<Vec<Option<EntityId>>> {
        let scores = self.scores(doc)?;
        Ok(doc.mentions.iter().zip(&scores).map(|(m, s)| m.best(s).map(|i| m.entities[i])).collect())
    }

    fn project(&mut self) {
        self.f.project(self.cfg.f.radius);
    }
}

/// Loss summed over all mentions and its gradients (in
/// [`Trainable::tensors`] order), back-propagated through every layer.
pub fn global_rank_loss(params: &GlobalParams, doc: &PreparedDoc) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let Some(loss) = params.doc_loss(&mut tape, &vars, doc)? else {
        return Ok((0.0, params.tensors().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect()));
    };
    let g = tape.backward(loss)?;
    Ok((tape.scalar(loss), vars.iter().map(|&v| g.wrt(v)).collect()))
}

pub fn predict_global(params: &GlobalParams, doc: &PreparedDoc) -> Result<Vec<Option<EntityId>>> {
    params.predict(doc)
}

/// `ρ` for one candidate from its normalized belief and prior.
pub fn combine_rho(f: &FNet, belief: f64, prior: f64) -> Result<f64> {
    f.eval(belief.ln(), prior.max(crate::local::PRIOR_FLOOR).ln())
}

/// A standalone CRF: unary scores, candidate embeddings and the diagonal of `C`.
#[derive(Debug, Clone)]
pub struct CrfInstance {
    pub unary: Vec<Vec<f64>>,
    pub cand: Vec<Arc<Tensor>>,
    pub c: Vec<f64>,
}

/// Messages after some number of layers; `messages[i][j]` is `m̄_{i→j}`
/// over the candidates of mention `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageState {
    pub layer: usize,
    pub messages: Vec<Vec<Option<Vec<f64>>>>,
}

impl MessageState {
    pub fn get(&self, i: usize, j: usize) -> Option<&[f64]> {
        self.messages.get(i)?.get(j)?.as_deref()
    }
}

impl CrfInstance {
    pub fn new(unary: Vec<Vec<f64>>, cand: Vec<Tensor>, c: Vec<f64>) -> Result<Self> {
        if unary.len() != cand.len() || unary.is_empty() {
            return Err(Error::invalid("one unary vector and candidate matrix per mention"));
        }
        for (u, x) in unary.iter().zip(&cand) {
            if u.is_empty() || u.len() != x.rows() || x.cols() != c.len() {
                return Err(Error::invalid("unary, candidate and C dimensions disagree"));
            }
        }
        Ok(Self { unary, cand: cand.into_iter().map(Arc::new).collect(), c })
    }

    pub fn len(&self) -> usize {
        self.unary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unary.is_empty()
    }

    /// `Φ` between candidate `a` of mention `i` and candidate `b` of mention `j`.
    pub fn pairwise(&self, i: usize, a: usize, j: usize, b: usize) -> f64 {
        let n = self.len();
        if n < 2 {
            return 0.0;
        }
        let (x, y) = (self.cand[i].row(a), self.cand[j].row(b));
        let raw: f64 = x.iter().zip(y).zip(&self.c).map(|((p, q), c)| c * (p * q)).sum();
        2.0 / (n as f64 - 1.0) * raw
    }

    pub fn crf_score(&self, assignment: &[usize]) -> Result<f64> {
        if assignment.len() != self.len() {
            return Err(Error::invalid("assignment length differs from the mention count"));
        }
        let mut g = 0.0;
        for (i, &a) in assignment.iter().enumerate() {
            let u = self.unary[i].get(a).ok_or_else(|| Error::invalid(format!("candidate {a} not in set {i}")))?;
            g += u;
            for (j, &b) in assignment.iter().enumerate().skip(i + 1) {
                g += self.pairwise(i, a, j, b);
            }
        }
        Ok(g)
    }

    fn on_tape(&self, tape: &mut Tape) -> (Vec<Var>, Var) {
        let unary = self.unary.iter().map(|u| tape.constant(Tensor::vector(u.clone()))).collect();
        let c = tape.constant(Tensor::vector(self.c.clone()));
        (unary, c)
    }

    /// Layer-0 state: uniform messages.
    pub fn initial_state(&self) -> MessageState {
        let n = self.len();
        let messages = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let s = self.unary[j].len();
                        (i != j).then(|| vec![-(s as f64).ln(); s])
                    })
                    .collect()
            })
            .collect();
        MessageState { layer: 0, messages }
    }

    /// One synchronous damped max-product update.
    pub fn lbp_step(&self, state: &MessageState, delta: f64) -> Result<MessageState> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::invalid("damping must lie in (0, 1]"));
        }
        if self.len() < 2 {
            return Ok(MessageState { layer: state.layer + 1, messages: state.messages.clone() });
        }
        let mut tape = Tape::new();
        let (unary, c) = self.on_tape(&mut tape);
        let cand: Vec<&Arc<Tensor>> = self.cand.iter().collect();
        let phi = lbp::pairwise_on(&mut tape, &cand, c);
        let prev: lbp::Messages = state
            .messages
            .iter()
            .map(|row| row.iter().map(|m| m.as_ref().map(|v| tape.constant(Tensor::vector(v.clone())))).collect())
            .collect();
        let (next, _) = lbp::step_on(&mut tape, &unary, &phi, &prev, delta)?;
        let messages = next
            .iter()
            .map(|row| row.iter().map(|m| m.map(|v| tape.value(v).data().to_vec())).collect())
            .collect();
        Ok(MessageState { layer: state.layer + 1, messages })
    }

    /// Normalized beliefs `softmax(Ψᵢ + Σ_k m̄_{k→i})` from a message state.
    pub fn beliefs(&self, state: &MessageState) -> Result<Vec<Vec<f64>>> {
        (0..self.len())
            .map(|i| {
                let mut mu = self.unary[i].clone();
                for k in 0..self.len() {
                    if let Some(m) = state.get(k, i) {
                        mu.iter_mut().zip(m).for_each(|(x, y)| *x += y);
                    }
                }
                Ok(softmax_values(&mu)?)
            })
            .collect()
    }

    /// Beliefs after `layers` rounds; a single mention skips message passing.
    pub fn run(&self, delta: f64, layers: usize) -> Result<Vec<Vec<f64>>> {
        if self.len() == 1 {
            return Ok(vec![softmax_values(&self.unary[0])?]);
        }
        let mut tape = Tape::new();
        let (unary, c) = self.on_tape(&mut tape);
        let cand: Vec<&Arc<Tensor>> = self.cand.iter().collect();
        let mu = lbp::lbp_on(&mut tape, &unary, &cand, c, delta, layers)?;
        mu.into_iter().map(|m| Ok(softmax_values(tape.value(m).data())?)).collect()
    }
}
