//! Local attention model.
//!
//! Each context word gets a support score `u(w) = max_e xₑᵀ A x_w` from its
//! best matching candidate. Only the `R` best-supported words survive, and
//! a softmax over them gives the attention `β`. The context score is
//! `Ψ(e, c) = Σ_w β(w) xₑᵀ B x_w`, combined with the log prior by a small
//! network `f`. `A` and `B` are diagonal.

mod prepare;

pub use prepare::{context_window, PreparedDoc, PreparedMention, PRIOR_FLOOR};

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Axis, Tape, Tensor, Var};
use crate::nn::{FNet, FNetConfig, Trainable};
use crate::store::{EntityId, WordId};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalConfig {
    /// Context size `K`.
    pub k: usize,
    /// Words kept by hard attention, `R`.
    pub r: usize,
    /// Ranking margin `γ`.
    pub margin: f64,
    pub f: FNetConfig,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self { k: 100, r: 50, margin: 0.01, f: FNetConfig::default() }
    }
}

impl LocalConfig {
    pub fn validate(&self) -> Result<()> {
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
pub struct LocalParams {
    /// Diagonal of `A`.
    pub a: Tensor,
    /// Diagonal of `B`.
    pub b: Tensor,
    pub f: FNet,
    pub cfg: LocalConfig,
}

/// Tape handles of the attention scorer's diagonals.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AttentionVars {
    pub a: Var,
    pub b: Var,
}

/// `Ψ(e, c)` for every candidate of `m` as an `S`-vector. A mention with
/// no context words scores 0 for every candidate.
pub(crate) fn context_scores_on(tape: &mut Tape, v: AttentionVars, m: &PreparedMention, r: usize) -> Result<Var> {
    if m.ctx.rows() == 0 {
        return Ok(tape.constant(Tensor::zeros(m.len(), 1)));
    }
    let beta = attention_on(tape, v.a, m, r)?;
    let scores = tape.bilinear_diag(&m.cand, v.b, &m.ctx);
    Ok(tape.matvec(scores, beta))
}

fn attention_on(tape: &mut Tape, a: Var, m: &PreparedMention, r: usize) -> Result<Var> {
    let support = tape.bilinear_diag(&m.cand, a, &m.ctx);
    let u = tape.max_axis(support, Axis::Rows);
    let kept = tape.keep_top(u, r);
    Ok(tape.softmax(kept)?)
}

/// `f` applied to `(score, log prior)` pairs of every candidate.
pub(crate) fn combine_on(tape: &mut Tape, f: &[Var], scores: Var, m: &PreparedMention) -> Var {
    let lp = tape.constant(m.log_prior.clone());
    let x = tape.stack_rows(&[scores, lp]);
    FNet::forward(tape, f, x)
}

impl LocalParams {
    /// Identity diagonals and a randomly initialized `f`.
    pub fn new<R: Rng + ?Sized>(dim: usize, cfg: LocalConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { a: Tensor::vector(vec![1.0; dim]), b: Tensor::vector(vec![1.0; dim]), f: FNet::random(&cfg.f, rng), cfg })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn num_params(&self) -> usize {
        self.a.len() + self.b.len() + self.f.num_params()
    }

    fn split(vars: &[Var]) -> (AttentionVars, &[Var]) {
        (AttentionVars { a: vars[0], b: vars[1] }, &vars[2..])
    }

    fn mention_on(&self, tape: &mut Tape, vars: &[Var], m: &PreparedMention) -> Result<Var> {
        let (att, f) = Self::split(vars);
        let psi = context_scores_on(tape, att, m, self.cfg.r)?;
        Ok(combine_on(tape, f, psi, m))
    }

    /// Combined scores `f(Ψ(e, c), log p̂(e|m))` for every candidate.
    pub fn mention_scores(&self, m: &PreparedMention) -> Result<Vec<f64>> {
        if m.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let s = self.mention_on(&mut tape, &vars, m)?;
        Ok(tape.value(s).data().to_vec())
    }

    /// Context words with nonzero attention, by descending weight.
    pub fn attention(&self, m: &PreparedMention) -> Result<Vec<(WordId, f64)>> {
        if m.is_empty() || m.words.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let a = tape.constant(self.a.clone());
        let beta = attention_on(&mut tape, a, m, self.cfg.r)?;
        let mut out: Vec<(WordId, f64)> = m
            .words
            .iter()
            .zip(tape.value(beta).data())
            .filter(|p| *p.1 > 0.0)
            .map(|(&w, &b)| (w, b))
            .collect();
        out.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        Ok(out)
    }
}

impl Trainable for LocalParams {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut t = vec![&self.a, &self.b];
        t.extend(self.f.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut t = vec![&mut self.a, &mut self.b];
        t.extend(self.f.tensors_mut());
        t
    }

    fn doc_loss(&self, tape: &mut Tape, vars: &[Var], doc: &PreparedDoc) -> Result<Option<Var>> {
        let mut terms = Vec::new();
        for m in &doc.mentions {
            let Some(gold) = m.gold else { continue };
            let s = self.mention_on(tape, vars, m)?;
            terms.push(tape.margin_ranking(s, gold, self.cfg.margin));
        }
        Ok(tape.add_all(&terms))
    }

    fn predict(&self, doc: &PreparedDoc) -> Result<Vec<Option<EntityId>>> {
        doc.mentions
            .iter()
            .map(|m| Ok(m.best(&self.mention_scores(m)?).map(|i| m.entities[i])))
            .collect()
    }

    fn project(&mut self) {
        self.f.project(self.cfg.f.radius);
    }
}

/// `u(w)` for every context row of `ctx` against the candidate rows of `cand`.
pub fn support_scores(cand: &Tensor, ctx: &Tensor, a: &[f64]) -> Result<Vec<f64>> {
    if cand.rows() == 0 || ctx.rows() == 0 {
        return Err(Error::invalid("nothing to score"));
    }
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::vector(a.to_vec()));
    let s = tape.bilinear_diag(&Arc::new(cand.clone()), a, &Arc::new(ctx.clone()));
    let u = tape.max_axis(s, Axis::Rows);
    Ok(tape.value(u).data().to_vec())
}

/// Softmax over the `r` largest support scores; the rest get exactly 0.
pub fn attention_weights(u: &[f64], r: usize) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::vector(u.to_vec()));
    let kept = tape.keep_top(x, r);
    let beta = tape.softmax(kept)?;
    Ok(tape.value(beta).data().to_vec())
}

/// `Ψ(e, c)` for each candidate row given attention weights.
pub fn context_score(cand: &Tensor, ctx: &Tensor, beta: &[f64], b: &[f64]) -> Vec<f64> {
    (0..cand.rows())
        .map(|e| {
            (0..ctx.rows())
                .map(|w| beta[w] * cand.row(e).iter().zip(b).zip(ctx.row(w)).map(|((x, k), y)| x * k * y).sum::<f64>())
                .sum()
        })
        .collect()
}

pub fn combine_f(f: &FNet, score: f64, log_prior: f64) -> Result<f64> {
    f.eval(score, log_prior)
}

/// Summed ranking loss over the document and its parameter gradients (in
/// [`Trainable::tensors`] order). Documents without a trainable mention
/// give zero loss.
pub fn local_rank_loss(params: &LocalParams, doc: &PreparedDoc) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let zero = || params.tensors().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
    let Some(loss) = params.doc_loss(&mut tape, &vars, doc)? else {
        return Ok((0.0, zero()));
    };
    let g = tape.backward(loss)?;
    Ok((tape.scalar(loss), vars.iter().map(|&v| g.wrt(v)).collect()))
}

pub fn predict_local(params: &LocalParams, doc: &PreparedDoc) -> Result<Vec<Option<EntityId>>> {
    params.predict(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mention(cand: Tensor, ctx: Tensor, priors: &[f64], gold: Option<usize>) -> PreparedMention {
        let n = cand.rows();
        PreparedMention {
            entities: (0..n as u32).map(EntityId).collect(),
            cand: Arc::new(cand),
            words: (0..ctx.rows() as u32).map(WordId).collect(),
            ctx: Arc::new(ctx),
            log_prior: Tensor::vector(priors.iter().map(|p| p.ln()).collect()),
            gold_entity: gold.map(|g| EntityId(g as u32)),
            gold,
        }
    }

    fn additive_params(dim: usize, r: usize) -> LocalParams {
        let cfg = LocalConfig { k: 10, r, margin: 0.01, f: FNetConfig { hidden: vec![4, 4], radius: 10.0 } };
        LocalParams { a: Tensor::vector(vec![1.0; dim]), b: Tensor::vector(vec![1.0; dim]), f: FNet::additive(&[4, 4]).unwrap(), cfg }
    }

    #[test]
    fn support_is_max_over_candidates() {
        let w = Tensor::from_rows(&[[0.6, 0.8]]);
        assert_abs_diff_eq!(support_scores(&w, &w, &[1.0, 1.0]).unwrap()[0], 1.0, epsilon = 1e-12);
        let cand = Tensor::from_rows(&[[0.2, 0.0], [0.7, 0.0]]);
        let ctx = Tensor::from_rows(&[[1.0, 0.0]]);
        assert_abs_diff_eq!(support_scores(&cand, &ctx, &[1.0, 1.0]).unwrap()[0], 0.7);
        assert_eq!(support_scores(&cand, &ctx, &[0.0, 0.0]).unwrap(), vec![0.0]);
        assert!(support_scores(&Tensor::zeros(0, 2), &ctx, &[1.0, 1.0]).is_err());
        assert!(support_scores(&cand, &Tensor::zeros(0, 2), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn hard_attention_example() {
        let beta = attention_weights(&[3.0, 1.0, 2.0, 0.0], 2).unwrap();
        let e3 = 3f64.exp();
        let e2 = 2f64.exp();
        assert_abs_diff_eq!(beta[0], e3 / (e3 + e2), epsilon = 1e-12);
        assert_abs_diff_eq!(beta[0], 0.7311, epsilon = 1e-4);
        assert_abs_diff_eq!(beta[2], 0.2689, epsilon = 1e-4);
        assert_eq!(beta[1], 0.0);
        assert_eq!(beta[3], 0.0);
    }

    #[test]
    fn attention_degenerate_cases() {
        let beta = attention_weights(&[0.3; 5], 5).unwrap();
        beta.iter().for_each(|&b| assert_abs_diff_eq!(b, 0.2, epsilon = 1e-12));
        assert_eq!(attention_weights(&[0.1, 0.9, 0.5], 1).unwrap(), vec![0.0, 1.0, 0.0]);
        let big = attention_weights(&[0.1, 0.2], 10).unwrap();
        assert_abs_diff_eq!(big.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn attention_is_shift_invariant() {
        let u = [0.4, -1.0, 2.2, 0.9, 0.0];
        let shifted: Vec<f64> = u.iter().map(|x| x + 17.5).collect();
        let (a, b) = (attention_weights(&u, 3).unwrap(), attention_weights(&shifted, 3).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn context_score_example() {
        // Four context words; the candidate's dot products with words 0 and 2
        // are 0.5 and -0.2.
        let cand = Tensor::from_rows(&[[1.0, 0.0]]);
        let ctx = Tensor::from_rows(&[[0.5, 0.0], [0.3, 0.0], [-0.2, 0.0], [0.9, 0.0]]);
        let beta = [0.7311, 0.0, 0.2689, 0.0];
        let psi = context_score(&cand, &ctx, &beta, &[1.0, 1.0]);
        assert_abs_diff_eq!(psi[0], 0.3118, epsilon = 1e-4);
        assert_eq!(context_score(&cand, &ctx, &beta, &[0.0, 0.0]), vec![0.0]);
        let single = context_score(&cand, &Tensor::from_rows(&[[0.25, 0.0]]), &[1.0], &[1.0, 1.0]);
        assert_abs_diff_eq!(single[0], 0.25);
    }

    #[test]
    fn noise_words_get_no_attention() {
        // Words 0..2 align with candidates, words 3..5 are orthogonal to both.
        let cand = Tensor::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let ctx = Tensor::from_rows(&[
            [0.9, 0.1, 0.0],
            [0.2, 0.8, 0.0],
            [0.5, 0.5, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
            [0.0, 0.0, 0.3],
        ]);
        let u = support_scores(&cand, &ctx, &[1.0; 3]).unwrap();
        let beta = attention_weights(&u, 3).unwrap();
        assert!(beta[3..].iter().all(|&b| b == 0.0));
        assert_abs_diff_eq!(beta.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn tape_scores_match_plain_formulas() {
        let cand = Tensor::from_rows(&[[0.6, 0.8, 0.0], [0.0, 0.6, 0.8]]);
        let ctx = Tensor::from_rows(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]]);
        let m = mention(cand.clone(), ctx.clone(), &[0.7, 0.3], Some(0));
        let mut p = additive_params(3, 2);
        p.a = Tensor::vector(vec![1.0, 0.5, 2.0]);
        p.b = Tensor::vector(vec![0.3, 1.0, -1.0]);
        let u = support_scores(&cand, &ctx, p.a.data()).unwrap();
        let beta = attention_weights(&u, 2).unwrap();
        let psi = context_score(&cand, &ctx, &beta, p.b.data());
        let got = p.mention_scores(&m).unwrap();
        for e in 0..2 {
            let want = combine_f(&p.f, psi[e], m.log_prior.data()[e]).unwrap();
            assert_abs_diff_eq!(got[e], want, epsilon = 1e-12);
            assert_abs_diff_eq!(got[e], psi[e] + m.log_prior.data()[e], epsilon = 1e-12);
        }
    }

    fn doc(mentions: Vec<PreparedMention>) -> PreparedDoc {
        PreparedDoc { id: "d".into(), mentions }
    }

    #[test]
    fn ranking_loss_values() {
        // B = 0 makes the score the log prior.
        let mut p = additive_params(1, 1);
        p.b = Tensor::vector(vec![0.0]);
        let ctx = Tensor::from_rows(&[[1.0]]);
        let cand = Tensor::from_rows(&[[1.0], [1.0]]);
        let far = mention(cand.clone(), ctx.clone(), &[0.9, 0.01], Some(0));
        assert_eq!(local_rank_loss(&p, &doc(vec![far])).unwrap().0, 0.0);
        let tie = mention(cand, ctx, &[0.5, 0.5], Some(0));
        assert_abs_diff_eq!(local_rank_loss(&p, &doc(vec![tie])).unwrap().0, 0.01, epsilon = 1e-12);
        let (l, g) = local_rank_loss(&p, &doc(vec![])).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|t| t.data().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn prediction_cases() {
        let mut p = additive_params(2, 2);
        let ctx = Tensor::from_rows(&[[1.0, 0.0]]);
        let single = mention(Tensor::from_rows(&[[0.0, 1.0]]), ctx.clone(), &[0.1], None);
        // Context prefers candidate 1, prior prefers candidate 0.
        let flip = mention(Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]]), ctx, &[0.6, 0.4], None);
        let d = doc(vec![single, flip]);
        assert_eq!(predict_local(&p, &d).unwrap(), vec![Some(EntityId(0)), Some(EntityId(1))]);
        p.b = Tensor::vector(vec![0.0, 0.0]);
        assert_eq!(predict_local(&p, &d).unwrap()[1], Some(EntityId(0)));
    }

    #[test]
    fn empty_context_scores_by_prior_only() {
        let p = additive_params(2, 2);
        let m = mention(Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0]]), Tensor::zeros(0, 2), &[0.2, 0.8], Some(1));
        let s = p.mention_scores(&m).unwrap();
        assert_abs_diff_eq!(s[1] - s[0], 0.8f64.ln() - 0.2f64.ln(), epsilon = 1e-12);
        assert!(p.attention(&m).unwrap().is_empty());
    }

    #[test]
    fn attention_dump_is_sorted() {
        let p = additive_params(2, 2);
        let cand = Tensor::from_rows(&[[1.0, 0.0]]);
        let ctx = Tensor::from_rows(&[[0.1, 0.0], [0.9, 0.0], [0.5, 0.0]]);
        let d = p.attention(&mention(cand, ctx, &[1.0], None)).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].0, WordId(1));
        assert!(d[0].1 > d[1].1);
    }

    #[test]
    fn default_parameter_count() {
        let p = LocalParams::new(300, LocalConfig::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(p.num_params(), 600 + 10_501);
        assert!(p.f.layers.iter().all(|l| l.weight.frobenius_norm() <= 1.0 + 1e-12));
    }
}
