use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::diff::{Axis, Tape, Tensor, Var};
use crate::Result;

static MAX_DEVIATION: AtomicU64 = AtomicU64::new(0);

/// Largest `|Σ_e exp m̄(e) − 1|` over every message computed in this process.
pub fn max_message_deviation() -> f64 {
    f64::from_bits(MAX_DEVIATION.load(Ordering::Relaxed))
}

fn record_deviation(msg: &[f64]) -> f64 {
    let dev = (msg.iter().map(|v| v.exp()).sum::<f64>() - 1.0).abs();
    // Bit patterns of non-negative floats order like the floats themselves.
    MAX_DEVIATION.fetch_max(dev.to_bits(), Ordering::Relaxed);
    dev
}

/// Messages `m̄_{i→j}` of one layer, stored at `[i][j]` (`None` on the diagonal).
pub(crate) type Messages = Vec<Vec<Option<Var>>>;

/// Pairwise score matrices: `phi[j][i]` has rows over `Γ_j` and columns over `Γ_i`.
pub(crate) fn pairwise_on(tape: &mut Tape, cand: &[&Arc<Tensor>], c: Var) -> Vec<Vec<Option<Var>>> {
    let n = cand.len();
    let cs = tape.scale(c, 2.0 / (n as f64 - 1.0));
    (0..n)
        .map(|j| (0..n).map(|i| (i != j).then(|| tape.bilinear_diag(cand[j], cs, cand[i]))).collect())
        .collect()
}

/// Layer-0 messages: the uniform distribution in log space.
pub(crate) fn initial_messages(tape: &mut Tape, sizes: &[usize]) -> Messages {
    let n = sizes.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (i != j).then(|| tape.constant(Tensor::vector(vec![-(sizes[j] as f64).ln(); sizes[j]]))))
                .collect()
        })
        .collect()
}

fn incoming(tape: &mut Tape, msgs: &Messages, i: usize) -> Option<Var> {
    let terms: Vec<Var> = (0..msgs.len()).filter_map(|k| msgs[k][i]).collect();
    tape.add_all(&terms)
}

/// One synchronous max-product layer with damping. Returns the new
/// messages and the largest normalization deviation among them.
pub(crate) fn step_on(
    tape: &mut Tape,
    unary: &[Var],
    phi: &[Vec<Option<Var>>],
    prev: &Messages,
    delta: f64,
) -> Result<(Messages, f64)> {
    let n = unary.len();
    let mut next: Messages = vec![vec![None; n]; n];
    let mut worst = 0.0f64;
    for i in 0..n {
        let total = incoming(tape, prev, i).expect("at least two mentions");
        let base = tape.add(unary[i], total);
        for j in 0..n {
            if i == j {
                continue;
            }
            let back = prev[j][i].expect("off-diagonal message");
            let h = tape.sub(base, back);
            let scores = tape.add_row_broadcast(phi[j][i].expect("off-diagonal pair"), h);
            let m = tape.max_axis(scores, Axis::Cols);
            let mbar = if delta >= 1.0 {
                tape.log_softmax(m)?
            } else {
                let p = tape.softmax(m)?;
                let p = tape.scale(p, delta);
                let old = tape.exp(prev[i][j].expect("off-diagonal message"));
                let old = tape.scale(old, 1.0 - delta);
                let mix = tape.add(p, old);
                tape.log(mix)
            };
            worst = worst.max(record_deviation(tape.value(mbar).data()));
            next[i][j] = Some(mbar);
        }
    }
    Ok((next, worst))
}

/// Unnormalized beliefs `μᵢ = Ψᵢ + Σ_k m̄_{k→i}`.
pub(crate) fn beliefs_on(tape: &mut Tape, unary: &[Var], msgs: &Messages) -> Vec<Var> {
    (0..unary.len())
        .map(|i| match incoming(tape, msgs, i) {
            Some(t) => tape.add(unary[i], t),
            None => unary[i],
        })
        .collect()
}

/// Runs `layers` rounds of message passing from the uniform start and
/// returns the unnormalized beliefs. Needs at least two mentions.
pub(crate) fn lbp_on(
    tape: &mut Tape,
    unary: &[Var],
    cand: &[&Arc<Tensor>],
    c: Var,
    delta: f64,
    layers: usize,
) -> Result<Vec<Var>> {
    let phi = pairwise_on(tape, cand, c);
    let sizes: Vec<usize> = cand.iter().map(|t| t.rows()).collect();
    let mut msgs = initial_messages(tape, &sizes);
    for _ in 0..layers {
        msgs = step_on(tape, unary, &phi, &msgs, delta)?.0;
    }
    Ok(beliefs_on(tape, unary, &msgs))
}
