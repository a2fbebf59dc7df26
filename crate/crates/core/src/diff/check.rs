use rayon::prelude::*;

use super::{DiffError, Tape, Tensor, Var};
use crate::Result;

/// Outcome of a finite-difference gradient comparison.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error per parameter tensor (0 if every coordinate was skipped).
    pub per_param: Vec<f64>,
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose ±ε probes crossed a non-smooth point (max tie, ReLU kink, top-R swap).
    pub skipped: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Gradients smaller than this are compared in absolute terms: central
/// differences cannot resolve them against rounding noise.
pub const GRAD_FLOOR: f64 = 1e-6;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

fn evaluate<F>(f: &F, point: &[Tensor]) -> Result<(f64, u64)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = point.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.scalar(out);
    if !v.is_finite() {
        return Err(DiffError::NonFiniteValue.into());
    }
    Ok((v, tape.branch_signature()))
}

/// Compares tape gradients of the scalar function `f` at `point` with
/// central differences `(f(x+ε) − f(x−ε)) / 2ε`, coordinate by coordinate.
///
/// Coordinates are probed in parallel, so `f` must be `Sync`.
pub fn grad_check<F>(f: F, point: &[Tensor], epsilon: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var> + Sync,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = point.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    if !tape.scalar(out).is_finite() {
        return Err(DiffError::NonFiniteValue.into());
    }
    let base_sig = tape.branch_signature();
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect();
    drop(tape);

    let coords: Vec<(usize, usize)> = point
        .iter()
        .enumerate()
        .flat_map(|(p, t)| (0..t.len()).map(move |k| (p, k)))
        .collect();

    let results: Vec<Option<(usize, f64)>> = coords
        .par_iter()
        .map(|&(p, k)| -> Result<Option<(usize, f64)>> {
            let mut probe = point.to_vec();
            let x0 = point[p].data()[k];
            probe[p].data_mut()[k] = x0 + epsilon;
            let (fp, sp) = evaluate(&f, &probe)?;
            probe[p].data_mut()[k] = x0 - epsilon;
            let (fm, sm) = evaluate(&f, &probe)?;
            if sp != base_sig || sm != base_sig {
                return Ok(None);
            }
            let numeric = (fp - fm) / (2.0 * epsilon);
            Ok(Some((p, relative_error(analytic[p].data()[k], numeric))))
        })
        .collect::<Result<_>>()?;

    let mut per_param = vec![0.0f64; point.len()];
    let (mut checked, mut skipped) = (0, 0);
    for r in results {
        match r {
            Some((p, err)) => {
                checked += 1;
                per_param[p] = per_param[p].max(err);
            }
            None => skipped += 1,
        }
    }
    let max_rel_error = per_param.iter().copied().fold(0.0, f64::max);
    Ok(GradCheckReport { per_param, max_rel_error, checked, skipped, tolerance })
}
