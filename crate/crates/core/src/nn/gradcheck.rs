//! Central finite-difference check of analytic gradients.

use super::model::{PolicyModel, SeqBatch};
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
}

/// Compares `loss_and_grad` against (L(p+h) − L(p−h)) / 2h at `indices`.
/// Relative error is |a − n| / max(|a| + |n|, floor).
pub fn check_gradients(
    model: &PolicyModel<f64>,
    batch: &SeqBatch<f64>,
    indices: &[usize],
    h: f64,
    floor: f64,
) -> Result<GradCheckReport, NnError> {
    let mut grad = vec![0.0; model.param_count()];
    model.loss_and_grad(batch, &mut grad)?;
    let mut m = model.clone();
    let mut rep = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        worst_index: 0,
    };
    for &i in indices {
        let orig = m.params[i];
        m.params[i] = orig + h;
        let lp = m.loss(batch)?;
        m.params[i] = orig - h;
        let lm = m.loss(batch)?;
        m.params[i] = orig;
        let num = (lp - lm) / (2.0 * h);
        let rel = (grad[i] - num).abs() / (grad[i].abs() + num.abs()).max(floor);
        if rel > rep.max_rel_err {
            rep.max_rel_err = rel;
            rep.worst_index = i;
        }
        rep.checked += 1;
    }
    Ok(rep)
}

