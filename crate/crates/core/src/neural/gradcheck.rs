use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rng::seeded;

use super::graph::{Batch, Mode, ModelGraph};

pub const DEFAULT_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares every analytic gradient entry against a central difference.
///
/// Each loss evaluation re-seeds the dropout generator with `dropout_seed`,
/// so all evaluations see the same masks.
pub fn grad_check(
    model: &ModelGraph,
    batch: Batch<'_>,
    labels: &[u32],
    h: f64,
    dropout_seed: u64,
) -> Result<GradCheckReport> {
    let (_, grads) = model.loss_and_grad(batch, labels, Mode::Train(&mut seeded(dropout_seed)))?;
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for p in 0..probe.params().len() {
        for i in 0..probe.params()[p].data.len() {
            let original = probe.params()[p].data[i];
            probe.params_mut()[p].data[i] = original + h;
            let plus = probe.loss(batch, labels, Mode::Train(&mut seeded(dropout_seed)))?;
            probe.params_mut()[p].data[i] = original - h;
            let minus = probe.loss(batch, labels, Mode::Train(&mut seeded(dropout_seed)))?;
            probe.params_mut()[p].data[i] = original;
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = grads.tensors[p][i];
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = probe.params()[p].name.clone();
                report.worst_index = i;
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

/// Smallest nonzero analytic gradient a central difference at `h = 1e-5` resolves
/// to well under `1e-4` relative error in double precision.
pub const RESOLVABLE_GRADIENT: f64 = 1e-6;

/// Whether a finite-difference check of `model` on this batch is meaningful.
///
/// Rejects batches where a nonzero analytic gradient falls below
/// [`RESOLVABLE_GRADIENT`], and batches where some `±h` step crosses or sits on
/// a kink (ReLU, hard sigmoid clamp, max-pool tie). On a smooth loss the central
/// differences at `h` and `h / 2` agree, and the second difference halves with
/// the step; a kink breaks one or the other. Neither test compares analytic
/// against numeric gradients.
pub fn resolvable(
    model: &ModelGraph,
    batch: Batch<'_>,
    labels: &[u32],
    h: f64,
    dropout_seed: u64,
) -> Result<bool> {
    let (base, grads) =
        model.loss_and_grad(batch, labels, Mode::Train(&mut seeded(dropout_seed)))?;
    if grads
        .tensors
        .iter()
        .flatten()
        .any(|&g| g != 0.0 && g.abs() < RESOLVABLE_GRADIENT)
    {
        return Ok(false);
    }
    let mut probe = model.clone();
    let mut shifted = |p: usize, i: usize, step: f64| -> Result<(f64, f64)> {
        let original = probe.params()[p].data[i];
        probe.params_mut()[p].data[i] = original + step;
        let plus = probe.loss(batch, labels, Mode::Train(&mut seeded(dropout_seed)))?;
        probe.params_mut()[p].data[i] = original - step;
        let minus = probe.loss(batch, labels, Mode::Train(&mut seeded(dropout_seed)))?;
        probe.params_mut()[p].data[i] = original;
        Ok((plus, minus))
    };
    let disagree =
        |a: f64, b: f64| (a - b).abs() > 1e-3 * a.abs().max(b.abs()).max(RESOLVABLE_GRADIENT);
    for (p, g) in grads.tensors.iter().enumerate() {
        for i in 0..g.len() {
            let (plus, minus) = shifted(p, i, h)?;
            let (plus_half, minus_half) = shifted(p, i, h / 2.0)?;
            let central = (plus - minus) / (2.0 * h);
            let second = (plus - 2.0 * base + minus) / h;
            let second_half = 2.0 * (plus_half - 2.0 * base + minus_half) / h;
            let kinked =
                (second - 2.0 * second_half).abs() > 1e-3 * central.abs().max(RESOLVABLE_GRADIENT);
            if kinked || disagree(central, (plus_half - minus_half) / h) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
