//! Central finite-difference verification of the backward pass, per
//! parameter path.
//!
//! For each path the entries with the largest analytic gradients are probed
//! (they are the ones that would expose a wrong backward rule), the loss is
//! re-evaluated at +/- step, and the symmetric difference quotient is
//! compared against the recorded gradient.

use alloc::string::String;
use alloc::vec::Vec;

use crate::data::Instance;
use crate::error::CoreError;
use crate::model::{self, AblationConfig, GapNetParams, Overrides};
use crate::tensor::Tape;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Entries probed per parameter tensor.
    pub max_entries_per_path: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-5, tolerance: 1e-4, max_entries_per_path: 8 }
    }
}

#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PathReport {
    pub path: String,
    pub entries_checked: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GradCheckReport {
    pub paths: Vec<PathReport>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Relative error with a floor: below 1e-6 gradient magnitude the central
/// difference is dominated by roundoff, so agreement is judged absolutely.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    let mag = analytic.abs().max(numeric.abs());
    if mag >= 1e-6 {
        diff / mag
    } else if diff < 1e-9 {
        0.0
    } else {
        diff / 1e-6
    }
}

fn batch_loss_value(
    params: &GapNetParams,
    ablation: &AblationConfig,
    instances: &[Instance],
) -> Result<f64, CoreError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let mut probs = Vec::with_capacity(instances.len());
    let mut labels = Vec::with_capacity(instances.len());
    for inst in instances {
        let out = model::forward(&mut tape, params, &bound, ablation, inst, &Overrides::default())?;
        probs.push(out.prob);
        labels.push(inst.label);
    }
    let loss = model::bce_loss(&mut tape, &probs, &labels);
    Ok(tape.value(loss))
}

fn perturbed_loss(
    params: &GapNetParams,
    ablation: &AblationConfig,
    instances: &[Instance],
    path: &str,
    index: usize,
    delta: f64,
) -> Result<f64, CoreError> {
    let mut modified = params.clone();
    modified.visit_mut(&mut |p, param| {
        if p == path {
            param.data[index] += delta;
        }
    });
    batch_loss_value(&modified, ablation, instances)
}

/// Check every parameter path of the model on the given batch.
pub fn check_model(
    params: &GapNetParams,
    ablation: &AblationConfig,
    instances: &[Instance],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport, CoreError> {
    // analytic gradients once
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let mut probs = Vec::with_capacity(instances.len());
    let mut labels = Vec::with_capacity(instances.len());
    for inst in instances {
        let out = model::forward(&mut tape, params, &bound, ablation, inst, &Overrides::default())?;
        probs.push(out.prob);
        labels.push(inst.label);
    }
    let loss = model::bce_loss(&mut tape, &probs, &labels);
    tape.backward(loss);
    let grads = bound.collect_grads(&tape);

    let mut paths = Vec::new();
    let mut global_max = 0.0f64;

    for (path, grad) in &grads {
        // probe the largest-magnitude entries, deterministically
        let mut order: Vec<usize> = (0..grad.len()).collect();
        order.sort_by(|&a, &b| {
            grad[b].abs().partial_cmp(&grad[a].abs()).unwrap().then(a.cmp(&b))
        });
        let picks: Vec<usize> = order.into_iter().take(cfg.max_entries_per_path).collect();

        let mut path_max = 0.0f64;
        for &idx in &picks {
            let up = perturbed_loss(params, ablation, instances, path, idx, cfg.step)?;
            let down = perturbed_loss(params, ablation, instances, path, idx, -cfg.step)?;
            let numeric = (up - down) / (2.0 * cfg.step);
            path_max = path_max.max(rel_err(grad[idx], numeric));
        }
        global_max = global_max.max(path_max);
        paths.push(PathReport {
            path: path.clone(),
            entries_checked: picks.len(),
            max_rel_err: path_max,
        });
    }

    Ok(GradCheckReport {
        paths,
        max_rel_err: global_max,
        tolerance: cfg.tolerance,
        passed: global_max < cfg.tolerance,
    })
}
