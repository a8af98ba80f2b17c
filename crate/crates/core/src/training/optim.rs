//! AdamW with global-norm clipping and the linear warmup/decay schedule.

use super::{TrainConfig, TrainError};
use crate::model::{ModelParams, ParamKind};

/// Step counter and first/second moments, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: ModelParams<f32>,
    pub v: ModelParams<f32>,
}

impl OptimizerState {
    pub fn new(params: &ModelParams<f32>) -> Self {
        Self { step: 0, m: params.zeros_like(), v: params.zeros_like() }
    }
}

/// Number of warmup steps: `ceil(warmup_ratio · total_steps)`.
pub fn warmup_steps(total_steps: u64, cfg: &TrainConfig) -> u64 {
    (cfg.warmup_ratio * total_steps as f64).ceil() as u64
}

/// Learning rate after `step` of `total_steps` updates: linear from 0 to the
/// peak over the warmup steps, then linear down to 0 at `total_steps`. When
/// warmup covers the whole run the schedule ends at the peak.
pub fn lr_at(step: u64, total_steps: u64, cfg: &TrainConfig) -> f64 {
    let peak = cfg.learning_rate;
    let warmup = warmup_steps(total_steps, cfg);
    let step = step.min(total_steps);
    if step <= warmup {
        if warmup == 0 {
            peak
        } else {
            peak * step as f64 / warmup as f64
        }
    } else {
        peak * (total_steps - step) as f64 / (total_steps - warmup) as f64
    }
}

/// One AdamW update in place. Returns the gradient norm before clipping.
///
/// Order per scalar: clip the gradient, decay the weight
/// (`p ← p − lr·wd·p`, weight matrices only), update the moments, then apply
/// the bias-corrected Adam step.
pub fn adamw_step(
    state: &mut OptimizerState,
    params: &mut ModelParams<f32>,
    grads: &ModelParams<f32>,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<f64, TrainError> {
    let shapes_match = |a: &ModelParams<f32>| {
        a.tensors.len() == params.tensors.len()
            && a.tensors.iter().zip(&params.tensors).all(|(x, y)| x.len() == y.len())
    };
    if !shapes_match(grads) || !shapes_match(&state.m) || !shapes_match(&state.v) {
        return Err(TrainError::ShapeMismatch);
    }

    let norm = grads.global_norm();
    let clip = if cfg.grad_clip_norm > 0.0 && norm > cfg.grad_clip_norm { cfg.grad_clip_norm / norm } else { 1.0 };
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);

    let layout = params.layout.clone();
    for (i, spec) in layout.specs.iter().enumerate() {
        let decay = if spec.kind == ParamKind::Weight { 1.0 - lr * cfg.weight_decay } else { 1.0 };
        let p = &mut params.tensors[i];
        let m = &mut state.m.tensors[i];
        let v = &mut state.v.tensors[i];
        for (j, &g) in grads.tensors[i].iter().enumerate() {
            let g = g as f64 * clip;
            let mj = b1 * m[j] as f64 + (1.0 - b1) * g;
            let vj = b2 * v[j] as f64 + (1.0 - b2) * g * g;
            m[j] = mj as f32;
            v[j] = vj as f32;
            let update = lr * (mj / c1) / ((vj / c2).sqrt() + cfg.adam_eps);
            p[j] = (p[j] as f64 * decay - update) as f32;
        }
    }
    Ok(norm)
}
