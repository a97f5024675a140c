//! Mini-batch training: Adam with bias correction, global-norm gradient
//! clipping, seeded shuffling, and early stopping on validation AUC.
//!
//! Everything is deterministic given (seed, config, data): shuffles come
//! from one seeded stream, batches reduce in instance order, and parameter
//! updates walk paths in sorted order.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::Instance;
use crate::error::CoreError;
use crate::math;
use crate::metrics;
use crate::model::{self, AblationConfig, GapNetParams, ModelConfig, Overrides};
use crate::rng::SplitMix64;
use crate::tensor::Tape;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_epochs: usize,
    /// Epochs without val-AUC improvement before stopping.
    pub patience: usize,
    /// Global gradient-norm ceiling; guards the huge mask constants from
    /// pathological interactions. Not part of the published setup.
    pub grad_clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 128,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_epochs: 10,
            patience: 3,
            grad_clip_norm: 5.0,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.learning_rate <= 0.0 {
            return Err(CoreError::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(0.0 < self.beta1 && self.beta1 < 1.0 && 0.0 < self.beta2 && self.beta2 < 1.0) {
            return Err(CoreError::InvalidConfig("betas must lie in (0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(CoreError::InvalidConfig("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// One Adam update for a single parameter tensor.
pub fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    cfg: &TrainConfig,
) {
    debug_assert_eq!(param.len(), grad.len());
    let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    for i in 0..param.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= cfg.learning_rate * m_hat / (math::sqrt(v_hat) + cfg.eps);
    }
}

/// First/second moment buffers per parameter path plus the step counter.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new() -> Self {
        AdamState::default()
    }

    pub fn step(
        &mut self,
        cfg: &TrainConfig,
        params: &mut GapNetParams,
        grads: &BTreeMap<String, Vec<f64>>,
    ) {
        self.t += 1;
        let t = self.t;
        let m = &mut self.m;
        let v = &mut self.v;
        params.visit_mut(&mut |path, p| {
            let n = p.data.len();
            let zero = alloc::vec![0.0; n];
            let g = match grads.get(&path) {
                Some(g) if g.len() == n => g,
                _ => &zero,
            };
            let pm = m.entry(path.clone()).or_insert_with(|| alloc::vec![0.0; n]);
            let pv = v.entry(path).or_insert_with(|| alloc::vec![0.0; n]);
            adam_update(&mut p.data, g, pm, pv, t, cfg);
        });
    }
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Vec<f64>>, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads.values() {
        for &x in g {
            sq += x * x;
        }
    }
    let norm = math::sqrt(sq);
    if max_norm > 0.0 && norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.values_mut() {
            for x in g.iter_mut() {
                *x *= scale;
            }
        }
    }
    norm
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    /// Parameters from the best validation epoch (initialization when
    /// max_epochs = 0).
    pub params: GapNetParams,
    pub history: Vec<EpochRecord>,
    pub best_val_auc: f64,
    pub best_epoch: Option<usize>,
}

/// Score instances with frozen parameters (no gradients kept around beyond
/// each chunk's tape).
pub fn score_instances(
    params: &GapNetParams,
    ablation: &AblationConfig,
    instances: &[Instance],
) -> Result<Vec<f64>, CoreError> {
    let mut scores = Vec::with_capacity(instances.len());
    for chunk in instances.chunks(256) {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        for inst in chunk {
            let out = model::forward(&mut tape, params, &bound, ablation, inst, &Overrides::default())?;
            scores.push(tape.value(out.prob));
        }
    }
    Ok(scores)
}

/// Score a dataset and compute the ranking report over request groups.
pub fn evaluate_model(
    params: &GapNetParams,
    ablation: &AblationConfig,
    instances: &[Instance],
    k: Option<usize>,
) -> Result<metrics::MetricsReport, CoreError> {
    let scores = score_instances(params, ablation, instances)?;
    let rows: Vec<(u64, f64, u8)> = instances
        .iter()
        .zip(&scores)
        .map(|(inst, &s)| (inst.request_id, s, inst.label))
        .collect();
    let groups = metrics::group_by_request(&rows);
    metrics::evaluate(&groups, k)
}

fn check_data(config: &ModelConfig, data: &[Instance], name: &str) -> Result<(), CoreError> {
    for inst in data {
        if inst.label > 1 {
            return Err(CoreError::DataMismatch(alloc::format!(
                "{name}: label {} is not binary",
                inst.label
            )));
        }
        if (inst.user_id as usize) >= config.n_users
            || (inst.context_id as usize) >= config.n_contexts
            || (inst.target_item_id as usize) >= config.n_items
            || inst
                .seq_rt
                .iter()
                .chain(&inst.seq_st)
                .chain(&inst.seq_lt)
                .any(|&i| (i as usize) >= config.n_items)
        {
            return Err(CoreError::DataMismatch(alloc::format!(
                "{name}: request {} references ids outside the configured vocab",
                inst.request_id
            )));
        }
    }
    Ok(())
}

fn val_auc(params: &GapNetParams, ablation: &AblationConfig, val: &[Instance]) -> Result<f64, CoreError> {
    if val.is_empty() {
        return Ok(0.5);
    }
    let scores = score_instances(params, ablation, val)?;
    let labels: Vec<u8> = val.iter().map(|i| i.label).collect();
    // single-class validation carries no ranking signal; treat as chance
    Ok(metrics::auc_global(&scores, &labels).unwrap_or(0.5))
}

/// Full training loop. Returns the checkpoint of the best validation epoch
/// plus the per-epoch history.
pub fn train(
    model_cfg: &ModelConfig,
    ablation: &AblationConfig,
    train_data: &[Instance],
    val_data: &[Instance],
    cfg: &TrainConfig,
) -> Result<TrainResult, CoreError> {
    cfg.validate()?;
    if train_data.is_empty() {
        return Err(CoreError::DataMismatch("training data is empty".into()));
    }
    check_data(model_cfg, train_data, "train")?;
    check_data(model_cfg, val_data, "val")?;

    let mut root = SplitMix64::new(cfg.seed);
    let mut init_rng = root.fork(0x11);
    let mut shuffle_rng = root.fork(0x22);

    let mut params = GapNetParams::new(model_cfg, ablation, &mut init_rng)?;
    let mut history = Vec::new();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = None;
    let mut best_params = params.clone();
    let mut stale = 0usize;

    let mut adam = AdamState::new();
    let mut order: Vec<usize> = (0..train_data.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;

        for batch_idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&Instance> = batch_idx.iter().map(|&i| &train_data[i]).collect();
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let mut probs = Vec::with_capacity(batch.len());
            let mut labels = Vec::with_capacity(batch.len());
            for inst in &batch {
                let out =
                    model::forward(&mut tape, &params, &bound, ablation, inst, &Overrides::default())?;
                probs.push(out.prob);
                labels.push(inst.label);
            }
            let loss = model::bce_loss(&mut tape, &probs, &labels);
            loss_sum += tape.value(loss) * batch.len() as f64;
            tape.backward(loss);

            let mut grads = bound.collect_grads(&tape);
            clip_global_norm(&mut grads, cfg.grad_clip_norm);
            adam.step(cfg, &mut params, &grads);

            params.visit(&mut |path, p| {
                assert!(
                    p.data.iter().all(|x| x.is_finite()),
                    "non-finite parameter in `{path}` at step {}",
                    adam.t
                );
            });
        }

        let train_loss = loss_sum / train_data.len() as f64;
        let auc = val_auc(&params, ablation, val_data)?;
        history.push(EpochRecord { epoch, train_loss, val_auc: auc });

        if auc > best_val {
            best_val = auc;
            best_epoch = Some(epoch);
            best_params = params.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    Ok(TrainResult {
        params: best_params,
        history,
        best_val_auc: if best_val.is_finite() { best_val } else { 0.5 },
        best_epoch,
    })
}
