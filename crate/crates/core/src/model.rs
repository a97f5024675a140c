//! End-to-end CTR model: embeddings -> gated cascade -> gated fusion ->
//! prediction head, with every ablation variant reachable from one shared
//! parameter set so that stripped-down configurations are exact subsets of
//! the full model.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::asga::{AsgaParams, AsgaVariant, AttendMode, BoundAsga};
use crate::cgdf::{self, BoundCgdf, CgdfContext, CgdfParams, FusionHooks, FusionInputs};
use crate::data::Instance;
use crate::error::CoreError;
use crate::gcqc::{self, BoundCgu, CguParams, ViewAttention};
use crate::layers::{xavier_init, BoundMlp, BoundSwiGlu, Mlp, Param, SwiGluFfn};
use crate::rng::SplitMix64;
use crate::tensor::{Tape, TensorId};

/// Logits are clamped to this band before the output sigmoid to keep the
/// cross-entropy finite.
pub const LOGIT_CLAMP: f64 = 30.0;

/// Predicted probabilities are clamped into [BCE_EPS, 1 - BCE_EPS] before
/// the logs in the loss.
pub const BCE_EPS: f64 = 1e-7;

/// Architecture hyperparameters. The paper-independent sizes (head widths,
/// head count, embedding dim) are desk-scale defaults, overridable here.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ModelConfig {
    pub d: usize,
    pub num_heads: usize,
    /// Per-head dim; defaults to d / num_heads.
    pub head_dim: Option<usize>,
    /// Sifter expansion width override (power of two, >= 2 * d_in).
    pub d_prime: Option<usize>,
    /// Hidden width of the fusion gating MLP; defaults to 2 * d.
    pub gate_hidden: Option<usize>,
    pub head_hidden: usize,
    pub n_users: usize,
    pub n_items: usize,
    pub n_contexts: usize,
    /// One attention parameter set for all three views.
    pub share_view_attention: bool,
    /// Sift the target with the sequence sifter instead of its own.
    pub share_target_pafs: bool,
    /// Separate sequence sifter per view (default: one shared).
    pub per_view_pafs: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 16,
            num_heads: 2,
            head_dim: None,
            d_prime: None,
            gate_hidden: None,
            head_hidden: 64,
            n_users: 2000,
            n_items: 500,
            n_contexts: 16,
            share_view_attention: false,
            share_target_pafs: false,
            per_view_pafs: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.d == 0 || self.num_heads == 0 || self.head_hidden == 0 {
            return Err(CoreError::InvalidConfig("d, num_heads, head_hidden must be positive".into()));
        }
        if self.n_users == 0 || self.n_items == 0 || self.n_contexts == 0 {
            return Err(CoreError::InvalidConfig("vocab sizes must be positive".into()));
        }
        if self.head_dim.is_none() && self.d % self.num_heads != 0 {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "num_heads {} must divide d {} unless head_dim is set",
                self.num_heads,
                self.d
            )));
        }
        if self.share_target_pafs && self.per_view_pafs {
            return Err(CoreError::InvalidConfig(
                "share_target_pafs requires a single shared sequence sifter".into(),
            ));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim.unwrap_or(self.d / self.num_heads)
    }

    pub fn gate_hidden(&self) -> usize {
        self.gate_hidden.unwrap_or(2 * self.d)
    }
}

/// Which gates run, mirroring the ablation table rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct AblationConfig {
    pub asga_on: bool,
    pub gcqc_on: bool,
    pub cgdf_on: bool,
    pub asga_variant: AsgaVariant,
    pub cgdf_context: CgdfContext,
    pub second_cgu: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig::full()
    }
}

impl AblationConfig {
    pub fn full() -> Self {
        AblationConfig {
            asga_on: true,
            gcqc_on: true,
            cgdf_on: true,
            asga_variant: AsgaVariant::Full,
            cgdf_context: CgdfContext::Purified,
            second_cgu: false,
        }
    }

    /// Plain softmax target attention + static query + hard concatenation.
    pub fn baseline() -> Self {
        AblationConfig {
            asga_on: false,
            gcqc_on: false,
            cgdf_on: false,
            asga_variant: AsgaVariant::SoftmaxBaseline,
            ..AblationConfig::full()
        }
    }

    pub fn plus_asga() -> Self {
        AblationConfig { asga_on: true, gcqc_on: false, cgdf_on: false, ..AblationConfig::full() }
    }

    pub fn plus_gcqc() -> Self {
        AblationConfig { asga_on: false, gcqc_on: true, cgdf_on: false, ..AblationConfig::baseline() }
    }

    pub fn plus_cgdf() -> Self {
        AblationConfig { asga_on: false, gcqc_on: false, cgdf_on: true, ..AblationConfig::baseline() }
    }

    pub fn attention_variant(variant: AsgaVariant) -> Self {
        AblationConfig {
            asga_on: variant != AsgaVariant::SoftmaxBaseline,
            gcqc_on: false,
            cgdf_on: false,
            asga_variant: variant,
            ..AblationConfig::full()
        }
    }

    /// Attention flavor actually used: with the gated block disabled the
    /// model falls back to the plain softmax baseline attention.
    pub fn effective_variant(&self) -> AsgaVariant {
        if self.asga_on {
            self.asga_variant
        } else {
            AsgaVariant::SoftmaxBaseline
        }
    }
}

/// Test hooks threaded through the forward pass. All default to off; they
/// exist so invariants (gate closure, reduction nesting, saturation) can be
/// asserted on the assembled model rather than on isolated modules.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    /// Force every attention gate logit to a constant.
    pub asga_gate_logit: Option<f64>,
    /// Force the calibration gate z to a constant (0 = keep query).
    pub cgu_gate: Option<f64>,
    /// Bypass all feature sifters.
    pub pafs_identity: bool,
    /// Force the fusion view logits (softmax still applies).
    pub cgdf_logits: Option<[f64; 3]>,
    /// Force the fusion weights directly ([1,1,1] makes fusion the identity).
    pub cgdf_alpha: Option<[f64; 3]>,
}

// ── Parameter containers ────────────────────────────────────────────

#[derive(Clone, Debug)]
pub enum SeqSifters {
    Shared(SwiGluFfn),
    PerView { rt: SwiGluFfn, st: SwiGluFfn, lt: SwiGluFfn },
}

#[derive(Clone, Debug)]
pub enum ViewParams {
    Shared(AsgaParams),
    PerView { rt: AsgaParams, st: AsgaParams, lt: AsgaParams },
}

/// Every learnable weight of the model, addressable by a dotted path.
#[derive(Clone, Debug)]
pub struct GapNetParams {
    pub config: ModelConfig,
    pub embed_user: Param,
    pub embed_item: Param,
    pub embed_ctx: Param,
    /// Target sifter; `None` when the target shares the sequence sifter.
    pub pafs_target: Option<SwiGluFfn>,
    pub pafs_seq: SeqSifters,
    pub attn: ViewParams,
    pub cgu: CguParams,
    pub cgu2: Option<CguParams>,
    pub cgdf: CgdfParams,
    pub head: Mlp,
}

impl GapNetParams {
    pub fn new(
        config: &ModelConfig,
        ablation: &AblationConfig,
        rng: &mut SplitMix64,
    ) -> Result<Self, CoreError> {
        config.validate()?;
        let d = config.d;
        let dk = config.head_dim();

        // Embedding tables are lookup rows, not matmul weights: fan over the
        // embedding dim alone. Table-as-matrix fans (vocab, d) shrink rows by
        // ~sqrt(vocab) and the multiplicative sifter paths square that deficit,
        // starving the behavioral signal at this scale.
        let embed_user = xavier_init(&[config.n_users, d], d, d, rng);
        let embed_item = xavier_init(&[config.n_items, d], d, d, rng);
        let embed_ctx = xavier_init(&[config.n_contexts, d], d, d, rng);

        let pafs_target = if config.share_target_pafs {
            None
        } else {
            Some(SwiGluFfn::new(d, d, config.d_prime, rng)?)
        };
        let pafs_seq = if config.per_view_pafs {
            SeqSifters::PerView {
                rt: SwiGluFfn::new(d, d, config.d_prime, rng)?,
                st: SwiGluFfn::new(d, d, config.d_prime, rng)?,
                lt: SwiGluFfn::new(d, d, config.d_prime, rng)?,
            }
        } else {
            SeqSifters::Shared(SwiGluFfn::new(d, d, config.d_prime, rng)?)
        };

        let attn = if config.share_view_attention {
            ViewParams::Shared(AsgaParams::new(d, config.num_heads, dk, rng))
        } else {
            ViewParams::PerView {
                rt: AsgaParams::new(d, config.num_heads, dk, rng),
                st: AsgaParams::new(d, config.num_heads, dk, rng),
                lt: AsgaParams::new(d, config.num_heads, dk, rng),
            }
        };

        let cgu = CguParams::new(d, rng);
        let cgu2 = if ablation.second_cgu { Some(CguParams::new(d, rng)) } else { None };
        let cgdf = CgdfParams::new(d, ablation.cgdf_context, config.gate_hidden(), rng)?;
        // head consumes concat(fused 3d, e_u, e_c, sifted target)
        let head = Mlp::new(&[6 * d, config.head_hidden, 1], rng);

        Ok(GapNetParams {
            config: config.clone(),
            embed_user,
            embed_item,
            embed_ctx,
            pafs_target,
            pafs_seq,
            attn,
            cgu,
            cgu2,
            cgdf,
            head,
        })
    }

    pub fn visit(&self, f: &mut dyn FnMut(String, &Param)) {
        f("embed.user".into(), &self.embed_user);
        f("embed.item".into(), &self.embed_item);
        f("embed.ctx".into(), &self.embed_ctx);
        if let Some(p) = &self.pafs_target {
            p.visit("pafs.target", f);
        }
        match &self.pafs_seq {
            SeqSifters::Shared(p) => p.visit("pafs.seq", f),
            SeqSifters::PerView { rt, st, lt } => {
                rt.visit("pafs.seq_rt", f);
                st.visit("pafs.seq_st", f);
                lt.visit("pafs.seq_lt", f);
            }
        }
        match &self.attn {
            ViewParams::Shared(p) => p.visit("attn.shared", f),
            ViewParams::PerView { rt, st, lt } => {
                rt.visit("attn.rt", f);
                st.visit("attn.st", f);
                lt.visit("attn.lt", f);
            }
        }
        self.cgu.visit("cgu", f);
        if let Some(c) = &self.cgu2 {
            c.visit("cgu2", f);
        }
        self.cgdf.visit("cgdf", f);
        self.head.visit("head", f);
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(String, &mut Param)) {
        f("embed.user".into(), &mut self.embed_user);
        f("embed.item".into(), &mut self.embed_item);
        f("embed.ctx".into(), &mut self.embed_ctx);
        if let Some(p) = &mut self.pafs_target {
            p.visit_mut("pafs.target", f);
        }
        match &mut self.pafs_seq {
            SeqSifters::Shared(p) => p.visit_mut("pafs.seq", f),
            SeqSifters::PerView { rt, st, lt } => {
                rt.visit_mut("pafs.seq_rt", f);
                st.visit_mut("pafs.seq_st", f);
                lt.visit_mut("pafs.seq_lt", f);
            }
        }
        match &mut self.attn {
            ViewParams::Shared(p) => p.visit_mut("attn.shared", f),
            ViewParams::PerView { rt, st, lt } => {
                rt.visit_mut("attn.rt", f);
                st.visit_mut("attn.st", f);
                lt.visit_mut("attn.lt", f);
            }
        }
        self.cgu.visit_mut("cgu", f);
        if let Some(c) = &mut self.cgu2 {
            c.visit_mut("cgu2", f);
        }
        self.cgdf.visit_mut("cgdf", f);
        self.head.visit_mut("head", f);
    }

    pub fn paths(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |path, _| out.push(path));
        out
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, p| n += p.numel());
        n
    }

    /// Copy every parameter onto a tape as leaves for one forward/backward.
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        BoundModel {
            d: self.config.d,
            embed_user: self.embed_user.bind(tape),
            embed_item: self.embed_item.bind(tape),
            embed_ctx: self.embed_ctx.bind(tape),
            pafs_target: self.pafs_target.as_ref().map(|p| p.bind(tape)),
            pafs_seq: match &self.pafs_seq {
                SeqSifters::Shared(p) => {
                    let b = p.bind(tape);
                    [b, b, b]
                }
                SeqSifters::PerView { rt, st, lt } => [rt.bind(tape), st.bind(tape), lt.bind(tape)],
            },
            attn: match &self.attn {
                ViewParams::Shared(p) => {
                    let b = p.bind(tape);
                    [b, b, b]
                }
                ViewParams::PerView { rt, st, lt } => [rt.bind(tape), st.bind(tape), lt.bind(tape)],
            },
            cgu: self.cgu.bind(tape),
            cgu2: self.cgu2.as_ref().map(|c| c.bind(tape)),
            cgdf: self.cgdf.bind(tape),
            head: self.head.bind(tape),
            shared_pafs: matches!(self.pafs_seq, SeqSifters::Shared(_)),
            shared_attn: matches!(self.attn, ViewParams::Shared(_)),
        }
    }
}

/// Tape handles mirroring `GapNetParams` for one forward pass.
pub struct BoundModel {
    pub d: usize,
    pub embed_user: TensorId,
    pub embed_item: TensorId,
    pub embed_ctx: TensorId,
    pub pafs_target: Option<BoundSwiGlu>,
    pub pafs_seq: [BoundSwiGlu; 3], // rt, st, lt (may alias when shared)
    pub attn: [BoundAsga; 3],
    pub cgu: BoundCgu,
    pub cgu2: Option<BoundCgu>,
    pub cgdf: BoundCgdf,
    pub head: BoundMlp,
    shared_pafs: bool,
    shared_attn: bool,
}

impl BoundModel {
    /// Visit bound leaves in the same order and with the same paths as
    /// `GapNetParams::visit`.
    pub fn visit(&self, f: &mut dyn FnMut(String, TensorId)) {
        f("embed.user".into(), self.embed_user);
        f("embed.item".into(), self.embed_item);
        f("embed.ctx".into(), self.embed_ctx);
        if let Some(p) = &self.pafs_target {
            p.visit("pafs.target", f);
        }
        if self.shared_pafs {
            self.pafs_seq[0].visit("pafs.seq", f);
        } else {
            self.pafs_seq[0].visit("pafs.seq_rt", f);
            self.pafs_seq[1].visit("pafs.seq_st", f);
            self.pafs_seq[2].visit("pafs.seq_lt", f);
        }
        if self.shared_attn {
            self.attn[0].visit("attn.shared", f);
        } else {
            self.attn[0].visit("attn.rt", f);
            self.attn[1].visit("attn.st", f);
            self.attn[2].visit("attn.lt", f);
        }
        self.cgu.visit("cgu", f);
        if let Some(c) = &self.cgu2 {
            c.visit("cgu2", f);
        }
        self.cgdf.visit("cgdf", f);
        self.head.visit("head", f);
    }

    /// Pull gradients off the tape, keyed by parameter path.
    pub fn collect_grads(&self, tape: &Tape) -> BTreeMap<String, Vec<f64>> {
        let mut out = BTreeMap::new();
        self.visit(&mut |path, id| {
            let g = tape.grad(id).map(|g| g.to_vec()).unwrap_or_default();
            out.insert(path, g);
        });
        out
    }
}

/// Per-instance forward diagnostics alongside the differentiable output.
#[derive(Debug)]
pub struct ForwardOutput {
    /// Predicted probability, shape [1], on the tape.
    pub prob: TensorId,
    /// Fusion weights when the fusion gate ran.
    pub view_weights: Option<[f64; 3]>,
    /// Calibration gate values when the cascade ran.
    pub update_gate: Vec<f64>,
}

fn check_vocab(config: &ModelConfig, inst: &Instance) -> Result<(), CoreError> {
    let check = |field: &'static str, id: u32, vocab: usize| {
        if (id as usize) < vocab {
            Ok(())
        } else {
            Err(CoreError::OutOfVocab { field, id, vocab })
        }
    };
    check("user_id", inst.user_id, config.n_users)?;
    check("context_id", inst.context_id, config.n_contexts)?;
    check("target_item_id", inst.target_item_id, config.n_items)?;
    for &id in &inst.seq_rt {
        check("seq_rt", id, config.n_items)?;
    }
    for &id in &inst.seq_st {
        check("seq_st", id, config.n_items)?;
    }
    for &id in &inst.seq_lt {
        check("seq_lt", id, config.n_items)?;
    }
    Ok(())
}

/// One instance through the configured pipeline. The tape accumulates ops;
/// bind once per tape and call this per instance of the batch.
pub fn forward(
    tape: &mut Tape,
    params: &GapNetParams,
    bound: &BoundModel,
    ablation: &AblationConfig,
    inst: &Instance,
    hooks: &Overrides,
) -> Result<ForwardOutput, CoreError> {
    check_vocab(&params.config, inst)?;
    if ablation.cgdf_on {
        let anchor = ablation.cgdf_context.anchor_multiplier() * params.config.d;
        let built = params.cgdf.gate_mlp.layers[0].w.shape[0];
        if anchor != built {
            return Err(CoreError::InvalidConfig(alloc::format!(
                "fusion params built for anchor width {built}, requested {anchor}"
            )));
        }
    }
    if ablation.second_cgu && bound.cgu2.is_none() {
        return Err(CoreError::InvalidConfig("second_cgu requested but not allocated".into()));
    }

    let variant = ablation.effective_variant();
    let sift = variant.uses_pafs() && !hooks.pafs_identity;
    let mode = AttendMode::from_variant(variant, hooks.asga_gate_logit);

    let e_user = tape.gather_row(bound.embed_user, inst.user_id as usize);
    let e_ctx = tape.gather_row(bound.embed_ctx, inst.context_id as usize);
    let e_target = tape.gather_row(bound.embed_item, inst.target_item_id as usize);

    let ids = |seq: &[u32]| seq.iter().map(|&i| i as usize).collect::<Vec<_>>();
    let seq_rt = tape.gather_rows(bound.embed_item, &ids(&inst.seq_rt));
    let seq_st = tape.gather_rows(bound.embed_item, &ids(&inst.seq_st));
    let seq_lt = tape.gather_rows(bound.embed_item, &ids(&inst.seq_lt));

    let target_sifted = if sift {
        let sifter = bound.pafs_target.as_ref().unwrap_or(&bound.pafs_seq[0]);
        sifter.forward(tape, e_target)
    } else {
        e_target
    };

    let sift_seq = |tape: &mut Tape, sifter: &BoundSwiGlu, seq: TensorId| {
        if sift && tape.shape(seq)[0] > 0 {
            sifter.forward(tape, seq)
        } else {
            seq
        }
    };
    let seq_rt = sift_seq(tape, &bound.pafs_seq[0], seq_rt);
    let seq_st = sift_seq(tape, &bound.pafs_seq[1], seq_st);
    let seq_lt = sift_seq(tape, &bound.pafs_seq[2], seq_lt);

    let attn = ViewAttention { rt: bound.attn[0], st: bound.attn[1], lt: bound.attn[2], mode };
    let cgu_opt = if ablation.gcqc_on { Some(&bound.cgu) } else { None };
    let cgu2_opt = if ablation.second_cgu { bound.cgu2.as_ref() } else { None };
    let cascade = gcqc::forward(
        tape,
        &attn,
        cgu_opt,
        cgu2_opt,
        target_sifted,
        seq_rt,
        seq_st,
        seq_lt,
        &vec![true; inst.seq_rt.len()],
        &vec![true; inst.seq_st.len()],
        &vec![true; inst.seq_lt.len()],
        hooks.cgu_gate,
    );

    let (fused, view_weights) = if ablation.cgdf_on {
        let fusion = cgdf::fuse(
            tape,
            &bound.cgdf,
            ablation.cgdf_context,
            &FusionInputs {
                target_sifted,
                user: e_user,
                ctx: e_ctx,
                pooled_rt: cascade.pooled_rt,
                pooled_st: cascade.pooled_st,
                pooled_lt: cascade.pooled_lt,
            },
            &FusionHooks { logit_override: hooks.cgdf_logits, alpha_override: hooks.cgdf_alpha },
        );
        (fusion.fused, Some(fusion.view_weights))
    } else {
        let fused =
            tape.concat_lastdim(&[cascade.pooled_rt, cascade.pooled_st, cascade.pooled_lt]);
        (fused, None)
    };

    let head_in = tape.concat_lastdim(&[fused, e_user, e_ctx, target_sifted]);
    let logit = bound.head.forward(tape, head_in);
    let logit = tape.clamp(logit, -LOGIT_CLAMP, LOGIT_CLAMP);
    let prob = tape.sigmoid(logit);

    Ok(ForwardOutput { prob, view_weights, update_gate: cascade.update_gate })
}

/// Mean binary cross-entropy over a batch of per-instance probability
/// tensors: -mean(y log p + (1-y) log(1-p)), with p clamped away from 0/1.
pub fn bce_loss(tape: &mut Tape, probs: &[TensorId], labels: &[u8]) -> TensorId {
    assert_eq!(probs.len(), labels.len(), "probs/labels length mismatch");
    assert!(!probs.is_empty(), "BCE over an empty batch");
    let mut terms = Vec::with_capacity(probs.len());
    for (&p, &y) in probs.iter().zip(labels) {
        let p = tape.clamp(p, BCE_EPS, 1.0 - BCE_EPS);
        let term = if y == 1 {
            tape.log(p)
        } else {
            let one = tape.scalar(1.0);
            let q = tape.sub(one, p);
            tape.log(q)
        };
        terms.push(term);
    }
    let stacked = tape.concat_lastdim(&terms);
    let mean = tape.mean(stacked);
    tape.scale(mean, -1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            d: 8,
            head_hidden: 16,
            n_users: 20,
            n_items: 30,
            n_contexts: 5,
            ..ModelConfig::default()
        }
    }

    fn sample_instance(rng: &mut SplitMix64, cfg: &ModelConfig) -> Instance {
        Instance {
            request_id: rng.below(100) as u64,
            user_id: rng.below(cfg.n_users) as u32,
            context_id: rng.below(cfg.n_contexts) as u32,
            target_item_id: rng.below(cfg.n_items) as u32,
            seq_rt: (0..3).map(|_| rng.below(cfg.n_items) as u32).collect(),
            seq_st: (0..5).map(|_| rng.below(cfg.n_items) as u32).collect(),
            seq_lt: (0..7).map(|_| rng.below(cfg.n_items) as u32).collect(),
            label: rng.below(2) as u8,
        }
    }

    fn run_forward(
        params: &GapNetParams,
        ablation: &AblationConfig,
        inst: &Instance,
        hooks: &Overrides,
    ) -> f64 {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let out = forward(&mut tape, params, &bound, ablation, inst, hooks).unwrap();
        tape.value(out.prob)
    }

    #[test]
    fn zeroed_head_predicts_half() {
        let cfg = tiny_config();
        let mut rng = SplitMix64::new(1);
        let mut params = GapNetParams::new(&cfg, &AblationConfig::full(), &mut rng).unwrap();
        for layer in params.head.layers.iter_mut() {
            layer.w.data.iter_mut().for_each(|v| *v = 0.0);
            layer.b.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let inst = sample_instance(&mut rng, &cfg);
        let prob = run_forward(&params, &AblationConfig::full(), &inst, &Overrides::default());
        assert_eq!(prob, 0.5);
    }

    #[test]
    fn empty_sequences_use_static_features_only() {
        let cfg = tiny_config();
        let mut rng = SplitMix64::new(2);
        let params = GapNetParams::new(&cfg, &AblationConfig::baseline(), &mut rng).unwrap();
        let mut inst = sample_instance(&mut rng, &cfg);
        inst.seq_rt.clear();
        inst.seq_st.clear();
        inst.seq_lt.clear();
        let prob = run_forward(&params, &AblationConfig::baseline(), &inst, &Overrides::default());
        assert!(prob > 0.0 && prob < 1.0);
        // repeat run is bit-identical
        let again = run_forward(&params, &AblationConfig::baseline(), &inst, &Overrides::default());
        assert_eq!(prob.to_bits(), again.to_bits());
    }

    #[test]
    fn out_of_vocab_errors_name_the_field() {
        let cfg = tiny_config();
        let mut rng = SplitMix64::new(3);
        let params = GapNetParams::new(&cfg, &AblationConfig::full(), &mut rng).unwrap();
        let mut inst = sample_instance(&mut rng, &cfg);
        inst.seq_st[0] = cfg.n_items as u32 + 7;
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let err = forward(&mut tape, &params, &bound, &AblationConfig::full(), &inst, &Overrides::default())
            .unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("seq_st"), "error should name the field: {msg}");
    }

    #[test]
    fn bound_paths_match_param_paths() {
        let cfg = tiny_config();
        let mut rng = SplitMix64::new(4);
        for ablation in [AblationConfig::full(), AblationConfig::baseline()] {
            let params = GapNetParams::new(&cfg, &ablation, &mut rng).unwrap();
            let param_paths = params.paths();
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let mut bound_paths = Vec::new();
            bound.visit(&mut |path, _| bound_paths.push(path));
            assert_eq!(param_paths, bound_paths);
            // paths are unique
            let mut sorted = param_paths.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(sorted.len(), param_paths.len());
        }
    }

    #[test]
    fn shared_attention_binds_one_parameter_set() {
        let cfg = ModelConfig { share_view_attention: true, ..tiny_config() };
        let mut rng = SplitMix64::new(5);
        let params = GapNetParams::new(&cfg, &AblationConfig::full(), &mut rng).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        assert_eq!(bound.attn[0].w_query, bound.attn[1].w_query);
        assert_eq!(bound.attn[1].w_query, bound.attn[2].w_query);
        assert!(params.paths().iter().any(|p| p.starts_with("attn.shared")));
    }

    #[test]
    fn gate_closure_makes_predictions_sequence_independent() {
        let cfg = tiny_config();
        let mut rng = SplitMix64::new(6);
        let params = GapNetParams::new(&cfg, &AblationConfig::full(), &mut rng).unwrap();
        let hooks = Overrides { asga_gate_logit: Some(-30.0), ..Overrides::default() };
        let base = sample_instance(&mut rng, &cfg);
        let p0 = run_forward(&params, &AblationConfig::full(), &base, &hooks);
        for _ in 0..10 {
            let mut other = base.clone();
            other.seq_rt = (0..3).map(|_| rng.below(cfg.n_items) as u32).collect();
            other.seq_st = (0..5).map(|_| rng.below(cfg.n_items) as u32).collect();
            other.seq_lt = (0..7).map(|_| rng.below(cfg.n_items) as u32).collect();
            let p = run_forward(&params, &AblationConfig::full(), &other, &hooks);
            assert!((p - p0).abs() < 1e-6, "sequence leak through closed gates: {p} vs {p0}");
        }
    }

    #[test]
    fn reduction_nesting_full_equals_baseline_under_hooks() {
        let cfg = tiny_config();
        let mut rng = SplitMix64::new(7);
        let params = GapNetParams::new(&cfg, &AblationConfig::full(), &mut rng).unwrap();
        let hooks = Overrides {
            asga_gate_logit: Some(1e9), // sigmoid saturates to exactly 1
            cgu_gate: Some(0.0),
            pafs_identity: true,
            cgdf_alpha: Some([1.0, 1.0, 1.0]),
            cgdf_logits: None,
        };
        for _ in 0..10 {
            let inst = sample_instance(&mut rng, &cfg);
            let full = run_forward(&params, &AblationConfig::full(), &inst, &hooks);
            let base = run_forward(&params, &AblationConfig::baseline(), &inst, &Overrides::default());
            assert!((full - base).abs() <= 1e-9, "nesting violated: {full} vs {base}");
        }
    }

    #[test]
    fn bce_loss_matches_analytic_values() {
        // prob == label (post-clamp) -> loss at the 1e-7 clamp scale
        let mut t = Tape::new();
        let hi = t.scalar(1.0);
        let lo = t.scalar(0.0);
        let loss = bce_loss(&mut t, &[hi, lo], &[1, 0]);
        assert!(t.value(loss) < 1e-6);

        // prob = 0.5 everywhere -> ln 2
        let mut t = Tape::new();
        let a = t.scalar(0.5);
        let b = t.scalar(0.5);
        let loss = bce_loss(&mut t, &[a, b], &[1, 0]);
        assert!((t.value(loss) - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_loss_matches_loop_oracle() {
        let mut rng = SplitMix64::new(8);
        let probs: Vec<f64> = (0..16).map(|_| rng.uniform(0.02, 0.98)).collect();
        let labels: Vec<u8> = (0..16).map(|_| rng.below(2) as u8).collect();

        let mut expect = 0.0;
        for (&p, &y) in probs.iter().zip(&labels) {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            expect -= if y == 1 { crate::math::ln(p) } else { crate::math::ln(1.0 - p) };
        }
        expect /= probs.len() as f64;

        let mut t = Tape::new();
        let ids: Vec<TensorId> = probs.iter().map(|&p| t.scalar(p)).collect();
        let loss = bce_loss(&mut t, &ids, &labels);
        assert!((t.value(loss) - expect).abs() < 1e-12);
    }

    #[test]
    fn every_ablation_preset_runs() {
        let cfg = tiny_config();
        let mut rng = SplitMix64::new(9);
        let presets = [
            AblationConfig::baseline(),
            AblationConfig::plus_asga(),
            AblationConfig::plus_gcqc(),
            AblationConfig::plus_cgdf(),
            AblationConfig::full(),
            AblationConfig::attention_variant(AsgaVariant::NaiveSigmoid),
            AblationConfig::attention_variant(AsgaVariant::NoPafs),
            AblationConfig::attention_variant(AsgaVariant::NoQgg),
        ];
        for ablation in presets {
            let params = GapNetParams::new(&cfg, &ablation, &mut rng).unwrap();
            let inst = sample_instance(&mut rng, &cfg);
            let prob = run_forward(&params, &ablation, &inst, &Overrides::default());
            assert!(prob > 0.0 && prob < 1.0, "{ablation:?} produced {prob}");
        }
    }

    #[test]
    fn second_cgu_allocates_and_runs() {
        let cfg = tiny_config();
        let mut rng = SplitMix64::new(10);
        let ablation = AblationConfig { second_cgu: true, ..AblationConfig::full() };
        let params = GapNetParams::new(&cfg, &ablation, &mut rng).unwrap();
        assert!(params.paths().iter().any(|p| p.starts_with("cgu2")));
        let inst = sample_instance(&mut rng, &cfg);
        let prob = run_forward(&params, &ablation, &inst, &Overrides::default());
        assert!(prob > 0.0 && prob < 1.0);
    }
}
