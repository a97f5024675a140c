//! Context-gated denoising fusion.
//!
//! Builds a decision anchor from the sifted target, context embedding, and
//! the three pooled view vectors, optionally purifies it with a SwiGLU-FFN,
//! projects it to three view logits, and emits the softmax-weighted
//! concatenation of the views. The weights sum to one, so an irrelevant
//! temporal window can be driven toward zero instead of diluting the rest.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::layers::{xavier_init, Mlp, Param, SwiGluFfn};
use crate::rng::SplitMix64;
use crate::tensor::{Tape, TensorId};

/// Composition of the decision anchor fed to the gating network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CgdfContext {
    /// Target and pooled views only (4d), no purifier.
    Minimalist,
    /// Adds raw user and context embeddings (6d), no purifier.
    Full,
    /// Target, context, pooled views (5d) run through the purifier.
    Purified,
}

impl CgdfContext {
    /// Anchor width in multiples of d.
    pub fn anchor_multiplier(self) -> usize {
        match self {
            CgdfContext::Minimalist => 4,
            CgdfContext::Full => 6,
            CgdfContext::Purified => 5,
        }
    }

    pub fn purifies(self) -> bool {
        self == CgdfContext::Purified
    }
}

/// Fusion parameters. The purifier is allocated only for the purified
/// context variant; the gating MLP input width follows the anchor width.
#[derive(Clone, Debug)]
pub struct CgdfParams {
    pub purifier: Option<SwiGluFfn>, // [anchor -> anchor]
    pub gate_mlp: Mlp,               // [anchor, 2d, d] with swish hidden
    pub view_logits: Param,          // [d, 3]
}

impl CgdfParams {
    pub fn new(
        d: usize,
        context: CgdfContext,
        gate_hidden: usize,
        rng: &mut SplitMix64,
    ) -> Result<Self, CoreError> {
        let anchor = context.anchor_multiplier() * d;
        let purifier = if context.purifies() {
            Some(SwiGluFfn::new(anchor, anchor, None, rng)?)
        } else {
            None
        };
        Ok(CgdfParams {
            purifier,
            gate_mlp: Mlp::new(&[anchor, gate_hidden, d], rng),
            view_logits: xavier_init(&[d, 3], d, 3, rng),
        })
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundCgdf {
        BoundCgdf {
            purifier: self.purifier.as_ref().map(|p| p.bind(tape)),
            gate_mlp: self.gate_mlp.bind(tape),
            view_logits: self.view_logits.bind(tape),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        if let Some(p) = &self.purifier {
            p.visit(&alloc::format!("{prefix}.purifier"), f);
        }
        self.gate_mlp.visit(&alloc::format!("{prefix}.gate"), f);
        f(alloc::format!("{prefix}.view_logits"), &self.view_logits);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        if let Some(p) = &mut self.purifier {
            p.visit_mut(&alloc::format!("{prefix}.purifier"), f);
        }
        self.gate_mlp.visit_mut(&alloc::format!("{prefix}.gate"), f);
        f(alloc::format!("{prefix}.view_logits"), &mut self.view_logits);
    }
}

#[derive(Clone, Debug)]
pub struct BoundCgdf {
    pub purifier: Option<crate::layers::BoundSwiGlu>,
    pub gate_mlp: crate::layers::BoundMlp,
    pub view_logits: TensorId,
}

impl BoundCgdf {
    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, TensorId)) {
        if let Some(p) = &self.purifier {
            p.visit(&alloc::format!("{prefix}.purifier"), f);
        }
        self.gate_mlp.visit(&alloc::format!("{prefix}.gate"), f);
        f(alloc::format!("{prefix}.view_logits"), self.view_logits);
    }
}

/// Test hooks: force the view logits or bypass the softmax entirely.
#[derive(Clone, Copy, Debug, Default)]
pub struct FusionHooks {
    /// Replace the learned logits; alpha still goes through softmax.
    pub logit_override: Option<[f64; 3]>,
    /// Replace alpha itself (e.g. [1,1,1] to make fusion the identity).
    pub alpha_override: Option<[f64; 3]>,
}

pub struct FusionInputs {
    pub target_sifted: TensorId,
    pub user: TensorId,
    pub ctx: TensorId,
    pub pooled_rt: TensorId,
    pub pooled_st: TensorId,
    pub pooled_lt: TensorId,
}

pub struct FusionOutput {
    /// concat(alpha_rt * H_rt, alpha_st * H_st, alpha_lt * H_lt), width 3d.
    pub fused: TensorId,
    /// View weights (diagnostic copy of alpha).
    pub view_weights: [f64; 3],
}

/// Weighted-concatenation fusion of the three pooled views.
pub fn fuse(
    tape: &mut Tape,
    params: &BoundCgdf,
    context: CgdfContext,
    inputs: &FusionInputs,
    hooks: &FusionHooks,
) -> FusionOutput {
    let anchor = match context {
        CgdfContext::Minimalist => tape.concat_lastdim(&[
            inputs.target_sifted,
            inputs.pooled_rt,
            inputs.pooled_st,
            inputs.pooled_lt,
        ]),
        CgdfContext::Full => tape.concat_lastdim(&[
            inputs.target_sifted,
            inputs.user,
            inputs.ctx,
            inputs.pooled_rt,
            inputs.pooled_st,
            inputs.pooled_lt,
        ]),
        CgdfContext::Purified => tape.concat_lastdim(&[
            inputs.target_sifted,
            inputs.ctx,
            inputs.pooled_rt,
            inputs.pooled_st,
            inputs.pooled_lt,
        ]),
    };

    let denoised = match (&params.purifier, context.purifies()) {
        (Some(p), true) => p.forward(tape, anchor),
        _ => anchor,
    };
    let h_gate = params.gate_mlp.forward(tape, denoised);

    let alpha = match hooks.alpha_override {
        Some(a) => tape.leaf(a.to_vec(), &[3]),
        None => {
            let logits = match hooks.logit_override {
                Some(l) => tape.leaf(l.to_vec(), &[3]),
                None => tape.matmul(h_gate, params.view_logits),
            };
            tape.softmax_lastdim(logits)
        }
    };

    let views = [inputs.pooled_rt, inputs.pooled_st, inputs.pooled_lt];
    let mut segments = Vec::with_capacity(3);
    for (k, &view) in views.iter().enumerate() {
        let weight = tape.slice_lastdim(alpha, k, 1);
        segments.push(tape.mul_scalar(view, weight));
    }
    let fused = tape.concat_lastdim(&segments);

    let a = tape.data(alpha);
    FusionOutput { fused, view_weights: [a[0], a[1], a[2]] }
}
