//! Gated cascading query calibration.
//!
//! The target query is not a fixed anchor: it first retrieves from the
//! real-time view, a calibration gating unit (CGU) blends that context into
//! the query as a convex combination, and the calibrated query then drives
//! retrieval over the short- and long-term views. If the real-time context
//! is irrelevant the gate closes and everything degrades gracefully to
//! static-query retrieval.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::asga::{self, AttendMode, BoundAsga};
use crate::layers::{xavier_init, Param};
use crate::rng::SplitMix64;
use crate::tensor::{Tape, TensorId};

/// Convex update gate: z = sigmoid([q; h] W + b), blending the previous
/// query with retrieved context.
#[derive(Clone, Debug)]
pub struct CguParams {
    pub w_gate: Param, // [2d, d]
    pub b_gate: Param, // [d]
}

impl CguParams {
    pub fn new(d: usize, rng: &mut SplitMix64) -> Self {
        CguParams { w_gate: xavier_init(&[2 * d, d], 2 * d, d, rng), b_gate: Param::zeros(&[d]) }
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundCgu {
        BoundCgu { w_gate: self.w_gate.bind(tape), b_gate: self.b_gate.bind(tape) }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        f(alloc::format!("{prefix}.w_gate"), &self.w_gate);
        f(alloc::format!("{prefix}.b_gate"), &self.b_gate);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(alloc::format!("{prefix}.w_gate"), &mut self.w_gate);
        f(alloc::format!("{prefix}.b_gate"), &mut self.b_gate);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundCgu {
    pub w_gate: TensorId,
    pub b_gate: TensorId,
}

impl BoundCgu {
    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, TensorId)) {
        f(alloc::format!("{prefix}.w_gate"), self.w_gate);
        f(alloc::format!("{prefix}.b_gate"), self.b_gate);
    }
}

/// z = sigmoid([q; h] W + b); q_new = (1 - z) ⊙ q + z ⊙ h.
///
/// `gate_override` replaces z by a constant vector (0.0 closes the gate and
/// preserves q exactly, 1.0 swaps in h exactly).
pub fn cgu_update(
    tape: &mut Tape,
    cgu: &BoundCgu,
    q: TensorId,
    h: TensorId,
    gate_override: Option<f64>,
) -> (TensorId, TensorId) {
    assert_eq!(
        tape.shape(q),
        tape.shape(h),
        "CGU dim mismatch: {:?} vs {:?}",
        tape.shape(q),
        tape.shape(h)
    );
    let dim = tape.shape(q)[0];

    let z = match gate_override {
        Some(v) => tape.leaf(vec![v; dim], &[dim]),
        None => {
            let joint = tape.concat_lastdim(&[q, h]);
            let pre = tape.matmul(joint, cgu.w_gate);
            let pre = tape.add_bias(pre, cgu.b_gate);
            tape.sigmoid(pre)
        }
    };
    let ones = tape.leaf(vec![1.0; dim], &[dim]);
    let keep = tape.sub(ones, z);
    let kept = tape.mul(keep, q);
    let injected = tape.mul(z, h);
    let q_new = tape.add(kept, injected);
    (q_new, z)
}

/// Bound attention for the three temporal views. `rt`, `st`, `lt` may alias
/// the same parameters when view sharing is configured.
#[derive(Clone, Copy, Debug)]
pub struct ViewAttention {
    pub rt: BoundAsga,
    pub st: BoundAsga,
    pub lt: BoundAsga,
    pub mode: AttendMode,
}

pub struct GcqcOutput {
    /// Query after calibration (equals the input query in static mode).
    pub calibrated_query: TensorId,
    pub pooled_rt: TensorId,
    pub pooled_st: TensorId,
    pub pooled_lt: TensorId,
    /// Update-gate values (diagnostic); empty in static mode.
    pub update_gate: Vec<f64>,
}

/// Run the three-view cascade with an already-sifted query and sequences.
///
/// `cgu = None` disables calibration: all views are queried with `q0`
/// (the static-query ablation). `second_cgu` optionally re-calibrates after
/// the short-term stage and feeds the result to the long-term stage.
#[allow(clippy::too_many_arguments)]
pub fn forward(
    tape: &mut Tape,
    attn: &ViewAttention,
    cgu: Option<&BoundCgu>,
    second_cgu: Option<&BoundCgu>,
    q0: TensorId,
    seq_rt: TensorId,
    seq_st: TensorId,
    seq_lt: TensorId,
    mask_rt: &[bool],
    mask_st: &[bool],
    mask_lt: &[bool],
    gate_override: Option<f64>,
) -> GcqcOutput {
    let rt_out = asga::attend(tape, &attn.rt, q0, seq_rt, mask_rt, attn.mode);
    let pooled_rt = rt_out.pooled;

    let (query, update_gate) = match cgu {
        Some(bound) => {
            let (q_rt, z) = cgu_update(tape, bound, q0, pooled_rt, gate_override);
            (q_rt, tape.data(z).to_vec())
        }
        None => (q0, Vec::new()),
    };

    let st_out = asga::attend(tape, &attn.st, query, seq_st, mask_st, attn.mode);
    let pooled_st = st_out.pooled;

    let lt_query = match (cgu, second_cgu) {
        (Some(_), Some(bound)) => {
            let (q_st, _) = cgu_update(tape, bound, query, pooled_st, gate_override);
            q_st
        }
        _ => query,
    };
    let lt_out = asga::attend(tape, &attn.lt, lt_query, seq_lt, mask_lt, attn.mode);

    GcqcOutput {
        calibrated_query: query,
        pooled_rt,
        pooled_st,
        pooled_lt: lt_out.pooled,
        update_gate,
    }
}
