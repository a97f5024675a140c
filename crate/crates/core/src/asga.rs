//! Adaptive sparse-gated attention.
//!
//! Multi-head target attention over one behavior view. The query projection
//! is widened to 2 * d_k per head and split into the query proper and a gate
//! logit; the pooled attention output of each head is multiplied by the
//! sigmoid of its gate before head concatenation and output projection.
//! With the gate driven far negative the history is effectively ignored,
//! which is the "soft rejection" escape hatch that plain softmax attention
//! lacks.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::layers::{xavier_init, Param};
use crate::rng::SplitMix64;
use crate::tensor::{Tape, TensorId};

/// Additive logit bias for masked positions. exp(-1e9) underflows to zero,
/// so masked positions carry exactly zero weight under both activations.
pub const MASK_BIAS: f64 = -1e9;

/// Attention activation over the (scaled, masked) logits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum AttnActivation {
    Softmax,
    Sigmoid,
}

/// Attention flavor used in the ablation study. `Full` is the gated
/// mechanism; the others strip one ingredient each, down to the plain
/// softmax target attention that serves as the no-gates baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AsgaVariant {
    /// Standard softmax target attention, linear Q/K/V, no gate, no sifting.
    SoftmaxBaseline,
    /// Baseline with softmax swapped for an elementwise sigmoid.
    NaiveSigmoid,
    /// Gated attention without the pre-attention feature sifter.
    NoPafs,
    /// Sifted attention without the query-guided output gate.
    NoQgg,
    Full,
}

impl AsgaVariant {
    pub fn uses_pafs(self) -> bool {
        matches!(self, AsgaVariant::Full | AsgaVariant::NoQgg)
    }

    pub fn gated(self) -> bool {
        matches!(self, AsgaVariant::Full | AsgaVariant::NoPafs)
    }

    pub fn activation(self) -> AttnActivation {
        if self == AsgaVariant::NaiveSigmoid {
            AttnActivation::Sigmoid
        } else {
            AttnActivation::Softmax
        }
    }
}

/// How one attend call behaves; derived from the ablation variant plus
/// any test override forcing the gate logits to a constant.
#[derive(Clone, Copy, Debug)]
pub struct AttendMode {
    pub activation: AttnActivation,
    pub gated: bool,
    pub gate_logit_override: Option<f64>,
}

impl AttendMode {
    pub fn from_variant(variant: AsgaVariant, gate_logit_override: Option<f64>) -> Self {
        AttendMode { activation: variant.activation(), gated: variant.gated(), gate_logit_override }
    }

    pub fn full() -> Self {
        AttendMode { activation: AttnActivation::Softmax, gated: true, gate_logit_override: None }
    }
}

/// Projection weights for one attention block.
#[derive(Clone, Debug)]
pub struct AsgaParams {
    pub num_heads: usize,
    pub head_dim: usize,
    pub w_query: Param, // [d, 2 * H * d_k], per-head blocks [query | gate]
    pub w_key: Param,   // [d, H * d_k]
    pub w_value: Param, // [d, H * d_k]
    pub w_out: Param,   // [H * d_k, d]
}

impl AsgaParams {
    pub fn new(d: usize, num_heads: usize, head_dim: usize, rng: &mut SplitMix64) -> Self {
        let hk = num_heads * head_dim;
        AsgaParams {
            num_heads,
            head_dim,
            w_query: xavier_init(&[d, 2 * hk], d, 2 * hk, rng),
            w_key: xavier_init(&[d, hk], d, hk, rng),
            w_value: xavier_init(&[d, hk], d, hk, rng),
            w_out: xavier_init(&[hk, d], hk, d, rng),
        }
    }

    pub fn d(&self) -> usize {
        self.w_query.shape[0]
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundAsga {
        BoundAsga {
            num_heads: self.num_heads,
            head_dim: self.head_dim,
            d: self.d(),
            w_query: self.w_query.bind(tape),
            w_key: self.w_key.bind(tape),
            w_value: self.w_value.bind(tape),
            w_out: self.w_out.bind(tape),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        f(alloc::format!("{prefix}.w_query"), &self.w_query);
        f(alloc::format!("{prefix}.w_key"), &self.w_key);
        f(alloc::format!("{prefix}.w_value"), &self.w_value);
        f(alloc::format!("{prefix}.w_out"), &self.w_out);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(alloc::format!("{prefix}.w_query"), &mut self.w_query);
        f(alloc::format!("{prefix}.w_key"), &mut self.w_key);
        f(alloc::format!("{prefix}.w_value"), &mut self.w_value);
        f(alloc::format!("{prefix}.w_out"), &mut self.w_out);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundAsga {
    pub num_heads: usize,
    pub head_dim: usize,
    pub d: usize,
    pub w_query: TensorId,
    pub w_key: TensorId,
    pub w_value: TensorId,
    pub w_out: TensorId,
}

impl BoundAsga {
    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, TensorId)) {
        f(alloc::format!("{prefix}.w_query"), self.w_query);
        f(alloc::format!("{prefix}.w_key"), self.w_key);
        f(alloc::format!("{prefix}.w_value"), self.w_value);
        f(alloc::format!("{prefix}.w_out"), self.w_out);
    }
}

/// Pooled attention result plus per-head diagnostics (plain values, not
/// differentiable outputs).
pub struct AsgaOutput {
    pub pooled: TensorId, // [d]
    pub attn_weights: Vec<Vec<f64>>,
    pub gate_values: Vec<Vec<f64>>,
}

/// Attention over an already-sifted sequence with an already-sifted query.
///
/// `mask[i]` marks valid positions. If the sequence is empty or fully
/// masked the pooled output is the zero vector (no NaNs, no gradient).
pub fn attend(
    tape: &mut Tape,
    params: &BoundAsga,
    query_vec: TensorId,
    seq: TensorId,
    mask: &[bool],
    mode: AttendMode,
) -> AsgaOutput {
    let d = params.d;
    assert_eq!(tape.shape(query_vec), &[d], "query dim mismatch: {:?} vs d={d}", tape.shape(query_vec));
    let seq_len = tape.shape(seq)[0];
    assert_eq!(tape.shape(seq)[1], d, "sequence dim mismatch: {:?} vs d={d}", tape.shape(seq));
    assert_eq!(mask.len(), seq_len, "mask length {} vs sequence length {seq_len}", mask.len());

    if seq_len == 0 || mask.iter().all(|&m| !m) {
        let pooled = tape.zeros(&[d]);
        return AsgaOutput { pooled, attn_weights: Vec::new(), gate_values: Vec::new() };
    }

    let (num_heads, head_dim) = (params.num_heads, params.head_dim);
    let inv_sqrt_dk = 1.0 / crate::math::sqrt(head_dim as f64);

    let q_proj = tape.matmul(query_vec, params.w_query); // [2 * H * d_k]
    let k_all = tape.matmul(seq, params.w_key); // [L, H * d_k]
    let v_all = tape.matmul(seq, params.w_value); // [L, H * d_k]

    let mask_bias: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { MASK_BIAS }).collect();
    let mask_bias = tape.leaf(mask_bias, &[seq_len]);

    let mut head_outputs = Vec::with_capacity(num_heads);
    let mut attn_weights = Vec::with_capacity(num_heads);
    let mut gate_values = Vec::with_capacity(num_heads);

    for h in 0..num_heads {
        let q_h = tape.slice_lastdim(q_proj, h * 2 * head_dim, head_dim);
        let g_h = tape.slice_lastdim(q_proj, h * 2 * head_dim + head_dim, head_dim);
        let k_h = tape.slice_lastdim(k_all, h * head_dim, head_dim);
        let v_h = tape.slice_lastdim(v_all, h * head_dim, head_dim);

        let logits = tape.matmul(k_h, q_h); // [L]
        let logits = tape.scale(logits, inv_sqrt_dk);
        let logits = tape.add(logits, mask_bias);
        let weights = match mode.activation {
            AttnActivation::Softmax => tape.softmax_lastdim(logits),
            AttnActivation::Sigmoid => tape.sigmoid(logits),
        };
        let h_att = tape.matmul(weights, v_h); // [d_k]

        let h_final = if mode.gated {
            let gate_src = match mode.gate_logit_override {
                Some(v) => tape.leaf(vec![v; head_dim], &[head_dim]),
                None => g_h,
            };
            let gate = tape.sigmoid(gate_src);
            gate_values.push(tape.data(gate).to_vec());
            tape.mul(h_att, gate)
        } else {
            gate_values.push(vec![1.0; head_dim]);
            h_att
        };

        attn_weights.push(tape.data(weights).to_vec());
        head_outputs.push(h_final);
    }

    let concat = tape.concat_lastdim(&head_outputs); // [H * d_k]
    let pooled = tape.matmul(concat, params.w_out); // [d]
    AsgaOutput { pooled, attn_weights, gate_values }
}

/// Standalone forward: sift the raw target and sequence embeddings, then
/// attend. The cascade module sifts once itself and calls `attend` with the
/// evolving query instead.
#[allow(clippy::too_many_arguments)]
pub fn forward(
    tape: &mut Tape,
    params: &BoundAsga,
    pafs_target: Option<&crate::layers::BoundSwiGlu>,
    pafs_seq: Option<&crate::layers::BoundSwiGlu>,
    e_target: TensorId,
    e_seq: TensorId,
    mask: &[bool],
    mode: AttendMode,
) -> AsgaOutput {
    let q = match pafs_target {
        Some(sifter) => sifter.forward(tape, e_target),
        None => e_target,
    };
    let seq_len = tape.shape(e_seq)[0];
    let seq = match (pafs_seq, seq_len) {
        (Some(sifter), 1..) => sifter.forward(tape, e_seq),
        _ => e_seq,
    };
    attend(tape, params, q, seq, mask, mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params(d: usize, seed: u64) -> AsgaParams {
        AsgaParams::new(d, 2, d / 2, &mut SplitMix64::new(seed))
    }

    fn setup(
        tape: &mut Tape,
        params: &AsgaParams,
        q: Vec<f64>,
        seq: Vec<f64>,
        len: usize,
    ) -> (BoundAsga, TensorId, TensorId) {
        let bound = params.bind(tape);
        let d = params.d();
        let q = tape.leaf(q, &[d]);
        let s = tape.leaf(seq, &[len, d]);
        (bound, q, s)
    }

    #[test]
    fn single_item_gets_full_attention() {
        let params = small_params(4, 42);
        let mut rng = SplitMix64::new(7);
        let q = rng.fill_uniform(4, -1.0, 1.0);
        let item = rng.fill_uniform(4, -1.0, 1.0);
        let mut tape = Tape::new();
        let (bound, qid, sid) = setup(&mut tape, &params, q, item, 1);
        let out = attend(&mut tape, &bound, qid, sid, &[true], AttendMode::full());
        for head in &out.attn_weights {
            assert_eq!(head.len(), 1);
            assert!((head[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gate_forced_closed_ignores_history() {
        let params = small_params(6, 3);
        let mut rng = SplitMix64::new(11);
        let q = rng.fill_uniform(6, -1.0, 1.0);
        let mode = AttendMode {
            activation: AttnActivation::Softmax,
            gated: true,
            gate_logit_override: Some(-1e9),
        };
        for _ in 0..5 {
            let seq = rng.fill_uniform(4 * 6, -1.0, 1.0);
            let mut tape = Tape::new();
            let (bound, qid, sid) = setup(&mut tape, &params, q.clone(), seq, 4);
            let out = attend(&mut tape, &bound, qid, sid, &[true; 4], mode);
            let max = tape.data(out.pooled).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max < 1e-6, "gate closure violated: |pooled|_inf = {max}");
        }
    }

    #[test]
    fn empty_sequence_pools_to_zero() {
        let params = small_params(4, 5);
        let mut rng = SplitMix64::new(2);
        let q = rng.fill_uniform(4, -1.0, 1.0);
        let mut tape = Tape::new();
        let (bound, qid, sid) = setup(&mut tape, &params, q, Vec::new(), 0);
        let out = attend(&mut tape, &bound, qid, sid, &[], AttendMode::full());
        assert!(tape.data(out.pooled).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn all_masked_pools_to_zero() {
        let params = small_params(4, 5);
        let mut rng = SplitMix64::new(2);
        let q = rng.fill_uniform(4, -1.0, 1.0);
        let seq = rng.fill_uniform(3 * 4, -1.0, 1.0);
        let mut tape = Tape::new();
        let (bound, qid, sid) = setup(&mut tape, &params, q, seq, 3);
        let out = attend(&mut tape, &bound, qid, sid, &[false; 3], AttendMode::full());
        assert!(tape.data(out.pooled).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn repeated_item_equals_single_item() {
        let params = small_params(4, 9);
        let mut rng = SplitMix64::new(13);
        let q = rng.fill_uniform(4, -1.0, 1.0);
        let item = rng.fill_uniform(4, -1.0, 1.0);

        let mut t1 = Tape::new();
        let (b1, q1, s1) = setup(&mut t1, &params, q.clone(), item.clone(), 1);
        let single = attend(&mut t1, &b1, q1, s1, &[true], AttendMode::full());

        let repeated: Vec<f64> = item.iter().cycle().take(5 * 4).cloned().collect();
        let mut t5 = Tape::new();
        let (b5, q5, s5) = setup(&mut t5, &params, q, repeated, 5);
        let multi = attend(&mut t5, &b5, q5, s5, &[true; 5], AttendMode::full());

        for (a, b) in t1.data(single.pooled).iter().zip(t5.data(multi.pooled)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let params = small_params(6, 21);
        let mut rng = SplitMix64::new(22);
        let q = rng.fill_uniform(6, -1.0, 1.0);
        let seq = rng.fill_uniform(7 * 6, -1.0, 1.0);
        let mut tape = Tape::new();
        let (bound, qid, sid) = setup(&mut tape, &params, q, seq, 7);
        let out = attend(&mut tape, &bound, qid, sid, &[true; 7], AttendMode::full());
        for head in &out.attn_weights {
            let sum: f64 = head.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_invariance() {
        let params = small_params(4, 31);
        let mut rng = SplitMix64::new(33);
        let q = rng.fill_uniform(4, -1.0, 1.0);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| rng.fill_uniform(4, -1.0, 1.0)).collect();

        let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
        let mut t1 = Tape::new();
        let (b1, q1, s1) = setup(&mut t1, &params, q.clone(), flat, 5);
        let base = attend(&mut t1, &b1, q1, s1, &[true; 5], AttendMode::full());

        let perm = [3usize, 0, 4, 1, 2];
        let permuted: Vec<f64> = perm.iter().flat_map(|&i| rows[i].clone()).collect();
        let mut t2 = Tape::new();
        let (b2, q2, s2) = setup(&mut t2, &params, q, permuted, 5);
        let shuffled = attend(&mut t2, &b2, q2, s2, &[true; 5], AttendMode::full());

        for (a, b) in t1.data(base.pooled).iter().zip(t2.data(shuffled.pooled)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_rows_do_not_change_pooled() {
        let params = small_params(4, 41);
        let mut rng = SplitMix64::new(43);
        let q = rng.fill_uniform(4, -1.0, 1.0);
        let seq = rng.fill_uniform(3 * 4, -1.0, 1.0);

        let mut t1 = Tape::new();
        let (b1, q1, s1) = setup(&mut t1, &params, q.clone(), seq.clone(), 3);
        let base = attend(&mut t1, &b1, q1, s1, &[true; 3], AttendMode::full());

        let mut extended = seq;
        extended.extend(rng.fill_uniform(2 * 4, -5.0, 5.0));
        let mut t2 = Tape::new();
        let (b2, q2, s2) = setup(&mut t2, &params, q, extended, 5);
        let padded = attend(&mut t2, &b2, q2, s2, &[true, true, true, false, false], AttendMode::full());

        for (a, b) in t1.data(base.pooled).iter().zip(t2.data(padded.pooled)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn naive_sigmoid_weights_do_not_normalize() {
        let params = small_params(4, 55);
        let mut rng = SplitMix64::new(56);
        let q = rng.fill_uniform(4, -1.0, 1.0);
        let seq = rng.fill_uniform(4 * 4, -1.0, 1.0);
        let mut tape = Tape::new();
        let (bound, qid, sid) = setup(&mut tape, &params, q, seq, 4);
        let mode = AttendMode {
            activation: AttnActivation::Sigmoid,
            gated: false,
            gate_logit_override: None,
        };
        let out = attend(&mut tape, &bound, qid, sid, &[true; 4], mode);
        for head in &out.attn_weights {
            assert!(head.iter().all(|&w| (0.0..=1.0).contains(&w)));
            let sum: f64 = head.iter().sum();
            assert!((sum - 1.0).abs() > 1e-6, "sigmoid weights should not sum to one");
        }
    }

    #[test]
    fn standalone_forward_applies_sifters() {
        let d = 4;
        let mut rng = SplitMix64::new(77);
        let params = small_params(d, 78);
        let pafs_t = crate::layers::SwiGluFfn::new(d, d, None, &mut rng).unwrap();
        let pafs_s = crate::layers::SwiGluFfn::new(d, d, None, &mut rng).unwrap();
        let e_t = rng.fill_uniform(d, -1.0, 1.0);
        let e_seq = rng.fill_uniform(3 * d, -1.0, 1.0);

        // sifted by hand, then attend
        let mut t1 = Tape::new();
        let b1 = params.bind(&mut t1);
        let bt = pafs_t.bind(&mut t1);
        let bs = pafs_s.bind(&mut t1);
        let et = t1.leaf(e_t.clone(), &[d]);
        let es = t1.leaf(e_seq.clone(), &[3, d]);
        let q = bt.forward(&mut t1, et);
        let s = bs.forward(&mut t1, es);
        let direct = attend(&mut t1, &b1, q, s, &[true; 3], AttendMode::full());

        let mut t2 = Tape::new();
        let b2 = params.bind(&mut t2);
        let bt2 = pafs_t.bind(&mut t2);
        let bs2 = pafs_s.bind(&mut t2);
        let et2 = t2.leaf(e_t, &[d]);
        let es2 = t2.leaf(e_seq, &[3, d]);
        let wrapped =
            forward(&mut t2, &b2, Some(&bt2), Some(&bs2), et2, es2, &[true; 3], AttendMode::full());

        for (a, b) in t1.data(direct.pooled).iter().zip(t2.data(wrapped.pooled)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn gate_values_stay_in_open_unit_interval() {
        let params = small_params(4, 91);
        let mut rng = SplitMix64::new(92);
        let q = rng.fill_uniform(4, -1.0, 1.0);
        let seq = rng.fill_uniform(2 * 4, -1.0, 1.0);
        let mut tape = Tape::new();
        let (bound, qid, sid) = setup(&mut tape, &params, q, seq, 2);
        let out = attend(&mut tape, &bound, qid, sid, &[true; 2], AttendMode::full());
        for head in &out.gate_values {
            assert!(head.iter().all(|&g| g > 0.0 && g < 1.0));
        }
    }
}
