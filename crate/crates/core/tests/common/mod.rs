//! Straight-line reference implementations with explicit loops, independent
//! of the tape engine. These recompute the forward pipeline step by step so
//! the graph composition can be checked against them.

use gapnet_core::asga::{AsgaParams, AsgaVariant};
use gapnet_core::cgdf::CgdfContext;
use gapnet_core::data::Instance;
use gapnet_core::gcqc::CguParams;
use gapnet_core::layers::{Linear, Mlp, Param, SwiGluFfn};
use gapnet_core::math;
use gapnet_core::model::{AblationConfig, GapNetParams, SeqSifters, ViewParams};

/// x[in] times W[in, out] -> [out]
pub fn vec_mat(x: &[f64], w: &Param) -> Vec<f64> {
    let (rows, cols) = (w.shape[0], w.shape[1]);
    assert_eq!(x.len(), rows);
    let mut out = vec![0.0; cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j] += x[i] * w.data[i * cols + j];
        }
    }
    out
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn linear(layer: &Linear, x: &[f64]) -> Vec<f64> {
    add(&vec_mat(x, &layer.w), &layer.b.data)
}

pub fn swiglu(ffn: &SwiGluFfn, x: &[f64]) -> Vec<f64> {
    let gate = add(&vec_mat(x, &ffn.w_gate), &ffn.b_gate.data);
    let up = add(&vec_mat(x, &ffn.w_up), &ffn.b_up.data);
    let filtered: Vec<f64> = gate.iter().zip(&up).map(|(&g, &u)| math::swish(g) * u).collect();
    add(&vec_mat(&filtered, &ffn.w_down), &ffn.b_down.data)
}

pub fn mlp(mlp: &Mlp, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let last = mlp.layers.len() - 1;
    for (i, layer) in mlp.layers.iter().enumerate() {
        h = linear(layer, &h);
        if i != last {
            h = h.iter().map(|&v| math::swish(v)).collect();
        }
    }
    h
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| math::exp(v - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Gated multi-head target attention composed with explicit loops.
/// All positions valid; empty sequences pool to zero.
pub fn attend(
    params: &AsgaParams,
    query: &[f64],
    seq: &[Vec<f64>],
    gated: bool,
    sigmoid_activation: bool,
) -> Vec<f64> {
    let d = params.d();
    if seq.is_empty() {
        return vec![0.0; d];
    }
    let (heads, dk) = (params.num_heads, params.head_dim);
    let q_proj = vec_mat(query, &params.w_query);
    let k_rows: Vec<Vec<f64>> = seq.iter().map(|row| vec_mat(row, &params.w_key)).collect();
    let v_rows: Vec<Vec<f64>> = seq.iter().map(|row| vec_mat(row, &params.w_value)).collect();

    let mut concat = Vec::with_capacity(heads * dk);
    for h in 0..heads {
        let q_h = &q_proj[h * 2 * dk..h * 2 * dk + dk];
        let g_h = &q_proj[h * 2 * dk + dk..h * 2 * dk + 2 * dk];

        let mut logits = Vec::with_capacity(seq.len());
        for k in &k_rows {
            let mut dot = 0.0;
            for i in 0..dk {
                dot += q_h[i] * k[h * dk + i];
            }
            logits.push(dot / math::sqrt(dk as f64));
        }
        let weights: Vec<f64> = if sigmoid_activation {
            logits.iter().map(|&l| math::sigmoid(l)).collect()
        } else {
            softmax(&logits)
        };

        let mut pooled = vec![0.0; dk];
        for (w, v) in weights.iter().zip(&v_rows) {
            for i in 0..dk {
                pooled[i] += w * v[h * dk + i];
            }
        }
        if gated {
            for i in 0..dk {
                pooled[i] *= math::sigmoid(g_h[i]);
            }
        }
        concat.extend(pooled);
    }
    vec_mat(&concat, &params.w_out)
}

/// Convex gate update: z = sigmoid([q; h] W + b); q' = (1-z) q + z h.
pub fn cgu(params: &CguParams, q: &[f64], h: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let joint: Vec<f64> = q.iter().chain(h).cloned().collect();
    let z: Vec<f64> = add(&vec_mat(&joint, &params.w_gate), &params.b_gate.data)
        .iter()
        .map(|&v| math::sigmoid(v))
        .collect();
    let q_new: Vec<f64> =
        z.iter().zip(q).zip(h).map(|((&zv, &qv), &hv)| (1.0 - zv) * qv + zv * hv).collect();
    (q_new, z)
}

fn embed_row(table: &Param, id: u32) -> Vec<f64> {
    let d = table.shape[1];
    table.data[id as usize * d..(id as usize + 1) * d].to_vec()
}

fn view_params<'a>(attn: &'a ViewParams) -> [&'a AsgaParams; 3] {
    match attn {
        ViewParams::Shared(p) => [p, p, p],
        ViewParams::PerView { rt, st, lt } => [rt, st, lt],
    }
}

fn seq_sifters<'a>(pafs: &'a SeqSifters) -> [&'a SwiGluFfn; 3] {
    match pafs {
        SeqSifters::Shared(p) => [p, p, p],
        SeqSifters::PerView { rt, st, lt } => [rt, st, lt],
    }
}

/// Whole-pipeline reference forward: returns the predicted probability.
pub fn full_forward(params: &GapNetParams, ablation: &AblationConfig, inst: &Instance) -> f64 {
    let variant = ablation.effective_variant();
    let sift = variant.uses_pafs();
    let gated = variant.gated();
    let sigmoid_act = variant == AsgaVariant::NaiveSigmoid;

    let e_user = embed_row(&params.embed_user, inst.user_id);
    let e_ctx = embed_row(&params.embed_ctx, inst.context_id);
    let e_target = embed_row(&params.embed_item, inst.target_item_id);

    let target_sifted = if sift {
        let sifter = params.pafs_target.as_ref().unwrap_or(match &params.pafs_seq {
            SeqSifters::Shared(p) => p,
            SeqSifters::PerView { rt, .. } => rt,
        });
        swiglu(sifter, &e_target)
    } else {
        e_target.clone()
    };

    let sifters = seq_sifters(&params.pafs_seq);
    let make_view = |seq: &[u32], sifter: &SwiGluFfn| -> Vec<Vec<f64>> {
        seq.iter()
            .map(|&id| {
                let row = embed_row(&params.embed_item, id);
                if sift {
                    swiglu(sifter, &row)
                } else {
                    row
                }
            })
            .collect()
    };
    let view_rt = make_view(&inst.seq_rt, sifters[0]);
    let view_st = make_view(&inst.seq_st, sifters[1]);
    let view_lt = make_view(&inst.seq_lt, sifters[2]);

    let attn = view_params(&params.attn);
    let pooled_rt = attend(attn[0], &target_sifted, &view_rt, gated, sigmoid_act);

    let query = if ablation.gcqc_on {
        cgu(&params.cgu, &target_sifted, &pooled_rt).0
    } else {
        target_sifted.clone()
    };
    let pooled_st = attend(attn[1], &query, &view_st, gated, sigmoid_act);
    let lt_query = match (&params.cgu2, ablation.gcqc_on && ablation.second_cgu) {
        (Some(second), true) => cgu(second, &query, &pooled_st).0,
        _ => query.clone(),
    };
    let pooled_lt = attend(attn[2], &lt_query, &view_lt, gated, sigmoid_act);

    let fused: Vec<f64> = if ablation.cgdf_on {
        let anchor: Vec<f64> = match ablation.cgdf_context {
            CgdfContext::Minimalist => [&target_sifted[..], &pooled_rt, &pooled_st, &pooled_lt].concat(),
            CgdfContext::Full => {
                [&target_sifted[..], &e_user, &e_ctx, &pooled_rt, &pooled_st, &pooled_lt].concat()
            }
            CgdfContext::Purified => {
                [&target_sifted[..], &e_ctx, &pooled_rt, &pooled_st, &pooled_lt].concat()
            }
        };
        let denoised = match (&params.cgdf.purifier, ablation.cgdf_context.purifies()) {
            (Some(p), true) => swiglu(p, &anchor),
            _ => anchor,
        };
        let h_gate = mlp(&params.cgdf.gate_mlp, &denoised);
        let alpha = softmax(&vec_mat(&h_gate, &params.cgdf.view_logits));
        let mut fused = Vec::with_capacity(3 * pooled_rt.len());
        for (k, view) in [&pooled_rt, &pooled_st, &pooled_lt].into_iter().enumerate() {
            fused.extend(view.iter().map(|&v| alpha[k] * v));
        }
        fused
    } else {
        [&pooled_rt[..], &pooled_st, &pooled_lt].concat()
    };

    let head_in = [&fused[..], &e_user, &e_ctx, &target_sifted].concat();
    let logit = mlp(&params.head, &head_in)[0].clamp(-30.0, 30.0);
    math::sigmoid(logit)
}
