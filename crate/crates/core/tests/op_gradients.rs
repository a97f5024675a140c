//! Central finite-difference checks for every registered tensor op, on
//! random small tensors, plus the softmax normalization property.

use gapnet_core::rng::SplitMix64;
use gapnet_core::tensor::{Tape, TensorId};
use proptest::prelude::*;

const FD_STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    let mag = a.abs().max(b.abs());
    if mag >= 1e-6 {
        diff / mag
    } else if diff < 1e-9 {
        0.0
    } else {
        diff / 1e-6
    }
}

/// Check d(sum(op(inputs)))/d(inputs) against central differences for a
/// graph builder over leaf tensors.
fn check_op(
    build: &dyn Fn(&mut Tape, &[TensorId]) -> TensorId,
    inputs: &[(Vec<f64>, Vec<usize>)],
) {
    let run = |data: &[Vec<f64>]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> =
            data.iter().zip(inputs).map(|(d, (_, shape))| tape.leaf(d.clone(), shape)).collect();
        let out = build(&mut tape, &ids);
        let loss = tape.sum(out);
        tape.value(loss)
    };

    // analytic
    let mut tape = Tape::new();
    let ids: Vec<TensorId> =
        inputs.iter().map(|(data, shape)| tape.leaf(data.clone(), shape)).collect();
    let out = build(&mut tape, &ids);
    let loss = tape.sum(out);
    tape.backward(loss);
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| tape.grad(id).unwrap().to_vec()).collect();

    let base: Vec<Vec<f64>> = inputs.iter().map(|(d, _)| d.clone()).collect();
    for (pi, grads) in analytic.iter().enumerate() {
        for (i, &g) in grads.iter().enumerate() {
            let mut up = base.clone();
            up[pi][i] += FD_STEP;
            let mut down = base.clone();
            down[pi][i] -= FD_STEP;
            let numeric = (run(&up) - run(&down)) / (2.0 * FD_STEP);
            let err = rel_err(g, numeric);
            assert!(
                err < TOLERANCE,
                "input {pi} entry {i}: analytic {g} vs numeric {numeric} (rel err {err})"
            );
        }
    }
}

fn tensor(rng: &mut SplitMix64, shape: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let n = shape.iter().product();
    (rng.fill_uniform(n, -1.0, 1.0), shape.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn matmul_gradients(seed in 0u64..1_000_000, m in 1usize..5, k in 1usize..5, n in 1usize..5) {
        let mut rng = SplitMix64::new(seed);
        let a = tensor(&mut rng, &[m, k]);
        let b = tensor(&mut rng, &[k, n]);
        check_op(&|t, ids| t.matmul(ids[0], ids[1]), &[a, b]);
    }

    #[test]
    fn matmul_vector_gradients(seed in 0u64..1_000_000, k in 1usize..5, n in 1usize..5) {
        let mut rng = SplitMix64::new(seed);
        let v = tensor(&mut rng, &[k]);
        let m = tensor(&mut rng, &[k, n]);
        check_op(&|t, ids| t.matmul(ids[0], ids[1]), &[v.clone(), m.clone()]);
        let col = tensor(&mut rng, &[n]);
        check_op(&|t, ids| t.matmul(ids[0], ids[1]), &[m, col]);
    }

    #[test]
    fn elementwise_binary_gradients(seed in 0u64..1_000_000, n in 1usize..6) {
        let mut rng = SplitMix64::new(seed);
        let a = tensor(&mut rng, &[n]);
        let b = tensor(&mut rng, &[n]);
        check_op(&|t, ids| t.add(ids[0], ids[1]), &[a.clone(), b.clone()]);
        check_op(&|t, ids| t.sub(ids[0], ids[1]), &[a.clone(), b.clone()]);
        check_op(&|t, ids| t.mul(ids[0], ids[1]), &[a, b]);
    }

    #[test]
    fn unary_gradients(seed in 0u64..1_000_000, n in 1usize..6) {
        let mut rng = SplitMix64::new(seed);
        let x = tensor(&mut rng, &[n]);
        check_op(&|t, ids| t.sigmoid(ids[0]), &[x.clone()]);
        check_op(&|t, ids| t.swish(ids[0]), &[x.clone()]);
        check_op(&|t, ids| t.exp(ids[0]), &[x.clone()]);
        check_op(&|t, ids| t.scale(ids[0], -1.7), &[x]);
        // log needs positive inputs away from the fd step
        let pos = (rng.fill_uniform(n, 0.1, 2.0), vec![n]);
        check_op(&|t, ids| t.log(ids[0]), &[pos]);
    }

    #[test]
    fn clamp_gradients_away_from_boundary(seed in 0u64..1_000_000, n in 1usize..6) {
        let mut rng = SplitMix64::new(seed);
        // keep entries clear of the clamp knees; the kink breaks fd there
        let data: Vec<f64> = (0..n)
            .map(|_| {
                let v = rng.uniform(-1.0, 1.0);
                if v.abs() < 0.4 { v } else { v * 3.0 }
            })
            .collect();
        check_op(&|t, ids| t.clamp(ids[0], -0.5, 0.5), &[(data, vec![n])]);
    }

    #[test]
    fn softmax_gradients(seed in 0u64..1_000_000, rows in 1usize..4, cols in 1usize..5) {
        let mut rng = SplitMix64::new(seed);
        let x = tensor(&mut rng, &[rows, cols]);
        // weight the outputs so the softmax jacobian is not annihilated by
        // the all-ones cotangent (rows sum to one means sum-grad is zero)
        let w = tensor(&mut rng, &[rows, cols]);
        check_op(&|t, ids| {
            let s = t.softmax_lastdim(ids[0]);
            t.mul(s, ids[1])
        }, &[x, w]);
    }

    #[test]
    fn add_bias_gradients(seed in 0u64..1_000_000, rows in 1usize..5, cols in 1usize..5) {
        let mut rng = SplitMix64::new(seed);
        let x = tensor(&mut rng, &[rows, cols]);
        let b = tensor(&mut rng, &[cols]);
        check_op(&|t, ids| t.add_bias(ids[0], ids[1]), &[x, b]);
    }

    #[test]
    fn concat_and_slice_gradients(seed in 0u64..1_000_000, rows in 1usize..4, a in 1usize..4, b in 1usize..4) {
        let mut rng = SplitMix64::new(seed);
        let pa = tensor(&mut rng, &[rows, a]);
        let pb = tensor(&mut rng, &[rows, b]);
        check_op(&|t, ids| t.concat_lastdim(&[ids[0], ids[1]]), &[pa.clone(), pb.clone()]);
        check_op(&|t, ids| {
            let c = t.concat_lastdim(&[ids[0], ids[1]]);
            t.slice_lastdim(c, a.saturating_sub(1), 2.min(a + b - a.saturating_sub(1)))
        }, &[pa, pb]);
    }

    #[test]
    fn gather_and_scalar_ops_gradients(seed in 0u64..1_000_000, v in 2usize..6, d in 1usize..5) {
        let mut rng = SplitMix64::new(seed);
        let table = tensor(&mut rng, &[v, d]);
        let ids_list = vec![0usize, v - 1, 0]; // includes a duplicate
        check_op(&|t, leaf| t.gather_rows(leaf[0], &ids_list), &[table.clone()]);

        let x = tensor(&mut rng, &[d]);
        let s = tensor(&mut rng, &[1]);
        check_op(&|t, ids| t.mul_scalar(ids[0], ids[1]), &[x.clone(), s]);
        check_op(&|t, ids| t.mean(ids[0]), &[x]);
    }

    #[test]
    fn softmax_rows_sum_to_one_even_for_huge_logits(seed in 0u64..1_000_000, cols in 1usize..8) {
        let mut rng = SplitMix64::new(seed);
        let data: Vec<f64> = (0..cols).map(|_| rng.uniform(-1e3, 1e3)).collect();
        let mut t = Tape::new();
        let x = t.leaf(data, &[cols]);
        let s = t.softmax_lastdim(x);
        let sum: f64 = t.data(s).iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(t.data(s).iter().all(|&v| v >= 0.0));
    }
}
