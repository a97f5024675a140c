//! Parameterized building blocks: linear layers, the gated feed-forward
//! sifter (SwiGLU-FFN), and small MLPs.
//!
//! Parameters live outside the tape as plain `Param` values; `bind` copies
//! them onto a tape as leaves for one forward/backward pass. Weights are
//! Xavier-initialized, biases start at zero so every sigmoid gate opens at
//! its neutral point 0.5.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::error::CoreError;
use crate::math;
use crate::rng::SplitMix64;
use crate::tensor::{Tape, TensorId};

/// A named-by-path learnable tensor: flat row-major f64 storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub data: Vec<f64>,
    pub shape: Vec<usize>,
}

impl Param {
    pub fn zeros(shape: &[usize]) -> Self {
        Param { data: vec![0.0; shape.iter().product()], shape: shape.to_vec() }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn bind(&self, tape: &mut Tape) -> TensorId {
        tape.leaf(self.data.clone(), &self.shape)
    }
}

/// Uniform Xavier/Glorot initialization: entries drawn from U(-a, a) with
/// a = sqrt(6 / (fan_in + fan_out)). Deterministic given the generator state.
pub fn xavier_init(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut SplitMix64) -> Param {
    assert!(fan_in > 0 && fan_out > 0, "xavier_init requires positive fans");
    let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    let n: usize = shape.iter().product();
    Param { data: rng.fill_uniform(n, -bound, bound), shape: shape.to_vec() }
}

/// Smallest power of two >= 2 * d_in: the sifter's expansion width.
pub fn default_expansion_width(d_in: usize) -> usize {
    (2 * d_in).next_power_of_two()
}

// ── Linear ──────────────────────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: Param, // [in, out]
    pub b: Param, // [out]
}

impl Linear {
    pub fn new(d_in: usize, d_out: usize, rng: &mut SplitMix64) -> Self {
        Linear { w: xavier_init(&[d_in, d_out], d_in, d_out, rng), b: Param::zeros(&[d_out]) }
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundLinear {
        BoundLinear { w: self.w.bind(tape), b: self.b.bind(tape) }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        f(format!("{prefix}.w"), &self.w);
        f(format!("{prefix}.b"), &self.b);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(format!("{prefix}.w"), &mut self.w);
        f(format!("{prefix}.b"), &mut self.b);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLinear {
    pub w: TensorId,
    pub b: TensorId,
}

impl BoundLinear {
    /// x[..., in] -> x W + b
    pub fn forward(&self, tape: &mut Tape, x: TensorId) -> TensorId {
        let xw = tape.matmul(x, self.w);
        tape.add_bias(xw, self.b)
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, TensorId)) {
        f(format!("{prefix}.w"), self.w);
        f(format!("{prefix}.b"), self.b);
    }
}

// ── SwiGLU feed-forward sifter ──────────────────────────────────────

/// Gated feed-forward block: expand to d', filter by a swish gate, project
/// back down. Used as the pre-attention feature sifter and as the fusion
/// module's context purifier.
#[derive(Clone, Debug)]
pub struct SwiGluFfn {
    pub w_gate: Param, // [d_in, d']
    pub b_gate: Param, // [d']
    pub w_up: Param,   // [d_in, d']
    pub b_up: Param,   // [d']
    pub w_down: Param, // [d', d_out]
    pub b_down: Param, // [d_out]
}

impl SwiGluFfn {
    /// `d_prime = None` uses the default expansion rule. An explicit width
    /// must still be a power of two and at least 2 * d_in.
    pub fn new(
        d_in: usize,
        d_out: usize,
        d_prime: Option<usize>,
        rng: &mut SplitMix64,
    ) -> Result<Self, CoreError> {
        let dp = d_prime.unwrap_or_else(|| default_expansion_width(d_in));
        if !dp.is_power_of_two() || dp < 2 * d_in {
            return Err(CoreError::InvalidConfig(format!(
                "d_prime {dp} must be a power of two and >= 2 * d_in ({})",
                2 * d_in
            )));
        }
        Ok(SwiGluFfn {
            w_gate: xavier_init(&[d_in, dp], d_in, dp, rng),
            b_gate: Param::zeros(&[dp]),
            w_up: xavier_init(&[d_in, dp], d_in, dp, rng),
            b_up: Param::zeros(&[dp]),
            w_down: xavier_init(&[dp, d_out], dp, d_out, rng),
            b_down: Param::zeros(&[d_out]),
        })
    }

    pub fn d_in(&self) -> usize {
        self.w_gate.shape[0]
    }

    pub fn d_prime(&self) -> usize {
        self.w_gate.shape[1]
    }

    pub fn d_out(&self) -> usize {
        self.w_down.shape[1]
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundSwiGlu {
        BoundSwiGlu {
            w_gate: self.w_gate.bind(tape),
            b_gate: self.b_gate.bind(tape),
            w_up: self.w_up.bind(tape),
            b_up: self.b_up.bind(tape),
            w_down: self.w_down.bind(tape),
            b_down: self.b_down.bind(tape),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        f(format!("{prefix}.w_gate"), &self.w_gate);
        f(format!("{prefix}.b_gate"), &self.b_gate);
        f(format!("{prefix}.w_up"), &self.w_up);
        f(format!("{prefix}.b_up"), &self.b_up);
        f(format!("{prefix}.w_down"), &self.w_down);
        f(format!("{prefix}.b_down"), &self.b_down);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        f(format!("{prefix}.w_gate"), &mut self.w_gate);
        f(format!("{prefix}.b_gate"), &mut self.b_gate);
        f(format!("{prefix}.w_up"), &mut self.w_up);
        f(format!("{prefix}.b_up"), &mut self.b_up);
        f(format!("{prefix}.w_down"), &mut self.w_down);
        f(format!("{prefix}.b_down"), &mut self.b_down);
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundSwiGlu {
    pub w_gate: TensorId,
    pub b_gate: TensorId,
    pub w_up: TensorId,
    pub b_up: TensorId,
    pub w_down: TensorId,
    pub b_down: TensorId,
}

impl BoundSwiGlu {
    /// (Swish(x W_g + b_g) ⊙ (x W_u + b_u)) W_d + b_d
    pub fn forward(&self, tape: &mut Tape, x: TensorId) -> TensorId {
        let g_pre = tape.matmul(x, self.w_gate);
        let g_pre = tape.add_bias(g_pre, self.b_gate);
        let gate = tape.swish(g_pre);
        let up = tape.matmul(x, self.w_up);
        let up = tape.add_bias(up, self.b_up);
        let filtered = tape.mul(gate, up);
        let down = tape.matmul(filtered, self.w_down);
        tape.add_bias(down, self.b_down)
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, TensorId)) {
        f(format!("{prefix}.w_gate"), self.w_gate);
        f(format!("{prefix}.b_gate"), self.b_gate);
        f(format!("{prefix}.w_up"), self.w_up);
        f(format!("{prefix}.b_up"), self.b_up);
        f(format!("{prefix}.w_down"), self.w_down);
        f(format!("{prefix}.b_down"), self.b_down);
    }
}

// ── MLP ─────────────────────────────────────────────────────────────

/// Chain of linear layers with swish between them (none after the last).
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(dims: &[usize], rng: &mut SplitMix64) -> Self {
        assert!(dims.len() >= 2, "MLP needs at least input and output dims");
        let layers = dims.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect();
        Mlp { layers }
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundMlp {
        BoundMlp { layers: self.layers.iter().map(|l| l.bind(tape)).collect() }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, &Param)) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit(&format!("{prefix}.{i}"), f);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&format!("{prefix}.{i}"), f);
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoundMlp {
    pub layers: Vec<BoundLinear>,
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: TensorId) -> TensorId {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h);
            if i != last {
                h = tape.swish(h);
            }
        }
        h
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(String, TensorId)) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit(&format!("{prefix}.{i}"), f);
        }
    }
}
