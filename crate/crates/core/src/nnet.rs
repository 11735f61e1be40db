//! The action-expert network: an MLP over `[z, cond, embed(t), embed(t−r)]`.
//!
//! Three evaluation modes share one computation graph:
//!
//! - [`MlpNet::forward`] — plain evaluation,
//! - [`MlpNet::backward`] — reverse-mode gradients of `⟨forward, out_grad⟩`
//!   with respect to every weight and bias,
//! - [`MlpNet::jvp`] — forward-mode (dual number) directional derivative of
//!   the output along an input tangent `(ż, ṙ, ṫ)`.
//!
//! The JVP pass carries no parameter adjoints at all, so quantities computed
//! through it are constants as far as training gradients are concerned.

use crate::math::{matvec, matvec_t, Mat64, Rng, Vec64};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Hidden-layer nonlinearity. The final layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Gelu,
}

impl Activation {
    fn value(&self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Gelu => {
                let u = GELU_C * (x + GELU_A * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            }
        }
    }

    fn deriv(&self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Gelu => {
                let u = GELU_C * (x + GELU_A * x * x * x);
                let t = u.tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
            }
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// One affine layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: Mat64,
    pub b: Vec64,
}

/// Sinusoidal embedding `[sin(ω_k s), cos(ω_k s)]` interleaved over
/// `k = 0..dim/2−1` with geometric frequencies `ω_k = π·2^k`.
///
/// The base frequency is π, not 2π: with whole-turn frequencies every
/// component is 1-periodic and `s = 0` aliases `s = 1`, collapsing the
/// one-step query point `(r, t) = (0, 1)` onto the degenerate `(0, 0)`. At
/// π the lowest cosine is strictly monotone on `[0, 1]`, so the embedding
/// is injective there.
pub fn time_embed(s: f64, dim: usize) -> Vec64 {
    assert!(dim >= 2 && dim % 2 == 0, "time_embed: dim must be even and >= 2");
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim / 2 {
        let omega = std::f64::consts::PI * (1u64 << k) as f64;
        out.push((omega * s).sin());
        out.push((omega * s).cos());
    }
    Vec64::new(out)
}

/// Derivative of [`time_embed`] with respect to `s`.
fn time_embed_grad(s: f64, dim: usize) -> Vec64 {
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim / 2 {
        let omega = std::f64::consts::PI * (1u64 << k) as f64;
        out.push(omega * (omega * s).cos());
        out.push(-omega * (omega * s).sin());
    }
    Vec64::new(out)
}

/// Input point for one network evaluation.
///
/// `z` is the (flattened) noisy action chunk, `cond` the observation
/// features, and `(r, t)` the interval endpoints with `0 ≤ r ≤ t ≤ 1`.
#[derive(Debug, Clone, Copy)]
pub struct NetInput<'a> {
    pub z: &'a Vec64,
    pub cond: &'a Vec64,
    pub r: f64,
    pub t: f64,
}

/// Per-parameter gradient accumulator mirroring [`MlpNet`]'s shapes.
#[derive(Debug, Clone)]
pub struct GradBuffer {
    pub layers: Vec<Layer>,
}

impl GradBuffer {
    pub fn zeros_like(net: &MlpNet) -> Self {
        GradBuffer {
            layers: net
                .layers
                .iter()
                .map(|l| Layer {
                    w: Mat64::zeros(l.w.rows(), l.w.cols()),
                    b: Vec64::zeros(l.b.len()),
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &GradBuffer) {
        assert_eq!(self.layers.len(), other.layers.len(), "grad shape mismatch");
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            for (x, y) in a.w.as_mut_slice().iter_mut().zip(b.w.as_slice()) {
                *x += y;
            }
            for (x, y) in a.b.as_mut_slice().iter_mut().zip(b.b.as_slice()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, a: f64) {
        for l in self.layers.iter_mut() {
            for x in l.w.as_mut_slice() {
                *x *= a;
            }
            for x in l.b.as_mut_slice() {
                *x *= a;
            }
        }
    }

    /// All gradient entries in a fixed order (per layer: weights row-major,
    /// then biases).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(l.b.as_slice());
        }
        out
    }
}

/// Conditioned MLP predicting a vector field value with the shape of `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    pub layers: Vec<Layer>,
    pub activation: Activation,
    pub z_dim: usize,
    pub cond_dim: usize,
    pub time_embed_dim: usize,
}

impl MlpNet {
    /// Fresh network with uniform(±√(6/(fan_in+fan_out))) hidden weights,
    /// zero biases, and an all-zero final layer (the initial field is
    /// identically zero).
    pub fn new(
        z_dim: usize,
        cond_dim: usize,
        hidden_dims: &[usize],
        time_embed_dim: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        assert!(z_dim >= 1, "z_dim must be >= 1");
        assert!(
            time_embed_dim >= 2 && time_embed_dim % 2 == 0,
            "time_embed_dim must be even and >= 2"
        );
        let in_dim = z_dim + cond_dim + 2 * time_embed_dim;
        let mut dims = vec![in_dim];
        dims.extend_from_slice(hidden_dims);
        dims.push(z_dim);

        let n_layers = dims.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let mut w = Mat64::zeros(fan_out, fan_in);
            if l + 1 < n_layers {
                let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
                for v in w.as_mut_slice() {
                    *v = lim * (2.0 * rng.next_f64() - 1.0);
                }
            }
            layers.push(Layer {
                w,
                b: Vec64::zeros(fan_out),
            });
        }
        MlpNet {
            layers,
            activation,
            z_dim,
            cond_dim,
            time_embed_dim,
        }
    }

    /// Replace the zero-initialized final layer with uniform draws of the
    /// same scale as the hidden layers. Useful when a non-trivial initial
    /// field is wanted (randomized-net tests, counterexample searches).
    pub fn randomize_final_layer(&mut self, rng: &mut Rng) {
        let last = self.layers.len() - 1;
        let layer = &mut self.layers[last];
        let lim = (6.0 / (layer.w.cols() + layer.w.rows()) as f64).sqrt();
        for v in layer.w.as_mut_slice() {
            *v = lim * (2.0 * rng.next_f64() - 1.0);
        }
        for v in layer.b.as_mut_slice() {
            *v = 0.1 * (2.0 * rng.next_f64() - 1.0);
        }
    }

    pub fn in_dim(&self) -> usize {
        self.z_dim + self.cond_dim + 2 * self.time_embed_dim
    }

    pub fn out_dim(&self) -> usize {
        self.z_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.rows() * l.w.cols() + l.b.len())
            .sum()
    }

    /// All parameters in a fixed order (per layer: weights row-major, then
    /// biases). Order matches [`GradBuffer::flatten`].
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(l.b.as_slice());
        }
        out
    }

    pub fn set_param(&mut self, mut idx: usize, val: f64) {
        for l in self.layers.iter_mut() {
            let wn = l.w.rows() * l.w.cols();
            if idx < wn {
                l.w.as_mut_slice()[idx] = val;
                return;
            }
            idx -= wn;
            if idx < l.b.len() {
                l.b.as_mut_slice()[idx] = val;
                return;
            }
            idx -= l.b.len();
        }
        panic!("set_param: index out of range");
    }

    pub fn get_param(&self, mut idx: usize) -> f64 {
        for l in self.layers.iter() {
            let wn = l.w.rows() * l.w.cols();
            if idx < wn {
                return l.w.as_slice()[idx];
            }
            idx -= wn;
            if idx < l.b.len() {
                return l.b.as_slice()[idx];
            }
            idx -= l.b.len();
        }
        panic!("get_param: index out of range");
    }

    fn check_input(&self, input: &NetInput) {
        assert_eq!(input.z.len(), self.z_dim, "input z dimension mismatch");
        assert_eq!(input.cond.len(), self.cond_dim, "input cond dimension mismatch");
        assert!(
            0.0 <= input.r && input.r <= input.t && input.t <= 1.0,
            "require 0 <= r <= t <= 1, got r={}, t={}",
            input.r,
            input.t
        );
    }

    fn assemble_input(&self, input: &NetInput) -> Vec64 {
        let emb_t = time_embed(input.t, self.time_embed_dim);
        let emb_int = time_embed(input.t - input.r, self.time_embed_dim);
        Vec64::concat(&[input.z, input.cond, &emb_t, &emb_int])
    }

    /// Evaluate the field at `input`; pure function of `(self, input)`.
    pub fn forward(&self, input: &NetInput) -> Vec64 {
        self.check_input(input);
        let mut h = self.assemble_input(input);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut pre = matvec(&layer.w, &h);
            for (p, b) in pre.as_mut_slice().iter_mut().zip(layer.b.as_slice()) {
                *p += b;
            }
            h = if l == last {
                pre
            } else {
                Vec64::new(pre.iter().map(|&x| self.activation.value(x)).collect())
            };
        }
        h
    }

    /// Reverse-mode gradients of `⟨forward(input), out_grad⟩` with respect to
    /// every weight and bias, accumulated into `acc`.
    pub fn backward_accumulate(&self, input: &NetInput, out_grad: &Vec64, acc: &mut GradBuffer) {
        self.check_input(input);
        assert_eq!(out_grad.len(), self.out_dim(), "out_grad dimension mismatch");
        assert_eq!(acc.layers.len(), self.layers.len(), "grad buffer shape mismatch");

        let n_layers = self.layers.len();
        // Forward pass, keeping each layer's input and pre-activation.
        let mut layer_inputs: Vec<Vec64> = Vec::with_capacity(n_layers);
        let mut pre_acts: Vec<Vec64> = Vec::with_capacity(n_layers);
        let mut h = self.assemble_input(input);
        for (l, layer) in self.layers.iter().enumerate() {
            layer_inputs.push(h.clone());
            let mut pre = matvec(&layer.w, &h);
            for (p, b) in pre.as_mut_slice().iter_mut().zip(layer.b.as_slice()) {
                *p += b;
            }
            h = if l == n_layers - 1 {
                pre.clone()
            } else {
                Vec64::new(pre.iter().map(|&x| self.activation.value(x)).collect())
            };
            pre_acts.push(pre);
        }

        // Reverse pass.
        let mut delta = out_grad.clone();
        for l in (0..n_layers).rev() {
            let inp = &layer_inputs[l];
            let g = &mut acc.layers[l];
            let cols = inp.len();
            for i in 0..delta.len() {
                let di = delta[i];
                let row = &mut g.w.as_mut_slice()[i * cols..(i + 1) * cols];
                for (gw, x) in row.iter_mut().zip(inp.as_slice()) {
                    *gw += di * x;
                }
                g.b[i] += di;
            }
            if l > 0 {
                let back = matvec_t(&self.layers[l].w, &delta);
                let pre = &pre_acts[l - 1];
                delta = Vec64::new(
                    back.iter()
                        .zip(pre.iter())
                        .map(|(&bk, &p)| bk * self.activation.deriv(p))
                        .collect(),
                );
            }
        }
    }

    /// Convenience wrapper returning a fresh buffer.
    pub fn backward(&self, input: &NetInput, out_grad: &Vec64) -> GradBuffer {
        let mut acc = GradBuffer::zeros_like(self);
        self.backward_accumulate(input, out_grad, &mut acc);
        acc
    }

    /// Directional derivative `[∂_z u, ∂_r u, ∂_t u]·[ż, ṙ, ṫ]ᵀ` via one
    /// forward-mode pass. The tangents of the two time embeddings follow the
    /// chain rule with `∂(t−r)/∂t = 1` and `∂(t−r)/∂r = −1`. No parameter
    /// gradients are produced.
    pub fn jvp(
        &self,
        input: &NetInput,
        tangent_z: &Vec64,
        tangent_r: f64,
        tangent_t: f64,
    ) -> Vec64 {
        self.check_input(input);
        assert_eq!(tangent_z.len(), self.z_dim, "tangent_z dimension mismatch");

        let zero_cond = Vec64::zeros(self.cond_dim);
        let demb_t = time_embed_grad(input.t, self.time_embed_dim).scale(tangent_t);
        let demb_int =
            time_embed_grad(input.t - input.r, self.time_embed_dim).scale(tangent_t - tangent_r);

        let mut h = self.assemble_input(input);
        let mut dh = Vec64::concat(&[tangent_z, &zero_cond, &demb_t, &demb_int]);

        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut pre = matvec(&layer.w, &h);
            for (p, b) in pre.as_mut_slice().iter_mut().zip(layer.b.as_slice()) {
                *p += b;
            }
            let dpre = matvec(&layer.w, &dh);
            if l == last {
                return dpre;
            }
            h = Vec64::new(pre.iter().map(|&x| self.activation.value(x)).collect());
            dh = Vec64::new(
                pre.iter()
                    .zip(dpre.iter())
                    .map(|(&p, &dp)| self.activation.deriv(p) * dp)
                    .collect(),
            );
        }
        unreachable!("network has at least one layer");
    }

    /// Serialize to a checkpoint file; round-trips bit-exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        let net: MlpNet = serde_json::from_str(&json)?;
        net.validate()?;
        Ok(net)
    }

    /// Structural sanity check: consecutive layer dimensions must chain and
    /// the final width must equal `z_dim`.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        let mut dim = self.in_dim();
        for (i, l) in self.layers.iter().enumerate() {
            if l.w.cols() != dim {
                return Err(Error::Config(format!(
                    "layer {i}: expected {dim} input columns, found {}",
                    l.w.cols()
                )));
            }
            if l.b.len() != l.w.rows() {
                return Err(Error::Config(format!("layer {i}: bias length mismatch")));
            }
            dim = l.w.rows();
        }
        if dim != self.z_dim {
            return Err(Error::Config(format!(
                "final layer width {dim} does not match z_dim {}",
                self.z_dim
            )));
        }
        Ok(())
    }
}
