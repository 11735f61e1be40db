//! Action generation from a trained (or analytic) vector field.
//!
//! Three samplers over a shared [`VectorField`] interface:
//!
//! - [`sample_one_step`] — `A_0 = A_1 − u(A_1, 0, 1)`
//! - [`sample_multi_step`] — mean-field updates `A_r = A_t − (t−r)·u(A_t, r, t)`
//!   over a uniform partition, walking t from 1 down to 0
//! - [`sample_euler_fm`] — Euler integration of the instantaneous field
//!   (queried at `r = t`), the flow-matching baseline
//!
//! All noise comes from the caller's [`Rng`], so sweeps stay reproducible.

use crate::math::{axpy, gauss_sample, Rng, Vec64};
use crate::nnet::{MlpNet, NetInput};
use crate::tasks::{ActionChunk, TaskTag};
use crate::Result;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// How to turn noise into an action chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    /// Mean-field sampling (one network call per interval).
    #[default]
    MeanFlow,
    /// Euler flow-matching baseline (instantaneous field, `r = t`).
    EulerFm,
}

impl std::str::FromStr for SampleMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "meanflow" => Ok(SampleMode::MeanFlow),
            "euler_fm" => Ok(SampleMode::EulerFm),
            other => Err(format!("unknown sample mode '{other}' (expected meanflow|euler_fm)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub nfe: usize,
    pub mode: SampleMode,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { nfe: 1, mode: SampleMode::MeanFlow, seed: 0 }
    }
}

/// Anything that can be queried as a conditioned interval field `u(z, r, t)`.
pub trait VectorField {
    fn z_dim(&self) -> usize;
    fn eval(&self, z: &Vec64, cond: &Vec64, r: f64, t: f64) -> Vec64;
}

impl VectorField for MlpNet {
    fn z_dim(&self) -> usize {
        self.z_dim
    }

    fn eval(&self, z: &Vec64, cond: &Vec64, r: f64, t: f64) -> Vec64 {
        self.forward(&NetInput { z, cond, r, t })
    }
}

/// Exact mean field of a single data point `x0`: `u(z, r, t) = (z − x0)/t`.
///
/// Constant along each straight trajectory into `x0`, so every sampler that
/// queries it lands on `x0` without integration error. A non-learned stand-in
/// used for sampler tests.
#[derive(Debug, Clone)]
pub struct SingletonField {
    pub x0: Vec64,
}

impl VectorField for SingletonField {
    fn z_dim(&self) -> usize {
        self.x0.len()
    }

    fn eval(&self, z: &Vec64, _cond: &Vec64, _r: f64, t: f64) -> Vec64 {
        assert!(t > 0.0, "singleton field is undefined at t = 0");
        z.sub(&self.x0).scale(1.0 / t)
    }
}

/// Single-evaluation generation: `A_0 = A_1 − u(A_1, 0, 1)`.
pub fn sample_one_step<F: VectorField + ?Sized>(field: &F, cond: &Vec64, rng: &mut Rng) -> Vec64 {
    let a1 = gauss_sample(rng, field.z_dim());
    let u = field.eval(&a1, cond, 0.0, 1.0);
    a1.sub(&u)
}

/// Mean-field sampling over `nfe` uniform intervals, from t = 1 down to 0.
/// With `nfe = 1` this reproduces [`sample_one_step`] bit-exactly given the
/// same rng stream.
pub fn sample_multi_step<F: VectorField + ?Sized>(
    field: &F,
    cond: &Vec64,
    nfe: usize,
    rng: &mut Rng,
) -> Vec64 {
    assert!(nfe >= 1, "nfe must be >= 1");
    let n = nfe as f64;
    let mut a = gauss_sample(rng, field.z_dim());
    for k in (1..=nfe).rev() {
        let t = k as f64 / n;
        let r = (k - 1) as f64 / n;
        let u = field.eval(&a, cond, r, t);
        a = axpy(-(t - r), &u, &a);
    }
    a
}

/// Euler integration of the instantaneous field with step `δ = 1/nfe`,
/// querying `u(·, t, t)`. Degrades at small `nfe` on multimodal targets.
pub fn sample_euler_fm<F: VectorField + ?Sized>(
    field: &F,
    cond: &Vec64,
    nfe: usize,
    rng: &mut Rng,
) -> Vec64 {
    assert!(nfe >= 1, "nfe must be >= 1");
    let n = nfe as f64;
    let delta = 1.0 / n;
    let mut a = gauss_sample(rng, field.z_dim());
    for k in (1..=nfe).rev() {
        let t = k as f64 / n;
        let u = field.eval(&a, cond, t, t);
        a = axpy(-delta, &u, &a);
    }
    a
}

/// Dispatch on the configured mode; returns the flattened sample.
pub fn sample_flat<F: VectorField + ?Sized>(
    field: &F,
    cond: &Vec64,
    cfg: &SampleConfig,
    rng: &mut Rng,
) -> Vec64 {
    match cfg.mode {
        SampleMode::MeanFlow => sample_multi_step(field, cond, cfg.nfe, rng),
        SampleMode::EulerFm => sample_euler_fm(field, cond, cfg.nfe, rng),
    }
}

/// Per-action-channel affine normalization. Training runs in normalized
/// space; generated chunks are mapped back before execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec64,
    pub std: Vec64,
}

impl Normalizer {
    pub fn identity(act_dim: usize) -> Self {
        Normalizer {
            mean: Vec64::zeros(act_dim),
            std: Vec64::new(vec![1.0; act_dim]),
        }
    }

    /// Channel statistics over flattened chunks (channel = index mod act_dim).
    /// Standard deviations are floored at 1e-6 so constant channels stay
    /// invertible.
    pub fn fit(xs: &[Vec64], act_dim: usize) -> Self {
        assert!(!xs.is_empty(), "Normalizer::fit: empty data");
        let mut sum = vec![0.0; act_dim];
        let mut count = vec![0usize; act_dim];
        for x in xs {
            assert_eq!(x.len() % act_dim, 0, "chunk length not a multiple of act_dim");
            for (i, v) in x.iter().enumerate() {
                sum[i % act_dim] += v;
                count[i % act_dim] += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
        let mut var = vec![0.0; act_dim];
        for x in xs {
            for (i, v) in x.iter().enumerate() {
                let d = v - mean[i % act_dim];
                var[i % act_dim] += d * d;
            }
        }
        let std: Vec<f64> = var
            .iter()
            .zip(&count)
            .map(|(s, &c)| (s / c as f64).sqrt().max(1e-6))
            .collect();
        Normalizer { mean: Vec64::new(mean), std: Vec64::new(std) }
    }

    pub fn act_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize_flat(&self, x: &Vec64) -> Vec64 {
        let d = self.act_dim();
        assert_eq!(x.len() % d, 0, "chunk length not a multiple of act_dim");
        Vec64::new(
            x.iter()
                .enumerate()
                .map(|(i, v)| (v - self.mean[i % d]) / self.std[i % d])
                .collect(),
        )
    }

    pub fn denormalize_flat(&self, x: &Vec64) -> Vec64 {
        let d = self.act_dim();
        assert_eq!(x.len() % d, 0, "chunk length not a multiple of act_dim");
        Vec64::new(
            x.iter()
                .enumerate()
                .map(|(i, v)| v * self.std[i % d] + self.mean[i % d])
                .collect(),
        )
    }
}

/// Everything needed to generate executable chunks: the trained net, the
/// action normalization it was trained under, and the chunk geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Policy {
    pub net: MlpNet,
    pub norm: Normalizer,
    pub chunk_h: usize,
    pub act_dim: usize,
    pub cond_dim: usize,
    pub task: TaskTag,
}

impl Policy {
    /// Sample a flattened chunk via the configured mode, map it back to raw
    /// action units, and reshape to `chunk_h × act_dim`.
    pub fn generate_chunk(&self, obs: &Vec64, cfg: &SampleConfig, rng: &mut Rng) -> ActionChunk {
        assert_eq!(obs.len(), self.cond_dim, "observation dimension mismatch");
        let flat = sample_flat(&self.net, obs, cfg, rng);
        let raw = self.norm.denormalize_flat(&flat);
        ActionChunk::from_flat(&raw, self.chunk_h, self.act_dim)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        let p: Policy = serde_json::from_str(&json)?;
        p.net.validate()?;
        Ok(p)
    }
}
