//! Mean vector-field training: time-pair sampling, target construction,
//! losses, and the optimization loop.
//!
//! The training target for an interval `[r, t]` is
//!
//! ```text
//! u_tgt = v − (t − r) · (v·∂_z u_θ + ∂_t u_θ)
//! ```
//!
//! where `v` is the conditional velocity of the interpolation path and the
//! parenthesized term is a single JVP of the network along the tangent
//! `(v, 0, 1)`. The target is *detached*: it is produced by a forward-mode
//! pass that carries no parameter adjoints, so gradients flow only through
//! the prediction side of the loss. Degenerate pairs (`r = t`) reduce the
//! target to `v` itself, i.e. plain flow matching.

use crate::flow::FlowPath;
use crate::math::{axpy, gauss_sample, Rng, Vec64};
use crate::nnet::{Activation, GradBuffer, MlpNet, NetInput};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Interval endpoints with `0 ≤ r ≤ t ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimePair {
    pub r: f64,
    pub t: f64,
}

impl TimePair {
    pub fn new(r: f64, t: f64) -> Self {
        assert!(
            0.0 <= r && r <= t && t <= 1.0,
            "time pair requires 0 <= r <= t <= 1, got ({r}, {t})"
        );
        TimePair { r, t }
    }

    /// A degenerate pair trains the instantaneous field.
    pub fn is_degenerate(&self) -> bool {
        self.r == self.t
    }
}

/// Draw a training time pair.
///
/// With probability `1 − flow_ratio` the pair is degenerate (`r = t` with
/// `t ~ U(0,1)`); otherwise `r` and `t` are the order statistics of two
/// independent `U(0,1)` draws.
pub fn sample_time_pair(rng: &mut Rng, flow_ratio: f64) -> TimePair {
    assert!((0.0..=1.0).contains(&flow_ratio), "flow_ratio outside [0,1]");
    let coin = rng.next_f64();
    if coin < flow_ratio {
        let a = rng.next_f64();
        let b = rng.next_f64();
        TimePair::new(a.min(b), a.max(b))
    } else {
        let t = rng.next_f64();
        TimePair::new(t, t)
    }
}

/// Detached regression target for one sample.
///
/// `v` must be the conditional velocity of the same `(x, e)` pair that
/// produced `z = interpolate(x, e, t)`. For `r = t` the result is exactly
/// `v` (bitwise; the JVP term is skipped entirely).
pub fn meanflow_target(
    net: &MlpNet,
    z: &Vec64,
    cond: &Vec64,
    pair: TimePair,
    v: &Vec64,
) -> Vec64 {
    assert_eq!(v.len(), z.len(), "meanflow_target: velocity length mismatch");
    if pair.is_degenerate() {
        return v.clone();
    }
    let input = NetInput { z, cond, r: pair.r, t: pair.t };
    let du_dt = net.jvp(&input, v, 0.0, 1.0);
    axpy(-(pair.t - pair.r), &du_dt, v)
}

/// Mean squared batch loss and per-sample output gradients `2Δ_i/B`.
pub fn loss_l2(preds: &[Vec64], tgts: &[Vec64]) -> (f64, Vec<Vec64>) {
    assert_eq!(preds.len(), tgts.len(), "loss_l2: batch size mismatch");
    assert!(!preds.is_empty(), "loss_l2: empty batch");
    let b = preds.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(preds.len());
    for (p, t) in preds.iter().zip(tgts.iter()) {
        let delta = p.sub(t);
        loss += delta.norm_sq();
        grads.push(delta.scale(2.0 / b));
    }
    (loss / b, grads)
}

/// Error-weighted squared loss.
///
/// Per sample, `w_i = 1/(‖Δ_i‖² + c)^{1−γ}` is computed from the *detached*
/// error (a constant during differentiation), so the gradients are simply
/// `w_i · 2Δ_i/B`. At `γ = 1` every weight is exactly 1 and the loss equals
/// [`loss_l2`] bit-for-bit.
pub fn loss_adaptive(
    preds: &[Vec64],
    tgts: &[Vec64],
    gamma: f64,
    c: f64,
) -> (f64, Vec<Vec64>) {
    assert!(gamma > 0.0 && gamma <= 1.0, "gamma must be in (0, 1]");
    assert!(c > 0.0, "adaptive constant c must be > 0");
    assert_eq!(preds.len(), tgts.len(), "loss_adaptive: batch size mismatch");
    assert!(!preds.is_empty(), "loss_adaptive: empty batch");
    let b = preds.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(preds.len());
    for (p, t) in preds.iter().zip(tgts.iter()) {
        let delta = p.sub(t);
        let sq = delta.norm_sq();
        let w = (sq + c).powf(gamma - 1.0);
        loss += w * sq;
        grads.push(delta.scale(w * 2.0 / b));
    }
    (loss / b, grads)
}

/// Everything the trainer needs to know; every field has a default so config
/// files only override what they care about. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Fraction of time pairs with `r ≠ t`; 0 is pure flow matching.
    pub flow_ratio: f64,
    /// Adaptive-loss exponent; 1 recovers the plain L2 loss.
    pub gamma: f64,
    /// Small constant keeping the adaptive weight finite.
    pub adaptive_c: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub learn_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Actions per generated chunk.
    pub chunk_h: usize,
    /// Dimension of a single action.
    pub act_dim: usize,
    /// Dimension of the observation features.
    pub cond_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub time_embed_dim: usize,
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            flow_ratio: 0.2,
            gamma: 0.5,
            adaptive_c: 1e-3,
            batch_size: 256,
            steps: 2000,
            learn_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            chunk_h: 20,
            act_dim: 3,
            cond_dim: 9,
            hidden_dims: vec![64, 64],
            time_embed_dim: 8,
            activation: Activation::Tanh,
        }
    }
}

impl TrainConfig {
    /// Flattened dimension of the generated object.
    pub fn z_dim(&self) -> usize {
        self.chunk_h * self.act_dim
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.flow_ratio) {
            return err(format!("flow_ratio {} outside [0,1]", self.flow_ratio));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return err(format!("gamma {} outside (0,1]", self.gamma));
        }
        if self.adaptive_c <= 0.0 {
            return err(format!("adaptive_c {} must be > 0", self.adaptive_c));
        }
        if self.steps < 1 {
            return err("steps must be >= 1".into());
        }
        if self.batch_size < 1 {
            return err("batch_size must be >= 1".into());
        }
        if self.chunk_h < 1 || self.act_dim < 1 {
            return err("chunk_h and act_dim must be >= 1".into());
        }
        if !(self.learn_rate.is_finite() && self.learn_rate >= 0.0) {
            return err(format!("learn_rate {} invalid", self.learn_rate));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return err(format!("{name} {b} outside [0,1)"));
            }
        }
        if self.adam_eps <= 0.0 {
            return err("adam_eps must be > 0".into());
        }
        if self.time_embed_dim < 2 || self.time_embed_dim % 2 != 0 {
            return err(format!(
                "time_embed_dim {} must be even and >= 2",
                self.time_embed_dim
            ));
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return err("hidden_dims entries must be >= 1".into());
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("TrainConfig serializes")
    }

    /// Fresh network matching this config's dimensions.
    pub fn build_net(&self, rng: &mut Rng) -> MlpNet {
        MlpNet::new(
            self.z_dim(),
            self.cond_dim,
            &self.hidden_dims,
            self.time_embed_dim,
            self.activation,
            rng,
        )
    }
}

/// One training example: observation features plus the flattened target
/// chunk.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub cond: Vec64,
    pub x: Vec64,
}

/// One minibatch: data, conditioning, fresh noise, and time pairs, all of
/// equal length.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub x: Vec<Vec64>,
    pub cond: Vec<Vec64>,
    pub e: Vec<Vec64>,
    pub pairs: Vec<TimePair>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Assemble a batch from dataset rows: per sample, draw the noise vector
    /// first, then the time pair.
    pub fn draw(
        dataset: &[TrainPair],
        indices: &[usize],
        flow_ratio: f64,
        rng: &mut Rng,
    ) -> TrainBatch {
        let mut x = Vec::with_capacity(indices.len());
        let mut cond = Vec::with_capacity(indices.len());
        let mut e = Vec::with_capacity(indices.len());
        let mut pairs = Vec::with_capacity(indices.len());
        for &i in indices {
            let row = &dataset[i];
            e.push(gauss_sample(rng, row.x.len()));
            pairs.push(sample_time_pair(rng, flow_ratio));
            x.push(row.x.clone());
            cond.push(row.cond.clone());
        }
        TrainBatch { x, cond, e, pairs }
    }
}

/// Detached targets for every sample of the batch.
pub fn compute_targets(net: &MlpNet, batch: &TrainBatch) -> Vec<Vec64> {
    let path = FlowPath::Linear;
    let mut tgts = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let z = path.interpolate(&batch.x[i], &batch.e[i], batch.pairs[i].t);
        let v = path.cond_velocity(&batch.x[i], &batch.e[i]);
        tgts.push(meanflow_target(net, &z, &batch.cond[i], batch.pairs[i], &v));
    }
    tgts
}

/// Loss and parameter gradient for a batch against externally supplied
/// (frozen) targets. The canonical training path calls this with targets
/// from [`compute_targets`]; calling it again with those targets copied out
/// must give bit-identical gradients, which is what makes the stop-gradient
/// checkable.
pub fn batch_loss_and_gradient_frozen(
    net: &MlpNet,
    batch: &TrainBatch,
    cfg: &TrainConfig,
    targets: &[Vec64],
) -> (f64, GradBuffer) {
    assert_eq!(targets.len(), batch.len(), "target count mismatch");
    let path = FlowPath::Linear;
    let mut zs = Vec::with_capacity(batch.len());
    let mut preds = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let z = path.interpolate(&batch.x[i], &batch.e[i], batch.pairs[i].t);
        let input = NetInput {
            z: &z,
            cond: &batch.cond[i],
            r: batch.pairs[i].r,
            t: batch.pairs[i].t,
        };
        preds.push(net.forward(&input));
        zs.push(z);
    }
    let (loss, out_grads) = loss_adaptive(&preds, targets, cfg.gamma, cfg.adaptive_c);
    let mut acc = GradBuffer::zeros_like(net);
    for i in 0..batch.len() {
        let input = NetInput {
            z: &zs[i],
            cond: &batch.cond[i],
            r: batch.pairs[i].r,
            t: batch.pairs[i].t,
        };
        net.backward_accumulate(&input, &out_grads[i], &mut acc);
    }
    (loss, acc)
}

/// Loss and parameter gradient for a batch, computing targets in place.
pub fn batch_loss_and_gradient(
    net: &MlpNet,
    batch: &TrainBatch,
    cfg: &TrainConfig,
) -> (f64, GradBuffer) {
    let targets = compute_targets(net, batch);
    batch_loss_and_gradient_frozen(net, batch, cfg, &targets)
}

/// Adam optimizer state (first/second moment buffers and step count).
#[derive(Debug, Clone)]
pub struct AdamState {
    m: GradBuffer,
    v: GradBuffer,
    step: usize,
}

impl AdamState {
    pub fn new(net: &MlpNet) -> Self {
        AdamState {
            m: GradBuffer::zeros_like(net),
            v: GradBuffer::zeros_like(net),
            step: 0,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn update(&mut self, net: &mut MlpNet, grads: &GradBuffer, cfg: &TrainConfig) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.adam_beta1.powi(t);
        let bc2 = 1.0 - cfg.adam_beta2.powi(t);
        for l in 0..net.layers.len() {
            Self::update_slice(
                net.layers[l].w.as_mut_slice(),
                grads.layers[l].w.as_slice(),
                self.m.layers[l].w.as_mut_slice(),
                self.v.layers[l].w.as_mut_slice(),
                cfg,
                bc1,
                bc2,
            );
            Self::update_slice(
                net.layers[l].b.as_mut_slice(),
                grads.layers[l].b.as_slice(),
                self.m.layers[l].b.as_mut_slice(),
                self.v.layers[l].b.as_mut_slice(),
                cfg,
                bc1,
                bc2,
            );
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn update_slice(
        theta: &mut [f64],
        g: &[f64],
        m: &mut [f64],
        v: &mut [f64],
        cfg: &TrainConfig,
        bc1: f64,
        bc2: f64,
    ) {
        for i in 0..theta.len() {
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            theta[i] -= cfg.learn_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
}

/// One optimization step; gradients flow only through the predictions, never
/// through the targets.
pub fn train_step(
    net: &mut MlpNet,
    batch: &TrainBatch,
    cfg: &TrainConfig,
    opt: &mut AdamState,
) -> Result<f64> {
    let (loss, grads) = batch_loss_and_gradient(net, batch, cfg);
    if !loss.is_finite() {
        return Err(Error::Diverged { step: opt.step, loss });
    }
    opt.update(net, &grads, cfg);
    Ok(loss)
}

/// Per-run training summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub param_checksum: String,
    pub wall_time_s: f64,
    pub config: TrainConfig,
}

impl TrainReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("TrainReport serializes")
    }

    /// Loss curve as `step,loss` CSV text.
    pub fn loss_csv(&self) -> String {
        let mut s = String::from("step,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            s.push_str(&format!("{},{}\n", i + 1, l));
        }
        s
    }
}

/// SHA-256 of the canonical parameter serialization.
pub fn param_checksum(net: &MlpNet) -> String {
    let json = serde_json::to_string(net).expect("MlpNet serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    format!("{:x}", hasher.finalize())
}

/// Full training run: shuffled minibatch epochs, fresh noise and time pairs
/// every step, Adam updates, and a divergence check per step.
///
/// When the dataset is smaller than the batch size, batch entries are drawn
/// with replacement instead of cycling epochs.
pub fn train(dataset: &[TrainPair], cfg: &TrainConfig) -> Result<(MlpNet, TrainReport)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    let z_dim = cfg.z_dim();
    for (i, p) in dataset.iter().enumerate() {
        if p.x.len() != z_dim || p.cond.len() != cfg.cond_dim {
            return Err(Error::Config(format!(
                "dataset row {i}: dims ({}, {}) do not match config ({}, {})",
                p.cond.len(),
                p.x.len(),
                cfg.cond_dim,
                z_dim
            )));
        }
    }

    let master = Rng::new(cfg.seed);
    let mut init_rng = master.derive(0);
    let mut data_rng = master.derive(1);
    let mut draw_rng = master.derive(2);

    let mut net = cfg.build_net(&mut init_rng);
    let mut opt = AdamState::new(&net);
    let mut losses = Vec::with_capacity(cfg.steps);

    let with_replacement = dataset.len() < cfg.batch_size;
    let mut perm: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = perm.len(); // force shuffle on first use

    let start = std::time::Instant::now();
    for step in 0..cfg.steps {
        let indices: Vec<usize> = if with_replacement {
            (0..cfg.batch_size)
                .map(|_| data_rng.next_below(dataset.len()))
                .collect()
        } else {
            if cursor + cfg.batch_size > perm.len() {
                data_rng.shuffle(&mut perm);
                cursor = 0;
            }
            let out = perm[cursor..cursor + cfg.batch_size].to_vec();
            cursor += cfg.batch_size;
            out
        };
        let batch = TrainBatch::draw(dataset, &indices, cfg.flow_ratio, &mut draw_rng);
        match train_step(&mut net, &batch, cfg, &mut opt) {
            Ok(loss) => losses.push(loss),
            Err(Error::Diverged { loss, .. }) => {
                return Err(Error::Diverged { step: step + 1, loss })
            }
            Err(e) => return Err(e),
        }
    }

    let report = TrainReport {
        losses,
        param_checksum: param_checksum(&net),
        wall_time_s: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Mat64;

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            steps: 5,
            chunk_h: 1,
            act_dim: 2,
            cond_dim: 2,
            hidden_dims: vec![8],
            time_embed_dim: 4,
            ..TrainConfig::default()
        }
    }

    fn toy_dataset(n: usize, seed: u64) -> Vec<TrainPair> {
        let mut rng = Rng::new(seed);
        (0..n)
            .map(|_| TrainPair {
                cond: gauss_sample(&mut rng, 2),
                x: gauss_sample(&mut rng, 2),
            })
            .collect()
    }

    #[test]
    fn time_pair_orders_endpoints() {
        let mut rng = Rng::new(1);
        for _ in 0..1000 {
            let p = sample_time_pair(&mut rng, 0.7);
            assert!(0.0 <= p.r && p.r <= p.t && p.t <= 1.0);
        }
    }

    #[test]
    fn flow_ratio_zero_all_degenerate() {
        let mut rng = Rng::new(2);
        for _ in 0..1000 {
            assert!(sample_time_pair(&mut rng, 0.0).is_degenerate());
        }
    }

    #[test]
    fn flow_ratio_one_none_degenerate() {
        let mut rng = Rng::new(3);
        let degenerate = (0..1000)
            .filter(|_| sample_time_pair(&mut rng, 1.0).is_degenerate())
            .count();
        assert_eq!(degenerate, 0);
    }

    #[test]
    fn flow_ratio_fraction_close_to_nominal() {
        let mut rng = Rng::new(4);
        let n = 20_000;
        let degenerate = (0..n)
            .filter(|_| sample_time_pair(&mut rng, 0.2).is_degenerate())
            .count();
        let frac = degenerate as f64 / n as f64;
        assert!((frac - 0.8).abs() < 0.015, "degenerate fraction {frac}");
    }

    fn random_net(z: usize, c: usize, hidden: &[usize], ted: usize, rng: &mut Rng) -> MlpNet {
        let mut net = MlpNet::new(z, c, hidden, ted, Activation::Tanh, rng);
        net.randomize_final_layer(rng);
        net
    }

    #[test]
    fn target_degenerate_pair_is_velocity_bitwise() {
        let mut rng = Rng::new(5);
        let net = random_net(2, 2, &[8], 4, &mut rng);
        let z = gauss_sample(&mut rng, 2);
        let cond = gauss_sample(&mut rng, 2);
        let v = gauss_sample(&mut rng, 2);
        let t = rng.next_f64();
        let tgt = meanflow_target(&net, &z, &cond, TimePair::new(t, t), &v);
        for i in 0..2 {
            assert_eq!(tgt[i].to_bits(), v[i].to_bits());
        }
    }

    #[test]
    fn target_zero_field_is_velocity() {
        let mut rng = Rng::new(6);
        let net = MlpNet::new(2, 2, &[8], 4, Activation::Tanh, &mut rng);
        let z = gauss_sample(&mut rng, 2);
        let cond = gauss_sample(&mut rng, 2);
        let v = gauss_sample(&mut rng, 2);
        let tgt = meanflow_target(&net, &z, &cond, TimePair::new(0.2, 0.9), &v);
        assert_eq!(tgt, v);
    }

    #[test]
    fn target_linear_net_closed_form() {
        let mut rng = Rng::new(7);
        let mut net = MlpNet::new(2, 0, &[], 4, Activation::Tanh, &mut rng);
        let a = Mat64::from_rows(vec![vec![0.3, -0.8], vec![1.1, 0.4]]);
        for i in 0..2 {
            for j in 0..2 {
                net.layers[0].w[(i, j)] = a[(i, j)];
            }
        }
        let z = gauss_sample(&mut rng, 2);
        let v = gauss_sample(&mut rng, 2);
        let cond = Vec64::zeros(0);
        let pair = TimePair::new(0.25, 0.85);
        let tgt = meanflow_target(&net, &z, &cond, pair, &v);
        let av = crate::math::matvec(&a, &v);
        for i in 0..2 {
            let expect = v[i] - (pair.t - pair.r) * av[i];
            assert!((tgt[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn l2_zero_when_equal() {
        let p = vec![Vec64::new(vec![1.0, 2.0])];
        let (loss, grads) = loss_l2(&p, &p.clone());
        assert_eq!(loss, 0.0);
        assert_eq!(grads[0].as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn l2_hand_example() {
        let p = vec![Vec64::new(vec![3.0, 4.0])];
        let t = vec![Vec64::zeros(2)];
        let (loss, grads) = loss_l2(&p, &t);
        assert_eq!(loss, 25.0);
        assert_eq!(grads[0].as_slice(), &[6.0, 8.0]);
    }

    #[test]
    fn l2_quadratic_homogeneity() {
        let p = vec![Vec64::new(vec![1.5, -2.0])];
        let t = vec![Vec64::zeros(2)];
        let (l1, _) = loss_l2(&p, &t);
        let p2 = vec![p[0].scale(2.0)];
        let (l2, _) = loss_l2(&p2, &t);
        assert!((l2 - 4.0 * l1).abs() < 1e-12);
    }

    #[test]
    fn adaptive_gamma_one_equals_l2_bitwise() {
        let mut rng = Rng::new(8);
        let preds: Vec<Vec64> = (0..5).map(|_| gauss_sample(&mut rng, 3)).collect();
        let tgts: Vec<Vec64> = (0..5).map(|_| gauss_sample(&mut rng, 3)).collect();
        let (la, ga) = loss_adaptive(&preds, &tgts, 1.0, 1e-3);
        let (ll, gl) = loss_l2(&preds, &tgts);
        assert_eq!(la.to_bits(), ll.to_bits());
        for (a, b) in ga.iter().zip(gl.iter()) {
            for i in 0..a.len() {
                assert_eq!(a[i].to_bits(), b[i].to_bits());
            }
        }
    }

    #[test]
    fn adaptive_hand_cell() {
        let p = vec![Vec64::new(vec![3.0, 4.0])];
        let t = vec![Vec64::zeros(2)];
        let (loss, _) = loss_adaptive(&p, &t, 0.5, 1e-3);
        let expect = 25.0 / (25.001f64).sqrt();
        assert!((loss - expect).abs() < 1e-9, "loss {loss} vs {expect}");
    }

    #[test]
    fn adaptive_downweights_outliers_relative_to_l2() {
        // sample 1 has a much larger error than sample 2
        let preds = vec![Vec64::new(vec![10.0, 0.0]), Vec64::new(vec![0.1, 0.0])];
        let tgts = vec![Vec64::zeros(2), Vec64::zeros(2)];
        let (_, g_l2) = loss_l2(&preds, &tgts);
        let (_, g_ad) = loss_adaptive(&preds, &tgts, 0.5, 1e-3);
        let ratio_l2 = g_l2[0].norm() / g_l2[1].norm();
        let ratio_ad = g_ad[0].norm() / g_ad[1].norm();
        assert!(
            ratio_ad < ratio_l2,
            "adaptive ratio {ratio_ad} not below l2 ratio {ratio_l2}"
        );
    }

    #[test]
    fn adaptive_continuous_at_gamma_boundary() {
        let mut rng = Rng::new(9);
        let preds: Vec<Vec64> = (0..4).map(|_| gauss_sample(&mut rng, 3)).collect();
        let tgts: Vec<Vec64> = (0..4).map(|_| gauss_sample(&mut rng, 3)).collect();
        let (near, _) = loss_adaptive(&preds, &tgts, 1.0 - 1e-8, 1e-3);
        let (at, _) = loss_l2(&preds, &tgts);
        assert!((near - at).abs() < 1e-6);
    }

    #[test]
    #[should_panic(expected = "gamma")]
    fn adaptive_rejects_bad_gamma() {
        let p = vec![Vec64::zeros(2)];
        let _ = loss_adaptive(&p, &p.clone(), 0.0, 1e-3);
    }

    #[test]
    fn train_step_zero_lr_keeps_parameters() {
        let dataset = toy_dataset(16, 10);
        let mut cfg = small_cfg();
        cfg.learn_rate = 0.0;
        let mut rng = Rng::new(11);
        let mut net = cfg.build_net(&mut rng);
        let before = net.flatten_params();
        let mut opt = AdamState::new(&net);
        let batch = TrainBatch::draw(&dataset, &[0, 1, 2, 3], cfg.flow_ratio, &mut rng);
        let loss = train_step(&mut net, &batch, &cfg, &mut opt).unwrap();
        assert!(loss.is_finite());
        let after = net.flatten_params();
        for i in 0..before.len() {
            assert_eq!(before[i].to_bits(), after[i].to_bits());
        }
    }

    #[test]
    fn first_step_loss_is_mean_velocity_norm() {
        // Zero-initialized final layer and degenerate pairs force pred = 0 and
        // u_tgt = v, so the L2 loss is the mean of ‖v‖².
        let dataset = toy_dataset(16, 12);
        let mut cfg = small_cfg();
        cfg.flow_ratio = 0.0;
        cfg.gamma = 1.0;
        let mut rng = Rng::new(13);
        let mut net = cfg.build_net(&mut rng);
        let mut opt = AdamState::new(&net);
        let batch = TrainBatch::draw(&dataset, &[0, 1, 2, 3], cfg.flow_ratio, &mut rng);
        let loss = train_step(&mut net, &batch, &cfg, &mut opt).unwrap();
        let expect: f64 = (0..batch.len())
            .map(|i| batch.e[i].sub(&batch.x[i]).norm_sq())
            .sum::<f64>()
            / batch.len() as f64;
        assert!((loss - expect).abs() < 1e-12, "loss {loss} vs {expect}");
    }

    #[test]
    fn frozen_targets_give_bit_identical_gradients() {
        let dataset = toy_dataset(16, 14);
        let cfg = small_cfg();
        let mut rng = Rng::new(15);
        let net = random_net(2, 2, &[8], 4, &mut rng);
        let batch = TrainBatch::draw(&dataset, &[0, 1, 2, 3, 4, 5], 0.9, &mut rng);
        let (l1, g1) = batch_loss_and_gradient(&net, &batch, &cfg);
        let frozen = compute_targets(&net, &batch);
        let (l2, g2) = batch_loss_and_gradient_frozen(&net, &batch, &cfg, &frozen);
        assert_eq!(l1.to_bits(), l2.to_bits());
        let (f1, f2) = (g1.flatten(), g2.flatten());
        for i in 0..f1.len() {
            assert_eq!(f1[i].to_bits(), f2[i].to_bits());
        }
    }

    #[test]
    fn train_rejects_zero_steps() {
        let dataset = toy_dataset(4, 16);
        let mut cfg = small_cfg();
        cfg.steps = 0;
        assert!(matches!(train(&dataset, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn train_rejects_empty_dataset() {
        let cfg = small_cfg();
        assert!(matches!(train(&[], &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn train_is_deterministic() {
        let dataset = toy_dataset(32, 17);
        let cfg = small_cfg();
        let (net_a, rep_a) = train(&dataset, &cfg).unwrap();
        let (net_b, rep_b) = train(&dataset, &cfg).unwrap();
        assert_eq!(rep_a.param_checksum, rep_b.param_checksum);
        assert_eq!(param_checksum(&net_a), param_checksum(&net_b));
        for (a, b) in rep_a.losses.iter().zip(rep_b.losses.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn config_toml_roundtrip_and_unknown_key() {
        let cfg = TrainConfig::default();
        let s = cfg.to_toml_string();
        let back = TrainConfig::from_toml_str(&s).unwrap();
        assert_eq!(cfg, back);

        let bad = format!("{s}\nflow_ration = 0.3\n");
        let err = TrainConfig::from_toml_str(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("flow_ration"), "error should name the key: {msg}");
    }

    #[test]
    fn config_validation_catches_bad_ranges() {
        let mut cfg = TrainConfig::default();
        cfg.gamma = 0.0;
        assert!(cfg.validate().is_err());
        cfg.gamma = 0.5;
        cfg.flow_ratio = 1.5;
        assert!(cfg.validate().is_err());
    }
}
