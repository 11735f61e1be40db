//! Metrics and sweep orchestration.
//!
//! Energy distance is computed as the V-statistic (all ordered pairs,
//! including the zero diagonal in the within-sample means): it is the energy
//! distance between the two empirical distributions, hence non-negative and
//! exactly zero for identical multisets.

use crate::math::{Rng, Vec64};
use crate::meanflow::{self, TrainConfig, TrainPair};
use crate::sampler::{Normalizer, Policy, SampleConfig, SampleMode};
use crate::tasks::{
    eval_success, gen_demos, gmm_mode_mean, make_training_pairs, EpisodeRecord, SamplingPolicy,
    TaskTag, GMM_SIGMA,
};
use crate::Result;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Energy distance between two non-empty sample sets,
/// `2·mean‖a_i − b_j‖ − mean‖a_i − a_i'‖ − mean‖b_j − b_j'‖`
/// with every mean taken over all ordered pairs.
pub fn energy_distance(a: &[Vec64], b: &[Vec64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "energy_distance: empty sample set");
    // The cross distances are summed in sorted order so that swapping the
    // arguments gives the bit-identical statistic.
    let mut cross: Vec<f64> = Vec::with_capacity(a.len() * b.len());
    for xi in a {
        for yj in b {
            cross.push(xi.sub(yj).norm());
        }
    }
    cross.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mean_cross = cross.iter().sum::<f64>() / cross.len() as f64;

    let mean_within = |x: &[Vec64]| {
        let mut s = 0.0;
        for xi in x {
            for xj in x {
                s += xi.sub(xj).norm();
            }
        }
        s / (x.len() * x.len()) as f64
    };
    // within-terms combine via a commutative addition, preserving symmetry
    2.0 * mean_cross - (mean_within(a) + mean_within(b))
}

/// Median wall time per generated chunk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingResult {
    pub median_s: f64,
    pub warmup: usize,
    pub reps: usize,
    /// Set when no warmup repetitions were discarded.
    pub no_warmup: bool,
}

/// Time `generate_chunk` over `reps` repetitions after `warmup` discards.
pub fn time_generation(
    policy: &Policy,
    obs: &Vec64,
    cfg: &SampleConfig,
    warmup: usize,
    reps: usize,
    rng: &mut Rng,
) -> TimingResult {
    assert!(reps >= 3, "time_generation: reps must be >= 3");
    for _ in 0..warmup {
        let _ = policy.generate_chunk(obs, cfg, rng);
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        let chunk = policy.generate_chunk(obs, cfg, rng);
        times.push(start.elapsed().as_secs_f64());
        assert!(chunk.all_finite());
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    TimingResult {
        median_s: percentile(&times, 50.0),
        warmup,
        reps,
        no_warmup: warmup == 0,
    }
}

/// Linear-interpolation percentile of an ascending-sorted slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    assert!((0.0..=100.0).contains(&p));
    if sorted.len() == 1 {
        return sorted[0];
    }
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    percentile(&v, 50.0)
}

/// Ablation axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    FlowRatio,
    Gamma,
    Nfe,
    ChunkSize,
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SweepAxis::FlowRatio => "flow_ratio",
            SweepAxis::Gamma => "gamma",
            SweepAxis::Nfe => "nfe",
            SweepAxis::ChunkSize => "chunk_size",
        };
        f.write_str(s)
    }
}

/// Evaluation protocol shared by `eval` runs and sweep cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalProtocol {
    pub rounds: usize,
    pub trials: usize,
    pub max_steps: usize,
    /// 0 means "execute the whole chunk" (exec_h = chunk_h).
    pub exec_h: usize,
    pub nfe: usize,
    pub mode: SampleMode,
    /// Sample-set size for energy distance.
    pub energy_samples: usize,
    /// Held-out episodes (sim tasks) or held-out pairs (gmm).
    pub heldout_episodes: usize,
    pub eval_seed: u64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            rounds: 3,
            trials: 10,
            max_steps: 120,
            exec_h: 0,
            nfe: 1,
            mode: SampleMode::MeanFlow,
            energy_samples: 256,
            heldout_episodes: 20,
            eval_seed: 1000,
        }
    }
}

/// One sweep: an axis, its values, seeds, and the shared base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub task: TaskTag,
    /// Demonstration episodes (or GMM pairs) per seed.
    pub episodes: usize,
    #[serde(default)]
    pub base: TrainConfig,
    #[serde(default)]
    pub eval: EvalProtocol,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(crate::Error::Config("sweep values must be non-empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(crate::Error::Config("sweep seeds must be non-empty".into()));
        }
        if self.episodes == 0 {
            return Err(crate::Error::Config("episodes must be >= 1".into()));
        }
        self.base.validate()
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Success and sample-quality metrics for one trained policy.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PolicyMetrics {
    pub success_pct: f64,
    pub energy_distance: f64,
    pub gen_time_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Ok(PolicyMetrics),
    Failed { message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCell {
    pub axis_value: f64,
    pub seed: u64,
    pub outcome: CellOutcome,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueSummary {
    pub value: f64,
    pub median_success: f64,
    pub iqr_success: f64,
    pub median_energy: f64,
    pub iqr_energy: f64,
    pub median_time_s: f64,
    pub failed_cells: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub axis: SweepAxis,
    pub task: TaskTag,
    pub cells: Vec<SweepCell>,
    pub summary: Vec<ValueSummary>,
}

impl MetricReport {
    /// Per-cell CSV; failed cells leave the metric columns empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("axis_value,seed,success_pct,energy_distance,gen_time_s\n");
        for c in &self.cells {
            match &c.outcome {
                CellOutcome::Ok(m) => s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    c.axis_value, c.seed, m.success_pct, m.energy_distance, m.gen_time_s
                )),
                CellOutcome::Failed { .. } => {
                    s.push_str(&format!("{},{},,,\n", c.axis_value, c.seed))
                }
            }
        }
        s
    }

    pub fn to_summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("MetricReport serializes")
    }

    pub fn any_failed(&self) -> bool {
        self.cells
            .iter()
            .any(|c| matches!(c.outcome, CellOutcome::Failed { .. }))
    }
}

/// Train a policy for one sweep cell: fit the action normalizer on the
/// chunked pairs, train in normalized space, and bundle the result.
pub fn train_policy(
    records: &[EpisodeRecord],
    cfg: &TrainConfig,
    task: TaskTag,
) -> Result<(Policy, meanflow::TrainReport)> {
    let pairs = make_training_pairs(records, cfg.chunk_h);
    if pairs.is_empty() {
        return Err(crate::Error::Config("no training pairs extracted".into()));
    }
    let xs: Vec<Vec64> = pairs.iter().map(|p| p.x.clone()).collect();
    let norm = Normalizer::fit(&xs, cfg.act_dim);
    let normalized: Vec<TrainPair> = pairs
        .into_iter()
        .map(|p| TrainPair { x: norm.normalize_flat(&p.x), cond: p.cond })
        .collect();
    let (net, report) = meanflow::train(&normalized, cfg)?;
    let policy = Policy {
        net,
        norm,
        chunk_h: cfg.chunk_h,
        act_dim: cfg.act_dim,
        cond_dim: cfg.cond_dim,
        task,
    };
    Ok((policy, report))
}

/// GMM check: fraction of generated samples that land within 5σ of the mode
/// they were conditioned on (as a percentage), plus the energy distance
/// against held-out data.
pub fn eval_gmm_policy(
    policy: &Policy,
    heldout: &[TrainPair],
    proto: &EvalProtocol,
) -> PolicyMetrics {
    assert!(!heldout.is_empty(), "gmm evaluation needs held-out pairs");
    let cfg = SampleConfig { nfe: proto.nfe, mode: proto.mode, seed: proto.eval_seed };
    let mut rng = Rng::new(Rng::derive_seed(proto.eval_seed, 0x9e));
    let modes = policy.cond_dim;

    let mut samples = Vec::with_capacity(proto.energy_samples);
    let mut hits = 0usize;
    for i in 0..proto.energy_samples {
        let cond = &heldout[i % heldout.len()].cond;
        let chunk = policy.generate_chunk(cond, &cfg, &mut rng);
        let x = chunk.flatten();
        let class = cond
            .iter()
            .position(|&c| c == 1.0)
            .expect("one-hot condition");
        let mu = gmm_mode_mean(class, modes);
        let d = ((x[0] - mu[0]).powi(2) + (x[1] - mu[1]).powi(2)).sqrt();
        if d < 5.0 * GMM_SIGMA {
            hits += 1;
        }
        samples.push(x);
    }
    let reference: Vec<Vec64> = heldout.iter().map(|p| p.x.clone()).collect();
    PolicyMetrics {
        success_pct: 100.0 * hits as f64 / proto.energy_samples as f64,
        energy_distance: energy_distance(&samples, &reference),
        gen_time_s: 0.0,
    }
}

/// Simulator check: closed-loop success plus the energy distance between
/// generated chunks and held-out expert chunks at matching observations.
pub fn eval_sim_policy(
    policy: &Policy,
    heldout_pairs: &[TrainPair],
    proto: &EvalProtocol,
) -> PolicyMetrics {
    let exec_h = if proto.exec_h == 0 {
        policy.chunk_h
    } else {
        proto.exec_h.min(policy.chunk_h)
    };
    let cfg = SampleConfig { nfe: proto.nfe, mode: proto.mode, seed: proto.eval_seed };
    let sampling = SamplingPolicy { policy, cfg };
    let (success_pct, _) = eval_success(
        &sampling,
        policy.task,
        proto.rounds,
        proto.trials,
        exec_h,
        proto.max_steps,
        proto.eval_seed,
    );

    let n = proto.energy_samples.min(heldout_pairs.len().max(1));
    let mut rng = Rng::new(Rng::derive_seed(proto.eval_seed, 0xE0));
    let mut generated = Vec::with_capacity(n);
    let mut reference = Vec::with_capacity(n);
    for i in 0..n {
        let pair = &heldout_pairs[i % heldout_pairs.len()];
        let chunk = policy.generate_chunk(&pair.cond, &cfg, &mut rng);
        generated.push(chunk.flatten());
        reference.push(pair.x.clone());
    }
    PolicyMetrics {
        success_pct,
        energy_distance: energy_distance(&generated, &reference),
        gen_time_s: 0.0,
    }
}

fn apply_axis(base: &TrainConfig, axis: SweepAxis, value: f64, task: TaskTag) -> TrainConfig {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::FlowRatio => cfg.flow_ratio = value,
        SweepAxis::Gamma => cfg.gamma = value,
        SweepAxis::ChunkSize => cfg.chunk_h = value.round() as usize,
        SweepAxis::Nfe => {}
    }
    if task.is_sim() {
        cfg.cond_dim = task.obs_dim();
        cfg.act_dim = task.act_dim();
    }
    cfg
}

/// Run a full sweep: for each (value, seed) cell, train (sharing one net per
/// seed when the axis is sampling-only), evaluate success and energy
/// distance, and time chunk generation. Cell failures are recorded in the
/// report instead of aborting the sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<MetricReport> {
    spec.validate()?;
    let mut cells = Vec::new();

    for &seed in &spec.seeds {
        let data_rng = Rng::new(Rng::derive_seed(seed, 0xDA7A));
        let records = gen_demos(spec.task, &data_rng, spec.episodes);
        let heldout_rng = Rng::new(Rng::derive_seed(seed, 0x4E1D));
        let heldout_records = gen_demos(spec.task, &heldout_rng, spec.eval.heldout_episodes);

        if spec.axis == SweepAxis::Nfe {
            // sampling-only axis: one trained net per seed
            let mut cfg = apply_axis(&spec.base, spec.axis, 0.0, spec.task);
            cfg.seed = seed;
            match train_policy(&records, &cfg, spec.task) {
                Ok((policy, _)) => {
                    let heldout = make_training_pairs(&heldout_records, cfg.chunk_h);
                    for &value in &spec.values {
                        let mut proto = spec.eval.clone();
                        proto.nfe = value.round() as usize;
                        cells.push(evaluate_cell(&policy, &heldout, &proto, value, seed));
                    }
                }
                Err(e) => {
                    for &value in &spec.values {
                        cells.push(SweepCell {
                            axis_value: value,
                            seed,
                            outcome: CellOutcome::Failed { message: e.to_string() },
                        });
                    }
                }
            }
        } else {
            for &value in &spec.values {
                let mut cfg = apply_axis(&spec.base, spec.axis, value, spec.task);
                cfg.seed = seed;
                let cell = match train_policy(&records, &cfg, spec.task) {
                    Ok((policy, _)) => {
                        let heldout = make_training_pairs(&heldout_records, cfg.chunk_h);
                        evaluate_cell(&policy, &heldout, &spec.eval, value, seed)
                    }
                    Err(e) => SweepCell {
                        axis_value: value,
                        seed,
                        outcome: CellOutcome::Failed { message: e.to_string() },
                    },
                };
                cells.push(cell);
            }
        }
    }

    let summary = summarize(&spec.values, &cells);
    Ok(MetricReport { axis: spec.axis, task: spec.task, cells, summary })
}

fn evaluate_cell(
    policy: &Policy,
    heldout: &[TrainPair],
    proto: &EvalProtocol,
    value: f64,
    seed: u64,
) -> SweepCell {
    let mut metrics = if policy.task.is_sim() {
        eval_sim_policy(policy, heldout, proto)
    } else {
        eval_gmm_policy(policy, heldout, proto)
    };
    let cfg = SampleConfig { nfe: proto.nfe, mode: proto.mode, seed: proto.eval_seed };
    let obs = if heldout.is_empty() {
        Vec64::zeros(policy.cond_dim)
    } else {
        heldout[0].cond.clone()
    };
    let mut rng = Rng::new(Rng::derive_seed(proto.eval_seed, 0x717E));
    metrics.gen_time_s = time_generation(policy, &obs, &cfg, 3, 9, &mut rng).median_s;
    SweepCell { axis_value: value, seed, outcome: CellOutcome::Ok(metrics) }
}

fn summarize(values: &[f64], cells: &[SweepCell]) -> Vec<ValueSummary> {
    values
        .iter()
        .map(|&value| {
            let ok: Vec<&PolicyMetrics> = cells
                .iter()
                .filter(|c| c.axis_value == value)
                .filter_map(|c| match &c.outcome {
                    CellOutcome::Ok(m) => Some(m),
                    CellOutcome::Failed { .. } => None,
                })
                .collect();
            let failed = cells
                .iter()
                .filter(|c| {
                    c.axis_value == value && matches!(c.outcome, CellOutcome::Failed { .. })
                })
                .count();
            let stat = |f: fn(&PolicyMetrics) -> f64| -> (f64, f64) {
                if ok.is_empty() {
                    return (f64::NAN, f64::NAN);
                }
                let mut v: Vec<f64> = ok.iter().map(|m| f(m)).collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                (
                    percentile(&v, 50.0),
                    percentile(&v, 75.0) - percentile(&v, 25.0),
                )
            };
            let (median_success, iqr_success) = stat(|m| m.success_pct);
            let (median_energy, iqr_energy) = stat(|m| m.energy_distance);
            let (median_time_s, _) = stat(|m| m.gen_time_s);
            ValueSummary {
                value,
                median_success,
                iqr_success,
                median_energy,
                iqr_energy,
                median_time_s,
                failed_cells: failed,
            }
        })
        .collect()
}
