//! Dataset generation, chunk extraction, and the on-disk dataset format.
//!
//! Datasets are stored as one JSON record per line
//! (`{"task", "episode", "step", "obs", "act"}`) next to a
//! `<base>.meta.json` header carrying dimensions and the generator settings.
//! The loader rejects any line whose dimensions disagree with the header.

use super::expert::run_expert_episode;
use super::sim::{PickPlaceState, TaskTag};
use crate::math::{Rng, Vec64};
use crate::meanflow::TrainPair;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

/// One demonstration: aligned observation and action sequences.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub observations: Vec<Vec64>,
    pub actions: Vec<Vec64>,
    pub task: TaskTag,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Class means on the unit circle at angles `2πk/modes`.
pub fn gmm_mode_mean(k: usize, modes: usize) -> [f64; 2] {
    let theta = 2.0 * std::f64::consts::PI * k as f64 / modes as f64;
    [theta.cos(), theta.sin()]
}

pub const GMM_SIGMA: f64 = 0.05;

/// Conditional Gaussian-mixture pairs: `cond` is a one-hot class vector and
/// `x ~ N(mu_class, 0.05²·I)` in 2D. Per sample the class index is drawn
/// first, then the two normal deviates.
pub fn gen_gmm_dataset(rng: &mut Rng, n: usize, modes: usize) -> Vec<(Vec64, Vec64)> {
    assert!(n >= 1, "gen_gmm_dataset: n must be >= 1");
    assert!(modes >= 1, "gen_gmm_dataset: modes must be >= 1");
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let class = rng.next_below(modes);
        let mu = gmm_mode_mean(class, modes);
        let x = Vec64::new(vec![
            mu[0] + GMM_SIGMA * rng.next_gauss(),
            mu[1] + GMM_SIGMA * rng.next_gauss(),
        ]);
        let mut cond = vec![0.0; modes];
        cond[class] = 1.0;
        out.push((Vec64::new(cond), x));
    }
    out
}

/// Demonstrations with randomized object starts, one independent rng stream
/// per episode. GMM "episodes" are single-step records (one (cond, x) pair
/// each) with the default two modes.
pub fn gen_demos(task: TaskTag, rng: &Rng, episodes: usize) -> Vec<EpisodeRecord> {
    assert!(episodes >= 1, "gen_demos: episodes must be >= 1");
    match task {
        TaskTag::Gmm => {
            let mut grng = rng.derive(0);
            gen_gmm_dataset(&mut grng, episodes, 2)
                .into_iter()
                .map(|(cond, x)| EpisodeRecord {
                    observations: vec![cond],
                    actions: vec![x],
                    task,
                })
                .collect()
        }
        TaskTag::PickPlace | TaskTag::Sorting => (0..episodes)
            .map(|ep| {
                let mut ep_rng = rng.derive(ep as u64);
                let start = PickPlaceState::init(task, &mut ep_rng);
                let (observations, actions, _) = run_expert_episode(start, &mut ep_rng, 400);
                EpisodeRecord { observations, actions, task }
            })
            .collect(),
    }
}

/// Sliding-window training pairs: from step `i` the target is the flattened
/// actions `i..i+H`, zero-padded past the episode end (a terminal no-op).
pub fn make_training_pairs(records: &[EpisodeRecord], chunk_h: usize) -> Vec<TrainPair> {
    assert!(chunk_h >= 1, "chunk_h must be >= 1");
    let mut pairs = Vec::new();
    for rec in records {
        assert_eq!(rec.observations.len(), rec.actions.len(), "unaligned episode");
        if rec.is_empty() {
            continue;
        }
        let act_dim = rec.actions[0].len();
        for i in 0..rec.len() {
            let mut flat = Vec::with_capacity(chunk_h * act_dim);
            for j in 0..chunk_h {
                if i + j < rec.len() {
                    flat.extend_from_slice(rec.actions[i + j].as_slice());
                } else {
                    flat.extend(std::iter::repeat(0.0).take(act_dim));
                }
            }
            pairs.push(TrainPair {
                cond: rec.observations[i].clone(),
                x: Vec64::new(flat),
            });
        }
    }
    pairs
}

/// Sidecar header: dimensions plus the generator settings needed to
/// regenerate the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub task: TaskTag,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub episodes: usize,
    pub total_steps: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gmm_modes: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct DatasetLine {
    task: TaskTag,
    episode: usize,
    step: usize,
    obs: Vec<f64>,
    act: Vec<f64>,
}

fn meta_path(base: &Path) -> std::path::PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".meta.json");
    std::path::PathBuf::from(s)
}

/// Write `<base>` (JSONL records) and `<base>.meta.json`.
pub fn save_dataset(base: &Path, records: &[EpisodeRecord], meta: &DatasetMeta) -> Result<()> {
    let file = std::fs::File::create(base)?;
    let mut w = BufWriter::new(file);
    for (ep, rec) in records.iter().enumerate() {
        for step in 0..rec.len() {
            let line = DatasetLine {
                task: rec.task,
                episode: ep,
                step,
                obs: rec.observations[step].to_vec(),
                act: rec.actions[step].to_vec(),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    std::fs::write(meta_path(base), serde_json::to_string_pretty(meta)?)?;
    Ok(())
}

/// Load and validate a dataset written by [`save_dataset`].
pub fn load_dataset(base: &Path) -> Result<(Vec<EpisodeRecord>, DatasetMeta)> {
    let meta: DatasetMeta =
        serde_json::from_str(&std::fs::read_to_string(meta_path(base))?)?;
    let file = std::fs::File::open(base)?;
    let reader = std::io::BufReader::new(file);

    let mut records: Vec<EpisodeRecord> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: DatasetLine = serde_json::from_str(&line)
            .map_err(|e| Error::Dataset(format!("line {}: {e}", lineno + 1)))?;
        if parsed.obs.len() != meta.obs_dim || parsed.act.len() != meta.act_dim {
            return Err(Error::Dataset(format!(
                "line {}: dims ({}, {}) disagree with header ({}, {})",
                lineno + 1,
                parsed.obs.len(),
                parsed.act.len(),
                meta.obs_dim,
                meta.act_dim
            )));
        }
        if parsed.task != meta.task {
            return Err(Error::Dataset(format!(
                "line {}: task {} disagrees with header {}",
                lineno + 1,
                parsed.task,
                meta.task
            )));
        }
        if parsed.episode == records.len() {
            records.push(EpisodeRecord {
                observations: Vec::new(),
                actions: Vec::new(),
                task: parsed.task,
            });
        } else if parsed.episode != records.len() - 1 {
            return Err(Error::Dataset(format!(
                "line {}: episode index {} out of order",
                lineno + 1,
                parsed.episode
            )));
        }
        let rec = records.last_mut().expect("episode exists");
        if parsed.step != rec.len() {
            return Err(Error::Dataset(format!(
                "line {}: step index {} out of order",
                lineno + 1,
                parsed.step
            )));
        }
        rec.observations.push(Vec64::new(parsed.obs));
        rec.actions.push(Vec64::new(parsed.act));
    }
    if records.len() != meta.episodes {
        return Err(Error::Dataset(format!(
            "episode count {} disagrees with header {}",
            records.len(),
            meta.episodes
        )));
    }
    Ok((records, meta))
}

/// Header for a freshly generated dataset.
pub fn meta_for(records: &[EpisodeRecord], task: TaskTag, seed: u64) -> DatasetMeta {
    let (obs_dim, act_dim) = records
        .first()
        .filter(|r| !r.is_empty())
        .map(|r| (r.observations[0].len(), r.actions[0].len()))
        .unwrap_or((0, 0));
    DatasetMeta {
        task,
        obs_dim,
        act_dim,
        episodes: records.len(),
        total_steps: records.iter().map(|r| r.len()).sum(),
        seed,
        gmm_modes: matches!(task, TaskTag::Gmm).then_some(2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gmm_single_mode_concentrates() {
        let mut rng = Rng::new(1);
        let data = gen_gmm_dataset(&mut rng, 500, 1);
        let mu = gmm_mode_mean(0, 1);
        for (_, x) in &data {
            let d = ((x[0] - mu[0]).powi(2) + (x[1] - mu[1]).powi(2)).sqrt();
            assert!(d < 5.0 * GMM_SIGMA * 2.0, "sample {d} too far from the mode");
        }
    }

    #[test]
    fn gmm_two_mode_class_means() {
        let mut rng = Rng::new(2);
        let n = 4000;
        let data = gen_gmm_dataset(&mut rng, n, 2);
        for class in 0..2 {
            let mu = gmm_mode_mean(class, 2);
            let pts: Vec<&Vec64> = data
                .iter()
                .filter(|(c, _)| c[class] == 1.0)
                .map(|(_, x)| x)
                .collect();
            assert!(pts.len() > n / 3, "class {class} undersampled");
            for axis in 0..2 {
                let mean = pts.iter().map(|p| p[axis]).sum::<f64>() / pts.len() as f64;
                let tol = 3.0 * GMM_SIGMA / (pts.len() as f64).sqrt();
                assert!(
                    (mean - mu[axis]).abs() < tol,
                    "class {class} axis {axis}: {mean} vs {} (tol {tol})",
                    mu[axis]
                );
            }
        }
    }

    #[test]
    #[should_panic(expected = "n must be >= 1")]
    fn gmm_rejects_empty_request() {
        let mut rng = Rng::new(3);
        let _ = gen_gmm_dataset(&mut rng, 0, 2);
    }

    #[test]
    fn demos_are_expert_successful_and_bounded() {
        let rng = Rng::new(4);
        let records = gen_demos(TaskTag::PickPlace, &rng, 20);
        assert_eq!(records.len(), 20);
        for rec in &records {
            assert!(rec.len() <= 400);
            assert!(!rec.is_empty());
            assert_eq!(rec.observations.len(), rec.actions.len());
        }
    }

    #[test]
    fn demos_differ_across_seeds() {
        let a = gen_demos(TaskTag::PickPlace, &Rng::new(5), 1);
        let b = gen_demos(TaskTag::PickPlace, &Rng::new(6), 1);
        // initial object position lives in the first observation
        assert_ne!(a[0].observations[0], b[0].observations[0]);
    }

    #[test]
    fn training_pairs_window_and_padding() {
        let rec = EpisodeRecord {
            observations: vec![
                Vec64::new(vec![0.0]),
                Vec64::new(vec![1.0]),
                Vec64::new(vec![2.0]),
            ],
            actions: vec![
                Vec64::new(vec![10.0, 0.5]),
                Vec64::new(vec![20.0, 0.6]),
                Vec64::new(vec![30.0, 0.7]),
            ],
            task: TaskTag::Gmm,
        };
        let pairs = make_training_pairs(&[rec], 2);
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0].x.as_slice(), &[10.0, 0.5, 20.0, 0.6]);
        assert_eq!(pairs[1].x.as_slice(), &[20.0, 0.6, 30.0, 0.7]);
        // final window padded with the no-op action
        assert_eq!(pairs[2].x.as_slice(), &[30.0, 0.7, 0.0, 0.0]);
        assert_eq!(pairs[2].cond.as_slice(), &[2.0]);
    }

    #[test]
    fn dataset_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("demo.jsonl");
        let rng = Rng::new(7);
        let records = gen_demos(TaskTag::Sorting, &rng, 3);
        let meta = meta_for(&records, TaskTag::Sorting, 7);
        save_dataset(&base, &records, &meta).unwrap();
        let (loaded, lmeta) = load_dataset(&base).unwrap();
        assert_eq!(lmeta, meta);
        assert_eq!(loaded.len(), records.len());
        for (a, b) in loaded.iter().zip(records.iter()) {
            assert_eq!(a.len(), b.len());
            for i in 0..a.len() {
                assert_eq!(a.observations[i], b.observations[i]);
                assert_eq!(a.actions[i], b.actions[i]);
            }
        }
    }

    #[test]
    fn loader_rejects_dimension_inconsistent_lines() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("demo.jsonl");
        let rng = Rng::new(8);
        let records = gen_demos(TaskTag::PickPlace, &rng, 2);
        let meta = meta_for(&records, TaskTag::PickPlace, 8);
        save_dataset(&base, &records, &meta).unwrap();

        // corrupt one line: drop an action component
        let text = std::fs::read_to_string(&base).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[1] = lines[1].replace("\"act\":[", "\"act\":[9.9,");
        std::fs::write(&base, lines.join("\n")).unwrap();
        let err = load_dataset(&base).unwrap_err();
        assert!(matches!(err, Error::Dataset(_)), "got {err}");
    }

    #[test]
    fn gmm_records_are_single_step() {
        let recs = gen_demos(TaskTag::Gmm, &Rng::new(9), 10);
        assert_eq!(recs.len(), 10);
        for r in &recs {
            assert_eq!(r.len(), 1);
            assert_eq!(r.observations[0].len(), 2);
            assert_eq!(r.actions[0].len(), 2);
        }
    }
}
