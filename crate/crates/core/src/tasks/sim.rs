//! Deterministic point-mass pick-place simulator.
//!
//! The workspace is `[0,1]²`. An action is `(dx, dy, g)`: a movement delta
//! clipped to ±[`MOVE_MAX`] per axis and a gripper command thresholded at
//! 0.5. Grasping and releasing are edge-triggered on the gripper command, so
//! repeating the current command is always a no-op:
//!
//! - close edge within [`GRASP_RADIUS`] of an unplaced object → grasp it
//!   (nearest first);
//! - open edge while holding → the object drops at the agent position, and
//!   counts as placed when that is within [`RELEASE_RADIUS`] of its own goal.
//!
//! While held, an object tracks the agent exactly. `(state, action) → state`
//! is a pure function.

use crate::math::{Rng, Vec64};
use serde::{Deserialize, Serialize};

pub const MOVE_MAX: f64 = 0.05;
pub const GRASP_RADIUS: f64 = 0.03;
pub const RELEASE_RADIUS: f64 = 0.05;

/// Objects start uniformly inside this square (per-axis bounds).
pub const OBJECT_REGION: (f64, f64) = (0.35, 0.65);
pub const AGENT_START: [f64; 2] = [0.5, 0.1];

/// (grasp margin, release margin) for scripted control: tight enough that a
/// jittered actuation step cannot leave the corresponding radius.
pub fn scripted_margins() -> (f64, f64) {
    (0.02, 0.035)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskTag {
    Gmm,
    PickPlace,
    Sorting,
}

impl std::fmt::Display for TaskTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TaskTag::Gmm => "gmm",
            TaskTag::PickPlace => "pickplace",
            TaskTag::Sorting => "sorting",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for TaskTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gmm" => Ok(TaskTag::Gmm),
            "pickplace" => Ok(TaskTag::PickPlace),
            "sorting" => Ok(TaskTag::Sorting),
            other => Err(format!("unknown task '{other}' (expected gmm|pickplace|sorting)")),
        }
    }
}

impl TaskTag {
    pub fn n_objects(&self) -> usize {
        match self {
            TaskTag::Gmm => 0,
            TaskTag::PickPlace => 1,
            TaskTag::Sorting => 2,
        }
    }

    /// Fixed goal position for each object index.
    pub fn goals(&self) -> Vec<[f64; 2]> {
        match self {
            TaskTag::Gmm => vec![],
            TaskTag::PickPlace => vec![[0.85, 0.85]],
            TaskTag::Sorting => vec![[0.15, 0.85], [0.85, 0.85]],
        }
    }

    pub fn is_sim(&self) -> bool {
        !matches!(self, TaskTag::Gmm)
    }

    /// Observation feature dimension of [`featurize`].
    pub fn obs_dim(&self) -> usize {
        match self {
            TaskTag::Gmm => panic!("gmm has no simulator observation"),
            // agent(2) + gripper + held + obj(2) + placed + goal(2)
            TaskTag::PickPlace => 9,
            // agent(2) + gripper + held(2) + obj(4) + placed(2) + goal(4)
            TaskTag::Sorting => 15,
        }
    }

    pub fn act_dim(&self) -> usize {
        match self {
            TaskTag::Gmm => 2,
            TaskTag::PickPlace | TaskTag::Sorting => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PickPlaceState {
    pub task: TaskTag,
    pub agent_xy: [f64; 2],
    /// 0.0 open, 1.0 closed.
    pub gripper: f64,
    pub object_xy: Vec<[f64; 2]>,
    pub held_object: Option<usize>,
    pub goal_xy: Vec<[f64; 2]>,
    /// Object sits in its own goal box.
    pub placed: Vec<bool>,
    /// Credit bookkeeping: object was successfully grasped at some point.
    pub grasped_ever: Vec<bool>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl PickPlaceState {
    /// Initial state with object positions drawn uniformly from
    /// [`OBJECT_REGION`] (x then y, object order).
    pub fn init(task: TaskTag, rng: &mut Rng) -> Self {
        assert!(task.is_sim(), "gmm has no simulator state");
        let n = task.n_objects();
        let (lo, hi) = OBJECT_REGION;
        let object_xy: Vec<[f64; 2]> = (0..n)
            .map(|_| [rng.uniform_in(lo, hi), rng.uniform_in(lo, hi)])
            .collect();
        PickPlaceState {
            task,
            agent_xy: AGENT_START,
            gripper: 0.0,
            object_xy,
            held_object: None,
            goal_xy: task.goals(),
            placed: vec![false; n],
            grasped_ever: vec![false; n],
        }
    }

    pub fn is_success(&self) -> bool {
        self.placed.iter().all(|&p| p)
    }
}

/// Apply one action; inputs are clipped, never rejected.
pub fn pickplace_step(s: &PickPlaceState, a: &Vec64) -> PickPlaceState {
    assert_eq!(a.len(), 3, "action must be (dx, dy, g)");
    let mut next = s.clone();

    let dx = a[0].clamp(-MOVE_MAX, MOVE_MAX);
    let dy = a[1].clamp(-MOVE_MAX, MOVE_MAX);
    next.agent_xy = [
        (s.agent_xy[0] + dx).clamp(0.0, 1.0),
        (s.agent_xy[1] + dy).clamp(0.0, 1.0),
    ];
    if let Some(k) = next.held_object {
        next.object_xy[k] = next.agent_xy;
    }

    let g_cmd = a[2] >= 0.5;
    let was_closed = s.gripper >= 0.5;
    if g_cmd && !was_closed {
        // close edge: grasp the nearest free object in range
        if next.held_object.is_none() {
            let mut best: Option<(usize, f64)> = None;
            for (i, &oxy) in next.object_xy.iter().enumerate() {
                if next.placed[i] {
                    continue;
                }
                let d = dist(next.agent_xy, oxy);
                if d <= GRASP_RADIUS && best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
            if let Some((i, _)) = best {
                next.held_object = Some(i);
                next.grasped_ever[i] = true;
                next.object_xy[i] = next.agent_xy;
            }
        }
        next.gripper = 1.0;
    } else if !g_cmd && was_closed {
        // open edge: drop whatever is held at the agent position
        if let Some(k) = next.held_object.take() {
            next.object_xy[k] = next.agent_xy;
            if dist(next.agent_xy, next.goal_xy[k]) <= RELEASE_RADIUS {
                next.placed[k] = true;
            }
        }
        next.gripper = 0.0;
    }
    next
}

/// Exact state features, laid out as
/// `[agent, gripper, held flags, object positions, placed flags, goals]`.
pub fn featurize(s: &PickPlaceState) -> Vec64 {
    let n = s.task.n_objects();
    let mut f = Vec::with_capacity(s.task.obs_dim());
    f.extend_from_slice(&s.agent_xy);
    f.push(s.gripper);
    for i in 0..n {
        f.push(if s.held_object == Some(i) { 1.0 } else { 0.0 });
    }
    for oxy in &s.object_xy {
        f.extend_from_slice(oxy);
    }
    for &p in &s.placed {
        f.push(if p { 1.0 } else { 0.0 });
    }
    for g in &s.goal_xy {
        f.extend_from_slice(g);
    }
    Vec64::new(f)
}

/// Inverse of [`featurize`]; grasp history is not observable, so it is
/// reconstructed conservatively from the placed/held flags.
pub fn defeaturize(obs: &Vec64, task: TaskTag) -> PickPlaceState {
    assert_eq!(obs.len(), task.obs_dim(), "observation length mismatch");
    let n = task.n_objects();
    let mut i = 0;
    let mut take = |k: usize| {
        let s = (0..k).map(|j| obs[i + j]).collect::<Vec<_>>();
        i += k;
        s
    };
    let agent = take(2);
    let gripper = take(1)[0];
    let held_flags = take(n);
    let mut object_xy = Vec::with_capacity(n);
    for _ in 0..n {
        let o = take(2);
        object_xy.push([o[0], o[1]]);
    }
    let placed_flags = take(n);
    let mut goal_xy = Vec::with_capacity(n);
    for _ in 0..n {
        let g = take(2);
        goal_xy.push([g[0], g[1]]);
    }
    let held_object = held_flags.iter().position(|&h| h >= 0.5);
    let placed: Vec<bool> = placed_flags.iter().map(|&p| p >= 0.5).collect();
    let grasped_ever: Vec<bool> = placed
        .iter()
        .enumerate()
        .map(|(k, &p)| p || held_object == Some(k))
        .collect();
    PickPlaceState {
        task,
        agent_xy: [agent[0], agent[1]],
        gripper,
        object_xy,
        held_object,
        goal_xy,
        placed,
        grasped_ever,
    }
}

/// Partial-credit score: equal credit per object for a successful grasp and
/// for a correct placement (pickplace 0.5 + 0.5, sorting 4 × 0.25).
pub fn task_score(s: &PickPlaceState) -> f64 {
    let n = s.task.n_objects() as f64;
    let mut score = 0.0;
    for i in 0..s.task.n_objects() {
        if s.grasped_ever[i] {
            score += 0.5 / n;
        }
        if s.placed[i] {
            score += 0.5 / n;
        }
    }
    score
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rng;
    use proptest::prelude::*;

    fn near_object_state() -> PickPlaceState {
        let mut s = PickPlaceState::init(TaskTag::PickPlace, &mut Rng::new(1));
        s.agent_xy = s.object_xy[0];
        s
    }

    #[test]
    fn identity_action_leaves_state_unchanged() {
        let s = near_object_state();
        let a = Vec64::new(vec![0.0, 0.0, s.gripper]);
        assert_eq!(pickplace_step(&s, &a), s);

        // Also with the gripper already closed right next to the object: no
        // close edge, so no grasp.
        let mut closed = near_object_state();
        closed.gripper = 1.0;
        let a = Vec64::new(vec![0.0, 0.0, 1.0]);
        assert_eq!(pickplace_step(&closed, &a), closed);
    }

    #[test]
    fn close_edge_at_object_grasps() {
        let s = near_object_state();
        let next = pickplace_step(&s, &Vec64::new(vec![0.0, 0.0, 1.0]));
        assert_eq!(next.held_object, Some(0));
        assert!(next.grasped_ever[0]);
        assert_eq!(next.object_xy[0], next.agent_xy);
    }

    #[test]
    fn movement_is_clamped_to_workspace() {
        let mut s = PickPlaceState::init(TaskTag::PickPlace, &mut Rng::new(2));
        s.agent_xy = [0.99, 0.01];
        let next = pickplace_step(&s, &Vec64::new(vec![5.0, -5.0, 0.0]));
        // delta clipped to ±0.05 first, then clamped to the unit square
        assert_eq!(next.agent_xy, [1.0, 0.0]);
    }

    #[test]
    fn open_edge_near_goal_places() {
        let mut s = PickPlaceState::init(TaskTag::PickPlace, &mut Rng::new(3));
        s.agent_xy = s.goal_xy[0];
        s.gripper = 1.0;
        s.held_object = Some(0);
        s.object_xy[0] = s.agent_xy;
        s.grasped_ever[0] = true;
        let next = pickplace_step(&s, &Vec64::new(vec![0.0, 0.0, 0.0]));
        assert!(next.placed[0]);
        assert!(next.held_object.is_none());
        assert!(next.is_success());
        assert_eq!(task_score(&next), 1.0);
    }

    #[test]
    fn open_edge_away_from_goal_drops_without_credit() {
        let mut s = PickPlaceState::init(TaskTag::PickPlace, &mut Rng::new(4));
        s.agent_xy = [0.2, 0.2];
        s.gripper = 1.0;
        s.held_object = Some(0);
        s.object_xy[0] = s.agent_xy;
        s.grasped_ever[0] = true;
        let next = pickplace_step(&s, &Vec64::new(vec![0.0, 0.0, 0.0]));
        assert!(!next.placed[0]);
        assert!(next.held_object.is_none());
        assert_eq!(next.object_xy[0], [0.2, 0.2]);
        assert_eq!(task_score(&next), 0.5);
    }

    #[test]
    fn sorting_wrong_goal_release_gives_no_match_credit() {
        let mut s = PickPlaceState::init(TaskTag::Sorting, &mut Rng::new(5));
        // hold object 1, release at goal 0
        s.agent_xy = s.goal_xy[0];
        s.gripper = 1.0;
        s.held_object = Some(1);
        s.object_xy[1] = s.agent_xy;
        s.grasped_ever[1] = true;
        let next = pickplace_step(&s, &Vec64::new(vec![0.0, 0.0, 0.0]));
        assert!(!next.placed[1]);
        assert!((task_score(&next) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn featurize_roundtrip() {
        for task in [TaskTag::PickPlace, TaskTag::Sorting] {
            let mut rng = Rng::new(6);
            let mut s = PickPlaceState::init(task, &mut rng);
            s.gripper = 1.0;
            s.held_object = Some(0);
            s.object_xy[0] = s.agent_xy;
            s.grasped_ever[0] = true;
            let obs = featurize(&s);
            assert_eq!(obs.len(), task.obs_dim());
            let back = defeaturize(&obs, task);
            assert_eq!(back, s);
        }
    }

    proptest! {
        // A held object tracks the agent after every step, whatever the action.
        #[test]
        fn held_object_locks_to_agent(
            seed in 0u64..200,
            dx in -0.1f64..0.1,
            dy in -0.1f64..0.1,
            g in 0.0f64..1.0,
        ) {
            let mut rng = Rng::new(seed);
            let mut s = PickPlaceState::init(TaskTag::PickPlace, &mut rng);
            s.agent_xy = s.object_xy[0];
            let mut s = pickplace_step(&s, &Vec64::new(vec![0.0, 0.0, 1.0]));
            prop_assume!(s.held_object.is_some());
            s = pickplace_step(&s, &Vec64::new(vec![dx, dy, g.max(0.5)]));
            if let Some(k) = s.held_object {
                prop_assert_eq!(s.object_xy[k], s.agent_xy);
            }
        }

        // Pure function: same state and action give the same next state.
        #[test]
        fn step_is_deterministic(seed in 0u64..100, dx in -0.1f64..0.1, dy in -0.1f64..0.1) {
            let mut rng = Rng::new(seed);
            let s = PickPlaceState::init(TaskTag::Sorting, &mut rng);
            let a = Vec64::new(vec![dx, dy, 1.0]);
            prop_assert_eq!(pickplace_step(&s, &a), pickplace_step(&s, &a));
        }
    }
}
