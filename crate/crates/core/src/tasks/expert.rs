//! Scripted demonstration policy.
//!
//! A proportional controller: head for the first unplaced object, close the
//! gripper once safely inside the grasp radius, carry to that object's goal,
//! open. Movement tops out just below the simulator's per-step clip and gets
//! a small uniform jitter so demonstrations are not perfectly smooth.

use super::sim::{defeaturize, pickplace_step, scripted_margins, PickPlaceState, TaskTag};
use crate::math::{Rng, Vec64};

/// Per-coordinate movement jitter, U(±0.005).
const JITTER: f64 = 0.005;
/// Slightly below MOVE_MAX so jitter cannot push a step past the clip.
const SPEED: f64 = 0.045;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// One expert action for the current state.
pub fn scripted_expert(s: &PickPlaceState, noise: &mut Rng) -> Vec64 {
    let (grasp_margin, release_margin) = scripted_margins();
    let jit = |rng: &mut Rng| rng.uniform_in(-JITTER, JITTER);

    if let Some(k) = s.held_object {
        let goal = s.goal_xy[k];
        let d = dist(s.agent_xy, goal);
        if d <= release_margin {
            // open → release; jitter keeps us inside the release radius
            return Vec64::new(vec![jit(noise), jit(noise), 0.0]);
        }
        let mut a = step_toward(s.agent_xy, goal, noise);
        a[2] = 1.0; // keep holding
        return Vec64::new(a.to_vec());
    }

    // nothing held: target the first unplaced object
    let target = match s.placed.iter().position(|&p| !p) {
        Some(i) => i,
        None => return Vec64::new(vec![0.0, 0.0, 0.0]), // task done
    };
    if s.gripper >= 0.5 {
        // Recovery: a closed empty gripper must reopen before it can grasp.
        return Vec64::new(vec![jit(noise), jit(noise), 0.0]);
    }
    let oxy = s.object_xy[target];
    if dist(s.agent_xy, oxy) <= grasp_margin {
        return Vec64::new(vec![jit(noise), jit(noise), 1.0]); // close → grasp
    }
    let a = step_toward(s.agent_xy, oxy, noise);
    Vec64::new(a.to_vec())
}

fn step_toward(from: [f64; 2], to: [f64; 2], noise: &mut Rng) -> [f64; 3] {
    let d = dist(from, to);
    let step = SPEED.min(d);
    let (ux, uy) = if d > 0.0 {
        ((to[0] - from[0]) / d, (to[1] - from[1]) / d)
    } else {
        (0.0, 0.0)
    };
    [
        step * ux + noise.uniform_in(-JITTER, JITTER),
        step * uy + noise.uniform_in(-JITTER, JITTER),
        0.0,
    ]
}

/// Roll the expert forward until success; panics after `max_steps` (the
/// controller is expected to finish well inside the budget).
pub fn run_expert_episode(
    state: PickPlaceState,
    rng: &mut Rng,
    max_steps: usize,
) -> (Vec<Vec64>, Vec<Vec64>, PickPlaceState) {
    let mut s = state;
    let mut observations = Vec::new();
    let mut actions = Vec::new();
    for _ in 0..max_steps {
        if s.is_success() {
            return (observations, actions, s);
        }
        let obs = super::sim::featurize(&s);
        let a = scripted_expert(&s, rng);
        observations.push(obs);
        actions.push(a.clone());
        s = pickplace_step(&s, &a);
    }
    assert!(s.is_success(), "expert failed to finish within {max_steps} steps");
    (observations, actions, s)
}

/// Expert wrapped as an obs-driven planner (reconstructs the state from the
/// exact observation and simulates its own actions forward).
pub fn plan_expert_chunk(obs: &Vec64, task: TaskTag, chunk_h: usize, rng: &mut Rng) -> Vec<Vec64> {
    let mut s = defeaturize(obs, task);
    let mut rows = Vec::with_capacity(chunk_h);
    for _ in 0..chunk_h {
        let a = scripted_expert(&s, rng);
        s = pickplace_step(&s, &a);
        rows.push(a);
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::sim::{task_score, GRASP_RADIUS};

    #[test]
    fn expert_points_toward_object_when_far() {
        let mut rng = Rng::new(1);
        let s = PickPlaceState::init(TaskTag::PickPlace, &mut rng);
        let a = scripted_expert(&s, &mut rng);
        let to_obj = [
            s.object_xy[0][0] - s.agent_xy[0],
            s.object_xy[0][1] - s.agent_xy[1],
        ];
        let inner = a[0] * to_obj[0] + a[1] * to_obj[1];
        assert!(inner > 0.0, "expert action not toward the object");
        assert!(a[2] < 0.5, "gripper should stay open while approaching");
    }

    #[test]
    fn expert_opens_gripper_at_goal_while_holding() {
        let mut rng = Rng::new(2);
        let mut s = PickPlaceState::init(TaskTag::PickPlace, &mut rng);
        s.agent_xy = s.goal_xy[0];
        s.gripper = 1.0;
        s.held_object = Some(0);
        s.object_xy[0] = s.agent_xy;
        let a = scripted_expert(&s, &mut rng);
        assert!(a[2] < 0.5, "expected an open command at the goal");
    }

    #[test]
    fn expert_close_command_stays_within_grasp_radius() {
        // Worst case: at the grasp margin, jitter must not push the close
        // step outside the grasp radius.
        let (grasp_margin, _) = scripted_margins();
        let worst = grasp_margin + 2.0_f64.sqrt() * JITTER;
        assert!(worst < GRASP_RADIUS, "margin {worst} >= radius {GRASP_RADIUS}");
    }

    #[test]
    fn expert_completes_pickplace_from_200_random_starts() {
        for seed in 0..200 {
            let mut rng = Rng::new(seed);
            let s = PickPlaceState::init(TaskTag::PickPlace, &mut rng);
            let (_, actions, end) = run_expert_episode(s, &mut rng, 400);
            assert!(end.is_success(), "seed {seed} failed");
            assert_eq!(task_score(&end), 1.0);
            assert!(actions.len() <= 400);
        }
    }

    #[test]
    fn expert_completes_sorting_from_100_random_starts() {
        for seed in 0..100 {
            let mut rng = Rng::new(1000 + seed);
            let s = PickPlaceState::init(TaskTag::Sorting, &mut rng);
            let (_, _, end) = run_expert_episode(s, &mut rng, 400);
            assert!(end.is_success(), "seed {seed} failed");
            assert_eq!(task_score(&end), 1.0);
        }
    }

    #[test]
    fn expert_recovers_from_closed_empty_gripper() {
        let mut rng = Rng::new(3);
        let mut s = PickPlaceState::init(TaskTag::PickPlace, &mut rng);
        s.gripper = 1.0; // closed, holding nothing
        let (_, _, end) = run_expert_episode(s, &mut rng, 400);
        assert!(end.is_success());
    }
}
