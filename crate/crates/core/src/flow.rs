//! Interpolation path between data and noise.
//!
//! The path is linear: `z_t = (1−t)·x + t·e`, so t=0 is the data endpoint and
//! t=1 is the noise endpoint. Its conditional velocity `dz/dt = e − x` is
//! constant in t, which makes the path-consistency identity below exact.

use crate::math::Vec64;
use serde::{Deserialize, Serialize};

/// Interpolation schedule between data and noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FlowPath {
    /// `z_t = (1−t)·x + t·e`
    #[default]
    Linear,
}

impl FlowPath {
    /// Point on the path at time `t ∈ [0, 1]`.
    pub fn interpolate(&self, x: &Vec64, e: &Vec64, t: f64) -> Vec64 {
        assert_eq!(x.len(), e.len(), "interpolate: length mismatch");
        assert!((0.0..=1.0).contains(&t), "interpolate: t outside [0,1]");
        match self {
            FlowPath::Linear => Vec64::new(
                x.as_slice()
                    .iter()
                    .zip(e.as_slice())
                    .map(|(xi, ei)| (1.0 - t) * xi + t * ei)
                    .collect(),
            ),
        }
    }

    /// Conditional velocity along the path; constant `e − x` for the linear
    /// schedule.
    pub fn cond_velocity(&self, x: &Vec64, e: &Vec64) -> Vec64 {
        assert_eq!(x.len(), e.len(), "cond_velocity: length mismatch");
        match self {
            FlowPath::Linear => e.sub(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{gauss_sample, Rng};
    use proptest::prelude::*;

    #[test]
    fn interpolate_boundaries() {
        let x = Vec64::new(vec![0.5, -1.0]);
        let e = Vec64::new(vec![2.0, 3.0]);
        let p = FlowPath::Linear;
        assert_eq!(p.interpolate(&x, &e, 0.0), x);
        assert_eq!(p.interpolate(&x, &e, 1.0), e);
    }

    #[test]
    fn interpolate_midpoint() {
        let x = Vec64::zeros(2);
        let e = Vec64::new(vec![2.0, 2.0]);
        let mid = FlowPath::Linear.interpolate(&x, &e, 0.5);
        assert_eq!(mid.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn velocity_stationary_path_is_zero() {
        let x = Vec64::new(vec![0.3, 0.7]);
        let v = FlowPath::Linear.cond_velocity(&x, &x);
        assert_eq!(v.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn velocity_unit_displacement() {
        let x = Vec64::zeros(2);
        let e = Vec64::new(vec![1.0, 1.0]);
        let v = FlowPath::Linear.cond_velocity(&x, &e);
        assert_eq!(v.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn finite_difference_identity() {
        // interpolate(t+h) − interpolate(t) = h·v exactly for the linear path.
        let mut rng = Rng::new(5);
        let x = gauss_sample(&mut rng, 4);
        let e = gauss_sample(&mut rng, 4);
        let p = FlowPath::Linear;
        let v = p.cond_velocity(&x, &e);
        let (t, h) = (0.3, 0.25);
        let lhs = p.interpolate(&x, &e, t + h).sub(&p.interpolate(&x, &e, t));
        for i in 0..4 {
            assert!((lhs[i] - h * v[i]).abs() < 1e-12);
        }
    }

    proptest! {
        // Path consistency: z(t') = z(t) + (t'−t)·v for all t, t'.
        #[test]
        fn path_consistency(seed in 0u64..500, t in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let mut rng = Rng::new(seed);
            let x = gauss_sample(&mut rng, 3);
            let e = gauss_sample(&mut rng, 3);
            let p = FlowPath::Linear;
            let v = p.cond_velocity(&x, &e);
            let direct = p.interpolate(&x, &e, t2);
            let stepped = crate::math::axpy(t2 - t, &v, &p.interpolate(&x, &e, t));
            for i in 0..3 {
                prop_assert!((direct[i] - stepped[i]).abs() < 1e-12);
            }
        }
    }
}
