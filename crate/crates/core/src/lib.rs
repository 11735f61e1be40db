//! One-step conditional action generation with mean vector-field flow models.
//!
//! The crate trains small MLP action experts to predict the *mean* transport
//! field over a time interval `[r, t]` of a linear noise→data interpolation
//! path, rather than the instantaneous velocity alone. A model trained this
//! way can map a noise draw to a full action chunk in a single network
//! evaluation, while still supporting multi-step refinement and a plain Euler
//! flow-matching baseline for comparison.
//!
//! Module layout:
//!
//! - [`math`] — dense f64 vectors/matrices and a counter-based RNG
//! - [`flow`] — linear interpolation path and conditional velocity
//! - [`nnet`] — the conditioned MLP: forward, reverse-mode gradients, and a
//!   forward-mode (dual number) Jacobian-vector product
//! - [`meanflow`] — time-pair sampling, target construction, losses, Adam,
//!   and the training loop
//! - [`sampler`] — one-step / multi-step / Euler samplers and the policy
//!   checkpoint bundle
//! - [`tasks`] — synthetic benchmark tasks: conditional GMMs and a point-mass
//!   pick-place / sorting simulator with a scripted expert
//! - [`eval`] — energy distance, generation timing, and sweep orchestration

pub mod error;
pub mod eval;
pub mod flow;
pub mod math;
pub mod meanflow;
pub mod nnet;
pub mod sampler;
pub mod tasks;

pub use error::{Error, Result};
