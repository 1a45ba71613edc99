//! Safe leveling for linear stochastic bandits.
//!
//! The learner observes a context `z`, picks an action `a`, and sees a noisy
//! outcome `xᵀθ* + ξ` for the pseudo-action `x = z ⋄ a`. The goal is to keep
//! outcomes close to a target level `K` while every played pseudo-action stays
//! inside the two-sided constraint `C1 ≤ xᵀθ* ≤ C2`.
//!
//! This crate is `no_std` (it needs `alloc`) and contains only the
//! algorithmic pieces:
//!
//! * [`model`]: contexts, actions, pseudo-actions and problem parameters.
//! * [`estimator`]: the ridge-regression state and its rank-one maintenance.
//! * [`safety`]: confidence radii, ellipsoid extrema and the proxy safe set.
//! * [`sampler`]: Gaussian perturbations, `V^{-1/2}` and the optimism estimate.
//! * [`policy`]: SALE-LTS, the unsafe LE-LTS ablation and reference baselines.
//! * [`environment`]: a synthetic ground truth with seed-set oracles.
//! * [`analysis`]: regret accounting, event monitors and bound evaluators.
//! * [`simulate`]: one deterministic replication of the round-robin protocol.
//!
//! File formats, parallel orchestration and the CLI live in the
//! `safe-leveling` companion crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod environment;
mod error;
pub mod estimator;
mod linalg;
pub mod model;
pub mod policy;
pub mod rng;
pub mod safety;
pub mod sampler;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{Action, Context, ParamViolation, ProblemParams, PseudoAction};
