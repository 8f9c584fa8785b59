//! Adaptively weighted M-estimators for data collected by bandit algorithms.
//!
//! Data from Thompson sampling, ε-greedy and similar adaptive designs break
//! the usual normal approximation for least squares and maximum likelihood.
//! Reweighting each observation by `sqrt(π^eval_t / π_t)` restores it, and
//! this crate provides the estimators, their confidence regions and a Monte
//! Carlo harness to check coverage.
//!
//! ```
//! use banditlab::env::{run_trajectory, EnvConfig, GlmFamily};
//! use banditlab::estimators::{aw_least_squares, design_rows, Design, Weighting};
//! use banditlab::evalpolicy::EvalPolicy;
//! use banditlab::policies::{PolicyConfig, PolicyState};
//! use banditlab::regions::hotelling_region;
//! use banditlab::statfn::RngStream;
//!
//! let env = EnvConfig::contextual(GlmFamily::T5);
//! let mut policy = PolicyState::new(&PolicyConfig::thompson(0.01), env.feature_dim())?;
//! let mut rng = RngStream::new(7, 0);
//! let traj = run_trajectory(&env, &mut policy, 500, &mut rng)?;
//!
//! let rows = design_rows(&traj, Design::Interaction, Weighting::Adaptive(&EvalPolicy::Uniform))?;
//! let fit = aw_least_squares(&rows)?;
//! let region = hotelling_region(&fit, 0.1)?;
//! assert!(region.contains(&fit.theta_hat)?);
//! # Ok::<(), banditlab::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod env;
pub mod error;
pub mod estimators;
pub mod evalpolicy;
pub mod harness;
pub mod output;
pub mod policies;
pub mod regions;
pub mod statfn;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/quickstart.md")]
    mod quickstart {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/regions.md")]
    mod regions {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
