//! Strong simulation of jump-diffusion SDEs
//!
//! `dX = f(X) dt + g(X) dW + h(X) dN`, with `N` a Poisson process of intensity `λ`.
//!
//! The crate provides explicit Euler, the stochastic theta method and its
//! compensated variant, and the tamed, compensated tamed and semi-tamed Euler
//! schemes. Around them sit closed-form mean-square stability results for the
//! linear test equation and a reproducible Monte Carlo harness for strong
//! convergence and stability experiments.
//!
//! ```
//! use jumpsde::{models, schemes::{self, SchemeSpec}, increments::{IncrementGrid, RandomSource}};
//!
//! let problem = models::linear(1.0, 1.0, 0.5, 1.0, 1.0);
//! let grid = IncrementGrid::generate(RandomSource::new(7, 0), 1024, 1, 1.0 / 1024.0, 1.0).unwrap();
//! let path = schemes::integrate_path(&problem, &SchemeSpec::cstm(0.5).unwrap(), &grid, 8).unwrap();
//! assert_eq!(path.states.len(), 129);
//! ```

// NaN-rejecting guards are written as `!(x >= 0.0)` on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod experiments;
pub mod increments;
pub mod models;
pub mod schemes;
pub mod stability;

pub use error::{Error, Result};
pub use increments::{IncrementGrid, RandomSource};
pub use models::{DriftSplit, JumpSdeProblem, LinearJumpSde};
pub use schemes::{SchemeKind, SchemeSpec, Trajectory};

/// Shortest string that parses back to the same `f64`.
pub(crate) fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:?}")
    }
}
