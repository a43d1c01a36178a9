//! Monte Carlo harness: strong-order estimation, mean-square stability sweeps
//! and one-step amplification checks.
//!
//! Every path draws its noise from `RandomSource::new(seed, path_index)`, and
//! per-path results are reduced in path order, so reports do not depend on
//! the number of worker threads.

mod amplification;
mod convergence;
mod sweep;

use std::fmt;
use std::str::FromStr;

pub use amplification::{linear_factor, run_amplification_validation, AmplificationCheck};
pub use convergence::{run_convergence, ConvergenceConfig, ConvergenceReport, ConvergenceRow, Reference};
pub use sweep::{run_stability_sweep, StabilityConfig, StabilityReport, StabilityRow};

use crate::error::{Error, Result};
use crate::stability::least_squares;

/// Worker-thread setting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Threads {
    #[default]
    Auto,
    Fixed(usize),
}

impl FromStr for Threads {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Threads::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Threads::Fixed(n)),
            _ => Err(Error::Config(format!(
                "threads must be a positive integer or `auto`, got `{s}`"
            ))),
        }
    }
}

impl fmt::Display for Threads {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threads::Auto => f.write_str("auto"),
            Threads::Fixed(n) => write!(f, "{n}"),
        }
    }
}

/// Run `job` on a pool with the requested number of workers.
pub fn with_threads<T: Send>(threads: Threads, job: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Threads::Fixed(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// Least-squares fit of `ln rmse = slope·ln dt + intercept`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
}

/// Fit the strong order from `(dt, rmse)` pairs; non-finite or non-positive
/// errors are skipped.
pub fn fit_order(points: &[(f64, f64)]) -> Result<OrderFit> {
    let mut logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(dt, e)| *dt > 0.0 && dt.is_finite() && *e > 0.0 && e.is_finite())
        .map(|(dt, e)| (dt.ln(), e.ln()))
        .collect();
    if logs.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 finite positive errors, got {}",
            logs.len()
        )));
    }
    // fixed summation order regardless of input order
    logs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (slope, intercept, residual) = least_squares(&logs);
    Ok(OrderFit {
        slope,
        intercept,
        residual,
    })
}

pub(crate) const BATCHES: usize = 10;

/// Standard error of the mean of `values` from contiguous batch means.
pub(crate) fn batch_mean_stderr(values: &[f64]) -> f64 {
    let n = values.len();
    if n < BATCHES {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..BATCHES)
        .map(|b| {
            let chunk = &values[b * n / BATCHES..(b + 1) * n / BATCHES];
            chunk.iter().sum::<f64>() / chunk.len() as f64
        })
        .collect();
    let grand = means.iter().sum::<f64>() / BATCHES as f64;
    let var = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (BATCHES - 1) as f64;
    (var / BATCHES as f64).sqrt()
}
