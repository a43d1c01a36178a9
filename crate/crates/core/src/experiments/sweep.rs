use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::increments::{IncrementStream, RandomSource};
use crate::models::JumpSdeProblem;
use crate::schemes::{SchemeKind, SchemeSpec, Stepper};
use crate::stability::{classify_mean_square, Classification, DEFAULT_RATE_TOLERANCE};

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityConfig {
    pub dts: Vec<f64>,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    /// At most this many steps (plus the initial state) are recorded per Δt.
    pub max_samples: usize,
    /// Classifier dead band, per unit time.
    pub rate_tolerance: f64,
}

impl StabilityConfig {
    pub fn new(dts: Vec<f64>) -> Self {
        Self {
            dts,
            horizon: 2500.0,
            paths: 2000,
            seed: 0,
            max_samples: 1000,
            rate_tolerance: DEFAULT_RATE_TOLERANCE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dts.is_empty() {
            return Err(Error::invalid("at least one dt is required"));
        }
        if let Some(dt) = self.dts.iter().find(|dt| !(**dt > 0.0 && dt.is_finite())) {
            return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if self.paths == 0 {
            return Err(Error::invalid("paths must be >= 1"));
        }
        if self.max_samples < 7 {
            return Err(Error::invalid("max_samples must be >= 7"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityRow {
    pub dt: f64,
    pub n_steps: usize,
    /// `(t_n, E|Y_n|²)` at the recorded steps.
    pub series: Vec<(f64, f64)>,
    pub classification: Classification,
    pub fitted_rate: f64,
    pub diverged_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub scheme: SchemeKind,
    pub theta_label: String,
    pub rows: Vec<StabilityRow>,
}

impl StabilityReport {
    /// `scheme,theta,dt,t,mean_square`
    pub fn write_series_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["scheme", "theta", "dt", "t", "mean_square"])?;
        for row in &self.rows {
            for &(t, ms) in &row.series {
                out.write_record([
                    self.scheme.name().to_string(),
                    self.theta_label.clone(),
                    crate::fmt_f64(row.dt),
                    crate::fmt_f64(t),
                    crate::fmt_f64(ms),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// `scheme,theta,dt,classification,rate`
    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["scheme", "theta", "dt", "classification", "rate"])?;
        for row in &self.rows {
            out.write_record([
                self.scheme.name().to_string(),
                self.theta_label.clone(),
                crate::fmt_f64(row.dt),
                row.classification.to_string(),
                crate::fmt_f64(row.fitted_rate),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Number of whole steps of size `dt` that fit in `horizon`.
pub(crate) fn step_count(horizon: f64, dt: f64) -> usize {
    (horizon / dt + 1e-9).floor() as usize
}

fn sample_steps(n_steps: usize, max_samples: usize) -> Vec<usize> {
    let stride = n_steps.div_ceil(max_samples).max(1);
    let mut steps: Vec<usize> = (0..=n_steps).step_by(stride).collect();
    if *steps.last().unwrap() != n_steps {
        steps.push(n_steps);
    }
    steps
}

/// `|Y|²` at the sample steps of one path; `+∞` from divergence on.
fn path_second_moments(
    problem: &JumpSdeProblem,
    scheme: &SchemeSpec,
    dt: f64,
    samples: &[usize],
    source: RandomSource,
    absorbing_origin: bool,
) -> Result<Vec<f64>> {
    let mut stepper = Stepper::new(problem, scheme, dt)?;
    let mut stream = IncrementStream::new(source, dt, problem.lambda())?;
    let mut y = problem.x0().to_vec();
    let mut next = vec![0.0; y.len()];
    let mut dw = vec![0.0; problem.noise_dim()];
    let mut out = Vec::with_capacity(samples.len());
    out.push(y.iter().map(|v| v * v).sum::<f64>());
    let n_steps = *samples.last().unwrap();
    for step in 1..=n_steps {
        let count = stream.next_into(&mut dw);
        stepper.step(&y, &dw, count, &mut next)?;
        if next.iter().any(|v| !v.is_finite()) {
            out.resize(samples.len(), f64::INFINITY);
            return Ok(out);
        }
        std::mem::swap(&mut y, &mut next);
        if samples[out.len()] == step {
            out.push(y.iter().map(|v| v * v).sum::<f64>());
        }
        if absorbing_origin && y.iter().all(|v| *v == 0.0) {
            // the origin is a fixed point of every step map
            out.resize(samples.len(), 0.0);
            return Ok(out);
        }
    }
    Ok(out)
}

/// Simulate `E|Y_n|²` for each step size and classify its long-run trend.
///
/// Paths that blow up count as divergent (their second moment is `+∞`), which
/// makes the row Unstable rather than aborting the sweep.
pub fn run_stability_sweep(
    problem: &JumpSdeProblem,
    scheme: &SchemeSpec,
    config: &StabilityConfig,
) -> Result<StabilityReport> {
    config.validate()?;
    scheme.validate(problem)?;
    let absorbing_origin = problem.origin_is_fixed();
    let mut rows = Vec::with_capacity(config.dts.len());
    for &dt in &config.dts {
        let n_steps = step_count(config.horizon, dt);
        if n_steps == 0 {
            return Err(Error::invalid(format!(
                "dt = {dt} exceeds the horizon {}",
                config.horizon
            )));
        }
        let samples = sample_steps(n_steps, config.max_samples);
        let per_path = (0..config.paths)
            .into_par_iter()
            .map(|p| {
                let source = RandomSource::new(config.seed, p as u64).derive(dt.to_bits());
                path_second_moments(problem, scheme, dt, &samples, source, absorbing_origin)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut sums = vec![0.0; samples.len()];
        for path in &per_path {
            for (s, v) in sums.iter_mut().zip(path) {
                *s += v;
            }
        }
        let diverged = per_path
            .iter()
            .filter(|p| p.last().is_some_and(|v| v.is_infinite()))
            .count();
        let series: Vec<(f64, f64)> = samples
            .iter()
            .zip(&sums)
            .map(|(&step, &sum)| (step as f64 * dt, sum / config.paths as f64))
            .collect();
        let fit = classify_mean_square(&series, config.rate_tolerance)?;
        rows.push(StabilityRow {
            dt,
            n_steps,
            series,
            classification: fit.classification,
            fitted_rate: fit.rate,
            diverged_fraction: diverged as f64 / config.paths as f64,
        });
    }
    Ok(StabilityReport {
        scheme: scheme.kind,
        theta_label: scheme.theta_label(),
        rows,
    })
}
