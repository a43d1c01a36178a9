use std::io::Write;

use rayon::prelude::*;

use super::{batch_mean_stderr, fit_order, OrderFit};
use crate::error::{Error, Result};
use crate::increments::{IncrementGrid, RandomSource};
use crate::models::JumpSdeProblem;
use crate::schemes::{integrate_endpoint, SchemeKind, SchemeSpec};

/// What the coarse endpoints are compared against.
#[derive(Clone, Debug)]
pub enum Reference {
    /// Closed-form solution driven by the summed fine-grid noise (linear problems only).
    ExactLinear,
    /// The scheme under test on the fine grid itself.
    FineNumerical,
    /// A different scheme on the fine grid.
    FineScheme(SchemeSpec),
}

impl Reference {
    /// Ratios used when none are given: `1..16` against the exact solution,
    /// `4..64` against a fine-grid solution (ratio 1 would compare the
    /// reference with itself).
    pub fn default_ratios(&self) -> Vec<usize> {
        match self {
            Reference::ExactLinear => vec![1, 2, 4, 8, 16],
            _ => vec![4, 8, 16, 32, 64],
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConvergenceConfig {
    pub scheme: SchemeSpec,
    /// The fine grid has `2^fine_exponent` steps over `[0, horizon]`.
    pub fine_exponent: u32,
    pub ratios: Vec<usize>,
    pub paths: usize,
    pub horizon: f64,
    pub reference: Reference,
    pub seed: u64,
}

impl ConvergenceConfig {
    pub fn new(scheme: SchemeSpec, reference: Reference) -> Self {
        Self {
            scheme,
            fine_exponent: 12,
            ratios: reference.default_ratios(),
            paths: 2000,
            horizon: 1.0,
            reference,
            seed: 0,
        }
    }

    pub fn fine_steps(&self) -> usize {
        1usize << self.fine_exponent
    }

    pub fn validate(&self, problem: &JumpSdeProblem) -> Result<()> {
        if self.fine_exponent > 30 {
            return Err(Error::invalid(format!(
                "fine_exponent {} is too large",
                self.fine_exponent
            )));
        }
        if self.paths < 100 {
            return Err(Error::invalid(format!("paths must be >= 100, got {}", self.paths)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if self.ratios.is_empty() {
            return Err(Error::invalid("at least one ratio is required"));
        }
        let n = self.fine_steps();
        if let Some(r) = self.ratios.iter().find(|&&r| r == 0 || !n.is_multiple_of(r)) {
            return Err(Error::invalid(format!(
                "ratio {r} does not divide 2^{}",
                self.fine_exponent
            )));
        }
        self.scheme.validate(problem)?;
        match &self.reference {
            Reference::ExactLinear => {
                let lin = problem
                    .linear()
                    .ok_or_else(|| Error::invalid("exact reference needs a linear problem"))?;
                if !(lin.c > -1.0) {
                    return Err(Error::invalid(format!("exact reference needs c > -1, got {}", lin.c)));
                }
            }
            Reference::FineScheme(spec) => spec.validate(problem)?,
            Reference::FineNumerical => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub ratio: usize,
    pub dt: f64,
    /// Root-mean-square endpoint error over non-divergent paths.
    pub rmse: f64,
    /// Batch-means standard error of `rmse`.
    pub stderr: f64,
    /// Fraction of paths whose coarse solution blew up.
    pub diverged_frac: f64,
    /// Finite and at most 1% divergence; only valid rows enter the fit.
    pub valid: bool,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub scheme: SchemeKind,
    pub theta_label: String,
    /// Sorted by `dt` ascending.
    pub rows: Vec<ConvergenceRow>,
    pub fit: Option<OrderFit>,
    /// Fraction of paths dropped because the fine reference itself blew up.
    pub reference_diverged_frac: f64,
}

pub(crate) const MAX_DIVERGED_FRAC: f64 = 0.01;

impl ConvergenceReport {
    pub fn fitted_order(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    /// CSV with header `scheme,theta,dt,rmse,stderr,diverged_frac` and a
    /// final `order,<slope>,<residual>` row.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::WriterBuilder::new().flexible(true).from_writer(writer);
        out.write_record(["scheme", "theta", "dt", "rmse", "stderr", "diverged_frac"])?;
        for row in &self.rows {
            out.write_record([
                self.scheme.name().to_string(),
                self.theta_label.clone(),
                crate::fmt_f64(row.dt),
                crate::fmt_f64(row.rmse),
                crate::fmt_f64(row.stderr),
                crate::fmt_f64(row.diverged_frac),
            ])?;
        }
        let (slope, residual) = self.fit.map_or((f64::NAN, f64::NAN), |f| (f.slope, f.residual));
        out.write_record(["order".to_string(), crate::fmt_f64(slope), crate::fmt_f64(residual)])?;
        out.flush()?;
        Ok(())
    }
}

struct PathErrors {
    reference_ok: bool,
    /// Squared endpoint error per ratio; `None` if the coarse path diverged.
    squared: Vec<Option<f64>>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn simulate_path(
    problem: &JumpSdeProblem,
    config: &ConvergenceConfig,
    ratios: &[usize],
    path: usize,
) -> Result<PathErrors> {
    let n = config.fine_steps();
    let dt = config.horizon / n as f64;
    let grid = IncrementGrid::generate(
        RandomSource::new(config.seed, path as u64),
        n,
        problem.noise_dim(),
        dt,
        problem.lambda(),
    )?;
    let reference = match &config.reference {
        Reference::ExactLinear => {
            let lin = problem.linear().expect("validated");
            let w = grid.brownian_total()[0];
            Some(vec![lin.exact_solution(config.horizon, w, grid.count_total())?])
        }
        Reference::FineNumerical => integrate_endpoint(problem, &config.scheme, &grid, 1)?,
        Reference::FineScheme(spec) => integrate_endpoint(problem, spec, &grid, 1)?,
    };
    let Some(reference) = reference.filter(|r| r.iter().all(|v| v.is_finite())) else {
        return Ok(PathErrors {
            reference_ok: false,
            squared: vec![None; ratios.len()],
        });
    };
    let squared = ratios
        .iter()
        .map(|&r| {
            integrate_endpoint(problem, &config.scheme, &grid, r)
                .map(|end| end.map(|y| squared_distance(&y, &reference)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PathErrors {
        reference_ok: true,
        squared,
    })
}

/// Estimate the strong convergence order of `config.scheme` on `problem`.
///
/// Each path draws one fine grid; every ratio integrates a coarsening of that
/// same grid, so the coarse errors are measured under coupled noise.
pub fn run_convergence(problem: &JumpSdeProblem, config: &ConvergenceConfig) -> Result<ConvergenceReport> {
    config.validate(problem)?;
    let mut ratios = config.ratios.clone();
    ratios.sort_unstable();
    ratios.dedup();

    let per_path = (0..config.paths)
        .into_par_iter()
        .map(|p| simulate_path(problem, config, &ratios, p))
        .collect::<Result<Vec<_>>>()?;

    let dt_fine = config.horizon / config.fine_steps() as f64;
    let usable: Vec<&PathErrors> = per_path.iter().filter(|p| p.reference_ok).collect();
    let reference_diverged_frac = 1.0 - usable.len() as f64 / config.paths as f64;

    let rows: Vec<ConvergenceRow> = ratios
        .iter()
        .enumerate()
        .map(|(k, &ratio)| {
            let finite: Vec<f64> = usable.iter().filter_map(|p| p.squared[k]).collect();
            let diverged = usable.len() - finite.len();
            let diverged_frac = if usable.is_empty() {
                1.0
            } else {
                diverged as f64 / usable.len() as f64
            };
            let (rmse, stderr) = if finite.is_empty() {
                (f64::INFINITY, f64::NAN)
            } else {
                let mse = finite.iter().sum::<f64>() / finite.len() as f64;
                let rmse = mse.sqrt();
                let se = batch_mean_stderr(&finite);
                (rmse, if rmse > 0.0 { se / (2.0 * rmse) } else { 0.0 })
            };
            ConvergenceRow {
                ratio,
                dt: ratio as f64 * dt_fine,
                rmse,
                stderr,
                diverged_frac,
                valid: rmse.is_finite() && diverged_frac <= MAX_DIVERGED_FRAC,
            }
        })
        .collect();

    let points: Vec<(f64, f64)> = rows.iter().filter(|r| r.valid).map(|r| (r.dt, r.rmse)).collect();
    Ok(ConvergenceReport {
        scheme: config.scheme.kind,
        theta_label: config.scheme.theta_label(),
        rows,
        fit: fit_order(&points).ok(),
        reference_diverged_frac,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;

    #[test]
    fn deterministic_euler_has_order_one() {
        let ode = models::linear(1.0, 0.0, 0.0, 0.0, 1.0);
        let mut cfg = ConvergenceConfig::new(SchemeSpec::explicit_euler(), Reference::ExactLinear);
        cfg.fine_exponent = 10;
        cfg.paths = 100;
        cfg.ratios = vec![1, 2, 4, 8, 16];
        let report = run_convergence(&ode, &cfg).unwrap();
        let order = report.fitted_order().unwrap();
        assert!((order - 1.0).abs() < 0.05, "order {order}");
        assert!(report.rows.iter().all(|r| r.stderr == 0.0 && r.diverged_frac == 0.0));
    }

    #[test]
    fn config_checks() {
        let lin = models::linear(1.0, 1.0, 0.5, 1.0, 1.0);
        let mut cfg = ConvergenceConfig::new(SchemeSpec::cstm(0.5).unwrap(), Reference::ExactLinear);
        cfg.ratios = vec![3];
        assert!(run_convergence(&lin, &cfg).is_err());
        cfg.ratios = vec![2];
        cfg.paths = 10;
        assert!(run_convergence(&lin, &cfg).is_err());
        let quartic = models::quartic(1.0, 1.0).unwrap();
        let cfg = ConvergenceConfig::new(SchemeSpec::tamed(), Reference::ExactLinear);
        assert!(cfg.validate(&quartic).is_err());
        let cfg = ConvergenceConfig::new(SchemeSpec::tamed(), Reference::FineNumerical);
        assert!(cfg.validate(&quartic).is_ok());
    }

    #[test]
    fn csv_layout() {
        let report = ConvergenceReport {
            scheme: SchemeKind::Cstm,
            theta_label: "0.5".into(),
            rows: vec![ConvergenceRow {
                ratio: 1,
                dt: 0.25,
                rmse: 0.125,
                stderr: 0.01,
                diverged_frac: 0.0,
                valid: true,
            }],
            fit: Some(OrderFit {
                slope: 0.5,
                intercept: 0.0,
                residual: 0.001,
            }),
            reference_diverged_frac: 0.0,
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "scheme,theta,dt,rmse,stderr,diverged_frac\ncstm,0.5,0.25,0.125,0.01,0.0\norder,0.5,0.001\n"
        );
    }
}
