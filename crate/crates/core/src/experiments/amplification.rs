use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::increments::{IncrementStream, RandomSource};
use crate::models;
use crate::schemes::{SchemeKind, SchemeSpec, Stepper};
use crate::stability::{cstm_amplification, semi_tamed_linear_amplification, stm_amplification};

/// Empirical against closed-form one-step second-moment ratio.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplificationCheck {
    pub scheme: SchemeKind,
    pub theta: f64,
    pub dt: f64,
    pub samples: usize,
    /// Sample mean of `|Y₁|²` from `Y₀ = 1`.
    pub empirical: f64,
    pub closed_form: f64,
    pub stderr: f64,
    pub z: f64,
}

const BLOCK: usize = 10_000;
const MIN_SAMPLES: usize = 100_000;

/// Closed-form factor of `kind` on the linear test equation.
pub fn linear_factor(kind: SchemeKind, a: f64, b: f64, c: f64, lambda: f64, theta: f64, dt: f64) -> Result<f64> {
    match kind {
        SchemeKind::ExplicitEuler => stm_amplification(a, b, c, lambda, 0.0, dt),
        SchemeKind::Stm => stm_amplification(a, b, c, lambda, theta, dt),
        SchemeKind::Cstm => cstm_amplification(a, b, c, lambda, theta, dt),
        SchemeKind::SemiTamed | SchemeKind::CompensatedSemiTamed => {
            semi_tamed_linear_amplification(a, b, c, lambda, dt)
        }
        SchemeKind::Tamed | SchemeKind::CompensatedTamed => Err(Error::not_applicable(format!(
            "{kind} has no closed-form second-moment factor"
        ))),
    }
}

/// Compare the closed-form factor with `samples` independent one-step
/// simulations from `Y₀ = 1` on the linear test equation. The semi-tamed
/// schemes use the split `u = ax`, `v = 0`.
#[allow(clippy::too_many_arguments)]
pub fn run_amplification_validation(
    a: f64,
    b: f64,
    c: f64,
    lambda: f64,
    kind: SchemeKind,
    theta: f64,
    dt: f64,
    samples: usize,
    seed: u64,
) -> Result<AmplificationCheck> {
    if samples < MIN_SAMPLES {
        return Err(Error::invalid(format!(
            "samples must be >= {MIN_SAMPLES}, got {samples}"
        )));
    }
    let closed_form = linear_factor(kind, a, b, c, lambda, theta, dt)?;
    let problem = models::linear(a, b, c, lambda, 1.0);
    let scheme = SchemeSpec::new(kind, theta)?;
    let blocks = samples.div_ceil(BLOCK);
    let sums = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let count = BLOCK.min(samples - blk * BLOCK);
            let mut stepper = Stepper::new(&problem, &scheme, dt)?;
            let mut stream = IncrementStream::new(RandomSource::new(seed, blk as u64), dt, lambda)?;
            let (mut dw, mut y) = ([0.0], [0.0]);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let dn = stream.next_into(&mut dw);
                stepper.step(&[1.0], &dw, dn, &mut y)?;
                let sq = y[0] * y[0];
                s1 += sq;
                s2 += sq * sq;
            }
            Ok((s1, s2))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (s1, s2) = sums.iter().fold((0.0, 0.0), |acc, s| (acc.0 + s.0, acc.1 + s.1));
    let n = samples as f64;
    let empirical = s1 / n;
    let var = ((s2 / n - empirical * empirical) * n / (n - 1.0)).max(0.0);
    let stderr = (var / n).sqrt();
    let diff = empirical - closed_form;
    // without noise the only discrepancy is rounding
    let z = if diff.abs() <= 1e-12 * closed_form.abs().max(1.0) {
        0.0
    } else {
        diff / stderr
    };
    Ok(AmplificationCheck {
        scheme: kind,
        theta,
        dt,
        samples,
        empirical,
        closed_form,
        stderr,
        z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_case_is_exact() {
        let check = run_amplification_validation(-1.5, 0.0, 0.0, 0.0, SchemeKind::Cstm, 0.5, 0.1, 100_000, 0).unwrap();
        assert!((check.empirical - check.closed_form).abs() < 1e-12);
        assert_eq!(check.z, 0.0);
    }

    #[test]
    fn tamed_has_no_factor() {
        assert!(run_amplification_validation(-1.0, 1.0, 0.5, 1.0, SchemeKind::Tamed, 0.0, 0.1, 100_000, 0).is_err());
        assert!(run_amplification_validation(-1.0, 1.0, 0.5, 1.0, SchemeKind::Cstm, 0.0, 0.1, 10, 0).is_err());
    }
}
