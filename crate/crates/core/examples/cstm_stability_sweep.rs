// Mean-square behaviour of CSTM at very large steps. For `theta >= 1/2` the
// scheme inherits stability from the exact solution at any step size; just
// below 1/2 it does not.
//
// ```text
// cargo run --release --example cstm_stability_sweep
// ```

use jumpsde::experiments::{run_stability_sweep, StabilityConfig};
use jumpsde::stability::{cstm_amplification, cstm_max_stable_dt};
use jumpsde::{models, Result, SchemeSpec};

pub fn run() -> Result<()> {
    let (a, b, c, lambda) = (-7.0, 1.0, 1.0, 4.0);
    let problem = models::linear(a, b, c, lambda, 1.0);
    println!("l = {}", problem.linear().unwrap().l());

    let mut cfg = StabilityConfig::new(vec![5.0, 25.0]);
    cfg.horizon = 500.0;
    cfg.paths = 500;
    for theta in [0.4, 0.5, 1.0] {
        let report = run_stability_sweep(&problem, &SchemeSpec::cstm(theta)?, &cfg)?;
        let limit = cstm_max_stable_dt(a, b, c, lambda, theta)?;
        for row in &report.rows {
            let g = cstm_amplification(a, b, c, lambda, theta, row.dt)?;
            println!(
                "theta {theta:<4} dt {:<5} G = {g:.4}  (stable below {limit:.3})  simulated: {} (rate {:.2e})",
                row.dt, row.classification, row.fitted_rate
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
