// Strong order of the compensated stochastic theta method on the linear
// test equation, measured against the exact solution under coupled noise.
//
// ```text
// cargo run --release --example linear_convergence
// ```

use jumpsde::experiments::{run_convergence, ConvergenceConfig, Reference};
use jumpsde::{models, Result, SchemeSpec};

pub fn run() -> Result<()> {
    // dX = X dt + X dW + 0.5 X dN, lambda = 1, X(0) = 1
    let problem = models::linear(1.0, 1.0, 0.5, 1.0, 1.0);
    for theta in [0.0, 0.5, 1.0] {
        let mut cfg = ConvergenceConfig::new(SchemeSpec::cstm(theta)?, Reference::ExactLinear);
        cfg.paths = 1000;
        let report = run_convergence(&problem, &cfg)?;
        println!("cstm theta = {theta}");
        for row in &report.rows {
            println!("  dt = {:.3e}  rmse = {:.4e} +/- {:.1e}", row.dt, row.rmse, row.stderr);
        }
        match report.fitted_order() {
            Some(p) => println!("  fitted order {p:.3}"),
            None => println!("  not enough valid rows to fit"),
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
