// Compensated tamed Euler on `dX = -X^4 dt + X dW + X dN`, with explicit
// Euler alongside for comparison. Both use a fine-grid run of the same
// scheme as reference.
//
// ```text
// cargo run --release --example tamed_quartic
// ```

use jumpsde::experiments::{run_convergence, ConvergenceConfig, Reference};
use jumpsde::{models, Result, SchemeSpec};

pub fn run() -> Result<()> {
    let problem = models::quartic(1.0, 1.0)?;
    for scheme in [SchemeSpec::compensated_tamed(), SchemeSpec::explicit_euler()] {
        let mut cfg = ConvergenceConfig::new(scheme, Reference::FineNumerical);
        cfg.fine_exponent = 11;
        cfg.ratios = vec![2, 4, 8, 16, 32];
        cfg.paths = 500;
        let report = run_convergence(&problem, &cfg)?;
        println!("{}", report.scheme);
        for row in &report.rows {
            println!(
                "  dt = {:.3e}  rmse = {:.4e}  diverged = {:.2}%",
                row.dt,
                row.rmse,
                100.0 * row.diverged_frac
            );
        }
        println!(
            "  fitted order {}",
            report.fitted_order().map_or("n/a".into(), |p| format!("{p:.3}"))
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
