// Mean-square stability of tamed and semi-tamed Euler on
// `dX = -X dt + 2X dW - 0.9X dN`, `lambda = 9`, next to their closed-form
// step-size limits.
//
// ```text
// cargo run --release --example tamed_vs_semi_tamed
// ```

use jumpsde::experiments::{run_stability_sweep, StabilityConfig};
use jumpsde::stability::{semi_tamed_linear_amplification, semi_tamed_linear_max_dt, tamed_linear_max_dt};
use jumpsde::{models, Result, SchemeKind, SchemeSpec};

pub fn run() -> Result<()> {
    let (a, b, c, lambda) = (-1.0, 2.0, -0.9, 9.0);
    let problem = models::linear(a, b, c, lambda, 1.0);
    let semi_limit = semi_tamed_linear_max_dt(a, b, c, lambda)?;
    let tamed = tamed_linear_max_dt(a, b, c, lambda)?;
    println!("semi-tamed stable iff dt < {semi_limit:.6}");
    println!("tamed certified for dt < {:.6} ({})", tamed.max_dt, tamed.case);

    let mut cfg = StabilityConfig::new(vec![0.02, 0.05, 0.08]);
    cfg.horizon = 250.0;
    cfg.paths = 500;
    for scheme in [SchemeSpec::semi_tamed(None), SchemeSpec::tamed()] {
        let report = run_stability_sweep(&problem, &scheme, &cfg)?;
        for row in &report.rows {
            let factor = match scheme.kind {
                SchemeKind::SemiTamed => format!(
                    "factor {:.4}",
                    semi_tamed_linear_amplification(a, b, c, lambda, row.dt)?
                ),
                _ => format!("certified: {}", tamed.certifies(row.dt)),
            };
            println!(
                "{:<10} dt {:<5} {:<12} {factor}",
                report.scheme.to_string(),
                row.dt,
                row.classification.to_string()
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
