// Semi-tamed versus fully tamed Euler on `dX = (-4X - X^3) dt + X dW + X dN`.
// The semi-tamed scheme only tames the cubic part of the drift.
//
// ```text
// cargo run --release --example semi_tamed_cubic
// ```

use jumpsde::experiments::{run_convergence, ConvergenceConfig, Reference};
use jumpsde::increments::RandomSource;
use jumpsde::schemes::integrate_path;
use jumpsde::{models, IncrementGrid, Result, SchemeSpec};

pub fn run() -> Result<()> {
    let problem = models::cubic_split(1.0, 1.0)?;

    // one shared noise path, two schemes
    let grid = IncrementGrid::generate(RandomSource::new(1, 0), 256, 1, 1.0 / 256.0, 1.0)?;
    let semi = integrate_path(&problem, &SchemeSpec::semi_tamed(None), &grid, 1)?;
    let tamed = integrate_path(&problem, &SchemeSpec::tamed(), &grid, 1)?;
    println!(
        "X(1) on one path: semi-tamed {:.6}, tamed {:.6}",
        semi.endpoint().unwrap()[0],
        tamed.endpoint().unwrap()[0]
    );

    for scheme in [SchemeSpec::semi_tamed(None), SchemeSpec::tamed()] {
        let mut cfg = ConvergenceConfig::new(scheme, Reference::FineNumerical);
        cfg.fine_exponent = 11;
        cfg.ratios = vec![2, 4, 8, 16, 32];
        cfg.paths = 500;
        let report = run_convergence(&problem, &cfg)?;
        println!(
            "{:<11} rmse at coarsest dt {:.4e}, fitted order {}",
            report.scheme.to_string(),
            report.rows.last().map_or(f64::NAN, |r| r.rmse),
            report.fitted_order().map_or("n/a".into(), |p| format!("{p:.3}"))
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
