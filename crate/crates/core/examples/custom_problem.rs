// A user-defined two-dimensional jump SDE with a drift split, integrated by
// the implicit theta method and the semi-tamed scheme.
//
// ```text
// cargo run --example custom_problem
// ```

use std::sync::Arc;

use jumpsde::increments::RandomSource;
use jumpsde::schemes::integrate_path;
use jumpsde::{DriftSplit, IncrementGrid, JumpSdeProblem, Result, SchemeSpec};

pub fn run() -> Result<()> {
    // dX = (A X - |X|^2 X) dt + 0.3 X dW + 0.2 X dN in two dimensions, one Brownian driver
    let u = |x: &[f64], out: &mut [f64]| {
        out[0] = -x[0] + 0.5 * x[1];
        out[1] = -0.5 * x[0] - x[1];
    };
    let v = |x: &[f64], out: &mut [f64]| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        out[0] = -r2 * x[0];
        out[1] = -r2 * x[1];
    };
    let problem = JumpSdeProblem::new(2, 1, vec![2.0, -1.0], 3.0)?
        .with_name("rotating-cubic")
        .with_drift(Arc::new(move |x: &[f64], out: &mut [f64]| {
            let mut w = [0.0; 2];
            u(x, out);
            v(x, &mut w);
            out[0] += w[0];
            out[1] += w[1];
        }))
        .with_diffusion(Arc::new(|x: &[f64], out: &mut [f64]| {
            out[0] = 0.3 * x[0];
            out[1] = 0.3 * x[1];
        }))
        .with_jump(Arc::new(|x: &[f64], out: &mut [f64]| {
            out[0] = 0.2 * x[0];
            out[1] = 0.2 * x[1];
        }))
        .with_split(DriftSplit::new(Arc::new(u), Arc::new(v)));

    let grid = IncrementGrid::generate(RandomSource::new(5, 0), 400, 1, 0.01, problem.lambda())?;
    for spec in [
        SchemeSpec::cstm(1.0)?,
        SchemeSpec::semi_tamed(None),
        SchemeSpec::compensated_tamed(),
    ] {
        let path = integrate_path(&problem, &spec, &grid, 1)?;
        let x = path.endpoint().unwrap();
        println!(
            "{:<18} X(4) = ({:+.5}, {:+.5})",
            format!("{} {}", spec.kind, spec.theta_label()),
            x[0],
            x[1]
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
