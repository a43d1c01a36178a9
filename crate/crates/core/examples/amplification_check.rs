// Monte Carlo check of the one-step mean-square amplification factors.
//
// ```text
// cargo run --release --example amplification_check
// ```

use jumpsde::experiments::run_amplification_validation;
use jumpsde::{Result, SchemeKind};

pub fn run() -> Result<()> {
    let (a, b, c, lambda) = (-1.0, 2.0, -0.9, 9.0);
    for (kind, theta) in [
        (SchemeKind::Stm, 0.5),
        (SchemeKind::Cstm, 0.5),
        (SchemeKind::Cstm, 1.0),
        (SchemeKind::SemiTamed, 0.0),
    ] {
        for dt in [0.02, 0.08] {
            let check = run_amplification_validation(a, b, c, lambda, kind, theta, dt, 200_000, 11)?;
            println!(
                "{:<10} theta {theta:<4} dt {dt:<5} closed form {:.5}  sampled {:.5} +/- {:.5}  z = {:+.2}",
                kind.to_string(),
                check.closed_form,
                check.empirical,
                check.stderr,
                check.z
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
