// Closed-form stability results: linear amplification factors and step
// limits, and the decay rates and step bounds for nonlinear problems.
//
// ```text
// cargo run --example analytic_thresholds
// ```

use jumpsde::stability::{
    backward_euler_rate_beta1, compensated_backward_euler_rate_beta2, cstm_amplification, cstm_max_stable_dt, linear_l,
    nonlinear_alpha, semi_tamed_nonlinear_max_dt, stm_amplification, tamed_nonlinear_max_dt, NonlinearStabilityInputs,
};
use jumpsde::Result;

pub fn run() -> Result<()> {
    let (a, b, c, lambda) = (-7.0, 1.0, 1.0, 4.0);
    println!(
        "linear: a={a} b={b} c={c} lambda={lambda}, l = {:.4}",
        linear_l(a, b, c, lambda)
    );
    println!("{:>6} {:>8} {:>10} {:>10}", "theta", "dt", "cstm G", "stm G");
    for theta in [0.0, 0.25, 0.5, 1.0] {
        for dt in [0.01, 0.1, 1.0] {
            println!(
                "{theta:>6} {dt:>8} {:>10.5} {:>10.5}",
                cstm_amplification(a, b, c, lambda, theta, dt)?,
                stm_amplification(a, b, c, lambda, theta, dt)?
            );
        }
        println!(
            "       cstm stable for dt < {:.5}",
            cstm_max_stable_dt(a, b, c, lambda, theta)?
        );
    }

    let (mu, sigma, gamma, lam) = (-5.0, 1.0, 1.0, 1.0);
    let alpha = nonlinear_alpha(mu, sigma, gamma, lam)?;
    println!("\nnonlinear: alpha = {alpha}");
    for dt in [1e-3, 1e-2, 1e-1] {
        println!(
            "  dt {dt:<6} beta1 = {:.5}  beta2 = {:.5}",
            backward_euler_rate_beta1(mu, sigma, gamma, lam, dt)?,
            compensated_backward_euler_rate_beta2(mu, sigma, gamma, lam, dt)?
        );
    }

    let inputs = NonlinearStabilityInputs {
        rho: 2.0,
        theta_g: 1.0,
        beta: 2.0,
        beta_bar: 1.0,
        k: 1.0,
        c: 0.5,
        mu: 2.0,
        lambda: 1.0,
        ..Default::default()
    };
    for (name, bound) in [
        ("semi-tamed", semi_tamed_nonlinear_max_dt(&inputs)),
        ("tamed", tamed_nonlinear_max_dt(&inputs)),
    ] {
        match bound {
            Ok(dt) => println!("  {name} certified for dt < {dt:.5}"),
            Err(e) => println!("  {name}: {e}"),
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run()
}
