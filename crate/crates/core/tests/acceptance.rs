//! End-to-end acceptance checks, one test per criterion.
//!
//! Every test writes a single `criterion N: PASS|FAIL ...` line straight to
//! stderr (bypassing the test harness capture) before asserting, so the full
//! scorecard is visible in the log whether or not the criterion holds.

use std::io::Write;
use std::time::Instant;

use jumpsde::experiments::{
    run_amplification_validation, run_convergence, run_stability_sweep, with_threads, ConvergenceConfig,
    ConvergenceReport, Reference, StabilityConfig, StabilityReport, Threads,
};
use jumpsde::increments::{IncrementGrid, RandomSource};
use jumpsde::models::{self, DriftSplit, JumpSdeProblem};
use jumpsde::schemes::{integrate_path, SchemeKind, SchemeSpec, Trajectory};
use jumpsde::stability::{
    self, backward_euler_rate_beta1, compensated_backward_euler_rate_beta2, cstm_amplification, linear_l,
    nonlinear_alpha, Classification,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n}: {verdict} {detail}");
}

fn order_in_band(r: &ConvergenceReport) -> bool {
    r.fitted_order().is_some_and(|p| (0.40..=0.60).contains(&p))
}

fn fmt_order(r: &ConvergenceReport) -> String {
    r.fitted_order().map_or("none".into(), |p| format!("{p:.3}"))
}

fn c1_config(theta: f64) -> ConvergenceConfig {
    let mut cfg = ConvergenceConfig::new(SchemeSpec::cstm(theta).unwrap(), Reference::ExactLinear);
    cfg.fine_exponent = 12;
    cfg.ratios = vec![1, 2, 4, 8, 16];
    cfg.paths = 2000;
    cfg.horizon = 1.0;
    cfg
}

fn c1_problem() -> JumpSdeProblem {
    models::linear(1.0, 1.0, 0.5, 1.0, 1.0)
}

#[test]
fn criterion_01_linear_cstm_order() {
    let problem = c1_problem();
    let start = Instant::now();
    let mut orders = Vec::new();
    let mut pass = true;
    for theta in [0.0, 0.5, 1.0] {
        let r = run_convergence(&problem, &c1_config(theta)).unwrap();
        pass &= order_in_band(&r);
        orders.push(format!("theta={theta}: {}", fmt_order(&r)));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 30.0;
    report(
        1,
        pass,
        &format!(
            "orders [{}], band [0.40, 0.60], {secs:.1} s (< 30 s)",
            orders.join(", ")
        ),
    );
    assert!(pass);
}

fn fine_config(scheme: SchemeSpec) -> ConvergenceConfig {
    let mut cfg = ConvergenceConfig::new(scheme, Reference::FineNumerical);
    cfg.fine_exponent = 12;
    cfg.paths = 2000;
    cfg.horizon = 1.0;
    cfg
}

#[test]
fn criterion_02_compensated_tamed_quartic() {
    let problem = models::quartic(1.0, 1.0).unwrap();
    let tamed = run_convergence(&problem, &fine_config(SchemeSpec::compensated_tamed())).unwrap();
    let euler = run_convergence(&problem, &fine_config(SchemeSpec::explicit_euler())).unwrap();
    let coarsest = euler.rows.last().unwrap();
    let diverges = coarsest.diverged_frac > 0.5;
    let pass = order_in_band(&tamed) && diverges;
    report(
        2,
        pass,
        &format!(
            "compensated tamed order {} (band [0.40, 0.60]); explicit Euler diverged fraction {:.4} at dt {} (> 0.5)",
            fmt_order(&tamed),
            coarsest.diverged_frac,
            coarsest.dt
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_semi_tamed_and_tamed_cubic() {
    let problem = models::cubic_split(1.0, 1.0).unwrap();
    let semi = run_convergence(&problem, &fine_config(SchemeSpec::semi_tamed(None))).unwrap();
    let tamed = run_convergence(&problem, &fine_config(SchemeSpec::tamed())).unwrap();
    let pass = order_in_band(&semi) && order_in_band(&tamed);
    report(
        3,
        pass,
        &format!(
            "semi-tamed order {}, tamed order {} (band [0.40, 0.60])",
            fmt_order(&semi),
            fmt_order(&tamed)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_cstm_a_stability() {
    // (i) factor < 1 exactly when (1-2θ)(a+λc)²Δt < -l
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut checked, mut violations) = (0, 0);
    while checked < 10_000 {
        let a = rng.random_range(-10.0..10.0);
        let b = rng.random_range(-3.0..3.0);
        let c = rng.random_range(-2.0..2.0);
        let lambda = rng.random_range(0.0..10.0);
        if linear_l(a, b, c, lambda) >= 0.0 {
            continue;
        }
        let theta = rng.random_range(0.0..=1.0);
        let dt = 10f64.powf(rng.random_range(-3.0..2.0));
        let Ok(g) = cstm_amplification(a, b, c, lambda, theta, dt) else {
            continue;
        };
        let big_a = a + lambda * c;
        let predicted = (1.0 - 2.0 * theta) * big_a * big_a * dt < -linear_l(a, b, c, lambda);
        if (g < 1.0) != predicted {
            violations += 1;
        }
        checked += 1;
    }

    // (ii) simulated sweeps at huge steps
    let examples = [("I", (2.0, 2.0, -0.9, 9.0)), ("II", (-7.0, 1.0, 1.0, 4.0))];
    let mut verdicts = Vec::new();
    let mut all_stable = true;
    for (name, (a, b, c, lambda)) in examples {
        let problem = models::linear(a, b, c, lambda, 1.0);
        for theta in [0.5, 1.0] {
            let r = run_stability_sweep(
                &problem,
                &SchemeSpec::cstm(theta).unwrap(),
                &StabilityConfig::new(vec![25.0, 60.0]),
            )
            .unwrap();
            for row in &r.rows {
                all_stable &= row.classification == Classification::Stable;
                verdicts.push(format!(
                    "{name} theta={theta} dt={}: {} ({:.2e})",
                    row.dt, row.classification, row.fitted_rate
                ));
            }
        }
    }
    let mut below = true;
    for (name, (a, b, c, lambda)) in examples {
        let g = cstm_amplification(a, b, c, lambda, 0.495, 60.0).unwrap();
        below &= g > 1.0;
        verdicts.push(format!("{name} theta=0.495 dt=60: G={g:.4}"));
    }
    let pass = violations == 0 && all_stable && below;
    report(
        4,
        pass,
        &format!(
            "(i) {violations} violations on {checked} points; (ii) {}",
            verdicts.join("; ")
        ),
    );
    assert!(pass);
}

fn c5_sweeps() -> (StabilityReport, StabilityReport) {
    let problem = models::linear(-1.0, 2.0, -0.9, 9.0, 1.0);
    let cfg = StabilityConfig::new(vec![0.02, 0.05, 0.08]);
    let semi = run_stability_sweep(&problem, &SchemeSpec::semi_tamed(None), &cfg).unwrap();
    let tamed = run_stability_sweep(&problem, &SchemeSpec::tamed(), &cfg).unwrap();
    (semi, tamed)
}

fn round_sig(x: f64, digits: i32) -> f64 {
    let scale = 10f64.powi(digits - 1 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

#[test]
fn criterion_05_semi_tamed_versus_tamed() {
    let (semi, tamed) = c5_sweeps();
    let expected_tamed = [Classification::Stable, Classification::Stable, Classification::Unstable];
    let mut pass = semi.rows.iter().all(|r| r.classification == Classification::Stable);
    pass &= tamed
        .rows
        .iter()
        .zip(expected_tamed)
        .all(|(r, e)| r.classification == e);

    let semi_dt = stability::semi_tamed_linear_max_dt(-1.0, 2.0, -0.9, 9.0).unwrap();
    let tamed_dt = stability::tamed_linear_max_dt(-1.0, 2.0, -0.9, 9.0).unwrap().max_dt;
    pass &= round_sig(semi_dt, 4) == 0.08344 && round_sig(tamed_dt, 4) == 0.07371;

    let row = |r: &jumpsde::experiments::StabilityRow| format!("{}={}", r.dt, r.classification);
    report(
        5,
        pass,
        &format!(
            "semi-tamed [{}] (want all stable); tamed [{}] (want stable, stable, unstable); thresholds {semi_dt:.6} / {tamed_dt:.6} (want 0.08344 / 0.07371)",
            semi.rows.iter().map(row).collect::<Vec<_>>().join(", "),
            tamed.rows.iter().map(row).collect::<Vec<_>>().join(", "),
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_amplification_monte_carlo() {
    let (a, b, c, lambda) = (-1.0, 2.0, -0.9, 9.0);
    let settings = [
        (SchemeKind::Stm, 0.0, 0.02),
        (SchemeKind::Stm, 0.5, 0.05),
        (SchemeKind::Stm, 1.0, 0.1),
        (SchemeKind::Cstm, 0.0, 0.02),
        (SchemeKind::Cstm, 0.5, 0.05),
        (SchemeKind::Cstm, 1.0, 0.1),
        (SchemeKind::SemiTamed, 0.0, 0.01),
        (SchemeKind::SemiTamed, 0.0, 0.05),
        (SchemeKind::SemiTamed, 0.0, 0.08),
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for (i, (kind, theta, dt)) in settings.into_iter().enumerate() {
        let check = run_amplification_validation(a, b, c, lambda, kind, theta, dt, 1_000_000, 60 + i as u64).unwrap();
        pass &= check.z.abs() < 4.0;
        lines.push(format!("{kind}({theta}, {dt}) z={:+.2}", check.z));
    }
    report(6, pass, &format!("|z| < 4: {}", lines.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_07_rate_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dt = 1e-8;
    let (mut sets, mut worst, mut sign_failures) = (0, 0.0f64, 0);
    let rel = |x: f64, target: f64| ((x - target) / target).abs();
    while sets < 100 {
        let mu = rng.random_range(-20.0..0.0);
        let sigma = rng.random_range(0.0..4.0);
        let gamma = rng.random_range(0.0..2.0);
        let lambda = rng.random_range(0.0..5.0);
        let alpha = nonlinear_alpha(mu, sigma, gamma, lambda).unwrap();
        if alpha > -0.05 {
            continue;
        }
        worst = worst.max(rel(
            backward_euler_rate_beta1(mu, sigma, gamma, lambda, dt).unwrap(),
            alpha,
        ));
        worst = worst.max(rel(
            compensated_backward_euler_rate_beta2(mu, sigma, gamma, lambda, dt).unwrap(),
            alpha,
        ));
        for step in [1e-3, 1.0, 1e3] {
            if compensated_backward_euler_rate_beta2(mu, sigma, gamma, lambda, step).map_or(true, |b| b >= 0.0) {
                sign_failures += 1;
            }
        }

        let a = rng.random_range(-10.0..10.0);
        let b = rng.random_range(-3.0..3.0);
        let c = rng.random_range(-2.0..2.0);
        let lam = rng.random_range(0.0..10.0);
        let l = linear_l(a, b, c, lam);
        if l.abs() < 0.05 {
            continue;
        }
        for theta in [0.0, 0.5, 1.0] {
            let g = cstm_amplification(a, b, c, lam, theta, dt).unwrap();
            worst = worst.max(rel((g - 1.0) / dt, l));
            let g = stability::stm_amplification(a, b, c, lam, theta, dt).unwrap();
            worst = worst.max(rel((g - 1.0) / dt, l));
        }
        let g = stability::semi_tamed_linear_amplification(a, b, c, lam, dt).unwrap();
        worst = worst.max(rel((g - 1.0) / dt, l));
        sets += 1;
    }
    let pass = worst < 1e-4 && sign_failures == 0;
    report(
        7,
        pass,
        &format!(
            "worst relative gap at dt=1e-8 over {sets} sets: {worst:.2e} (< 1e-4); beta2 >= 0 cases: {sign_failures}"
        ),
    );
    assert!(pass);
}

fn random_grid(rng: &mut ChaCha8Rng, lambda: f64, path: u64) -> IncrementGrid {
    let n = rng.random_range(1..200);
    let dt = 10f64.powf(rng.random_range(-3.0..-0.5));
    IncrementGrid::generate(RandomSource::new(8, path), n, 1, dt, lambda).unwrap()
}

fn same_bits(x: &Trajectory, y: &Trajectory) -> bool {
    x.diverged_at == y.diverged_at
        && x.states.len() == y.states.len()
        && x.states
            .iter()
            .flatten()
            .zip(y.states.iter().flatten())
            .all(|(p, q)| p.to_bits() == q.to_bits())
}

#[test]
fn criterion_08_scheme_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = [0usize; 4];
    for path in 0..100u64 {
        let lambda = rng.random_range(0.0..5.0);
        let x0 = rng.random_range(-3.0..3.0);
        let grid = random_grid(&mut rng, lambda, path);
        let problems = [
            models::linear(
                rng.random_range(-5.0..5.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-1.0..1.0),
                lambda,
                x0,
            ),
            models::quartic(lambda, x0).unwrap(),
            models::cubic_split(lambda, x0).unwrap(),
        ];
        for problem in &problems {
            // (i) CSTM(0) and STM(0)
            let p = integrate_path(problem, &SchemeSpec::cstm(0.0).unwrap(), &grid, 1).unwrap();
            let q = integrate_path(problem, &SchemeSpec::stm(0.0).unwrap(), &grid, 1).unwrap();
            failures[0] += usize::from(!same_bits(&p, &q));

            // (ii) semi-tamed with u = 0 and tamed
            let all_v = SchemeSpec::semi_tamed(Some(DriftSplit::all_nonlinear(problem)));
            let p = integrate_path(problem, &all_v, &grid, 1).unwrap();
            let q = integrate_path(problem, &SchemeSpec::tamed(), &grid, 1).unwrap();
            failures[1] += usize::from(!same_bits(&p, &q));

            // (iii) compensated semi-tamed and semi-tamed
            if problem.split().is_some() {
                let p = integrate_path(problem, &SchemeSpec::compensated_semi_tamed(None), &grid, 1).unwrap();
                let q = integrate_path(problem, &SchemeSpec::semi_tamed(None), &grid, 1).unwrap();
                failures[2] += usize::from(!same_bits(&p, &q));
            }
        }

        // (iv) zero coefficients keep every scheme at x0
        let zero = JumpSdeProblem::scalar(lambda, x0, |_| 0.0, |_| 0.0, |_| 0.0).unwrap();
        let split = DriftSplit::scalar(|_| 0.0, |_| 0.0);
        for kind in SchemeKind::ALL {
            let mut spec = SchemeSpec::new(kind, rng.random_range(0.0..=1.0)).unwrap();
            if kind.needs_split() {
                spec.split = Some(split.clone());
            }
            let t = integrate_path(&zero, &spec, &grid, 1).unwrap();
            failures[3] +=
                usize::from(t.diverged_at.is_some() || t.states.iter().any(|s| s[0].to_bits() != x0.to_bits()));
        }
    }
    let pass = failures.iter().all(|&f| f == 0);
    report(
        8,
        pass,
        &format!(
            "mismatching paths out of 100: (i) {}, (ii) {}, (iii) {}, (iv) {}",
            failures[0], failures[1], failures[2], failures[3]
        ),
    );
    assert!(pass);
}

/// Mean and variance checks for `xs` against `(mean, var)`, each as a z-score.
fn moment_z(xs: &[f64], mean: f64, var: f64) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let centred: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let s2 = centred.iter().sum::<f64>() / n;
    let s2_var = centred.iter().map(|q| (q - s2) * (q - s2)).sum::<f64>() / (n - 1.0);
    ((m - mean) / (var / n).sqrt(), (s2 - var) / (s2_var / n).sqrt())
}

#[test]
fn criterion_09_increment_statistics() {
    let n = 1_000_000;
    let mut pass = true;
    let mut lines = Vec::new();
    for (i, (lambda, dt)) in [(1.0, 0.01), (9.0, 0.08), (4.0, 1.0)].into_iter().enumerate() {
        let grid = IncrementGrid::generate(RandomSource::new(9, i as u64), n, 1, dt, lambda).unwrap();
        let (zw_mean, zw_var) = moment_z(grid.brownian(), 0.0, dt);
        let (zn_mean, zn_var) = moment_z(&grid.compensated(), 0.0, lambda * dt);
        for z in [zw_mean, zw_var, zn_mean, zn_var] {
            pass &= z.abs() < 4.0;
        }
        lines.push(format!(
            "lambda={lambda} dt={dt}: dW z=({zw_mean:+.2}, {zw_var:+.2}) dNbar z=({zn_mean:+.2}, {zn_var:+.2})"
        ));
    }
    report(9, pass, &format!("{} samples, |z| < 4: {}", n, lines.join("; ")));
    assert!(pass);
}

fn c1_csvs() -> Vec<u8> {
    let problem = c1_problem();
    let mut out = Vec::new();
    for theta in [0.0, 0.5, 1.0] {
        run_convergence(&problem, &c1_config(theta))
            .unwrap()
            .write_csv(&mut out)
            .unwrap();
    }
    out
}

fn c5_csvs() -> Vec<u8> {
    let (semi, tamed) = c5_sweeps();
    let mut out = Vec::new();
    for r in [&semi, &tamed] {
        r.write_series_csv(&mut out).unwrap();
        r.write_summary_csv(&mut out).unwrap();
    }
    out
}

#[test]
fn criterion_10_thread_count_reproducibility() {
    let runs: Vec<(Vec<u8>, Vec<u8>)> = [1, 4, 8]
        .into_iter()
        .map(|n| with_threads(Threads::Fixed(n), || (c1_csvs(), c5_csvs())).unwrap())
        .collect();
    let same = runs.windows(2).all(|w| w[0] == w[1]);
    let pass = same && !runs[0].0.is_empty() && !runs[0].1.is_empty();
    report(
        10,
        pass,
        &format!(
            "convergence ({} bytes) and stability ({} bytes) CSVs identical across 1, 4, 8 threads: {same}",
            runs[0].0.len(),
            runs[0].1.len()
        ),
    );
    assert!(pass);
}
