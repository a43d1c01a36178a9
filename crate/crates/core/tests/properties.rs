use std::sync::Arc;

use approx::assert_relative_eq;
use jumpsde::increments::{coarsen, IncrementGrid, IncrementStream, RandomSource};
use jumpsde::models::{self, split_deviation, JumpSdeProblem, LinearJumpSde};
use jumpsde::schemes::{step_cstm, step_stm, step_tamed, ImplicitSolveConfig};
use jumpsde::stability::{
    classify_mean_square, cstm_amplification, cstm_max_stable_dt, linear_l, stm_amplification, Classification,
};
use proptest::prelude::*;

fn linear_params() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (-10.0..10.0f64, -3.0..3.0f64, -0.95..2.0f64, 0.0..10.0f64)
}

proptest! {
    #[test]
    fn tamed_drift_increment_is_below_one(x in -50.0..50.0f64, dt in 1e-4..1.0f64, power in 1i32..6) {
        let problem = JumpSdeProblem::scalar(0.0, 0.0, move |x| -x * x.abs().powi(power - 1), |_| 0.0, |_| 0.0).unwrap();
        let next = step_tamed(&problem, &[x], &[0.0], 0.0, dt);
        prop_assert!((next[0] - x).abs() < 1.0);
    }

    #[test]
    fn stm_and_cstm_factors_agree_without_jumps(
        (a, b, _, lambda) in linear_params(),
        theta in 0.0..=1.0f64,
        dt in 1e-3..10.0f64,
    ) {
        let s = stm_amplification(a, b, 0.0, lambda, theta, dt);
        let c = cstm_amplification(a, b, 0.0, lambda, theta, dt);
        match (s, c) {
            (Ok(s), Ok(c)) => prop_assert!((s - c).abs() <= 1e-12 * s.abs().max(1.0)),
            (s, c) => prop_assert_eq!(s.is_err(), c.is_err()),
        }
    }

    #[test]
    fn cstm_threshold_matches_factor(
        (a, b, c, lambda) in linear_params(),
        theta in 0.0..0.49f64,
        dt in 1e-3..5.0f64,
    ) {
        prop_assume!(linear_l(a, b, c, lambda) < 0.0);
        let threshold = cstm_max_stable_dt(a, b, c, lambda, theta).unwrap();
        let g = cstm_amplification(a, b, c, lambda, theta, dt).unwrap();
        prop_assume!((dt - threshold).abs() > 1e-9 * threshold);
        prop_assert_eq!(g < 1.0, dt < threshold);
    }

    #[test]
    fn coarsening_telescopes(seed in any::<u64>(), r1 in 1usize..5, r2 in 1usize..5, blocks in 1usize..6, lambda in 0.0..5.0f64) {
        let n = r1 * r2 * blocks;
        let grid = IncrementGrid::generate(RandomSource::new(seed, 0), n, 2, 0.01, lambda).unwrap();
        let twice = coarsen(&coarsen(&grid, r1).unwrap(), r2).unwrap();
        let once = coarsen(&grid, r1 * r2).unwrap();
        prop_assert_eq!(twice.counts(), once.counts());
        prop_assert_eq!(twice.n_steps(), once.n_steps());
        for (x, y) in twice.brownian().iter().zip(once.brownian()) {
            prop_assert!((x - y).abs() <= 1e-14 * (1.0 + x.abs()) * n as f64);
        }
    }

    #[test]
    fn stream_reproduces_grid(seed in any::<u64>(), path in any::<u64>(), lambda in 0.0..20.0f64) {
        let source = RandomSource::new(seed, path);
        let grid = IncrementGrid::generate(source, 50, 1, 0.05, lambda).unwrap();
        let mut stream = IncrementStream::new(source, 0.05, lambda).unwrap();
        let mut dw = [0.0];
        for k in 0..50 {
            let count = stream.next_into(&mut dw);
            prop_assert_eq!(count, grid.counts()[k]);
            prop_assert_eq!(dw[0].to_bits(), grid.brownian_row(k)[0].to_bits());
        }
    }

    #[test]
    fn exact_solution_semigroup(
        (a, b, c, lambda) in linear_params(),
        t1 in 0.0..2.0f64, t2 in 0.0..2.0f64,
        w1 in -2.0..2.0f64, w2 in -2.0..2.0f64,
        n1 in 0u64..4, n2 in 0u64..4,
        x0 in 0.1..3.0f64,
    ) {
        let sde = LinearJumpSde::new(a, b, c, lambda, x0);
        let joint = sde.exact_solution(t1 + t2, w1 + w2, n1 + n2).unwrap();
        let split = sde.exact_solution(t1, w1, n1).unwrap() * sde.exact_solution(t2, w2, n2).unwrap() / x0;
        prop_assert!((joint - split).abs() <= 1e-10 * joint.abs().max(1e-300));
    }

    #[test]
    fn implicit_residual_within_tolerance(
        y in -3.0..3.0f64,
        dw in -0.3..0.3f64,
        dn in 0u32..3,
        theta in 0.05..=1.0f64,
        dt in 1e-3..0.2f64,
    ) {
        let problem = models::cubic_split(1.0, 1.0).unwrap();
        let cfg = ImplicitSolveConfig::default();
        let next = step_stm(&problem, theta, &[y], &[dw], f64::from(dn), dt, &cfg).unwrap()[0];
        let f = |x: f64| problem.drift(&[x])[0];
        let rhs = y + (1.0 - theta) * dt * f(y) + problem.diffusion(&[y])[0] * dw + problem.jump(&[y])[0] * f64::from(dn);
        let residual = (next - theta * dt * f(next) - rhs).abs();
        let scale = rhs.abs().max(next.abs()).max(theta * dt * f(next).abs());
        prop_assert!(residual <= cfg.tolerance * scale, "residual {residual}");
    }

    #[test]
    fn general_solver_matches_linear_closed_form(
        (a, b, c, lambda) in linear_params(),
        theta in 0.05..=1.0f64,
        y in -5.0..5.0f64,
        dw in -0.3..0.3f64,
        dn in 0u32..4,
        dt in 1e-3..0.1f64,
    ) {
        prop_assume!((1.0 - theta * dt * (a + lambda * c)).abs() > 0.1);
        let fast = models::linear(a, b, c, lambda, 1.0);
        let general = fast.clone().with_drift(Arc::new(move |x: &[f64], out: &mut [f64]| out[0] = a * x[0]));
        prop_assert!(general.linear().is_none());
        let cfg = ImplicitSolveConfig::default();
        let dn = f64::from(dn);
        let p = step_stm(&fast, theta, &[y], &[dw], dn, dt, &cfg).unwrap()[0];
        let q = step_stm(&general, theta, &[y], &[dw], dn, dt, &cfg).unwrap()[0];
        prop_assert!((p - q).abs() <= 1e-10 * p.abs(), "stm {p} vs {q}");
        let dnbar = dn - lambda * dt;
        let p = step_cstm(&fast, theta, &[y], &[dw], dnbar, dt, &cfg).unwrap()[0];
        let q = step_cstm(&general, theta, &[y], &[dw], dnbar, dt, &cfg).unwrap()[0];
        prop_assert!((p - q).abs() <= 1e-10 * p.abs(), "cstm {p} vs {q}");
    }

    #[test]
    fn classifier_follows_exponential_rate(rate in -0.5..0.5f64) {
        let series: Vec<(f64, f64)> = (0..50).map(|k| (k as f64, (rate * k as f64).exp())).collect();
        let fit = classify_mean_square(&series, 1e-3).unwrap();
        let want = if rate < -1e-3 - 1e-9 {
            Classification::Stable
        } else if rate > 1e-3 + 1e-9 {
            Classification::Unstable
        } else {
            Classification::Inconclusive
        };
        prop_assume!((rate.abs() - 1e-3).abs() > 1e-9);
        prop_assert_eq!(fit.classification, want);
        assert_relative_eq!(fit.rate, rate, epsilon = 1e-9);
    }
}

#[test]
fn builtin_splits_are_consistent() {
    let points: Vec<Vec<f64>> = (0..1000).map(|k| vec![-10.0 + 20.0 * k as f64 / 999.0]).collect();
    for problem in [
        models::cubic_split(1.0, 1.0).unwrap(),
        models::linear(-2.0, 1.0, 0.5, 1.0, 1.0),
    ] {
        if let Some(split) = problem.split() {
            assert!(split_deviation(&problem, split, &points) < 1e-12);
        }
    }
}

#[test]
fn grids_depend_only_on_seed_and_path() {
    let make = |path| IncrementGrid::generate(RandomSource::new(3, path), 64, 1, 0.01, 2.0).unwrap();
    let forward: Vec<_> = (0..8).map(make).collect();
    let backward: Vec<_> = (0..8).rev().map(make).collect();
    for (k, g) in forward.iter().enumerate() {
        assert_eq!(g, &backward[7 - k]);
    }
    assert_ne!(forward[0], forward[1]);
}

#[test]
fn diverging_fixed_point_does_not_return_overflowed_iterate() {
    let problem = models::cubic_split(1.0, 1.0).unwrap();
    let (y, theta, dt) = (1.7069862616116727, 0.5173929482480008, 0.15319998172135635);
    let next = step_stm(
        &problem,
        theta,
        &[y],
        &[-0.14890984545833635],
        2.0,
        dt,
        &ImplicitSolveConfig::default(),
    )
    .unwrap();
    assert_relative_eq!(
        next[0] * (1.0 + 4.0 * theta * dt) + theta * dt * next[0].powi(3),
        3.994203594205102,
        max_relative = 1e-10
    );
}
