//! One-step maps and path integrators.
//!
//! | scheme                    | update                                                                 |
//! |---------------------------|------------------------------------------------------------------------|
//! | explicit Euler            | `y + Δt f(y) + g(y)ΔW + h(y)ΔN`                                        |
//! | stochastic theta (STM)    | `Y − θΔt f(Y) = y + (1−θ)Δt f(y) + g(y)ΔW + h(y)ΔN`                    |
//! | compensated theta (CSTM)  | as STM with `f_λ = f + λh` and `ΔN̄ = ΔN − λΔt`                         |
//! | tamed                     | `y + Δt f/(1 + Δt‖f‖) + g ΔW + h ΔN`                                   |
//! | compensated tamed         | `y + Δt f_λ/(1 + Δt‖f_λ‖) + g ΔW + h ΔN̄`                              |
//! | semi-tamed                | `y + Δt u + Δt v/(1 + Δt‖v‖) + g ΔW + h ΔN` for a split `f = u + v`    |
//! | compensated semi-tamed    | `y + Δt u + λΔt h + Δt v/(1 + Δt‖v‖) + g ΔW + h ΔN̄`                   |
//!
//! The compensated semi-tamed map is the semi-tamed map with `ΔN = ΔN̄ + λΔt`,
//! and CSTM with `θ = 0` is explicit Euler; both are evaluated through the same
//! kernel as their uncompensated partner so the identities hold bit for bit.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::increments::IncrementGrid;
use crate::models::{norm, DriftSplit, JumpSdeProblem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    ExplicitEuler,
    Stm,
    Cstm,
    Tamed,
    CompensatedTamed,
    SemiTamed,
    CompensatedSemiTamed,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 7] = [
        SchemeKind::ExplicitEuler,
        SchemeKind::Stm,
        SchemeKind::Cstm,
        SchemeKind::Tamed,
        SchemeKind::CompensatedTamed,
        SchemeKind::SemiTamed,
        SchemeKind::CompensatedSemiTamed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::ExplicitEuler => "explicit-euler",
            SchemeKind::Stm => "stm",
            SchemeKind::Cstm => "cstm",
            SchemeKind::Tamed => "tamed",
            SchemeKind::CompensatedTamed => "compensated-tamed",
            SchemeKind::SemiTamed => "semi-tamed",
            SchemeKind::CompensatedSemiTamed => "compensated-semi-tamed",
        }
    }

    pub fn uses_theta(self) -> bool {
        matches!(self, SchemeKind::Stm | SchemeKind::Cstm)
    }

    pub fn needs_split(self) -> bool {
        matches!(self, SchemeKind::SemiTamed | SchemeKind::CompensatedSemiTamed)
    }

    /// Whether the scheme is driven by the compensated jump increment.
    pub fn is_compensated(self) -> bool {
        matches!(
            self,
            SchemeKind::Cstm | SchemeKind::CompensatedTamed | SchemeKind::CompensatedSemiTamed
        )
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Unknown {
                kind: "scheme",
                name: s.to_string(),
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImplicitMethod {
    /// Fixed-point iteration seeded at the explicit predictor, falling back to Newton.
    FixedPoint,
    /// Damped Newton with a forward-difference Jacobian.
    NewtonNumericJacobian,
}

/// Settings for the implicit stage of STM/CSTM with `θ > 0`.
///
/// The stage is accepted once `‖Y − θΔt F(Y) − rhs‖ ≤ tolerance · max(‖rhs‖, ‖Y‖, θΔt‖F(Y)‖)`,
/// i.e. relative to the largest term in the balance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImplicitSolveConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub method: ImplicitMethod,
}

impl Default for ImplicitSolveConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 100,
            method: ImplicitMethod::FixedPoint,
        }
    }
}

impl ImplicitSolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("implicit tolerance must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("implicit max_iterations must be >= 1"));
        }
        Ok(())
    }
}

/// A scheme together with its parameters.
#[derive(Clone, Debug)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    /// Implicitness for STM/CSTM; ignored by the other schemes.
    pub theta: f64,
    /// Drift split for the semi-tamed schemes; falls back to the problem's split.
    pub split: Option<DriftSplit>,
    pub implicit: ImplicitSolveConfig,
}

impl SchemeSpec {
    pub fn new(kind: SchemeKind, theta: f64) -> Result<Self> {
        let spec = Self {
            kind,
            theta: if kind.uses_theta() { theta } else { 0.0 },
            split: None,
            implicit: ImplicitSolveConfig::default(),
        };
        if kind.uses_theta() && !(0.0..=1.0).contains(&theta) {
            return Err(Error::invalid(format!("theta must lie in [0, 1], got {theta}")));
        }
        Ok(spec)
    }

    pub fn explicit_euler() -> Self {
        Self::new(SchemeKind::ExplicitEuler, 0.0).unwrap()
    }

    pub fn stm(theta: f64) -> Result<Self> {
        Self::new(SchemeKind::Stm, theta)
    }

    pub fn cstm(theta: f64) -> Result<Self> {
        Self::new(SchemeKind::Cstm, theta)
    }

    pub fn tamed() -> Self {
        Self::new(SchemeKind::Tamed, 0.0).unwrap()
    }

    pub fn compensated_tamed() -> Self {
        Self::new(SchemeKind::CompensatedTamed, 0.0).unwrap()
    }

    pub fn semi_tamed(split: Option<DriftSplit>) -> Self {
        Self {
            split,
            ..Self::new(SchemeKind::SemiTamed, 0.0).unwrap()
        }
    }

    pub fn compensated_semi_tamed(split: Option<DriftSplit>) -> Self {
        Self {
            split,
            ..Self::new(SchemeKind::CompensatedSemiTamed, 0.0).unwrap()
        }
    }

    pub fn with_implicit(mut self, implicit: ImplicitSolveConfig) -> Self {
        self.implicit = implicit;
        self
    }

    /// Theta as reported in output tables: the value for STM/CSTM, empty otherwise.
    pub fn theta_label(&self) -> String {
        if self.kind.uses_theta() {
            crate::fmt_f64(self.theta)
        } else {
            String::new()
        }
    }

    fn resolve_split<'a>(&'a self, problem: &'a JumpSdeProblem) -> Result<Option<&'a DriftSplit>> {
        if !self.kind.needs_split() {
            return Ok(None);
        }
        self.split
            .as_ref()
            .or(problem.split())
            .map(Some)
            .ok_or_else(|| Error::invalid(format!("{} needs a drift split", self.kind)))
    }

    pub fn validate(&self, problem: &JumpSdeProblem) -> Result<()> {
        if self.kind.uses_theta() {
            if !(0.0..=1.0).contains(&self.theta) {
                return Err(Error::invalid(format!("theta must lie in [0, 1], got {}", self.theta)));
            }
            if self.theta > 0.0 {
                self.implicit.validate()?;
            }
        }
        self.resolve_split(problem).map(|_| ())
    }
}

/// Jump increment carried as the raw count and its compensator `λΔt`.
#[derive(Clone, Copy, Debug)]
struct Jump {
    count: f64,
    mean: f64,
}

impl Jump {
    fn raw(count: f64, mean: f64) -> Self {
        Self { count, mean }
    }

    fn from_compensated(compensated: f64, mean: f64) -> Self {
        Self {
            count: compensated + mean,
            mean,
        }
    }

    #[inline]
    fn compensated(self) -> f64 {
        self.count - self.mean
    }
}

/// Scratch buffers for one path.
struct Workspace {
    f: Vec<f64>,
    g: Vec<f64>,
    h: Vec<f64>,
    rhs: Vec<f64>,
    iterate: Vec<f64>,
    next: Vec<f64>,
    probe: Vec<f64>,
    probe_f: Vec<f64>,
}

impl Workspace {
    fn new(d: usize, m: usize) -> Self {
        Self {
            f: vec![0.0; d],
            g: vec![0.0; d * m],
            h: vec![0.0; d],
            rhs: vec![0.0; d],
            iterate: vec![0.0; d],
            next: vec![0.0; d],
            probe: vec![0.0; d],
            probe_f: vec![0.0; d],
        }
    }
}

fn add_noise(out: &mut [f64], g: &[f64], dw: &[f64], h: &[f64], dj: f64) {
    let m = dw.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &g[i * m..(i + 1) * m];
        let gdw = if m == 1 {
            row[0] * dw[0]
        } else {
            row.iter().zip(dw).map(|(a, b)| a * b).sum()
        };
        *o = (*o + gdw) + h[i] * dj;
    }
}

/// `out = F(x)` with `F = f` or `F = f + λh`.
fn eval_drift(problem: &JumpSdeProblem, compensated: bool, x: &[f64], out: &mut [f64], h_scratch: &mut [f64]) {
    problem.drift_into(x, out);
    if compensated {
        problem.jump_into(x, h_scratch);
        let lambda = problem.lambda();
        for (o, hi) in out.iter_mut().zip(h_scratch.iter()) {
            *o += lambda * hi;
        }
    }
}

fn explicit_kernel(
    problem: &JumpSdeProblem,
    y: &[f64],
    dw: &[f64],
    dn: f64,
    dt: f64,
    ws: &mut Workspace,
    out: &mut [f64],
) {
    problem.drift_into(y, &mut ws.f);
    problem.diffusion_into(y, &mut ws.g);
    problem.jump_into(y, &mut ws.h);
    for i in 0..y.len() {
        out[i] = y[i] + dt * ws.f[i];
    }
    add_noise(out, &ws.g, dw, &ws.h, dn);
}

/// Taming kernel: `y + Δt u + Δt v/(1 + Δt‖v‖) + gΔW + h·dj`.
///
/// `lipschitz` is `None` for the (compensated) tamed schemes. `v` is supplied
/// through `nonlinear`, which fills `ws.f`.
#[allow(clippy::too_many_arguments)]
fn tamed_kernel(
    problem: &JumpSdeProblem,
    lipschitz: Option<&DriftSplit>,
    nonlinear: impl FnOnce(&[f64], &mut Workspace),
    y: &[f64],
    dw: &[f64],
    dj: f64,
    dt: f64,
    ws: &mut Workspace,
    out: &mut [f64],
) {
    problem.diffusion_into(y, &mut ws.g);
    problem.jump_into(y, &mut ws.h);
    out.copy_from_slice(y);
    if let Some(split) = lipschitz {
        (split.lipschitz)(y, &mut ws.iterate);
        for (o, u) in out.iter_mut().zip(&ws.iterate) {
            *o += dt * u;
        }
    }
    nonlinear(y, ws);
    let scale = 1.0 + dt * norm(&ws.f);
    for (o, v) in out.iter_mut().zip(&ws.f) {
        *o += dt * v / scale;
    }
    add_noise(out, &ws.g, dw, &ws.h, dj);
}

fn residual_norm(y: &[f64], fy: &[f64], theta_dt: f64, rhs: &[f64]) -> f64 {
    y.iter()
        .zip(fy)
        .zip(rhs)
        .fold(0.0, |acc, ((yi, fi), ri)| acc.hypot(yi - theta_dt * fi - ri))
}

/// Solve `Y − θΔt F(Y) = rhs` (rhs already in `ws.rhs`), writing `Y` to `out`.
fn solve_implicit(
    problem: &JumpSdeProblem,
    compensated: bool,
    theta_dt: f64,
    config: &ImplicitSolveConfig,
    ws: &mut Workspace,
    out: &mut [f64],
) -> Result<()> {
    // relative to the size of the terms being balanced
    let rhs_norm = norm(&ws.rhs);
    let accept = |residual: f64, y: &[f64], fy: &[f64]| {
        residual.is_finite() && residual <= config.tolerance * rhs_norm.max(norm(y)).max(theta_dt.abs() * norm(fy))
    };
    // `out` holds the explicit predictor on entry
    ws.iterate.copy_from_slice(out);

    if config.method == ImplicitMethod::FixedPoint {
        eval_drift(problem, compensated, &ws.iterate, &mut ws.f, &mut ws.h);
        for _ in 0..config.max_iterations {
            let residual = residual_norm(&ws.iterate, &ws.f, theta_dt, &ws.rhs);
            if accept(residual, &ws.iterate, &ws.f) {
                out.copy_from_slice(&ws.iterate);
                return Ok(());
            }
            if !residual.is_finite() {
                break;
            }
            for i in 0..ws.iterate.len() {
                ws.iterate[i] = ws.rhs[i] + theta_dt * ws.f[i];
            }
            eval_drift(problem, compensated, &ws.iterate, &mut ws.f, &mut ws.h);
        }
        // the fixed-point map is not contracting here; restart Newton from the predictor
        ws.iterate.copy_from_slice(out);
    }

    let d = ws.iterate.len();
    let residual_at = |x: &[f64], ws_f: &mut [f64], ws_h: &mut [f64], rhs: &[f64], r: &mut [f64]| {
        eval_drift(problem, compensated, x, ws_f, ws_h);
        for i in 0..d {
            r[i] = x[i] - theta_dt * ws_f[i] - rhs[i];
        }
        norm(r)
    };

    let mut r = vec![0.0; d];
    let mut r_trial = vec![0.0; d];
    let mut residual = residual_at(&ws.iterate, &mut ws.f, &mut ws.h, &ws.rhs, &mut r);
    for _ in 0..config.max_iterations {
        if accept(residual, &ws.iterate, &ws.f) {
            out.copy_from_slice(&ws.iterate);
            return Ok(());
        }
        if !residual.is_finite() {
            break;
        }
        // J = I − θΔt DF(Y), columns by forward differences
        let step = 1e-7 * (1.0 + norm(&ws.iterate));
        let mut jac = DMatrix::<f64>::identity(d, d);
        eval_drift(problem, compensated, &ws.iterate, &mut ws.next, &mut ws.h);
        for j in 0..d {
            ws.probe.copy_from_slice(&ws.iterate);
            ws.probe[j] += step;
            eval_drift(problem, compensated, &ws.probe, &mut ws.probe_f, &mut ws.h);
            for i in 0..d {
                jac[(i, j)] -= theta_dt * (ws.probe_f[i] - ws.next[i]) / step;
            }
        }
        let delta = match jac.lu().solve(&DVector::from_iterator(d, r.iter().map(|v| -v))) {
            Some(delta) => delta,
            None => break,
        };
        let mut alpha = 1.0;
        loop {
            for i in 0..d {
                ws.probe[i] = ws.iterate[i] + alpha * delta[i];
            }
            let trial = residual_at(&ws.probe, &mut ws.probe_f, &mut ws.h, &ws.rhs, &mut r_trial);
            if trial < residual || alpha < 1e-10 {
                ws.iterate.copy_from_slice(&ws.probe);
                ws.f.copy_from_slice(&ws.probe_f);
                r.copy_from_slice(&r_trial);
                residual = trial;
                break;
            }
            alpha *= 0.5;
        }
    }
    if accept(residual, &ws.iterate, &ws.f) {
        out.copy_from_slice(&ws.iterate);
        return Ok(());
    }
    Err(Error::SolverDivergence {
        iterations: config.max_iterations,
        residual,
    })
}

/// Stochastic theta kernel for `F = f` (STM) or `F = f_λ` (CSTM).
#[allow(clippy::too_many_arguments)]
fn theta_kernel(
    problem: &JumpSdeProblem,
    compensated: bool,
    theta: f64,
    y: &[f64],
    dw: &[f64],
    jump: Jump,
    dt: f64,
    config: &ImplicitSolveConfig,
    ws: &mut Workspace,
    out: &mut [f64],
) -> Result<()> {
    if theta == 0.0 {
        // f_λΔt + h·ΔN̄ = fΔt + h·ΔN
        explicit_kernel(problem, y, dw, jump.count, dt, ws, out);
        return Ok(());
    }
    let dj = if compensated { jump.compensated() } else { jump.count };
    eval_drift(problem, compensated, y, &mut ws.f, &mut ws.h);
    problem.diffusion_into(y, &mut ws.g);
    problem.jump_into(y, &mut ws.h);
    for i in 0..y.len() {
        ws.rhs[i] = y[i] + (1.0 - theta) * dt * ws.f[i];
        out[i] = y[i] + dt * ws.f[i];
    }
    add_noise(&mut ws.rhs, &ws.g, dw, &ws.h, dj);
    add_noise(out, &ws.g, dw, &ws.h, dj);

    if let Some(lin) = problem.linear() {
        let slope = if compensated { lin.compensated_a() } else { lin.a };
        let denom = 1.0 - theta * dt * slope;
        if denom == 0.0 {
            return Err(Error::Singular(format!(
                "1 - theta*dt*{slope} vanishes at theta = {theta}, dt = {dt}"
            )));
        }
        out[0] = ws.rhs[0] / denom;
        return Ok(());
    }
    solve_implicit(problem, compensated, theta * dt, config, ws, out)
}

/// Applies one scheme with a fixed step size, reusing scratch space.
pub struct Stepper<'a> {
    problem: &'a JumpSdeProblem,
    scheme: &'a SchemeSpec,
    split: Option<&'a DriftSplit>,
    dt: f64,
    jump_mean: f64,
    ws: Workspace,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a JumpSdeProblem, scheme: &'a SchemeSpec, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
        }
        scheme.validate(problem)?;
        Ok(Self {
            problem,
            scheme,
            split: scheme.resolve_split(problem)?,
            dt,
            jump_mean: problem.lambda() * dt,
            ws: Workspace::new(problem.dim(), problem.noise_dim()),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance `y` by one step driven by `dw` and `count` raw Poisson events.
    pub fn step(&mut self, y: &[f64], dw: &[f64], count: u64, out: &mut [f64]) -> Result<()> {
        self.step_jump(y, dw, Jump::raw(count as f64, self.jump_mean), out)
    }

    fn step_jump(&mut self, y: &[f64], dw: &[f64], jump: Jump, out: &mut [f64]) -> Result<()> {
        let (problem, dt, ws) = (self.problem, self.dt, &mut self.ws);
        match self.scheme.kind {
            SchemeKind::ExplicitEuler => explicit_kernel(problem, y, dw, jump.count, dt, ws, out),
            SchemeKind::Stm => theta_kernel(
                problem,
                false,
                self.scheme.theta,
                y,
                dw,
                jump,
                dt,
                &self.scheme.implicit,
                ws,
                out,
            )?,
            SchemeKind::Cstm => theta_kernel(
                problem,
                true,
                self.scheme.theta,
                y,
                dw,
                jump,
                dt,
                &self.scheme.implicit,
                ws,
                out,
            )?,
            SchemeKind::Tamed => tamed_kernel(
                problem,
                None,
                |x, ws| problem.drift_into(x, &mut ws.f),
                y,
                dw,
                jump.count,
                dt,
                ws,
                out,
            ),
            SchemeKind::CompensatedTamed => tamed_kernel(
                problem,
                None,
                |x, ws| eval_drift(problem, true, x, &mut ws.f, &mut ws.probe),
                y,
                dw,
                jump.compensated(),
                dt,
                ws,
                out,
            ),
            SchemeKind::SemiTamed | SchemeKind::CompensatedSemiTamed => {
                let split = self.split.expect("split resolved at construction");
                tamed_kernel(
                    problem,
                    Some(split),
                    |x, ws| (split.nonlinear)(x, &mut ws.f),
                    y,
                    dw,
                    jump.count,
                    dt,
                    ws,
                    out,
                )
            }
        }
        Ok(())
    }
}

fn one_step(
    problem: &JumpSdeProblem,
    scheme: &SchemeSpec,
    y: &[f64],
    dw: &[f64],
    jump: Jump,
    dt: f64,
) -> Result<Vec<f64>> {
    let mut stepper = Stepper::new(problem, scheme, dt)?;
    let mut out = vec![0.0; y.len()];
    stepper.step_jump(y, dw, jump, &mut out)?;
    Ok(out)
}

/// Explicit Euler (STM with `θ = 0`).
pub fn step_explicit_euler(problem: &JumpSdeProblem, y: &[f64], dw: &[f64], dn: f64, dt: f64) -> Vec<f64> {
    let mut ws = Workspace::new(problem.dim(), problem.noise_dim());
    let mut out = vec![0.0; y.len()];
    explicit_kernel(problem, y, dw, dn, dt, &mut ws, &mut out);
    out
}

/// One STM step; `dn` is the raw event count.
#[allow(clippy::too_many_arguments)]
pub fn step_stm(
    problem: &JumpSdeProblem,
    theta: f64,
    y: &[f64],
    dw: &[f64],
    dn: f64,
    dt: f64,
    implicit: &ImplicitSolveConfig,
) -> Result<Vec<f64>> {
    let scheme = SchemeSpec::stm(theta)?.with_implicit(*implicit);
    one_step(problem, &scheme, y, dw, Jump::raw(dn, problem.lambda() * dt), dt)
}

/// One CSTM step; `dnbar` is the compensated increment `ΔN − λΔt`.
#[allow(clippy::too_many_arguments)]
pub fn step_cstm(
    problem: &JumpSdeProblem,
    theta: f64,
    y: &[f64],
    dw: &[f64],
    dnbar: f64,
    dt: f64,
    implicit: &ImplicitSolveConfig,
) -> Result<Vec<f64>> {
    let scheme = SchemeSpec::cstm(theta)?.with_implicit(*implicit);
    let mean = problem.lambda() * dt;
    one_step(problem, &scheme, y, dw, Jump::from_compensated(dnbar, mean), dt)
}

pub fn step_tamed(problem: &JumpSdeProblem, y: &[f64], dw: &[f64], dn: f64, dt: f64) -> Vec<f64> {
    one_step(
        problem,
        &SchemeSpec::tamed(),
        y,
        dw,
        Jump::raw(dn, problem.lambda() * dt),
        dt,
    )
    .expect("tamed step cannot fail")
}

pub fn step_compensated_tamed(problem: &JumpSdeProblem, y: &[f64], dw: &[f64], dnbar: f64, dt: f64) -> Vec<f64> {
    let mean = problem.lambda() * dt;
    one_step(
        problem,
        &SchemeSpec::compensated_tamed(),
        y,
        dw,
        Jump::from_compensated(dnbar, mean),
        dt,
    )
    .expect("compensated tamed step cannot fail")
}

pub fn step_semi_tamed(
    problem: &JumpSdeProblem,
    split: &DriftSplit,
    y: &[f64],
    dw: &[f64],
    dn: f64,
    dt: f64,
) -> Vec<f64> {
    let scheme = SchemeSpec::semi_tamed(Some(split.clone()));
    one_step(problem, &scheme, y, dw, Jump::raw(dn, problem.lambda() * dt), dt).expect("semi-tamed step cannot fail")
}

/// Compensated semi-tamed step, evaluated as the semi-tamed step with `ΔN = ΔN̄ + λΔt`.
pub fn step_compensated_semi_tamed(
    problem: &JumpSdeProblem,
    split: &DriftSplit,
    y: &[f64],
    dw: &[f64],
    dnbar: f64,
    dt: f64,
) -> Vec<f64> {
    let scheme = SchemeSpec::compensated_semi_tamed(Some(split.clone()));
    let mean = problem.lambda() * dt;
    one_step(problem, &scheme, y, dw, Jump::from_compensated(dnbar, mean), dt)
        .expect("compensated semi-tamed step cannot fail")
}

/// Time points and states of one simulated path.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Index of the first non-finite state; `states` stops just before it.
    pub diverged_at: Option<usize>,
}

impl Trajectory {
    pub fn endpoint(&self) -> Option<&[f64]> {
        if self.diverged_at.is_some() {
            None
        } else {
            self.states.last().map(Vec::as_slice)
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let d = self.states.first().map_or(0, Vec::len);
        let mut header = vec!["step".to_string(), "t".to_string()];
        header.extend((1..=d).map(|i| format!("x_{i}")));
        out.write_record(&header)?;
        for (step, (t, x)) in self.times.iter().zip(&self.states).enumerate() {
            let mut record = vec![step.to_string(), crate::fmt_f64(*t)];
            record.extend(x.iter().map(|v| crate::fmt_f64(*v)));
            out.write_record(&record)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Walk the coarsened grid, calling `visit(step, state)` for every finite
/// state (step 0 is the initial state). Returns the divergence index, if any.
pub(crate) fn walk_path(
    problem: &JumpSdeProblem,
    scheme: &SchemeSpec,
    grid: &IncrementGrid,
    ratio: usize,
    mut visit: impl FnMut(usize, &[f64]),
) -> Result<Option<usize>> {
    grid.check_ratio(ratio)?;
    if grid.noise_dim() != problem.noise_dim() {
        return Err(Error::invalid(format!(
            "grid carries {} Brownian components, problem expects {}",
            grid.noise_dim(),
            problem.noise_dim()
        )));
    }
    let dt = ratio as f64 * grid.dt();
    let mut stepper = Stepper::new(problem, scheme, dt)?;
    let mut y = problem.x0().to_vec();
    let mut next = vec![0.0; y.len()];
    let mut dw = vec![0.0; grid.noise_dim()];
    visit(0, &y);
    for j in 0..grid.n_steps() / ratio {
        let count = grid.coarse_step_into(ratio, j, &mut dw);
        stepper.step(&y, &dw, count, &mut next)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Ok(Some(j + 1));
        }
        std::mem::swap(&mut y, &mut next);
        visit(j + 1, &y);
    }
    Ok(None)
}

/// Integrate from `x0` over `grid` coarsened by `ratio` (step `ratio · dt_fine`).
pub fn integrate_path(
    problem: &JumpSdeProblem,
    scheme: &SchemeSpec,
    grid: &IncrementGrid,
    ratio: usize,
) -> Result<Trajectory> {
    let dt = ratio as f64 * grid.dt();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let diverged_at = walk_path(problem, scheme, grid, ratio, |step, y| {
        times.push(step as f64 * dt);
        states.push(y.to_vec());
    })?;
    Ok(Trajectory {
        times,
        states,
        diverged_at,
    })
}

/// Endpoint of the path, or `None` if it diverged.
pub(crate) fn integrate_endpoint(
    problem: &JumpSdeProblem,
    scheme: &SchemeSpec,
    grid: &IncrementGrid,
    ratio: usize,
) -> Result<Option<Vec<f64>>> {
    let mut last = Vec::new();
    let diverged = walk_path(problem, scheme, grid, ratio, |_, y| {
        last.clear();
        last.extend_from_slice(y);
    })?;
    Ok(if diverged.is_some() { None } else { Some(last) })
}
