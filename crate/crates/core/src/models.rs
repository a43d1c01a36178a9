//! Jump-diffusion problems `dX = f(X⁻)dt + g(X⁻)dW + h(X⁻)dN`.
//!
//! Coefficients are autonomous callables that write into caller-provided
//! buffers; the diffusion writes a row-major `d × m` matrix. A problem may also
//! carry a [`DriftSplit`] `f = u + v` (Lipschitz part plus one-sided Lipschitz
//! part) for the semi-tamed scheme, and a [`LinearJumpSde`] marker when it is
//! the scalar linear test equation, which unlocks closed-form implicit solves.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// `x ↦ out`, writing into a preallocated buffer.
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

fn zero_field() -> VectorField {
    Arc::new(|_x: &[f64], out: &mut [f64]| out.fill(0.0))
}

fn scalar_field<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> VectorField {
    Arc::new(move |x: &[f64], out: &mut [f64]| out[0] = f(x[0]))
}

// fold with hypot so large finite vectors do not overflow to inf
pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.hypot(*x))
}

/// Drift decomposition `f = u + v` with `u` globally Lipschitz.
#[derive(Clone)]
pub struct DriftSplit {
    pub lipschitz: VectorField,
    pub nonlinear: VectorField,
}

impl DriftSplit {
    pub fn new(lipschitz: VectorField, nonlinear: VectorField) -> Self {
        Self { lipschitz, nonlinear }
    }

    pub fn scalar<U, V>(u: U, v: V) -> Self
    where
        U: Fn(f64) -> f64 + Send + Sync + 'static,
        V: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(scalar_field(u), scalar_field(v))
    }

    /// `u ≡ 0`, `v = f`: the semi-tamed scheme then tames the whole drift.
    pub fn all_nonlinear(problem: &JumpSdeProblem) -> Self {
        Self::new(zero_field(), problem.drift.clone())
    }

    pub fn eval_lipschitz(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        (self.lipschitz)(x, &mut out);
        out
    }

    pub fn eval_nonlinear(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        (self.nonlinear)(x, &mut out);
        out
    }
}

impl fmt::Debug for DriftSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("DriftSplit { .. }")
    }
}

/// Scalar linear test equation `dX = aX dt + bX dW + cX dN`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearJumpSde {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub lambda: f64,
    pub x0: f64,
}

impl LinearJumpSde {
    pub fn new(a: f64, b: f64, c: f64, lambda: f64, x0: f64) -> Self {
        Self { a, b, c, lambda, x0 }
    }

    /// Mean-square growth exponent `2a + b² + λc(2 + c)`.
    pub fn l(&self) -> f64 {
        crate::stability::linear_l(self.a, self.b, self.c, self.lambda)
    }

    /// Drift coefficient of the compensated form, `a + λc`.
    pub fn compensated_a(&self) -> f64 {
        self.a + self.lambda * self.c
    }

    /// Scalar problem with `f(x) = ax`, `g(x) = bx`, `h(x) = cx` and split `u = f`, `v = 0`.
    pub fn as_problem(&self) -> JumpSdeProblem {
        let LinearJumpSde { a, b, c, lambda, x0 } = *self;
        let drift = scalar_field(move |x| a * x);
        JumpSdeProblem {
            name: "linear".into(),
            dim: 1,
            noise_dim: 1,
            drift: drift.clone(),
            diffusion: scalar_field(move |x| b * x),
            jump: scalar_field(move |x| c * x),
            lambda,
            x0: vec![x0],
            linear: Some(*self),
            split: Some(DriftSplit::new(drift, zero_field())),
        }
    }

    /// `x0·exp((a − b²/2)t + b·W_t)·(1 + c)^{N_t}`.
    pub fn exact_solution(&self, t: f64, w_t: f64, n_t: u64) -> Result<f64> {
        if !(self.c > -1.0) {
            return Err(Error::invalid(format!(
                "exact solution requires c > -1, got c = {}",
                self.c
            )));
        }
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("t must be >= 0, got {t}")));
        }
        let exponent = (self.a - 0.5 * self.b * self.b) * t + self.b * w_t + self.c.ln_1p() * n_t as f64;
        Ok(self.x0 * exponent.exp())
    }

    /// `E|X(t)|² = x0²·exp(l·t)`.
    pub fn exact_second_moment(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("t must be >= 0, got {t}")));
        }
        Ok(self.x0 * self.x0 * (self.l() * t).exp())
    }
}

/// An autonomous jump-diffusion SDE with its initial state and jump intensity.
#[derive(Clone)]
pub struct JumpSdeProblem {
    name: String,
    dim: usize,
    noise_dim: usize,
    drift: VectorField,
    diffusion: VectorField,
    jump: VectorField,
    lambda: f64,
    x0: Vec<f64>,
    linear: Option<LinearJumpSde>,
    split: Option<DriftSplit>,
}

impl fmt::Debug for JumpSdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JumpSdeProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("lambda", &self.lambda)
            .field("x0", &self.x0)
            .field("linear", &self.linear)
            .field("has_split", &self.split.is_some())
            .finish()
    }
}

impl JumpSdeProblem {
    /// Problem with all coefficients identically zero; set them with the `with_*` methods.
    pub fn new(dim: usize, noise_dim: usize, x0: Vec<f64>, lambda: f64) -> Result<Self> {
        if dim == 0 || noise_dim == 0 {
            return Err(Error::invalid("state and noise dimensions must be >= 1"));
        }
        if x0.len() != dim {
            return Err(Error::invalid(format!(
                "initial state has length {}, expected {dim}",
                x0.len()
            )));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial state must be finite"));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Self {
            name: "custom".into(),
            dim,
            noise_dim,
            drift: zero_field(),
            diffusion: zero_field(),
            jump: zero_field(),
            lambda,
            x0,
            linear: None,
            split: None,
        })
    }

    /// Scalar problem from plain `f64 → f64` coefficients.
    pub fn scalar<F, G, H>(lambda: f64, x0: f64, f: F, g: G, h: H) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        H: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Ok(Self::new(1, 1, vec![x0], lambda)?
            .with_drift(scalar_field(f))
            .with_diffusion(scalar_field(g))
            .with_jump(scalar_field(h)))
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_drift(mut self, drift: VectorField) -> Self {
        self.drift = drift;
        self.linear = None;
        self
    }

    pub fn with_diffusion(mut self, diffusion: VectorField) -> Self {
        self.diffusion = diffusion;
        self.linear = None;
        self
    }

    pub fn with_jump(mut self, jump: VectorField) -> Self {
        self.jump = jump;
        self.linear = None;
        self
    }

    pub fn with_split(mut self, split: DriftSplit) -> Self {
        self.split = Some(split);
        self
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Result<Self> {
        if x0.len() != self.dim {
            return Err(Error::invalid("initial state has the wrong dimension"));
        }
        if let Some(lin) = self.linear.as_mut() {
            lin.x0 = x0[0];
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    /// The linear test-equation parameters, if this problem is one.
    pub fn linear(&self) -> Option<&LinearJumpSde> {
        self.linear.as_ref()
    }

    pub fn split(&self) -> Option<&DriftSplit> {
        self.split.as_ref()
    }

    #[inline]
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    /// Row-major `d × m` diffusion matrix.
    #[inline]
    pub fn diffusion_into(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out)
    }

    #[inline]
    pub fn jump_into(&self, x: &[f64], out: &mut [f64]) {
        (self.jump)(x, out)
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.drift_into(x, &mut out);
        out
    }

    pub fn diffusion(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.noise_dim];
        self.diffusion_into(x, &mut out);
        out
    }

    pub fn jump(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.jump_into(x, &mut out);
        out
    }

    /// Whether the origin is a fixed point of every coefficient.
    pub(crate) fn origin_is_fixed(&self) -> bool {
        let zero = vec![0.0; self.dim];
        self.drift(&zero).iter().all(|v| *v == 0.0)
            && self.diffusion(&zero).iter().all(|v| *v == 0.0)
            && self.jump(&zero).iter().all(|v| *v == 0.0)
    }
}

/// Compensated drift `f(x) + λ·h(x)`.
pub fn compensated_drift(problem: &JumpSdeProblem, x: &[f64]) -> Vec<f64> {
    let mut out = problem.drift(x);
    let h = problem.jump(x);
    for (o, hi) in out.iter_mut().zip(&h) {
        *o += problem.lambda * hi;
    }
    out
}

/// Largest `|u(x) + v(x) − f(x)|` component over the given points.
pub fn split_deviation(problem: &JumpSdeProblem, split: &DriftSplit, points: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .map(|x| {
            let f = problem.drift(x);
            let u = split.eval_lipschitz(x);
            let v = split.eval_nonlinear(x);
            f.iter()
                .zip(u.iter().zip(&v))
                .map(|(fi, (ui, vi))| (ui + vi - fi).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Names accepted by [`builtin_problem`].
pub const BUILTIN_PROBLEMS: [&str; 3] = ["linear", "quartic", "cubic_split"];

/// Linear test equation with the given coefficients.
pub fn linear(a: f64, b: f64, c: f64, lambda: f64, x0: f64) -> JumpSdeProblem {
    LinearJumpSde::new(a, b, c, lambda, x0).as_problem()
}

/// `dX = −X⁴dt + X dW + X dN`, tamed as a whole (`u ≡ 0`, `v = f`).
pub fn quartic(lambda: f64, x0: f64) -> Result<JumpSdeProblem> {
    let problem = JumpSdeProblem::scalar(lambda, x0, |x| -x.powi(4), |x| x, |x| x)?.with_name("quartic");
    let split = DriftSplit::all_nonlinear(&problem);
    Ok(problem.with_split(split))
}

/// `dX = (−4X − X³)dt + X dW + X dN` with `u(x) = −4x`, `v(x) = −x³`.
pub fn cubic_split(lambda: f64, x0: f64) -> Result<JumpSdeProblem> {
    Ok(
        JumpSdeProblem::scalar(lambda, x0, |x| -4.0 * x - x * x * x, |x| x, |x| x)?
            .with_name("cubic_split")
            .with_split(DriftSplit::scalar(|x| -4.0 * x, |x| -x * x * x)),
    )
}

fn take_params(name: &str, params: &BTreeMap<String, f64>, defaults: &[(&str, f64)]) -> Result<BTreeMap<String, f64>> {
    if let Some(key) = params.keys().find(|k| !defaults.iter().any(|(d, _)| d == k)) {
        return Err(Error::Config(format!(
            "problem `{name}` has no parameter `{key}` (expected one of: {})",
            defaults.iter().map(|(k, _)| *k).collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(defaults
        .iter()
        .map(|(key, default)| (key.to_string(), params.get(*key).copied().unwrap_or(*default)))
        .collect())
}

/// Look up a catalog problem by name; missing parameters take the catalog defaults.
///
/// | name          | parameters (defaults)                          |
/// |---------------|------------------------------------------------|
/// | `linear`      | `a=1, b=1, c=0.5, lambda=1, x0=1`              |
/// | `quartic`     | `lambda=1, x0=1`                               |
/// | `cubic_split` | `lambda=1, x0=1`                               |
pub fn builtin_problem(name: &str, params: &BTreeMap<String, f64>) -> Result<JumpSdeProblem> {
    match name {
        "linear" => {
            let p = take_params(
                name,
                params,
                &[("a", 1.0), ("b", 1.0), ("c", 0.5), ("lambda", 1.0), ("x0", 1.0)],
            )?;
            if p["lambda"] < 0.0 {
                return Err(Error::invalid("lambda must be >= 0"));
            }
            Ok(linear(p["a"], p["b"], p["c"], p["lambda"], p["x0"]))
        }
        "quartic" => {
            let p = take_params(name, params, &[("lambda", 1.0), ("x0", 1.0)])?;
            quartic(p["lambda"], p["x0"])
        }
        "cubic_split" => {
            let p = take_params(name, params, &[("lambda", 1.0), ("x0", 1.0)])?;
            cubic_split(p["lambda"], p["x0"])
        }
        other => Err(Error::Unknown {
            kind: "problem",
            name: other.to_string(),
        }),
    }
}
