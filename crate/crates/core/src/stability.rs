//! Mean-square stability: closed-form amplification factors and step-size
//! thresholds for the linear test equation `dX = aX dt + bX dW + cX dN`,
//! decay-rate bounds under one-sided Lipschitz assumptions, and an empirical
//! classifier for simulated second-moment series.

use std::fmt;

use crate::error::{Error, Result};

/// `l = 2a + b² + λc(2+c)`; the exact solution is mean-square stable iff `l < 0`.
pub fn linear_l(a: f64, b: f64, c: f64, lambda: f64) -> f64 {
    2.0 * a + b * b + lambda * c * (2.0 + c)
}

fn require_stable_exact(l: f64) -> Result<()> {
    if l < 0.0 {
        Ok(())
    } else {
        Err(Error::not_applicable(format!(
            "l = {l} >= 0: the exact solution is not mean-square stable"
        )))
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("dt must be > 0, got {dt}")))
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::invalid(format!("theta must lie in [0, 1], got {theta}")))
    }
}

/// One-step factor `G` of CSTM on the linear test equation: `E|Y₊|² = G·E|Y|²`.
pub fn cstm_amplification(a: f64, b: f64, c: f64, lambda: f64, theta: f64, dt: f64) -> Result<f64> {
    check_theta(theta)?;
    check_dt(dt)?;
    let big_a = a + lambda * c;
    let denom = 1.0 - theta * dt * big_a;
    if denom == 0.0 {
        return Err(Error::Singular(format!(
            "1 - theta*dt*(a + lambda*c) vanishes at dt = {dt}"
        )));
    }
    let explicit = 1.0 - theta;
    let num =
        1.0 + (2.0 * explicit * big_a + b * b + c * c * lambda) * dt + explicit * explicit * big_a * big_a * dt * dt;
    Ok(num / (denom * denom))
}

/// Largest stable CSTM step: `+∞` for `θ ≥ 1/2`, else `−l/((1−2θ)(a+λc)²)`.
pub fn cstm_max_stable_dt(a: f64, b: f64, c: f64, lambda: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let l = linear_l(a, b, c, lambda);
    require_stable_exact(l)?;
    let big_a = a + lambda * c;
    let denom = (1.0 - 2.0 * theta) * big_a * big_a;
    if theta >= 0.5 || denom == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-l / denom)
}

/// One-step factor of STM (uncompensated jumps) on the linear test equation.
pub fn stm_amplification(a: f64, b: f64, c: f64, lambda: f64, theta: f64, dt: f64) -> Result<f64> {
    check_theta(theta)?;
    check_dt(dt)?;
    let denom = 1.0 - theta * dt * a;
    if denom == 0.0 {
        return Err(Error::Singular(format!("1 - theta*dt*a vanishes at dt = {dt}")));
    }
    let lead = 1.0 + (1.0 - theta) * a * dt;
    let jump_mean = lambda * dt;
    let num = lead * lead + b * b * dt + c * c * (jump_mean + jump_mean * jump_mean) + 2.0 * c * jump_mean * lead;
    Ok(num / (denom * denom))
}

/// One-step factor of the semi-tamed scheme with split `u = ax`, `v = 0`.
pub fn semi_tamed_linear_amplification(a: f64, b: f64, c: f64, lambda: f64, dt: f64) -> Result<f64> {
    check_dt(dt)?;
    let big_a = a + lambda * c;
    Ok(1.0 + big_a * big_a * dt * dt + (b * b + lambda * c * c + 2.0 * a + 2.0 * lambda * c) * dt)
}

/// `−l/(a+λc)²`, or `+∞` when `a + λc = 0`.
pub fn semi_tamed_linear_max_dt(a: f64, b: f64, c: f64, lambda: f64) -> Result<f64> {
    let l = linear_l(a, b, c, lambda);
    require_stable_exact(l)?;
    let big_a = a + lambda * c;
    if big_a == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-l / (big_a * big_a))
}

/// Which sufficient condition certified a tamed step size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TamedCase {
    /// `a(1+λcΔt) ≤ 0`, `2a − l > 0`, `Δt < (2a−l)/(a²+λ²c²)`.
    NonPositiveDrift,
    /// `a(1+λcΔt) > 0`, `Δt < −l/(a+λc)²`.
    PositiveDrift,
    None,
}

impl fmt::Display for TamedCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TamedCase::NonPositiveDrift => "case-1",
            TamedCase::PositiveDrift => "case-2",
            TamedCase::None => "none",
        })
    }
}

/// Step-size region certified for the tamed scheme on the linear test equation.
#[derive(Clone, Debug, PartialEq)]
pub struct TamedLinearBound {
    /// Supremum of the certified interval starting at 0 (0 if nothing is certified).
    pub max_dt: f64,
    /// Case that certifies steps just below `max_dt`.
    pub case: TamedCase,
    /// Every certified interval as `(lo, hi, case)`, in increasing order.
    pub intervals: Vec<(f64, f64, TamedCase)>,
    pub diagnostic: Option<String>,
}

impl TamedLinearBound {
    pub fn certifies(&self, dt: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi, _)| dt > lo && dt < hi)
    }
}

/// Certified stable step sizes for the tamed scheme on the linear test
/// equation. Both conditions are sufficient only; the sign condition
/// `a(1+λcΔt)` is evaluated at each candidate step.
pub fn tamed_linear_max_dt(a: f64, b: f64, c: f64, lambda: f64) -> Result<TamedLinearBound> {
    let l = linear_l(a, b, c, lambda);
    require_stable_exact(l)?;

    // a(1+λcΔt) changes sign at most once on (0, ∞)
    let flip = if a != 0.0 && lambda * c != 0.0 {
        let t = -1.0 / (lambda * c);
        (t > 0.0).then_some(t)
    } else {
        None
    };
    let sign_at = |dt: f64| a * (1.0 + lambda * c * dt);
    let mut pieces = Vec::new();
    match flip {
        Some(t) => {
            pieces.push((0.0, t));
            pieces.push((t, f64::INFINITY));
        }
        None => pieces.push((0.0, f64::INFINITY)),
    }

    let case1_hi = if 2.0 * a - l > 0.0 {
        let den = a * a + lambda * lambda * c * c;
        if den == 0.0 {
            f64::INFINITY
        } else {
            (2.0 * a - l) / den
        }
    } else {
        0.0
    };
    let big_a = a + lambda * c;
    let case2_hi = if big_a == 0.0 {
        f64::INFINITY
    } else {
        -l / (big_a * big_a)
    };

    let mut intervals: Vec<(f64, f64, TamedCase)> = Vec::new();
    for (lo, hi) in pieces {
        let mid = if hi.is_finite() { 0.5 * (lo + hi) } else { lo + 1.0 };
        let (case, cap) = if sign_at(mid) <= 0.0 {
            (TamedCase::NonPositiveDrift, case1_hi)
        } else {
            (TamedCase::PositiveDrift, case2_hi)
        };
        let top = hi.min(cap);
        if top > lo {
            intervals.push((lo, top, case));
        }
    }

    // merge touching intervals; the sign flip point itself is covered by case 1
    let mut merged: Vec<(f64, f64, TamedCase)> = Vec::new();
    for iv in intervals {
        match merged.last_mut() {
            Some(last) if last.1 >= iv.0 => {
                last.1 = iv.1;
                last.2 = iv.2;
            }
            _ => merged.push(iv),
        }
    }

    Ok(match merged.first().copied() {
        Some((0.0, hi, case)) => TamedLinearBound {
            max_dt: hi,
            case,
            intervals: merged,
            diagnostic: None,
        },
        _ => TamedLinearBound {
            max_dt: 0.0,
            case: TamedCase::None,
            diagnostic: Some(format!(
                "no step size near 0 is certified (a = {a}, l = {l}, 2a - l = {})",
                2.0 * a - l
            )),
            intervals: merged,
        },
    })
}

/// Constants of the one-sided Lipschitz and growth assumptions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NonlinearStabilityInputs {
    /// One-sided Lipschitz constant of `f`.
    pub mu: f64,
    /// Squared Lipschitz constant of `g`.
    pub sigma: f64,
    /// Squared Lipschitz constant of `h`.
    pub gamma: f64,
    pub lambda: f64,
    /// One-sided dissipativity of `u`: `⟨x−y, u(x)−u(y)⟩ ≤ −ρ‖x−y‖²`.
    pub rho: f64,
    pub beta: f64,
    pub beta_bar: f64,
    /// Lipschitz constant of `g` in the split setting.
    pub theta_g: f64,
    /// Lipschitz constant of `u`.
    pub k: f64,
    /// Lipschitz constant of `h`.
    pub c: f64,
    /// Polynomial growth exponent of `v` (> 1).
    pub a_exp: f64,
}

impl Default for NonlinearStabilityInputs {
    /// All constants zero, growth exponent 2.
    fn default() -> Self {
        Self {
            mu: 0.0,
            sigma: 0.0,
            gamma: 0.0,
            lambda: 0.0,
            rho: 0.0,
            beta: 0.0,
            beta_bar: 0.0,
            theta_g: 0.0,
            k: 0.0,
            c: 0.0,
            a_exp: 2.0,
        }
    }
}

impl NonlinearStabilityInputs {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("sigma", self.sigma),
            ("gamma", self.gamma),
            ("beta", self.beta),
            ("beta_bar", self.beta_bar),
            ("K", self.k),
            ("C", self.c),
            ("lambda", self.lambda),
        ];
        for (name, v) in named {
            if !(v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.a_exp > 1.0) {
            return Err(Error::invalid(format!(
                "growth exponent must be > 1, got {}",
                self.a_exp
            )));
        }
        Ok(())
    }
}

/// `α = 2μ + σ + λ√γ(√γ + 2)`.
pub fn nonlinear_alpha(mu: f64, sigma: f64, gamma: f64, lambda: f64) -> Result<f64> {
    if !(sigma >= 0.0 && gamma >= 0.0) {
        return Err(Error::invalid("sigma and gamma must be >= 0"));
    }
    let sg = gamma.sqrt();
    Ok(2.0 * mu + sigma + lambda * sg * (sg + 2.0))
}

fn require_decay(alpha: f64) -> Result<()> {
    if alpha < 0.0 {
        Ok(())
    } else {
        Err(Error::not_applicable(format!("alpha = {alpha} >= 0")))
    }
}

/// Decay exponent of backward Euler (STM, `θ = 1`):
/// `(1/Δt) ln[(1 + (σ+λγ+2λ√γ)Δt + λ²γΔt²) / (1 − 2μΔt)]`.
pub fn backward_euler_rate_beta1(mu: f64, sigma: f64, gamma: f64, lambda: f64, dt: f64) -> Result<f64> {
    check_dt(dt)?;
    let alpha = nonlinear_alpha(mu, sigma, gamma, lambda)?;
    require_decay(alpha)?;
    let jump2 = lambda * lambda * gamma;
    if jump2 > 0.0 && dt >= -alpha / jump2 {
        return Err(Error::not_applicable(format!(
            "dt = {dt} is not below -alpha/(lambda^2 gamma) = {}",
            -alpha / jump2
        )));
    }
    if !(1.0 - 2.0 * mu * dt > 0.0) {
        return Err(Error::not_applicable(format!("1 - 2 mu dt <= 0 at dt = {dt}")));
    }
    let up = (sigma + lambda * gamma + 2.0 * lambda * gamma.sqrt()) * dt + jump2 * dt * dt;
    Ok(((up).ln_1p() - (-2.0 * mu * dt).ln_1p()) / dt)
}

/// Decay exponent of compensated backward Euler (CSTM, `θ = 1`):
/// `(1/Δt) ln[(1 + (σ+λγ)Δt) / (1 − 2(μ+λ√γ)Δt)]`.
pub fn compensated_backward_euler_rate_beta2(mu: f64, sigma: f64, gamma: f64, lambda: f64, dt: f64) -> Result<f64> {
    check_dt(dt)?;
    let alpha = nonlinear_alpha(mu, sigma, gamma, lambda)?;
    require_decay(alpha)?;
    let up = (sigma + lambda * gamma) * dt;
    let down = -2.0 * (mu + lambda * gamma.sqrt()) * dt;
    Ok((up.ln_1p() - down.ln_1p()) / dt)
}

/// Largest step certified for the semi-tamed scheme under the split assumptions.
pub fn semi_tamed_nonlinear_max_dt(p: &NonlinearStabilityInputs) -> Result<f64> {
    p.validate()?;
    let alpha1 = -2.0 * p.rho + p.theta_g * p.theta_g + p.lambda * p.c * (2.0 + p.c);
    if !(alpha1 < 0.0) {
        return Err(Error::not_applicable(format!("alpha_1 = {alpha1} must be < 0")));
    }
    if !(2.0 * p.beta - p.beta_bar > 0.0) {
        return Err(Error::not_applicable(format!(
            "2 beta - beta_bar = {} must be > 0",
            2.0 * p.beta - p.beta_bar
        )));
    }
    let kc = p.k + p.lambda * p.c;
    let b1 = if kc == 0.0 { f64::INFINITY } else { -alpha1 / (kc * kc) };
    let b2 = 2.0 * p.beta / ((2.0 * kc + p.beta_bar) * p.beta_bar);
    let b3 = (2.0 * p.beta - p.beta_bar) / (2.0 * kc * p.beta_bar);
    Ok(b1.min(b2).min(b3))
}

/// Largest step certified for the tamed scheme under the split assumptions.
pub fn tamed_nonlinear_max_dt(p: &NonlinearStabilityInputs) -> Result<f64> {
    p.validate()?;
    let gap = p.beta - p.c * p.beta_bar;
    if !(gap > 0.0) {
        return Err(Error::not_applicable(format!("beta - C beta_bar = {gap} must be > 0")));
    }
    let second = p.beta_bar * (1.0 + 2.0 * p.c) - 2.0 * p.beta;
    if !(second < 0.0) {
        return Err(Error::not_applicable(format!(
            "beta_bar (1 + 2C) - 2 beta = {second} must be < 0"
        )));
    }
    let core = p.k + p.theta_g * p.theta_g + p.lambda * p.c * p.c - 2.0 * p.mu * p.lambda + 2.0 * p.lambda * p.c * p.k;
    if !(core < 0.0) {
        return Err(Error::not_applicable(format!(
            "K + theta^2 + lambda C^2 - 2 mu lambda + 2 lambda C K = {core} must be < 0"
        )));
    }
    let b1 = -core / (2.0 * p.k * p.k + p.lambda * p.lambda * p.c * p.c);
    let b2 = gap / (p.beta_bar * p.beta_bar);
    Ok(b1.min(b2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Stable,
    Unstable,
    Inconclusive,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Stable => "stable",
            Classification::Unstable => "unstable",
            Classification::Inconclusive => "inconclusive",
        })
    }
}

/// Result of [`classify_mean_square`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanSquareFit {
    pub classification: Classification,
    /// Fitted growth rate of `ln E|Y|²` per unit time (`±∞` for collapse or blow-up).
    pub rate: f64,
}

pub const DEFAULT_RATE_TOLERANCE: f64 = 1e-3;
const MIN_SERIES_LEN: usize = 8;

/// Classify a `(t, E|Y|²)` series by the least-squares slope of `ln E|Y|²`
/// over its second half. `tolerance` is in units of 1/time.
///
/// A non-finite value means Unstable. A mean square that reaches exactly 0
/// inside the fitted window is treated as collapse to the origin (Stable,
/// rate `−∞`).
pub fn classify_mean_square(series: &[(f64, f64)], tolerance: f64) -> Result<MeanSquareFit> {
    if series.len() < MIN_SERIES_LEN {
        return Err(Error::invalid(format!(
            "need at least {MIN_SERIES_LEN} points, got {}",
            series.len()
        )));
    }
    if !(tolerance >= 0.0) {
        return Err(Error::invalid("tolerance must be >= 0"));
    }
    if series.iter().any(|&(_, v)| !v.is_finite()) {
        return Ok(MeanSquareFit {
            classification: Classification::Unstable,
            rate: f64::INFINITY,
        });
    }
    let tail = &series[series.len() / 2..];
    if tail.iter().any(|&(_, v)| v <= 0.0) {
        return Ok(MeanSquareFit {
            classification: Classification::Stable,
            rate: f64::NEG_INFINITY,
        });
    }
    let points: Vec<(f64, f64)> = tail.iter().map(|&(t, v)| (t, v.ln())).collect();
    let (rate, _, _) = least_squares(&points);
    let classification = if rate < -tolerance {
        Classification::Stable
    } else if rate > tolerance {
        Classification::Unstable
    } else {
        Classification::Inconclusive
    };
    Ok(MeanSquareFit { classification, rate })
}

/// OLS fit `y = slope·x + intercept`; returns `(slope, intercept, rms residual)`.
pub(crate) fn least_squares(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let rss: f64 = points
        .iter()
        .map(|p| {
            let r = p.1 - slope * p.0 - intercept;
            r * r
        })
        .sum();
    (slope, intercept, (rss / n).sqrt())
}
