//! TOML run configuration.
//!
//! ```toml
//! command = "converge"          # optional when given on the command line
//! seed = 0
//! threads = "auto"              # or a positive integer
//! out = "results"
//!
//! [problem]
//! name = "linear"               # linear | quartic | cubic_split
//! a = 1.0                       # any catalog parameter
//!
//! [[scheme]]
//! name = "cstm"
//! theta = 0.5
//!
//! [converge]
//! fine_exponent = 12
//! ratios = [1, 2, 4, 8, 16]
//! paths = 2000
//! horizon = 1.0
//! reference = "exact"           # exact | fine | <scheme name>
//! ```
//!
//! Further sections: `[stability]`, `[amplification]`, `[path]`, `[analytic]`.
//! Unknown keys and repeated keys are rejected.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::Threads;
use crate::models::{self, DriftSplit, JumpSdeProblem};
use crate::schemes::{SchemeKind, SchemeSpec};
use crate::stability::{NonlinearStabilityInputs, DEFAULT_RATE_TOLERANCE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Path,
    Converge,
    Stability,
    Amplification,
    Analytic,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Path => "path",
            Command::Converge => "converge",
            Command::Stability => "stability",
            Command::Amplification => "amplification",
            Command::Analytic => "analytic",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Catalog problem name plus its numeric parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub name: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, f64>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            name: "linear".into(),
            params: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub name: String,
    pub theta: Option<f64>,
    /// Semi-tamed only: use the problem's drift split (`true`) or tame the whole drift.
    #[serde(default = "yes")]
    pub split: bool,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    /// `fixed-point` or `newton`.
    pub solver: Option<String>,
}

fn yes() -> bool {
    true
}

impl SchemeConfig {
    pub fn named(name: &str, theta: Option<f64>) -> Self {
        Self {
            name: name.into(),
            theta,
            split: true,
            tolerance: None,
            max_iterations: None,
            solver: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeConfig {
    pub fine_exponent: u32,
    /// Defaults depend on the reference.
    pub ratios: Option<Vec<usize>>,
    pub paths: usize,
    pub horizon: f64,
    /// `exact`, `fine`, or a scheme name for a cross-scheme fine reference.
    pub reference: Option<String>,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        Self {
            fine_exponent: 12,
            ratios: None,
            paths: 2000,
            horizon: 1.0,
            reference: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfigToml {
    pub dts: Vec<f64>,
    pub horizon: f64,
    pub paths: usize,
    pub max_samples: usize,
    pub rate_tolerance: f64,
    /// Closed-form table only, no simulation.
    pub analytic: bool,
}

impl Default for StabilityConfigToml {
    fn default() -> Self {
        Self {
            dts: vec![0.02, 0.05, 0.08],
            horizon: 2500.0,
            paths: 2000,
            max_samples: 1000,
            rate_tolerance: DEFAULT_RATE_TOLERANCE,
            analytic: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmplificationConfig {
    pub dts: Vec<f64>,
    pub samples: usize,
}

impl Default for AmplificationConfig {
    fn default() -> Self {
        Self {
            dts: vec![0.01, 0.05, 0.1],
            samples: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathConfig {
    pub fine_exponent: u32,
    pub ratio: usize,
    pub horizon: f64,
    /// Path index, selecting the noise stream.
    pub index: u64,
    /// Also write the fine-grid increments.
    pub increments: bool,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            fine_exponent: 10,
            ratio: 1,
            horizon: 1.0,
            index: 0,
            increments: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearConfig {
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub rho: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub beta_bar: f64,
    #[serde(default)]
    pub theta_g: f64,
    #[serde(default, rename = "K")]
    pub k: f64,
    #[serde(default, rename = "C")]
    pub c: f64,
    #[serde(default = "two")]
    pub a_exp: f64,
}

fn two() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticConfig {
    pub thetas: Vec<f64>,
    pub dts: Vec<f64>,
    pub nonlinear: Option<NonlinearConfig>,
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        Self {
            thetas: vec![0.0, 0.5, 1.0],
            dts: vec![0.02, 0.05, 0.08],
            nonlinear: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: Option<Command>,
    seed: Option<u64>,
    threads: Option<toml::Value>,
    out: Option<PathBuf>,
    problem: Option<ProblemConfig>,
    scheme: Option<Vec<SchemeConfig>>,
    converge: Option<ConvergeConfig>,
    stability: Option<StabilityConfigToml>,
    amplification: Option<AmplificationConfig>,
    path: Option<PathConfig>,
    analytic: Option<AnalyticConfig>,
}

/// Fully defaulted and validated run description.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    #[serde(serialize_with = "as_display")]
    pub threads: Threads,
    pub out: PathBuf,
    pub problem: ProblemConfig,
    pub schemes: Vec<SchemeConfig>,
    pub converge: ConvergeConfig,
    pub stability: StabilityConfigToml,
    pub amplification: AmplificationConfig,
    pub path: PathConfig,
    pub analytic: AnalyticConfig,
}

fn as_display<S: serde::Serializer>(t: &Threads, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(t)
}

fn default_schemes(command: Command, problem: &str) -> Vec<SchemeConfig> {
    match (command, problem) {
        (Command::Stability, "linear") => vec![
            SchemeConfig::named("semi-tamed", None),
            SchemeConfig::named("tamed", None),
        ],
        (Command::Amplification, _) => vec![
            SchemeConfig::named("stm", Some(0.5)),
            SchemeConfig::named("cstm", Some(0.5)),
            SchemeConfig::named("semi-tamed", None),
        ],
        (_, "quartic") => vec![SchemeConfig::named("compensated-tamed", None)],
        (_, "cubic_split") => vec![SchemeConfig::named("semi-tamed", None)],
        _ => vec![SchemeConfig::named("cstm", Some(0.5))],
    }
}

/// Parse a configuration whose `command` key names the experiment.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_for(None, text)
}

/// Parse a configuration for `command` (which must agree with any `command` key).
pub fn parse_config_for(command: Option<Command>, text: &str) -> Result<RunConfig> {
    check_duplicate_keys(text)?;
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
    let command = match (command, raw.command) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::Config(format!("config is for `{b}` but `{a}` was requested")));
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(Error::Config("no command given".into())),
    };
    let threads = match raw.threads {
        None => Threads::Auto,
        Some(toml::Value::String(s)) => s.parse()?,
        Some(toml::Value::Integer(n)) => n.to_string().parse()?,
        Some(other) => {
            return Err(Error::Config(format!(
                "threads must be an integer or \"auto\", got {other}"
            )))
        }
    };
    let problem = raw.problem.unwrap_or_default();
    let schemes = raw.scheme.unwrap_or_else(|| default_schemes(command, &problem.name));
    let config = RunConfig {
        command,
        seed: raw.seed.unwrap_or(0),
        threads,
        out: raw.out.unwrap_or_else(|| PathBuf::from("results")),
        problem,
        schemes,
        converge: raw.converge.unwrap_or_default(),
        stability: raw.stability.unwrap_or_default(),
        amplification: raw.amplification.unwrap_or_default(),
        path: raw.path.unwrap_or_default(),
        analytic: raw.analytic.unwrap_or_default(),
    };
    config.validate()?;
    Ok(config)
}

/// Default configuration for `command` when no file is given.
pub fn default_config(command: Command) -> RunConfig {
    parse_config_for(Some(command), "").expect("defaults are valid")
}

fn config_err(e: Error) -> Error {
    match e {
        Error::InvalidParameter(msg) | Error::NotApplicable(msg) => Error::Config(msg),
        other => other,
    }
}

impl RunConfig {
    pub fn build_problem(&self) -> Result<JumpSdeProblem> {
        models::builtin_problem(&self.problem.name, &self.problem.params).map_err(config_err)
    }

    pub fn build_scheme(&self, entry: &SchemeConfig, problem: &JumpSdeProblem) -> Result<SchemeSpec> {
        let kind = SchemeKind::from_str(&entry.name)?;
        if entry.theta.is_some() && !kind.uses_theta() {
            return Err(Error::Config(format!("scheme `{kind}` takes no theta")));
        }
        let mut spec = SchemeSpec::new(kind, entry.theta.unwrap_or(0.5)).map_err(config_err)?;
        if let Some(tol) = entry.tolerance {
            spec.implicit.tolerance = tol;
        }
        if let Some(it) = entry.max_iterations {
            spec.implicit.max_iterations = it;
        }
        if let Some(solver) = &entry.solver {
            spec.implicit.method = match solver.as_str() {
                "fixed-point" => crate::schemes::ImplicitMethod::FixedPoint,
                "newton" => crate::schemes::ImplicitMethod::NewtonNumericJacobian,
                other => {
                    return Err(Error::Unknown {
                        kind: "implicit solver",
                        name: other.into(),
                    })
                }
            };
        }
        if kind.needs_split() && !entry.split {
            spec.split = Some(DriftSplit::all_nonlinear(problem));
        }
        spec.validate(problem).map_err(config_err)?;
        Ok(spec)
    }

    pub fn build_schemes(&self, problem: &JumpSdeProblem) -> Result<Vec<SchemeSpec>> {
        self.schemes.iter().map(|s| self.build_scheme(s, problem)).collect()
    }

    pub fn nonlinear_inputs(&self, problem_lambda: f64) -> Option<NonlinearStabilityInputs> {
        self.analytic.nonlinear.as_ref().map(|n| NonlinearStabilityInputs {
            mu: n.mu,
            sigma: n.sigma,
            gamma: n.gamma,
            lambda: problem_lambda,
            rho: n.rho,
            beta: n.beta,
            beta_bar: n.beta_bar,
            theta_g: n.theta_g,
            k: n.k,
            c: n.c,
            a_exp: n.a_exp,
        })
    }

    fn validate(&self) -> Result<()> {
        let problem = self.build_problem()?;
        if self.schemes.is_empty() {
            return Err(Error::Config("at least one [[scheme]] is required".into()));
        }
        self.build_schemes(&problem)?;
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be > 0, got {v}")))
            }
        };
        let c = &self.converge;
        if c.fine_exponent > 30 {
            return Err(Error::Config(format!(
                "converge.fine_exponent {} is too large",
                c.fine_exponent
            )));
        }
        if c.paths < 100 {
            return Err(Error::Config(format!("converge.paths must be >= 100, got {}", c.paths)));
        }
        positive("converge.horizon", c.horizon)?;
        if let Some(ratios) = &c.ratios {
            let n = 1usize << c.fine_exponent;
            if ratios.is_empty() {
                return Err(Error::Config("converge.ratios is empty".into()));
            }
            if let Some(r) = ratios.iter().find(|&&r| r == 0 || !n.is_multiple_of(r)) {
                return Err(Error::Config(format!(
                    "converge.ratios: {r} does not divide 2^{}",
                    c.fine_exponent
                )));
            }
        }
        if let Some(reference) = &c.reference {
            if !matches!(reference.as_str(), "exact" | "fine") {
                SchemeKind::from_str(reference)?;
            }
        }
        let s = &self.stability;
        if s.dts.is_empty() {
            return Err(Error::Config("stability.dts is empty".into()));
        }
        for dt in &s.dts {
            positive("stability.dts entry", *dt)?;
        }
        positive("stability.horizon", s.horizon)?;
        if s.paths == 0 {
            return Err(Error::Config("stability.paths must be >= 1".into()));
        }
        if s.max_samples < 7 {
            return Err(Error::Config("stability.max_samples must be >= 7".into()));
        }
        if !(s.rate_tolerance >= 0.0) {
            return Err(Error::Config("stability.rate_tolerance must be >= 0".into()));
        }
        for dt in &self.amplification.dts {
            positive("amplification.dts entry", *dt)?;
        }
        if self.amplification.samples < 100_000 {
            return Err(Error::Config("amplification.samples must be >= 100000".into()));
        }
        let p = &self.path;
        if p.fine_exponent > 30 || p.ratio == 0 || !(1usize << p.fine_exponent).is_multiple_of(p.ratio) {
            return Err(Error::Config(format!(
                "path.ratio {} must divide 2^{}",
                p.ratio, p.fine_exponent
            )));
        }
        positive("path.horizon", p.horizon)?;
        for theta in &self.analytic.thetas {
            if !(0.0..=1.0).contains(theta) {
                return Err(Error::Config(format!(
                    "analytic.thetas: theta must lie in [0, 1], got {theta}"
                )));
            }
        }
        for dt in &self.analytic.dts {
            positive("analytic.dts entry", *dt)?;
        }
        if let Some(inputs) = self.nonlinear_inputs(problem.lambda()) {
            inputs.validate().map_err(config_err)?;
        }
        Ok(())
    }
}

/// Reject keys defined twice in one table, reporting both lines.
fn check_duplicate_keys(text: &str) -> Result<()> {
    let mut table = String::new();
    let mut instance = 0usize;
    let mut seen: HashMap<(String, usize, String), usize> = HashMap::new();
    let mut depth = 0i32;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw_line);
        let trimmed = line.trim();
        if depth > 0 {
            depth += bracket_balance(trimmed);
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("[[") {
            table = rest.trim_end_matches("]]").trim().to_string();
            instance = line_no;
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            table = rest.trim_end_matches(']').trim().to_string();
            instance = 0;
            continue;
        }
        let Some(eq) = find_unquoted(trimmed, '=') else {
            continue;
        };
        let key: String = trimmed[..eq]
            .split('.')
            .map(|part| part.trim().trim_matches('"').trim_matches('\''))
            .collect::<Vec<_>>()
            .join(".");
        depth += bracket_balance(&trimmed[eq + 1..]);
        let slot = (table.clone(), instance, key.clone());
        if let Some(first) = seen.get(&slot) {
            let place = if table.is_empty() {
                String::new()
            } else {
                format!(" in [{table}]")
            };
            return Err(Error::Config(format!(
                "duplicate key `{key}`{place}: first defined at line {first}, again at line {line_no}"
            )));
        }
        seen.insert(slot, line_no);
    }
    Ok(())
}

fn strip_comment(line: &str) -> &str {
    match find_unquoted(line, '#') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn find_unquoted(s: &str, target: char) -> Option<usize> {
    let mut quote: Option<char> = None;
    for (i, ch) in s.char_indices() {
        match quote {
            Some(q) if ch == q => quote = None,
            Some(_) => {}
            None if ch == '"' || ch == '\'' => quote = Some(ch),
            None if ch == target => return Some(i),
            None => {}
        }
    }
    None
}

fn bracket_balance(s: &str) -> i32 {
    let mut quote: Option<char> = None;
    let mut depth = 0;
    for ch in s.chars() {
        match quote {
            Some(q) if ch == q => quote = None,
            Some(_) => {}
            None => match ch {
                '"' | '\'' => quote = Some(ch),
                '[' | '{' => depth += 1,
                ']' | '}' => depth -= 1,
                _ => {}
            },
        }
    }
    depth
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_converge_config_gets_defaults() {
        let cfg = parse_config(
            r#"
command = "converge"
[problem]
name = "linear"
[[scheme]]
name = "cstm"
theta = 0.5
"#,
        )
        .unwrap();
        assert_eq!(cfg.command, Command::Converge);
        assert_eq!(cfg.converge.fine_exponent, 12);
        assert_eq!(cfg.converge.paths, 2000);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.threads, Threads::Auto);
    }

    #[test]
    fn theta_out_of_range_is_rejected() {
        let err = parse_config_for(Some(Command::Converge), "[[scheme]]\nname = \"stm\"\ntheta = 1.5\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn duplicate_keys_report_both_lines() {
        let err = parse_config("command = \"converge\"\nseed = 1\n\nseed = 2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("line 4"), "{msg}");

        let err = parse_config_for(
            Some(Command::Converge),
            "[converge]\npaths = 200\n# paths = 1\nhorizon = 1.0\npaths = 300\n",
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("[converge]") && msg.contains("line 2") && msg.contains("line 5"),
            "{msg}"
        );
    }

    #[test]
    fn repeated_scheme_tables_are_not_duplicates() {
        let cfg = parse_config_for(
            Some(Command::Converge),
            "[[scheme]]\nname = \"stm\"\ntheta = 0.0\n[[scheme]]\nname = \"stm\"\ntheta = 1.0\n",
        )
        .unwrap();
        assert_eq!(cfg.schemes.len(), 2);
    }

    #[test]
    fn multiline_arrays_are_skipped() {
        let cfg = parse_config_for(
            Some(Command::Stability),
            "[stability]\ndts = [\n  0.02,\n  0.05,\n]\npaths = 100\n",
        )
        .unwrap();
        assert_eq!(cfg.stability.dts, vec![0.02, 0.05]);
    }

    #[test]
    fn unknown_things_are_rejected() {
        assert!(parse_config_for(Some(Command::Path), "sede = 3\n").is_err());
        assert!(parse_config_for(Some(Command::Path), "[path]\nratoi = 2\n").is_err());
        let err = parse_config_for(Some(Command::Path), "[[scheme]]\nname = \"milstein\"\n").unwrap_err();
        assert!(matches!(err, Error::Unknown { .. }));
        let err = parse_config_for(Some(Command::Path), "[problem]\nname = \"cubic\"\n").unwrap_err();
        assert!(matches!(err, Error::Unknown { .. }));
        let err = parse_config_for(Some(Command::Path), "[problem]\nname = \"quartic\"\nalpha = 2.0\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn syntax_errors_carry_the_line() {
        let err = parse_config_for(Some(Command::Path), "seed = 1\nseed2 = = 3\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn command_mismatch() {
        assert!(parse_config_for(Some(Command::Path), "command = \"converge\"\n").is_err());
        assert!(parse_config("seed = 1\n").is_err());
    }

    #[test]
    fn threads_setting() {
        let cfg = parse_config_for(Some(Command::Path), "threads = 4\n").unwrap();
        assert_eq!(cfg.threads, Threads::Fixed(4));
        assert!(parse_config_for(Some(Command::Path), "threads = 0\n").is_err());
    }
}
