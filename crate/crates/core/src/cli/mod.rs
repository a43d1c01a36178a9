//! Command-line front end: `path`, `converge`, `stability`, `amplification`
//! and `analytic`. Each run writes CSV files plus `manifest.json` into the
//! output directory and prints a short summary.

mod config;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use config::{
    default_config, parse_config, parse_config_for, AmplificationConfig, AnalyticConfig, Command, ConvergeConfig,
    NonlinearConfig, PathConfig, ProblemConfig, RunConfig, SchemeConfig, StabilityConfigToml,
};

use crate::error::{Error, Result};
use crate::experiments::{
    self, run_amplification_validation, run_convergence, run_stability_sweep, with_threads, ConvergenceConfig,
    Reference, StabilityConfig,
};
use crate::increments::{IncrementGrid, RandomSource};
use crate::models::JumpSdeProblem;
use crate::schemes::{integrate_path, SchemeKind, SchemeSpec};
use crate::stability::{self as st, TamedLinearBound};

#[derive(Debug, Parser)]
#[command(
    name = "jumpsde",
    version,
    about = "Jump-diffusion SDE simulation and stability analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Dump one simulated trajectory per scheme
    Path(CommonArgs),
    /// Estimate strong convergence order
    Converge(CommonArgs),
    /// Mean-square stability sweep over step sizes
    Stability {
        #[command(flatten)]
        common: CommonArgs,
        /// Print closed-form factors and thresholds instead of simulating
        #[arg(long)]
        analytic: bool,
    },
    /// Compare closed-form amplification factors with Monte Carlo
    Amplification(CommonArgs),
    /// Closed-form stability table for the configured problem
    Analytic(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads: a positive integer or `auto`
    #[arg(long)]
    pub threads: Option<String>,
}

/// Parse `args`, run, and return the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load(command: Command, common: &CommonArgs) -> Result<(RunConfig, String)> {
    let text = match &common.config {
        Some(path) => fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?,
        None => String::new(),
    };
    let mut config = parse_config_for(Some(command), &text)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    if let Some(threads) = &common.threads {
        config.threads = threads.parse()?;
    }
    Ok((config, text))
}

pub fn run(cli: Cli) -> Result<()> {
    let (command, common, analytic_only) = match &cli.command {
        CliCommand::Path(c) => (Command::Path, c, false),
        CliCommand::Converge(c) => (Command::Converge, c, false),
        CliCommand::Stability { common, analytic } => (Command::Stability, common, *analytic),
        CliCommand::Amplification(c) => (Command::Amplification, c, false),
        CliCommand::Analytic(c) => (Command::Analytic, c, false),
    };
    let (mut config, text) = load(command, common)?;
    config.stability.analytic |= analytic_only;
    let outcome = dispatch(&config, &text)?;
    print!("{}", outcome.summary);
    Ok(())
}

/// What a run produced.
#[derive(Debug)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: Command,
    seed: u64,
    threads: String,
    version: &'static str,
    started_unix_secs: u64,
    wall_time_secs: f64,
    files: Vec<String>,
    config: &'a RunConfig,
    config_text: &'a str,
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        body(&mut w)?;
        w.flush()?;
        self.files.push(path);
        Ok(())
    }
}

fn label(spec: &SchemeSpec) -> String {
    if spec.kind.uses_theta() {
        format!("{}-theta{}", spec.kind, crate::fmt_f64(spec.theta))
    } else {
        spec.kind.to_string()
    }
}

/// Run a validated configuration; writes artifacts under `config.out`.
pub fn dispatch(config: &RunConfig, config_text: &str) -> Result<Outcome> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let problem = config.build_problem()?;
    let schemes = config.build_schemes(&problem)?;
    let mut out = Output::create(&config.out)?;
    let threads = config.threads;

    let summary = match config.command {
        Command::Path => run_path(config, &problem, &schemes, &mut out)?,
        Command::Converge => with_threads(threads, || run_converge(config, &problem, &schemes, &mut out))??,
        Command::Stability if config.stability.analytic => run_linear_table(config, &problem, &schemes, &mut out)?,
        Command::Stability => with_threads(threads, || run_stability(config, &problem, &schemes, &mut out))??,
        Command::Amplification => with_threads(threads, || run_amplification(config, &problem, &schemes, &mut out))??,
        Command::Analytic => run_analytic(config, &problem, &mut out)?,
    };

    let files: Vec<String> = out
        .files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let manifest = Manifest {
        command: config.command,
        seed: config.seed,
        threads: threads.to_string(),
        version: env!("CARGO_PKG_VERSION"),
        started_unix_secs: started,
        wall_time_secs: clock.elapsed().as_secs_f64(),
        files,
        config,
        config_text,
    };
    let path = config.out.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.into()))?;
    fs::write(&path, json + "\n")?;
    let mut files = out.files;
    files.push(path);
    Ok(Outcome { files, summary })
}

fn run_path(config: &RunConfig, problem: &JumpSdeProblem, schemes: &[SchemeSpec], out: &mut Output) -> Result<String> {
    let p = &config.path;
    let n = 1usize << p.fine_exponent;
    let grid = IncrementGrid::generate(
        RandomSource::new(config.seed, p.index),
        n,
        problem.noise_dim(),
        p.horizon / n as f64,
        problem.lambda(),
    )?;
    let mut summary = String::new();
    if p.increments {
        out.write("increments.csv", |w| grid.write_csv(w))?;
    }
    for spec in schemes {
        let path = integrate_path(problem, spec, &grid, p.ratio)?;
        out.write(&format!("path-{}.csv", label(spec)), |w| path.write_csv(w))?;
        let end = match (path.diverged_at, path.states.last()) {
            (Some(k), _) => format!("diverged at step {k}"),
            (None, Some(x)) => format!("X(T) = {:?}", x),
            (None, None) => "empty".into(),
        };
        summary += &format!("{:<28} {} steps, {end}\n", label(spec), path.states.len() - 1);
    }
    Ok(summary)
}

fn reference_for(config: &RunConfig, problem: &JumpSdeProblem) -> Result<Reference> {
    Ok(match config.converge.reference.as_deref() {
        Some("exact") => Reference::ExactLinear,
        Some("fine") => Reference::FineNumerical,
        Some(name) => Reference::FineScheme(config.build_scheme(&SchemeConfig::named(name, None), problem)?),
        None if problem.linear().is_some_and(|l| l.c > -1.0) => Reference::ExactLinear,
        None => Reference::FineNumerical,
    })
}

fn run_converge(
    config: &RunConfig,
    problem: &JumpSdeProblem,
    schemes: &[SchemeSpec],
    out: &mut Output,
) -> Result<String> {
    let reference = reference_for(config, problem)?;
    let mut summary = String::new();
    for spec in schemes {
        let c = &config.converge;
        let mut cfg = ConvergenceConfig::new(spec.clone(), reference.clone());
        cfg.fine_exponent = c.fine_exponent;
        if let Some(r) = &c.ratios {
            cfg.ratios = r.clone();
        }
        cfg.paths = c.paths;
        cfg.horizon = c.horizon;
        cfg.seed = config.seed;
        let report = run_convergence(problem, &cfg)?;
        out.write(&format!("convergence-{}.csv", label(spec)), |w| report.write_csv(w))?;
        summary += &format!("{}\n", label(spec));
        for row in &report.rows {
            summary += &format!(
                "  dt {:<12.6e} rmse {:<12.6e} stderr {:<10.3e} diverged {:.4}{}\n",
                row.dt,
                row.rmse,
                row.stderr,
                row.diverged_frac,
                if row.valid { "" } else { "  (excluded)" }
            );
        }
        summary += &match report.fit {
            Some(fit) => format!("  fitted order {:.4} (residual {:.2e})\n", fit.slope, fit.residual),
            None => "  fitted order unavailable (fewer than 3 valid rows)\n".into(),
        };
    }
    Ok(summary)
}

fn run_stability(
    config: &RunConfig,
    problem: &JumpSdeProblem,
    schemes: &[SchemeSpec],
    out: &mut Output,
) -> Result<String> {
    let s = &config.stability;
    let cfg = StabilityConfig {
        dts: s.dts.clone(),
        horizon: s.horizon,
        paths: s.paths,
        seed: config.seed,
        max_samples: s.max_samples,
        rate_tolerance: s.rate_tolerance,
    };
    let mut summary = String::new();
    for spec in schemes {
        let report = run_stability_sweep(problem, spec, &cfg)?;
        out.write(&format!("stability-{}.csv", label(spec)), |w| {
            report.write_series_csv(w)
        })?;
        out.write(&format!("stability-{}-summary.csv", label(spec)), |w| {
            report.write_summary_csv(w)
        })?;
        for row in &report.rows {
            summary += &format!(
                "{:<28} dt {:<8} {:<13} rate {:<12.4e} diverged {:.4}\n",
                label(spec),
                row.dt,
                row.classification,
                row.fitted_rate,
                row.diverged_fraction
            );
        }
    }
    Ok(summary)
}

fn run_amplification(
    config: &RunConfig,
    problem: &JumpSdeProblem,
    schemes: &[SchemeSpec],
    out: &mut Output,
) -> Result<String> {
    let lin = problem
        .linear()
        .ok_or_else(|| Error::Config("amplification needs the linear problem".into()))?;
    let mut checks = Vec::new();
    for spec in schemes {
        for &dt in &config.amplification.dts {
            checks.push(run_amplification_validation(
                lin.a,
                lin.b,
                lin.c,
                lin.lambda,
                spec.kind,
                spec.theta,
                dt,
                config.amplification.samples,
                config.seed,
            )?);
        }
    }
    out.write("amplification.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "scheme",
            "theta",
            "dt",
            "samples",
            "empirical",
            "closed_form",
            "stderr",
            "z",
        ])?;
        for c in &checks {
            csv.write_record([
                c.scheme.to_string(),
                if c.scheme.uses_theta() {
                    crate::fmt_f64(c.theta)
                } else {
                    String::new()
                },
                crate::fmt_f64(c.dt),
                c.samples.to_string(),
                crate::fmt_f64(c.empirical),
                crate::fmt_f64(c.closed_form),
                crate::fmt_f64(c.stderr),
                crate::fmt_f64(c.z),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    Ok(checks
        .iter()
        .map(|c| {
            format!(
                "{:<12} theta {:<5} dt {:<6} factor {:.6} empirical {:.6} z {:+.3}\n",
                c.scheme,
                if c.scheme.uses_theta() {
                    c.theta.to_string()
                } else {
                    "-".into()
                },
                c.dt,
                c.closed_form,
                c.empirical,
                c.z
            )
        })
        .collect())
}

/// One row of the closed-form table.
struct TableRow {
    scheme: SchemeKind,
    theta: Option<f64>,
    dt: f64,
    factor: Option<f64>,
    threshold: Option<f64>,
    certified: bool,
}

fn linear_rows(lin: &crate::models::LinearJumpSde, spec: &SchemeSpec, dt: f64) -> Result<TableRow> {
    let (a, b, c, lambda) = (lin.a, lin.b, lin.c, lin.lambda);
    let theta = spec.kind.uses_theta().then_some(spec.theta);
    let stable_exact = lin.l() < 0.0;
    let (factor, threshold, certified) = match spec.kind {
        SchemeKind::Tamed | SchemeKind::CompensatedTamed => {
            let bound: Option<TamedLinearBound> = st::tamed_linear_max_dt(a, b, c, lambda).ok();
            let certified = bound.as_ref().is_some_and(|b| b.certifies(dt));
            (None, bound.map(|b| b.max_dt), certified)
        }
        kind => {
            let factor = experiments::linear_factor(kind, a, b, c, lambda, spec.theta, dt)?;
            let threshold = match kind {
                SchemeKind::Cstm => st::cstm_max_stable_dt(a, b, c, lambda, spec.theta).ok(),
                SchemeKind::ExplicitEuler => st::cstm_max_stable_dt(a, b, c, lambda, 0.0).ok(),
                SchemeKind::Stm if spec.theta == 0.0 => st::cstm_max_stable_dt(a, b, c, lambda, 0.0).ok(),
                SchemeKind::SemiTamed | SchemeKind::CompensatedSemiTamed => {
                    st::semi_tamed_linear_max_dt(a, b, c, lambda).ok()
                }
                _ => None,
            };
            (Some(factor), threshold, stable_exact && factor < 1.0)
        }
    };
    Ok(TableRow {
        scheme: spec.kind,
        theta,
        dt,
        factor,
        threshold,
        certified,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(crate::fmt_f64).unwrap_or_default()
}

fn write_table(out: &mut Output, name: &str, rows: &[TableRow]) -> Result<()> {
    out.write(name, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["scheme", "theta", "dt", "factor", "threshold", "certified"])?;
        for r in rows {
            csv.write_record([
                r.scheme.to_string(),
                opt(r.theta),
                crate::fmt_f64(r.dt),
                opt(r.factor),
                opt(r.threshold),
                r.certified.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })
}

fn table_text(lin: &crate::models::LinearJumpSde, rows: &[TableRow]) -> String {
    let mut s = format!(
        "l = {:.6} (a = {}, b = {}, c = {}, lambda = {})\n",
        lin.l(),
        lin.a,
        lin.b,
        lin.c,
        lin.lambda
    );
    s += &format!(
        "{:<24} {:<6} {:<8} {:<12} {:<12} {}\n",
        "scheme", "theta", "dt", "factor", "threshold", "certified"
    );
    for r in rows {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
        s += &format!(
            "{:<24} {:<6} {:<8} {:<12} {:<12} {}\n",
            r.scheme.to_string(),
            r.theta.map_or("-".to_string(), |t| t.to_string()),
            r.dt,
            fmt(r.factor),
            fmt(r.threshold),
            r.certified
        );
    }
    s
}

fn require_linear(problem: &JumpSdeProblem) -> Result<&crate::models::LinearJumpSde> {
    problem.linear().ok_or_else(|| {
        Error::Config(format!(
            "closed forms need the linear problem, not `{}`",
            problem.name()
        ))
    })
}

fn run_linear_table(
    config: &RunConfig,
    problem: &JumpSdeProblem,
    schemes: &[SchemeSpec],
    out: &mut Output,
) -> Result<String> {
    let lin = require_linear(problem)?;
    let mut rows = Vec::new();
    for spec in schemes {
        for &dt in &config.stability.dts {
            rows.push(linear_rows(lin, spec, dt)?);
        }
    }
    write_table(out, "stability-analytic.csv", &rows)?;
    Ok(table_text(lin, &rows))
}

fn run_analytic(config: &RunConfig, problem: &JumpSdeProblem, out: &mut Output) -> Result<String> {
    let mut summary = String::new();
    if let Some(lin) = problem.linear() {
        let mut specs = Vec::new();
        for &theta in &config.analytic.thetas {
            specs.push(SchemeSpec::cstm(theta)?);
        }
        for &theta in &config.analytic.thetas {
            specs.push(SchemeSpec::stm(theta)?);
        }
        specs.push(SchemeSpec::semi_tamed(None));
        specs.push(SchemeSpec::tamed());
        let mut rows = Vec::new();
        for spec in &specs {
            for &dt in &config.analytic.dts {
                rows.push(linear_rows(lin, spec, dt)?);
            }
        }
        write_table(out, "analytic.csv", &rows)?;
        summary += &table_text(lin, &rows);
        let (a, b, c, lambda) = (lin.a, lin.b, lin.c, lin.lambda);
        match st::semi_tamed_linear_max_dt(a, b, c, lambda) {
            Ok(t) => summary += &format!("semi-tamed stable iff dt < {t:.6}\n"),
            Err(e) => summary += &format!("semi-tamed threshold: {e}\n"),
        }
        match st::tamed_linear_max_dt(a, b, c, lambda) {
            Ok(bound) if bound.max_dt > 0.0 => {
                summary += &format!("tamed certified for dt < {:.6} ({})\n", bound.max_dt, bound.case)
            }
            Ok(bound) => summary += &format!("tamed: {}\n", bound.diagnostic.unwrap_or_default()),
            Err(e) => summary += &format!("tamed threshold: {e}\n"),
        }
    }
    if let Some(inputs) = config.nonlinear_inputs(problem.lambda()) {
        let mut rows: Vec<(String, Option<f64>, String)> = Vec::new();
        let show = |r: Result<f64>| match r {
            Ok(v) => crate::fmt_f64(v),
            Err(_) => String::new(),
        };
        rows.push((
            "alpha".into(),
            None,
            show(st::nonlinear_alpha(
                inputs.mu,
                inputs.sigma,
                inputs.gamma,
                inputs.lambda,
            )),
        ));
        for &dt in &config.analytic.dts {
            rows.push((
                "beta1".into(),
                Some(dt),
                show(st::backward_euler_rate_beta1(
                    inputs.mu,
                    inputs.sigma,
                    inputs.gamma,
                    inputs.lambda,
                    dt,
                )),
            ));
            rows.push((
                "beta2".into(),
                Some(dt),
                show(st::compensated_backward_euler_rate_beta2(
                    inputs.mu,
                    inputs.sigma,
                    inputs.gamma,
                    inputs.lambda,
                    dt,
                )),
            ));
        }
        rows.push((
            "semi_tamed_max_dt".into(),
            None,
            show(st::semi_tamed_nonlinear_max_dt(&inputs)),
        ));
        rows.push(("tamed_max_dt".into(), None, show(st::tamed_nonlinear_max_dt(&inputs))));
        out.write("analytic-nonlinear.csv", |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["quantity", "dt", "value"])?;
            for (q, dt, v) in &rows {
                csv.write_record([q.clone(), opt(*dt), v.clone()])?;
            }
            csv.flush()?;
            Ok(())
        })?;
        for (q, dt, v) in &rows {
            let v = if v.is_empty() { "not applicable" } else { v };
            summary += &match dt {
                Some(dt) => format!("{q}(dt = {dt}) = {v}\n"),
                None => format!("{q} = {v}\n"),
            };
        }
    }
    if summary.is_empty() {
        return Err(Error::Config(format!(
            "problem `{}` has no closed-form results; add an [analytic.nonlinear] section",
            problem.name()
        )));
    }
    Ok(summary)
}
