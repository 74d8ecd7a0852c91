//! Command-line entry point: configuration, seeds, pipelines and artifacts.
//!
//! Exit codes: 0 when every enabled assertion passes, 2 when one fails
//! (a `failure.json` report is written), 1 on configuration or runtime errors.

mod output;
mod pipelines;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use output::Out;
pub use pipelines::{Check, Session, Settings, TOLERANCES};

use crate::config::Config;
use crate::error::{Error, Result};

pub const SEED_ENV: &str = "SDDE_LIFT_SEED";

#[derive(Debug, Parser)]
#[command(name = "sdde-lift", version, about = "Markovian lift workbench for controlled delay equations")]
pub struct Cli {
    /// TOML configuration (defaults to the advertising template).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed; overrides the environment and the config file.
    #[arg(long, global = true, env = SEED_ENV)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Time step; the grid uses `K = d / dt` subintervals.
    #[arg(long, global = true, conflicts_with = "grid_k")]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub grid_k: Option<usize>,
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Repeatable `name=value` tolerance override.
    #[arg(long = "tolerance", global = true, value_name = "NAME=VALUE")]
    pub tolerances: Vec<String>,
    #[arg(long, global = true)]
    pub basis_degree: Option<u32>,
    /// Shift of the generator (default `mu0 + 1`).
    #[arg(long, global = true)]
    pub mu: Option<f64>,
    /// Print every check with its command and exit.
    #[arg(long)]
    pub list_checks: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Euler-Maruyama paths under a constant lattice control.
    Simulate,
    /// Pathwise agreement of the delay equation and the lifted integrator.
    LiftCheck,
    /// Dissipativity, closed forms, weak-B certificate, spectra, counterexample.
    Operators,
    /// Monotonicity and local Lipschitz bound of the Hamiltonian.
    HamiltonianCheck,
    /// Policy values, moment bound, regression value model, B-continuity.
    Value,
    /// Dynamic programming residuals of the trained value model.
    Dpp,
    /// HJB residuals of the trained value model.
    HjbResidual,
    /// Full pipeline on a built-in template (advertising, time-to-build, zero).
    Scenario { name: String },
    /// Full pipeline on the configured model.
    All,
}

impl Command {
    fn label(&self) -> String {
        match self {
            Command::Simulate => "simulate".into(),
            Command::LiftCheck => "lift-check".into(),
            Command::Operators => "operators".into(),
            Command::HamiltonianCheck => "hamiltonian-check".into(),
            Command::Value => "value".into(),
            Command::Dpp => "dpp".into(),
            Command::HjbResidual => "hjb-residual".into(),
            Command::Scenario { name } => format!("scenario {name}"),
            Command::All => "all".into(),
        }
    }
}

/// `(command, check, operation)` rows printed by `--list-checks`.
pub const CHECKS: &[(&str, &str, &str)] = &[
    ("simulate", "simulate_finite", "sdde_sim: Euler-Maruyama path of the delay equation"),
    ("lift-check", "lift_monotone", "lift: sup error of y against Y0 decreases with dt"),
    ("lift-check", "lift_order_*", "lift: fitted order of the structural-state equivalence"),
    ("operators", "dissipativity", "operators: <Ax,x> <= mu0 |x|^2 on random domain states"),
    ("operators", "weak_b_i..iv", "operators: weak-B certificate with c0 = 0"),
    ("operators", "inverse_roundtrip_k*", "operators: closed-form inverse of the shifted generator"),
    ("operators", "resolvent_roundtrip_k*", "operators: closed-form resolvent"),
    ("operators", "roundtrip_order", "operators: first-order decay of the roundtrip residuals"),
    ("operators", "bq_strictly_decreasing", "operators: |B Q_N| = lambda_{N+1}"),
    ("operators", "trace_bound", "operators: trace of sigma sigma* B Q_N"),
    ("operators", "counterexample_*", "operators: |.|_{-1} does not control x0"),
    ("operators", "global_x0_bound_fails", "operators: witness ratio of the counterexample"),
    ("hamiltonian-check", "h_monotone", "hamiltonian: degenerate ellipticity in Z"),
    ("hamiltonian-check", "h_lipschitz", "hamiltonian: local Lipschitz bound in (r, Z)"),
    ("value", "routes_agree", "value: J through the delay equation and through the lift"),
    ("value", "moment_slope", "value: exponential moment bound at lambda = (rho + rho0) / 2"),
    ("value", "lsmc_converged", "value: regression value iteration"),
    ("value", "growth_constant_finite", "value: |V| <= C (1 + |x|^m) on the sample"),
    ("value", "b_continuity_envelope", "value: continuity in the |.|_{-1} norm"),
    ("dpp", "dpp_median_within_se", "value: dynamic programming residual"),
    ("dpp", "dpp_negative_control", "value: untrained model is rejected"),
    ("dpp", "dpp_reproducible", "value: bit-exact rerun"),
    ("hjb-residual", "hjb_below_negative_control", "value: HJB residual against V = 0"),
];

#[derive(Debug, Serialize)]
struct Manifest {
    command: String,
    config: Option<String>,
    seed: u64,
    grid_k: usize,
    paths: usize,
    horizon: f64,
    tolerance_overrides: BTreeMap<String, f64>,
    out_dir: String,
    version: &'static str,
    runtime_seconds: f64,
    files: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Failure<'a> {
    command: String,
    failed: Vec<&'a Check>,
}

fn parse_tolerances(raw: &[String]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for t in raw {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("tolerance `{t}` is not name=value")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("tolerance `{t}` has a non-numeric value")))?;
        if !TOLERANCES.iter().any(|(n, _)| *n == k.trim()) {
            return Err(Error::Config(format!("unknown tolerance `{}`", k.trim())));
        }
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

/// Flag > environment > config > 0 for the seed; flags over config elsewhere.
pub fn resolve(cli: &Cli, cfg: Config) -> Result<Settings> {
    let seed = cli.seed.or(cfg.scenario.seed).unwrap_or(0);
    let d = cfg.grid.delay;
    let k = match (cli.dt, cli.grid_k) {
        (Some(dt), _) => {
            let k = (d / dt).round();
            if !(dt > 0.0) || (k * dt - d).abs() > 1e-9 * d || k < 2.0 {
                return Err(Error::Config(format!("dt = {dt} does not divide the delay {d}")));
            }
            k as usize
        }
        (None, Some(k)) => k,
        (None, None) => cfg.grid.k,
    };
    Ok(Settings {
        seed,
        k,
        paths: cli.paths.unwrap_or(cfg.scenario.paths),
        horizon: cli.horizon.unwrap_or_else(|| cfg.horizon()),
        mu: cli.mu,
        degree: cli.basis_degree.unwrap_or(cfg.scenario.value.basis_degree),
        overrides: parse_tolerances(&cli.tolerances)?,
        cfg,
    })
}

fn run_pipeline(cmd: &Command, s: &Settings, out: &mut Out) -> Result<Vec<Check>> {
    let mut sess = Session::new(s)?;
    let mut checks = Vec::new();
    match cmd {
        Command::Simulate => checks.extend(sess.simulate(out)?),
        Command::LiftCheck => checks.extend(sess.lift_check(out)?),
        Command::Operators => checks.extend(sess.operators(out)?),
        Command::HamiltonianCheck => checks.extend(sess.hamiltonian_check(out)?),
        Command::Value => checks.extend(sess.value(out)?),
        Command::Dpp => checks.extend(sess.dpp(out)?),
        Command::HjbResidual => checks.extend(sess.hjb(out)?),
        Command::Scenario { .. } | Command::All => {
            checks.extend(sess.simulate(out)?);
            checks.extend(sess.lift_check(out)?);
            checks.extend(sess.operators(out)?);
            checks.extend(sess.hamiltonian_check(out)?);
            checks.extend(sess.value(out)?);
            checks.extend(sess.dpp(out)?);
            checks.extend(sess.hjb(out)?);
        }
    }
    Ok(checks)
}

fn execute(cli: &Cli) -> Result<i32> {
    let started = Instant::now();
    let cmd = cli.command.clone().unwrap_or(Command::All);
    let cfg = match (&cmd, &cli.config) {
        (Command::Scenario { name }, _) => Config::template(name)?,
        (_, Some(p)) => Config::load(p)?,
        (_, None) => Config::template("advertising")?,
    };
    let settings = resolve(cli, cfg)?;
    let mut out = Out::new(&cli.out_dir)?;
    let checks = run_pipeline(&cmd, &settings, &mut out)?;
    for c in &checks {
        println!(
            "{} {:<28} [{}] value={:e} threshold={:e}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.module,
            c.value,
            c.threshold
        );
    }
    let failed: Vec<&Check> = checks.iter().filter(|c| !c.pass).collect();
    if !failed.is_empty() {
        out.json(
            "failure.json",
            &Failure {
                command: cmd.label(),
                failed: failed.clone(),
            },
        )?;
    }
    let mut files = out.files.clone();
    files.push("manifest.json".into());
    let manifest = Manifest {
        command: cmd.label(),
        config: cli.config.as_ref().map(|p| p.display().to_string()),
        seed: settings.seed,
        grid_k: settings.k,
        paths: settings.paths,
        horizon: settings.horizon,
        tolerance_overrides: settings.overrides.clone(),
        out_dir: out.dir().display().to_string(),
        version: env!("CARGO_PKG_VERSION"),
        runtime_seconds: started.elapsed().as_secs_f64(),
        files,
    };
    out.json("manifest.json", &manifest)?;
    Ok(if failed.is_empty() { 0 } else { 2 })
}

fn list_checks() -> std::io::Result<()> {
    use std::io::Write;
    let mut w = std::io::stdout().lock();
    for (cmd, name, op) in CHECKS {
        writeln!(w, "{cmd:<18} {name:<28} {op}")?;
    }
    writeln!(w)?;
    writeln!(w, "tolerances (override with --tolerance name=value):")?;
    for (n, v) in TOLERANCES {
        writeln!(w, "  {n:<28} {v:e}")?;
    }
    Ok(())
}

/// Parses arguments, runs and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if cli.list_checks {
        let _ = list_checks();
        return 0;
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.module());
            if matches!(e, Error::CertificateFailed { .. }) {
                2
            } else {
                1
            }
        }
    }
}
