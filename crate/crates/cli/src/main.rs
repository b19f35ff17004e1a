//! `persuasion`: solve, verify and simulate scenarios from JSON files.
//!
//! Exit codes: 0 success, 1 a verification failed, 2 bad input, 3 numeric failure.

mod experiments;
mod scenario;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use persuasion_core::envelope::cav_grid;
use persuasion_core::sim::{
    discount_horizon, discounted_replications, renewal_stats, strategy_couple_down, strategy_sigma_star,
    truncation_bound, Estimate, FullRevelation, PolicyStrategy, Strategy, Uninformative,
};
use persuasion_core::solver::{closed_form_x1, solve, solve_cesaro, Mode};
use persuasion_core::Error;

use experiments::Which;
use scenario::{Loaded, Overrides, ScenarioFile};
use table::ResultTable;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

/// Failures of the computation itself are numeric; everything else is a
/// problem with what was asked for.
pub fn core_err(e: Error) -> CliError {
    match e {
        Error::NoConvergence { .. } | Error::SingularSystem(_) | Error::AllRejected { .. } | Error::DegenerateTail { .. } => {
            CliError::Numeric(e.to_string())
        }
        _ => CliError::Input(e.to_string()),
    }
}

#[derive(Parser)]
#[command(name = "persuasion", version, about = "Markovian persuasion with stochastic state revelations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve on the belief grid and write values and optimal splits.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Defaults to `reveal`, or `no_reveal` when x = 0.
        #[arg(long, value_enum)]
        mode: Option<SolveMode>,
        /// Horizon for `--mode cesaro`.
        #[arg(long, default_value_t = 200)]
        horizon: usize,
    },
    /// Run one of the built-in checks; exits 1 if it fails.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        which: Which,
    },
    /// Monte-Carlo discounted payoffs of a sender strategy.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// optimal, sigma_star, couple:Y, null or full.
        #[arg(long, default_value = "optimal")]
        strategy: String,
        /// Stages per replication; by default long enough that the discounted tail is negligible.
        #[arg(long)]
        horizon: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    x: Option<f64>,
    /// Grid resolution.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    /// CSV destination; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<Loaded, CliError> {
        let o = Overrides {
            lambda: self.lambda,
            x: self.x,
            grid: self.grid,
            tol: self.tol,
            seed: self.seed,
            samples: self.samples,
        };
        ScenarioFile::read(&self.scenario)?.apply(&o).load()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SolveMode {
    Reveal,
    NoReveal,
    /// The linear-system solution, valid at x = 1.
    ClosedForm,
    /// Finite-horizon average payoff by backward induction.
    Cesaro,
}

fn value_name(v: impl ValueEnum) -> String {
    v.to_possible_value().map(|p| p.get_name().to_string()).unwrap_or_default()
}

/// A table whose metadata block starts with everything needed to rerun it.
fn table_with(l: &Loaded, command: &str, columns: Vec<String>) -> ResultTable {
    let mut t = ResultTable::new(columns);
    t.meta("command", command)
        .meta("version", env!("CARGO_PKG_VERSION"))
        .meta("scenario_sha256", l.hash())
        .meta("scenario", l.file.to_json())
        .meta("seed", l.seed)
        .meta("samples", l.samples)
        .meta("grid_resolution", l.resolution())
        .meta("tolerance", format!("{:e}", l.scenario.tol));
    t
}

fn cmd_solve(l: &Loaded, mode: Option<SolveMode>, horizon: usize) -> Result<ResultTable, CliError> {
    let sc = &l.scenario;
    let k = sc.k();
    let mode = mode.unwrap_or(if sc.x > 0.0 { SolveMode::Reveal } else { SolveMode::NoReveal });
    let mut columns = vec!["index".to_string()];
    columns.extend((1..=k).map(|s| format!("q{s}")));
    columns.extend(["u", "cav_u", "value"].map(String::from));
    let with_policy = matches!(mode, SolveMode::Reveal | SolveMode::NoReveal);
    if with_policy {
        for j in 1..=k {
            columns.push(format!("atom{j}"));
            columns.push(format!("weight{j}"));
        }
    }
    let mut t = table_with(l, "solve", columns);
    t.meta("mode", value_name(mode));

    let cav = cav_grid(&sc.u).cav;
    let (value, policy) = match mode {
        SolveMode::Reveal | SolveMode::NoReveal => {
            let m = if mode == SolveMode::Reveal { Mode::Reveal } else { Mode::NoReveal };
            let r = solve(sc, m).map_err(core_err)?;
            t.meta("iterations", r.iterations);
            t.meta_num("residual", r.residual)?;
            (r.value, Some(r.policy))
        }
        SolveMode::ClosedForm => {
            if sc.x != 1.0 {
                return Err(CliError::Input(format!("the closed form needs x = 1, got {}", sc.x)));
            }
            (closed_form_x1(sc).map_err(core_err)?, None)
        }
        SolveMode::Cesaro => {
            t.meta("horizon", horizon);
            (solve_cesaro(sc, horizon).map_err(core_err)?, None)
        }
    };
    let xi = (0..k)
        .map(|s| value.interpolate_slice(sc.chain.row(s)?))
        .collect::<Result<Vec<_>, _>>()
        .map_err(core_err)?;
    t.meta_nums("xi", &xi)?;

    let grid = sc.grid();
    for i in 0..grid.len() {
        let mut row = vec![i as f64];
        row.extend(grid.coords(i));
        row.extend([sc.u.value(i), cav.value(i), value.value(i)]);
        if let Some(p) = &policy {
            let s = p.grid_split(i);
            for j in 0..k {
                // Unused atom slots point at the grid point itself with weight 0.
                row.push(s.indices.get(j).copied().unwrap_or(i) as f64);
                row.push(s.weights.get(j).copied().unwrap_or(0.0));
            }
        }
        t.push(row)?;
    }
    Ok(t)
}

fn cmd_verify(l: &Loaded, which: Which) -> Result<(ResultTable, bool), CliError> {
    let v = experiments::run(which, l)?;
    let mut t = table_with(l, "verify", v.table.columns().to_vec());
    let name = value_name(which);
    t.meta("which", &name);
    t.meta_num("check_tolerance", v.tolerance)?;
    t.meta("verdict", if v.pass { "pass" } else { "fail" });
    t.meta("summary", &v.summary);
    for (k, m) in v.table.meta_entries() {
        t.meta(k, m);
    }
    for row in v.table.rows() {
        t.push(row.clone())?;
    }
    eprintln!("{} {name} (tolerance {:e}): {}", if v.pass { "PASS" } else { "FAIL" }, v.tolerance, v.summary);
    Ok((t, v.pass))
}

fn cmd_simulate(l: &Loaded, strategy: &str, horizon: Option<usize>) -> Result<ResultTable, CliError> {
    let sc = &l.scenario;
    let k = sc.k();
    let mode = if sc.x > 0.0 { Mode::Reveal } else { Mode::NoReveal };
    let mut reference = None;
    let strat: Box<dyn Strategy> = match strategy {
        "optimal" => {
            let r = solve(sc, mode).map_err(core_err)?;
            reference = Some(r.value.interpolate(&l.prior).map_err(core_err)?);
            Box::new(PolicyStrategy::new(&r.policy))
        }
        "sigma_star" => Box::new(strategy_sigma_star(sc).map_err(core_err)?),
        "null" => Box::new(Uninformative::new(k)),
        "full" => Box::new(FullRevelation::new(k)),
        s => {
            let y = s
                .strip_prefix("couple:")
                .ok_or_else(|| CliError::Input(format!("unknown strategy {s:?}")))?
                .parse::<f64>()
                .map_err(|e| CliError::Input(format!("bad rate in {s:?}: {e}")))?;
            if y.is_nan() || y <= sc.x {
                return Err(core_err(Error::BadRates { x: sc.x, y }));
            }
            let sy = sc.with_x(y).map_err(|_| core_err(Error::BadRates { x: sc.x, y }))?;
            let r = solve(&sy, Mode::Reveal).map_err(core_err)?;
            reference = Some(r.value.interpolate(&l.prior).map_err(core_err)?);
            Box::new(strategy_couple_down(&r.policy, sc.x, y).map_err(core_err)?)
        }
    };
    let horizon = horizon.unwrap_or_else(|| discount_horizon(sc.lambda, sc.u.sup_norm()));
    let reps = discounted_replications(sc, strat.as_ref(), &l.prior, horizon, l.samples, l.seed).map_err(core_err)?;

    let mut t = table_with(
        l,
        "simulate",
        ["replication", "payoff", "revelations", "last_revelation"].map(String::from).to_vec(),
    );
    t.meta("strategy", strategy).meta("horizon", horizon);
    t.meta_nums("prior", l.prior.as_slice())?;
    let payoffs: Vec<f64> = reps.iter().map(|r| r.payoff).collect();
    let est = Estimate::from_samples(&payoffs, truncation_bound(sc, horizon));
    t.meta_num("mean", est.mean)?;
    t.meta_num("std_error", est.std_error)?;
    t.meta_num("truncation", est.truncation)?;
    if let Some(v) = reference {
        t.meta_num("solved_value", v)?;
    }
    let (mut revelations, mut span) = (0usize, 0usize);
    for (i, r) in reps.iter().enumerate() {
        let stats = renewal_stats(&r.reveals);
        revelations += stats.t_n;
        span += stats.ell_n;
        t.push(vec![i as f64, r.payoff, stats.t_n as f64, stats.ell_n as f64])?;
    }
    t.meta_num("revelations_per_stage", revelations as f64 / (horizon * reps.len()) as f64)?;
    if revelations > 0 {
        t.meta_num("mean_kappa", span as f64 / revelations as f64)?;
    }
    eprintln!("mean {:.6} (standard error {:.2e}) over {} replications", est.mean, est.std_error, est.samples);
    Ok(t)
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let (table, pass, out) = match &cli.command {
        Command::Solve { common, mode, horizon } => {
            let l = common.load()?;
            (cmd_solve(&l, *mode, *horizon)?, true, common.out.as_deref())
        }
        Command::Verify { common, which } => {
            let l = common.load()?;
            let (t, pass) = cmd_verify(&l, *which)?;
            (t, pass, common.out.as_deref())
        }
        Command::Simulate { common, strategy, horizon } => {
            let l = common.load()?;
            (cmd_simulate(&l, strategy, *horizon)?, true, common.out.as_deref())
        }
    };
    table.write(out.map(Path::new))?;
    Ok(pass)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
