//! Command-line front end: `validate`, `solve` and `simulate`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::baselines::{solve as solve_baseline, BaselineConfig, ConstraintHandling, RawProblem};
use crate::constraints::build_feasible_set_unchecked;
use crate::domain::Scenario;
use crate::error::{Error, Result};
use crate::harness::{
    degradation_percent, forecast_for_slot, run_mpc_day, ErrorProfile, RunConfig, SimulationTrace,
    SolverKind,
};
use crate::io::{
    describe, error_profile_toml, load_error_profile, load_scenario, write_convergence,
    write_pareto, write_summary, write_trace, RunSummary, Summary,
};
use crate::laguerre::{build_basis, build_prediction, StateSpaceModel};
use crate::moea::{evolve, select_knee, MoeaConfig, Problem, Scored};
use crate::sampler::derive_seed;

/// Environment variable holding the worker thread count.
pub const WORKERS_ENV: &str = "MOMPC_WORKERS";

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

const TAG_COMMAND_SOLVE: u64 = 201;
const TAG_COMMAND_SIMULATE: u64 = 202;

#[derive(Debug, Parser)]
#[command(name = "mompc", version, about = "Multiobjective MPC for home energy management")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario and configuration and print the effective parameters.
    Validate(RunArgs),
    /// Solve one prediction horizon and write its Pareto front.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// One-based slot at which to solve.
        #[arg(long, default_value_t = 1)]
        slot: usize,
    },
    /// Simulate a full day in receding horizon.
    Simulate(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Series CSV; defaults to the scenario's `series` entry.
    #[arg(long)]
    pub series: Option<PathBuf>,
    /// proposed, penalty or cdom; repeat for several.
    #[arg(long = "solver", default_value = "proposed")]
    pub solvers: Vec<String>,
    /// Repeat for several seeds.
    #[arg(long = "seed", default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 200)]
    pub pop: usize,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, default_value_t = 20)]
    pub horizon: usize,
    #[arg(long, default_value_t = 15)]
    pub laguerre_order: usize,
    #[arg(long, default_value_t = 0.8)]
    pub laguerre_pole: f64,
    #[arg(long, default_value_t = 1e4)]
    pub penalty_weight: f64,
    #[arg(long, default_value_t = 0.2)]
    pub crossover_rate: f64,
    #[arg(long, default_value_t = 0.8)]
    pub mutation_rate: f64,
    /// Error profile TOML, or `none` for perfect forecasts only.
    #[arg(long, default_value = "none")]
    pub error_profile: String,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

/// Everything a command needs, parsed and checked.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub scenario_path: PathBuf,
    pub scenario: Scenario,
    pub solvers: Vec<SolverKind>,
    pub seeds: Vec<u64>,
    pub config: RunConfig,
    pub error_profile: Option<ErrorProfile>,
    pub out: PathBuf,
}

impl RunManifest {
    pub fn from_args(args: &RunArgs) -> Result<Self> {
        let mut bad = Vec::new();
        let scenario = load_scenario(&args.scenario, args.series.as_deref());
        let mut solvers = Vec::new();
        for s in &args.solvers {
            match s.parse::<SolverKind>() {
                Ok(k) if !solvers.contains(&k) => solvers.push(k),
                Ok(_) => {}
                Err(e) => bad.push(format!("--solver: {e}")),
            }
        }
        let mut seeds = Vec::new();
        for &s in &args.seeds {
            if !seeds.contains(&s) {
                seeds.push(s);
            }
        }
        if seeds.is_empty() {
            bad.push("--seed: at least one seed is required".into());
        }
        let config = RunConfig {
            moea: MoeaConfig {
                population_size: args.pop,
                max_iterations: args.iters,
                crossover_rate: args.crossover_rate,
                mutation_rate: args.mutation_rate,
                seed: 0,
            },
            laguerre_pole: args.laguerre_pole,
            laguerre_order: args.laguerre_order,
            horizon: args.horizon,
            penalty_weight: args.penalty_weight,
        };
        bad.extend(config.violations().into_iter().map(|v| format!("config: {v}")));
        let error_profile = if args.error_profile == "none" {
            None
        } else {
            match load_error_profile(Path::new(&args.error_profile)) {
                Ok(p) => Some(p),
                Err(Error::Validation(v)) => {
                    bad.extend(v);
                    None
                }
                Err(e) => return Err(e),
            }
        };
        let scenario = match scenario {
            Ok(s) => s,
            Err(Error::Validation(v)) => {
                bad.extend(v);
                return Err(Error::Validation(bad));
            }
            Err(e) => return Err(e),
        };
        if !bad.is_empty() {
            return Err(Error::Validation(bad));
        }
        Ok(RunManifest {
            scenario_path: args.scenario.clone(),
            scenario,
            solvers,
            seeds,
            config,
            error_profile,
            out: args.out.clone(),
        })
    }

    /// Run configuration for one command, solver and seed.
    pub fn config_for(&self, command: u64, solver: SolverKind, seed: u64) -> RunConfig {
        let mut c = self.config.clone();
        c.moea.seed = derive_seed(seed, &[command, solver as u64]);
        c
    }

    /// The seed does not depend on the solver, so paired runs see the same
    /// forecasts.
    pub fn simulate_config(&self, seed: u64) -> RunConfig {
        let mut c = self.config.clone();
        c.moea.seed = derive_seed(seed, &[TAG_COMMAND_SIMULATE]);
        c
    }

    pub fn run_dir(&self, solver: SolverKind, seed: u64) -> PathBuf {
        self.out.join(solver.name()).join(format!("seed_{seed}"))
    }
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Parameter(format!("{WORKERS_ENV}={v:?} is not a positive integer")))?;
        if n == 0 {
            return Err(Error::Parameter(format!("{WORKERS_ENV} must be at least 1")));
        }
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))
}

pub fn cmd_validate(m: &RunManifest) -> String {
    let c = &m.config;
    let mut s = describe(&m.scenario);
    s.push_str(&format!(
        "solvers: {}\nseeds: {}\n",
        m.solvers.iter().map(|k| k.name()).collect::<Vec<_>>().join(", "),
        m.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(", "),
    ));
    s.push_str(&format!(
        "search: population {}, iterations {}, crossover rate {}, mutation rate {}\n",
        c.moea.population_size, c.moea.max_iterations, c.moea.crossover_rate, c.moea.mutation_rate
    ));
    s.push_str(&format!(
        "laguerre: pole {}, order {}, horizon {}\npenalty weight: {}\n",
        c.laguerre_pole, c.laguerre_order, c.horizon, c.penalty_weight
    ));
    match &m.error_profile {
        Some(p) => {
            s.push_str("error profile:\n");
            for line in error_profile_toml(p).lines().filter(|l| !l.is_empty()) {
                s.push_str(&format!("  {line}\n"));
            }
        }
        None => s.push_str("error profile: none\n"),
    }
    s
}

/// One horizon solve at `slot` (one-based) from the scenario's initial state.
pub fn cmd_solve(m: &RunManifest, slot: usize) -> Result<Vec<PathBuf>> {
    let s = &m.scenario;
    if slot == 0 || slot > s.slot_count() {
        return Err(Error::Parameter(format!("--slot {slot} outside [1, {}]", s.slot_count())));
    }
    let t = slot - 1;
    let profile = m.error_profile.unwrap_or_else(ErrorProfile::zero);
    let mut written = Vec::new();
    for &solver in &m.solvers {
        for &seed in &m.seeds {
            let config = m.config_for(TAG_COMMAND_SOLVE, solver, seed);
            let forecast = forecast_for_slot(s, &config, &profile, t)?;
            let horizon = forecast.horizon();
            let energy = s.battery.initial_energy;
            let (front, knee, log) = match solver {
                SolverKind::Proposed => {
                    let basis = build_basis(config.laguerre_pole, config.laguerre_order, horizon)?;
                    let model = StateSpaceModel::new(s.battery.leakage_per_slot, s.dt(), s.power_flexible.len());
                    let ops = build_prediction(&basis, model);
                    let set = build_feasible_set_unchecked(s, &basis, &ops, [energy, 0.0], t)?;
                    let problem = Problem::new(s, &set, &forecast, &basis, t)?;
                    let r = evolve(&problem, &config.moea)?;
                    let pairs: Vec<(f64, f64)> = r.front.iter().map(Scored::pair).collect();
                    let knee = select_knee(&pairs);
                    (pairs, knee, r.log)
                }
                SolverKind::Penalty | SolverKind::ConstraintDominated => {
                    let handling = if solver == SolverKind::Penalty {
                        ConstraintHandling::Penalty
                    } else {
                        ConstraintHandling::ConstraintDomination
                    };
                    let problem = RawProblem::new(s, &forecast, t, energy, &[])?;
                    let bc = BaselineConfig {
                        moea: config.moea.clone(),
                        penalty_weight: config.penalty_weight,
                        ..BaselineConfig::default()
                    };
                    let r = solve_baseline(&problem, &bc, handling)?;
                    let pairs: Vec<(f64, f64)> = r.front.iter().map(Scored::pair).collect();
                    let knee = select_knee(&pairs);
                    (pairs, knee, r.log)
                }
            };
            let dir = m.run_dir(solver, seed);
            let pareto = dir.join(format!("pareto_{slot}.csv"));
            write_pareto(&pareto, &front, knee)?;
            let conv = dir.join("convergence.csv");
            write_convergence(&conv, &[(solver.name(), slot, &log)])?;
            written.push(pareto);
            written.push(conv);
        }
    }
    Ok(written)
}

struct Job {
    solver: SolverKind,
    seed: u64,
    with_errors: bool,
}

/// Full-day runs for every solver and seed, perfect forecasts first and the
/// error profile second when one is given.
pub fn cmd_simulate(m: &RunManifest) -> Result<Summary> {
    let mut jobs = Vec::new();
    for &solver in &m.solvers {
        for &seed in &m.seeds {
            jobs.push(Job { solver, seed, with_errors: false });
            if m.error_profile.is_some() {
                jobs.push(Job { solver, seed, with_errors: true });
            }
        }
    }
    let traces: Vec<SimulationTrace> = jobs
        .par_iter()
        .map(|job| {
            let config = m.simulate_config(job.seed);
            let profile = if job.with_errors {
                m.error_profile.unwrap_or_else(ErrorProfile::zero)
            } else {
                ErrorProfile::zero()
            };
            let trace = run_mpc_day(&m.scenario, job.solver, &config, &profile)?;
            let dir = m
                .run_dir(job.solver, job.seed)
                .join(if job.with_errors { "with_errors" } else { "perfect" });
            write_trace(&dir, &m.scenario, &trace)?;
            Ok(trace)
        })
        .collect::<Result<_>>()?;

    let cost_of = |solver: SolverKind, seed: u64, with_errors: bool| {
        jobs.iter()
            .zip(&traces)
            .find(|(j, _)| j.solver == solver && j.seed == seed && j.with_errors == with_errors)
            .map(|(_, t)| t.total_cost)
    };
    let mut summary = Summary {
        scenario: m.scenario_path.display().to_string(),
        run: Vec::new(),
    };
    for (job, trace) in jobs.iter().zip(&traces) {
        let (degradation_pct, self_degradation_pct) = if job.with_errors {
            (
                cost_of(SolverKind::Proposed, job.seed, false).map(|r| degradation_percent(trace.total_cost, r)),
                cost_of(job.solver, job.seed, false).map(|r| degradation_percent(trace.total_cost, r)),
            )
        } else {
            (None, None)
        };
        summary.run.push(RunSummary {
            solver: job.solver.name().to_string(),
            seed: job.seed,
            forecast: if job.with_errors { "with_errors" } else { "perfect" }.to_string(),
            total_cost: trace.total_cost,
            total_dissatisfaction: trace.total_dissatisfaction,
            degradation_pct,
            self_degradation_pct,
            infeasible_slots: trace.solves.iter().filter(|s| !s.found_feasible).count(),
            wall_seconds: trace.wall_seconds,
        });
    }
    write_summary(&m.out.join("summary.toml"), &summary)?;
    Ok(summary)
}

fn report(e: &Error, code: u8) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(code)
}

/// Parses arguments, runs the command and maps failures to exit codes.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let pool = match worker_pool() {
        Ok(p) => p,
        Err(e) => return report(&e, EXIT_VALIDATION),
    };
    let (args, slot) = match &cli.command {
        Command::Validate(a) | Command::Simulate(a) => (a, None),
        Command::Solve { run, slot } => (run, Some(*slot)),
    };
    let manifest = match RunManifest::from_args(args) {
        Ok(m) => m,
        Err(e) => return report(&e, EXIT_VALIDATION),
    };
    let outcome = pool.install(|| match &cli.command {
        Command::Validate(_) => {
            print!("{}", cmd_validate(&manifest));
            Ok(())
        }
        Command::Solve { .. } => cmd_solve(&manifest, slot.unwrap_or(1)).map(|files| {
            for f in files {
                println!("wrote {}", f.display());
            }
        }),
        Command::Simulate(_) => cmd_simulate(&manifest).map(|s| {
            for r in &s.run {
                println!(
                    "{} seed {} {}: cost {:.4}, dissatisfaction {:.4}",
                    r.solver, r.seed, r.forecast, r.total_cost, r.total_dissatisfaction
                );
            }
        }),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if matches!(e, Error::Parameter(_) | Error::Validation(_)) => report(&e, EXIT_VALIDATION),
        Err(e) => report(&e, EXIT_RUNTIME),
    }
}
