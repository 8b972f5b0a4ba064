//! The `normprod` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use normprod_core::counting::CountingNumbers;
use normprod_core::engine::{self, ConvergenceMetric, RunConfig};
use normprod_core::generate::{self, CouplingSpec, FieldSpec};
use normprod_core::map_lp::{self, AnnealSchedule};
use normprod_core::model::Model;
use normprod_core::oracle::{self, ExactResult, DEFAULT_MAX_STATES};

use crate::experiment::{self, CouplingFamily, ExperimentKind, ExperimentSpec};
use crate::presets::{Preset, SolverSpec};
use crate::report::{self, g12};
use crate::{uai, Error};

#[derive(Parser, Debug)]
#[command(
    name = "normprod",
    version,
    about = "Norm-product belief propagation on discrete factor graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a random model and write it as a UAI file.
    Gen {
        #[command(subcommand)]
        shape: GenShape,
    },
    /// Run the engine at a fixed temperature and export beliefs.
    Infer(InferArgs),
    /// MAP estimation by convex max-product or annealing.
    Map {
        #[command(subcommand)]
        method: MapMethod,
    },
    /// Exact inference by enumeration or variable elimination.
    Exact(ExactArgs),
    /// Run a seeded batch experiment and write per-row and summary CSVs.
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct GenCommon {
    #[arg(long, default_value_t = 2)]
    states: usize,
    /// `uniform:LO,HI` or `gaussian:SIGMA`
    #[arg(long, default_value = "uniform:-0.05,0.05")]
    field: FieldSpec,
    /// `attractive:OMEGA`, `mixed:OMEGA` or `gaussian:SIGMA`
    #[arg(long, default_value = "attractive:1")]
    coupling: CouplingSpec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum GenShape {
    Grid {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[command(flatten)]
        common: GenCommon,
    },
    Complete {
        #[arg(long)]
        vars: usize,
        #[command(flatten)]
        common: GenCommon,
    },
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long)]
    model: PathBuf,
    /// Allow factors that share more than one variable.
    #[arg(long)]
    allow_overlap: bool,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_sweeps: usize,
    /// Write the per-sweep trace CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MetricArg {
    Auto,
    Message,
    Dual,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExactMethod {
    Enum,
    Ve,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// bethe, trw, trbp, l2, trivial, nmplp or file:PATH
    #[arg(long, default_value = "bethe")]
    counting: Preset,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = MetricArg::Auto)]
    metric: MetricArg,
    #[command(flatten)]
    solve: SolveArgs,
    /// Write the beliefs CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also run the oracle and report marginal errors.
    #[arg(long, value_enum)]
    compare_exact: Option<ExactMethod>,
}

#[derive(Subcommand, Debug)]
enum MapMethod {
    /// Convex max-product at zero temperature.
    Cmp {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "trw")]
        counting: Preset,
        #[command(flatten)]
        solve: SolveArgs,
        /// Write the `var,state,tie` CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Geometric temperature annealing with warm starts.
    Anneal {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "trw")]
        counting: Preset,
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long, default_value_t = 1.0)]
        eps_start: f64,
        #[arg(long, default_value_t = 0.5)]
        ratio: f64,
        #[arg(long, default_value_t = 1e-3)]
        eps_min: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the final beliefs CSV here.
        #[arg(long)]
        beliefs: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct ExactArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value_t = ExactMethod::Ve)]
    method: ExactMethod,
    /// Write the exact marginals CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the exact MAP assignment CSV here.
    #[arg(long)]
    map: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// marginals_grid, marginals_complete, lp_binary_grid or lp_ternary_grid
    #[arg(long)]
    kind: ExperimentKind,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// `START:STOP:STEP` or a comma-separated list; defaults depend on the kind.
    #[arg(long)]
    omega: Option<String>,
    /// Comma-separated solvers, e.g. `bethe,trw,l2` or `max-product,max-trbp,convex-max-product`.
    #[arg(long, value_delimiter = ',', required = true)]
    solvers: Vec<SolverSpec>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// attractive, mixed or gaussian; defaults depend on the kind.
    #[arg(long)]
    coupling: Option<CouplingFamily>,
    #[arg(long)]
    field: Option<FieldSpec>,
    #[arg(long, default_value_t = 10)]
    size: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_sweeps: usize,
    #[arg(long, default_value_t = 1e-3)]
    eps_min: f64,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Row CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Add a wall-time column to the row CSV.
    #[arg(long)]
    timings: bool,
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                1
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::io(path.to_path_buf(), e))
}

fn load_model(args: &ModelArgs) -> Result<Model, Error> {
    let text =
        std::fs::read_to_string(&args.model).map_err(|e| Error::io(args.model.clone(), e))?;
    Ok(uai::read_uai(&text, !args.allow_overlap)?)
}

fn run_config(epsilon: f64, solve: &SolveArgs, metric: ConvergenceMetric) -> RunConfig {
    RunConfig {
        epsilon,
        tol: solve.tol,
        max_sweeps: solve.max_sweeps,
        metric,
        trace_every: if solve.trace.is_some() { 1 } else { 0 },
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(g12).unwrap_or_else(|| "na".into())
}

fn class(counting: &CountingNumbers) -> &'static str {
    if counting.is_convex() {
        "convex"
    } else {
        "non_convex"
    }
}

fn exact(model: &Model, method: ExactMethod) -> Result<ExactResult, Error> {
    Ok(match method {
        ExactMethod::Enum => oracle::enumerate_exact(model, DEFAULT_MAX_STATES)?,
        ExactMethod::Ve => oracle::ve_exact(model, None)?,
    })
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), Error> {
    let mut say = |line: String| {
        let _ = writeln!(out, "{line}");
    };
    match command {
        Command::Gen { shape } => {
            let (model, common) = match shape {
                GenShape::Grid { rows, cols, common } => (
                    generate::grid_model(
                        rows,
                        cols,
                        common.states,
                        &common.field,
                        &common.coupling,
                        common.seed,
                    )?,
                    common,
                ),
                GenShape::Complete { vars, common } => (
                    generate::complete_graph_model(
                        vars,
                        common.states,
                        &common.field,
                        &common.coupling,
                        common.seed,
                    )?,
                    common,
                ),
            };
            write_file(&common.out, &uai::write_uai(&model))?;
            say(format!(
                "vars={} factors={}",
                model.num_vars(),
                model.num_factors()
            ));
        }
        Command::Infer(args) => {
            let model = load_model(&args.model)?;
            let counting = args.counting.build(&model)?;
            let metric = match args.metric {
                MetricArg::Auto => ConvergenceMetric::Auto,
                MetricArg::Message => ConvergenceMetric::MessageDelta,
                MetricArg::Dual => ConvergenceMetric::DualDelta,
            };
            let cfg = run_config(args.epsilon, &args.solve, metric);
            let (beliefs, rep, _) = engine::run(&model, &counting, &cfg)?;
            if let Some(path) = &args.out {
                write_file(path, &report::beliefs_csv(&model, &beliefs))?;
            }
            if let Some(path) = &args.solve.trace {
                write_file(path, &report::trace_csv(&rep.trace))?;
            }
            say(format!(
                "converged={} sweeps={} class={} dual={} primal={} gap={} consistency={}",
                rep.converged,
                rep.sweeps_used,
                class(&counting),
                opt(rep.final_dual),
                opt(rep.final_primal),
                opt(rep.duality_gap()),
                opt(beliefs.consistency_residual)
            ));
            if let Some(method) = args.compare_exact {
                let ex = exact(&model, method)?;
                let errors: Vec<f64> = (0..model.num_vars())
                    .map(|i| {
                        beliefs
                            .b_i(i)
                            .iter()
                            .zip(&ex.marginals_i[i])
                            .map(|(b, p)| (b - p).abs())
                            .fold(0.0, f64::max)
                    })
                    .collect();
                let avg = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
                let max = errors.iter().copied().fold(0.0, f64::max);
                say(format!(
                    "exact_log_z={} avg_error={} max_error={}",
                    g12(ex.log_z),
                    g12(avg),
                    g12(max)
                ));
            }
        }
        Command::Map { method } => match method {
            MapMethod::Cmp {
                model,
                counting,
                solve,
                out,
            } => {
                let model = load_model(&model)?;
                let counting = counting.build(&model)?;
                let cfg = run_config(0.0, &solve, ConvergenceMetric::Auto);
                let (result, rep, _) = map_lp::convex_max_product(&model, &counting, &cfg)?;
                if let Some(path) = &out {
                    write_file(path, &report::map_csv(&result))?;
                }
                if let Some(path) = &solve.trace {
                    write_file(path, &report::trace_csv(&rep.trace))?;
                }
                say(format!(
                    "converged={} sweeps={} energy={} dual={} certificate={}",
                    rep.converged,
                    rep.sweeps_used,
                    g12(result.energy),
                    g12(result.dual_value),
                    result.certificate.as_str()
                ));
            }
            MapMethod::Anneal {
                model,
                counting,
                solve,
                eps_start,
                ratio,
                eps_min,
                out,
                beliefs,
            } => {
                let model = load_model(&model)?;
                let counting = counting.build(&model)?;
                let schedule = AnnealSchedule {
                    eps_start,
                    ratio,
                    eps_min,
                    tol: solve.tol,
                    max_sweeps: solve.max_sweeps,
                    trace_every: if solve.trace.is_some() { 1 } else { 0 },
                };
                let result = map_lp::anneal_lp(&model, &counting, &schedule)?;
                let (assignment, ties) = result.decode();
                if let Some(path) = &out {
                    write_file(path, &report::assignment_csv(assignment.states(), &ties))?;
                }
                if let Some(path) = &beliefs {
                    write_file(path, &report::beliefs_csv(&model, &result.beliefs))?;
                }
                if let Some(path) = &solve.trace {
                    write_file(path, &report::trace_csv(&result.report.trace))?;
                }
                say(format!(
                    "converged={} stages={} sweeps={} linear_energy={} energy={} bound={} ties={} gap={}",
                    result.stages.iter().all(|s| s.converged),
                    result.stages.len(),
                    result.report.sweeps_used,
                    g12(result.linear_energy(&model, &counting)?),
                    g12(model.energy(&assignment)),
                    g12(result.delta),
                    ties.iter().filter(|&&t| t).count(),
                    opt(result.report.duality_gap())
                ));
            }
        },
        Command::Exact(args) => {
            let model = load_model(&args.model)?;
            let ex = exact(&model, args.method)?;
            if let Some(path) = &args.out {
                write_file(path, &report::exact_beliefs_csv(&model, &ex))?;
            }
            if let Some(path) = &args.map {
                let ties = vec![false; model.num_vars()];
                write_file(
                    path,
                    &report::assignment_csv(ex.map_assignment.states(), &ties),
                )?;
            }
            say(format!(
                "log_z={} map_energy={}",
                g12(ex.log_z),
                g12(ex.map_energy)
            ));
        }
        Command::Experiment(args) => {
            let mut spec = ExperimentSpec::new(args.kind, args.solvers);
            spec.trials = args.trials;
            spec.base_seed = args.seed;
            spec.size = args.size;
            spec.tol = args.tol;
            spec.max_sweeps = args.max_sweeps;
            spec.anneal.eps_min = args.eps_min;
            spec.anneal.eps_start = spec.anneal.eps_start.max(args.eps_min);
            spec.threads = args.threads;
            if let Some(grid) = &args.omega {
                spec.omegas = experiment::parse_omega_grid(grid).map_err(Error::Usage)?;
            }
            if let Some(c) = args.coupling {
                spec.coupling = c;
            }
            if let Some(f) = args.field {
                spec.field = f;
            }
            let result = experiment::run_experiment(&spec)?;
            let rows = experiment::rows_csv(&result.rows, args.timings);
            let summary = experiment::summary_csv(&result.summary);
            match &args.out {
                Some(path) => write_file(path, &rows)?,
                None => say(rows.trim_end().to_string()),
            }
            match &args.summary {
                Some(path) => write_file(path, &summary)?,
                None => say(summary.trim_end().to_string()),
            }
        }
    }
    Ok(())
}
