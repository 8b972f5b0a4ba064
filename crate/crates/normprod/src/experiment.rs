//! Seeded experiment harness: random grids or complete graphs, a list of
//! solvers, one CSV row per `(trial, ω, solver)` and a per-`(ω, solver)`
//! summary.
//!
//! Trial `t` draws its model from seed `base_seed + t` for every `ω`, so the
//! output does not depend on how cells are scheduled across threads. Rows are
//! sorted by `(trial, ω, solver)` before writing.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use normprod_core::counting::CountingNumbers;
use normprod_core::engine::{self, ConvergenceMetric, RunConfig};
use normprod_core::generate::{self, CouplingSpec, FieldSpec};
use normprod_core::map_lp::{self, AnnealSchedule, Certificate};
use normprod_core::model::Model;
use normprod_core::oracle::{self, ExactResult};
use rayon::prelude::*;

use crate::presets::{Mode, SolverSpec};
use crate::report::g12;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    MarginalsGrid,
    MarginalsComplete,
    LpBinaryGrid,
    LpTernaryGrid,
}

impl ExperimentKind {
    pub fn is_marginal(self) -> bool {
        matches!(
            self,
            ExperimentKind::MarginalsGrid | ExperimentKind::MarginalsComplete
        )
    }

    fn states(self) -> usize {
        match self {
            ExperimentKind::LpTernaryGrid => 3,
            _ => 2,
        }
    }

    fn default_epsilon(self) -> f64 {
        if self.is_marginal() {
            1.0
        } else {
            0.0
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "marginals_grid" => Ok(ExperimentKind::MarginalsGrid),
            "marginals_complete" => Ok(ExperimentKind::MarginalsComplete),
            "lp_binary_grid" => Ok(ExperimentKind::LpBinaryGrid),
            "lp_ternary_grid" => Ok(ExperimentKind::LpTernaryGrid),
            _ => Err(format!(
                "unknown experiment kind {s:?} (expected marginals_grid, marginals_complete, lp_binary_grid or lp_ternary_grid)"
            )),
        }
    }
}

/// How `ω` turns into a coupling distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingFamily {
    Attractive,
    Mixed,
    /// `ω` is the standard deviation.
    Gaussian,
}

impl CouplingFamily {
    fn spec(self, omega: f64) -> CouplingSpec {
        match self {
            CouplingFamily::Attractive => CouplingSpec::Attractive { omega },
            CouplingFamily::Mixed => CouplingSpec::Mixed { omega },
            CouplingFamily::Gaussian => CouplingSpec::Gaussian { sigma: omega },
        }
    }
}

impl FromStr for CouplingFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "attractive" => Ok(CouplingFamily::Attractive),
            "mixed" => Ok(CouplingFamily::Mixed),
            "gaussian" => Ok(CouplingFamily::Gaussian),
            _ => Err(format!(
                "unknown coupling family {s:?} (expected attractive, mixed or gaussian)"
            )),
        }
    }
}

/// Parse `START:STOP:STEP` (inclusive of `STOP` up to rounding) or a
/// comma-separated list.
pub fn parse_omega_grid(s: &str) -> Result<Vec<f64>, String> {
    let bad = || format!("bad omega grid {s:?}");
    let values: Vec<f64> = if s.contains(':') {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| start + k as f64 * step).collect()
    } else {
        s.split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?
    };
    if values.is_empty() || values.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
        return Err(format!("omega values must be finite and >= 0 in {s:?}"));
    }
    Ok(values)
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub trials: usize,
    pub omegas: Vec<f64>,
    pub solvers: Vec<SolverSpec>,
    pub base_seed: u64,
    pub coupling: CouplingFamily,
    pub field: FieldSpec,
    /// Grid side length, or vertex count for complete graphs.
    pub size: usize,
    pub tol: f64,
    pub max_sweeps: usize,
    pub anneal: AnnealSchedule,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
}

impl ExperimentSpec {
    /// The defaults of each kind: 10×10 grids or 10-vertex complete graphs,
    /// 100 trials; marginal kinds use attractive couplings, fields from
    /// `U[-0.05, 0.05]` and `ω ∈ 0:2:0.25`; LP kinds use standard normal
    /// fields and couplings.
    pub fn new(kind: ExperimentKind, solvers: Vec<SolverSpec>) -> Self {
        let (coupling, field, omegas) = if kind.is_marginal() {
            (
                CouplingFamily::Attractive,
                FieldSpec::Uniform {
                    lo: -0.05,
                    hi: 0.05,
                },
                parse_omega_grid("0:2:0.25").unwrap_or_default(),
            )
        } else {
            (
                CouplingFamily::Gaussian,
                FieldSpec::Gaussian { sigma: 1.0 },
                vec![1.0],
            )
        };
        Self {
            kind,
            trials: 100,
            omegas,
            solvers,
            base_seed: 0,
            coupling,
            field,
            size: 10,
            tol: 1e-8,
            max_sweeps: 10_000,
            anneal: AnnealSchedule {
                trace_every: 0,
                ..AnnealSchedule::default()
            },
            threads: 0,
        }
    }

    fn validate(&self) -> Result<(), Error> {
        let usage = |m: &str| Err(Error::Usage(m.to_string()));
        if self.trials == 0 {
            return usage("trials must be at least 1");
        }
        if self.solvers.is_empty() {
            return usage("at least one solver is required");
        }
        if self.size == 0 {
            return usage("size must be at least 1");
        }
        if self.omegas.is_empty() || self.omegas.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return usage("omega values must be finite and >= 0");
        }
        if self.kind.is_marginal() && self.solvers.iter().any(|s| s.mode == Mode::Anneal) {
            return usage("annealing solvers only apply to LP experiments");
        }
        self.anneal.stages()?;
        Ok(())
    }

    fn model(&self, omega: f64, seed: u64) -> Result<Model, Error> {
        let coupling = self.coupling.spec(omega);
        let states = self.kind.states();
        Ok(match self.kind {
            ExperimentKind::MarginalsComplete => {
                generate::complete_graph_model(self.size, states, &self.field, &coupling, seed)?
            }
            _ => generate::grid_model(self.size, self.size, states, &self.field, &coupling, seed)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub trial: usize,
    pub seed: u64,
    pub omega: f64,
    pub solver: String,
    pub converged: bool,
    /// Whether the row enters the summary error mean. Non-converged runs of
    /// non-convex counting numbers are excluded.
    pub included: bool,
    pub sweeps: usize,
    /// `(1/N) Σ_i |b_i(1) − p_i(1)|` (marginal kinds).
    pub avg_l1_error: Option<f64>,
    /// Dual objective at `ε = 0` (LP kinds; unavailable for non-convex counting).
    pub dual_value: Option<f64>,
    /// Energy of the decoded assignment (LP kinds).
    pub energy: Option<f64>,
    pub certificate: Option<Certificate>,
    pub wall_time: f64,
    omega_index: usize,
    solver_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub omega: f64,
    pub solver: String,
    pub rows: usize,
    pub convergence_rate: f64,
    pub included: usize,
    pub mean_l1_error: Option<f64>,
    pub mean_sweeps: f64,
    pub mean_dual: Option<f64>,
    pub mean_energy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ExperimentRow>,
    pub summary: Vec<SummaryRow>,
}

struct Outcome {
    converged: bool,
    sweeps: usize,
    avg_l1_error: Option<f64>,
    dual_value: Option<f64>,
    energy: Option<f64>,
    certificate: Option<Certificate>,
}

fn avg_l1_error(beliefs: &engine::BeliefSet, exact: &ExactResult) -> f64 {
    let n = exact.marginals_i.len();
    let total: f64 = (0..n)
        .map(|i| {
            let b = beliefs.b_i(i);
            (b.get(1).copied().unwrap_or(0.0) - exact.marginals_i[i].get(1).copied().unwrap_or(0.0))
                .abs()
        })
        .sum();
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

fn run_solver(
    spec: &ExperimentSpec,
    solver: &SolverSpec,
    model: &Model,
    counting: &CountingNumbers,
    exact: Option<&ExactResult>,
) -> Result<Outcome, Error> {
    let eps = match solver.mode {
        Mode::Epsilon(e) => e.unwrap_or(spec.kind.default_epsilon()),
        Mode::Anneal => {
            let schedule = AnnealSchedule {
                tol: spec.tol,
                max_sweeps: spec.max_sweeps,
                ..spec.anneal
            };
            let result = map_lp::anneal_lp(model, counting, &schedule)?;
            let (assignment, ties) = result.decode();
            let dual = engine::dual_objective(model, counting, 0.0, &result.messages)?;
            return Ok(Outcome {
                converged: result.stages.last().is_some_and(|s| s.converged),
                sweeps: result.report.sweeps_used,
                avg_l1_error: None,
                dual_value: Some(dual),
                energy: Some(model.energy(&assignment)),
                certificate: Some(if ties.iter().any(|&t| t) {
                    Certificate::TiesPresent
                } else {
                    Certificate::IntegralNoTies
                }),
            });
        }
    };
    let cfg = RunConfig {
        epsilon: eps,
        tol: spec.tol,
        max_sweeps: spec.max_sweeps,
        metric: ConvergenceMetric::Auto,
        trace_every: 0,
    };
    if spec.kind.is_marginal() {
        let (beliefs, report, _) = engine::run(model, counting, &cfg)?;
        return Ok(Outcome {
            converged: report.converged,
            sweeps: report.sweeps_used,
            avg_l1_error: exact.map(|ex| avg_l1_error(&beliefs, ex)),
            dual_value: None,
            energy: None,
            certificate: None,
        });
    }
    if eps == 0.0 && counting.is_convex() {
        let (result, report, _) = map_lp::convex_max_product(model, counting, &cfg)?;
        return Ok(Outcome {
            converged: report.converged,
            sweeps: report.sweeps_used,
            avg_l1_error: None,
            dual_value: Some(result.dual_value),
            energy: Some(result.energy),
            certificate: Some(result.certificate),
        });
    }
    let (beliefs, report, state) = engine::run(model, counting, &cfg)?;
    let (assignment, _) = map_lp::decode(&beliefs.scores);
    let dual_value = if counting.is_convex() {
        Some(engine::dual_objective(model, counting, 0.0, &state)?)
    } else {
        None
    };
    Ok(Outcome {
        converged: report.converged,
        sweeps: report.sweeps_used,
        avg_l1_error: None,
        dual_value,
        energy: Some(model.energy(&assignment)),
        certificate: None,
    })
}

fn run_cell(
    spec: &ExperimentSpec,
    trial: usize,
    omega_index: usize,
) -> Result<Vec<ExperimentRow>, Error> {
    let omega = spec.omegas[omega_index];
    let seed = spec.base_seed.wrapping_add(trial as u64);
    let model = spec.model(omega, seed)?;
    let exact = if spec.kind.is_marginal() {
        Some(oracle::ve_exact(&model, None)?)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(spec.solvers.len());
    for (solver_index, solver) in spec.solvers.iter().enumerate() {
        let start = Instant::now();
        let counting = solver.preset.build(&model)?;
        let out = run_solver(spec, solver, &model, &counting, exact.as_ref())?;
        let wall_time = start.elapsed().as_secs_f64();
        rows.push(ExperimentRow {
            trial,
            seed,
            omega,
            solver: solver.label.clone(),
            converged: out.converged,
            included: out.converged || counting.is_convex(),
            sweeps: out.sweeps,
            avg_l1_error: out.avg_l1_error,
            dual_value: out.dual_value,
            energy: out.energy,
            certificate: out.certificate,
            wall_time,
            omega_index,
            solver_index,
        });
    }
    Ok(rows)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn summarize(spec: &ExperimentSpec, rows: &[ExperimentRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for (wi, &omega) in spec.omegas.iter().enumerate() {
        for (si, solver) in spec.solvers.iter().enumerate() {
            let group: Vec<&ExperimentRow> = rows
                .iter()
                .filter(|r| r.omega_index == wi && r.solver_index == si)
                .collect();
            let n = group.len();
            let included: Vec<&&ExperimentRow> = group.iter().filter(|r| r.included).collect();
            out.push(SummaryRow {
                omega,
                solver: solver.label.clone(),
                rows: n,
                convergence_rate: group.iter().filter(|r| r.converged).count() as f64
                    / n.max(1) as f64,
                included: included.len(),
                mean_l1_error: mean(included.iter().filter_map(|r| r.avg_l1_error)),
                mean_sweeps: mean(group.iter().map(|r| r.sweeps as f64)).unwrap_or(0.0),
                mean_dual: mean(group.iter().filter_map(|r| r.dual_value)),
                mean_energy: mean(group.iter().filter_map(|r| r.energy)),
            });
        }
    }
    out
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, Error> {
    spec.validate()?;
    let cells: Vec<(usize, usize)> = (0..spec.trials)
        .flat_map(|t| (0..spec.omegas.len()).map(move |w| (t, w)))
        .collect();
    let work = || -> Result<Vec<Vec<ExperimentRow>>, Error> {
        cells
            .par_iter()
            .map(|&(t, w)| run_cell(spec, t, w))
            .collect()
    };
    let nested = if spec.threads == 0 {
        work()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(spec.threads)
            .build()
            .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?
            .install(work)?
    };
    let mut rows: Vec<ExperimentRow> = nested.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.trial, r.omega_index, r.solver_index));
    let summary = summarize(spec, &rows);
    Ok(ExperimentOutput { rows, summary })
}

fn opt(v: Option<f64>) -> String {
    v.map(g12).unwrap_or_default()
}

/// Row CSV. Wall times are only written when `timings` is set, so that the
/// default output is byte-identical across reruns.
pub fn rows_csv(rows: &[ExperimentRow], timings: bool) -> String {
    let mut out = String::from(
        "trial,seed,omega,solver,converged,included,sweeps,avg_l1_error,dual_value,energy,certificate",
    );
    out.push_str(if timings { ",wall_time\n" } else { "\n" });
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.trial,
            r.seed,
            g12(r.omega),
            r.solver,
            r.converged,
            r.included,
            r.sweeps,
            opt(r.avg_l1_error),
            opt(r.dual_value),
            opt(r.energy),
            r.certificate.map(Certificate::as_str).unwrap_or("")
        );
        if timings {
            let _ = write!(out, ",{}", g12(r.wall_time));
        }
        out.push('\n');
    }
    out
}

pub fn summary_csv(summary: &[SummaryRow]) -> String {
    let mut out =
        String::from("omega,solver,rows,convergence_rate,included,mean_l1_error,mean_sweeps,mean_dual,mean_energy\n");
    for s in summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            g12(s.omega),
            s.solver,
            s.rows,
            g12(s.convergence_rate),
            s.included,
            opt(s.mean_l1_error),
            g12(s.mean_sweeps),
            opt(s.mean_dual),
            opt(s.mean_energy)
        );
    }
    out
}
