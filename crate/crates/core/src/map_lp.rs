//! MAP estimation through the LP relaxation: convex max-product at `ε = 0`,
//! geometric ε-annealing with warm starts, the a-priori gap bound and decoding.

use alloc::format;
use alloc::vec::Vec;

use thiserror::Error;

use crate::counting::CountingNumbers;
use crate::engine::{self, BeliefSet, EngineError, MessageState, RunConfig, RunReport, TraceRow};
use crate::math;
use crate::model::{Assignment, Model};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("{0}")]
    Engine(#[from] EngineError),
    #[error("MAP solvers need convex counting numbers ({0})")]
    NotConvex(alloc::string::String),
    #[error("convex max-product runs at epsilon = 0, got {0}")]
    NonZeroEpsilon(f64),
    #[error("invalid anneal schedule: {0}")]
    Schedule(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certificate {
    /// Every variable has a unique maximiser.
    IntegralNoTies,
    /// Some variable has several maximisers; the decoded state is the lowest.
    TiesPresent,
    /// The dual converged but the zero-temperature beliefs are not consistent.
    StalledInconsistent,
}

impl Certificate {
    pub fn as_str(self) -> &'static str {
        match self {
            Certificate::IntegralNoTies => "integral_no_ties",
            Certificate::TiesPresent => "ties_present",
            Certificate::StalledInconsistent => "stalled_inconsistent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub assignment: Assignment,
    pub tie_flags: Vec<bool>,
    pub energy: f64,
    pub dual_value: f64,
    pub certificate: Certificate,
    pub consistency_residual: Option<f64>,
}

/// Argmax of each log-domain max-marginal, lowest state on ties (flagged).
pub fn decode(max_marginals: &[Vec<f64>]) -> (Assignment, Vec<bool>) {
    let mut states = Vec::with_capacity(max_marginals.len());
    let mut ties = Vec::with_capacity(max_marginals.len());
    for table in max_marginals {
        let max = math::max_of(table);
        let state = table.iter().position(|&v| v == max).unwrap_or(0);
        states.push(state);
        ties.push(engine::tie_count(table) > 1);
    }
    (Assignment(states), ties)
}

fn require_convex(counting: &CountingNumbers) -> Result<(), MapError> {
    match counting.violations().first() {
        Some(v) => Err(MapError::NotConvex(format!("{v}"))),
        None => Ok(()),
    }
}

fn certificate(converged: bool, residual: Option<f64>, tol: f64, ties: &[bool]) -> Certificate {
    if converged && residual.is_some_and(|r| r > tol) {
        Certificate::StalledInconsistent
    } else if ties.iter().any(|&t| t) {
        Certificate::TiesPresent
    } else {
        Certificate::IntegralNoTies
    }
}

/// Convex max-product: the engine at `ε = 0` followed by decoding.
pub fn convex_max_product(
    model: &Model,
    counting: &CountingNumbers,
    cfg: &RunConfig,
) -> Result<(MapResult, RunReport, BeliefSet), MapError> {
    require_convex(counting)?;
    if cfg.epsilon != 0.0 {
        return Err(MapError::NonZeroEpsilon(cfg.epsilon));
    }
    let (beliefs, report, _) = engine::run(model, counting, cfg)?;
    let (assignment, tie_flags) = decode(&beliefs.scores);
    let result = MapResult {
        energy: model.energy(&assignment),
        dual_value: report.final_dual.unwrap_or(f64::NAN),
        certificate: certificate(
            report.converged,
            beliefs.consistency_residual,
            cfg.tol,
            &tie_flags,
        ),
        consistency_residual: beliefs.consistency_residual,
        assignment,
        tie_flags,
    };
    Ok((result, report, beliefs))
}

#[derive(Debug, Clone, Copy)]
pub struct AnnealSchedule {
    pub eps_start: f64,
    pub ratio: f64,
    pub eps_min: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    pub trace_every: usize,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self {
            eps_start: 1.0,
            ratio: 0.5,
            eps_min: 1e-3,
            tol: 1e-8,
            max_sweeps: 10_000,
            trace_every: 1,
        }
    }
}

impl AnnealSchedule {
    /// Temperatures `eps_start · ratio^k` above `eps_min`, then `eps_min`.
    pub fn stages(&self) -> Result<Vec<f64>, MapError> {
        if !(self.eps_min > 0.0 && self.eps_min.is_finite()) {
            return Err(MapError::Schedule("eps_min must be positive"));
        }
        if !(self.eps_start >= self.eps_min && self.eps_start.is_finite()) {
            return Err(MapError::Schedule("eps_start must be at least eps_min"));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(MapError::Schedule("ratio must lie in (0, 1)"));
        }
        let mut out = Vec::new();
        let mut eps = self.eps_start;
        while eps > self.eps_min {
            out.push(eps);
            eps *= self.ratio;
        }
        out.push(self.eps_min);
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct StageSummary {
    pub epsilon: f64,
    pub sweeps: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct AnnealResult {
    pub beliefs: BeliefSet,
    /// Gap bound at `eps_min`.
    pub delta: f64,
    /// Stitched report; sweep numbers run on across stages.
    pub report: RunReport,
    pub stages: Vec<StageSummary>,
    pub messages: MessageState,
}

impl AnnealResult {
    /// `θᵀb` of the final beliefs (the primal at `ε = 0`).
    pub fn linear_energy(
        &self,
        model: &Model,
        counting: &CountingNumbers,
    ) -> Result<f64, MapError> {
        Ok(engine::primal_objective(
            model,
            counting,
            0.0,
            &self.beliefs,
        )?)
    }

    pub fn decode(&self) -> (Assignment, Vec<bool>) {
        decode(&self.beliefs.scores)
    }
}

/// Solve the perturbed program at decreasing temperatures, warm-starting each
/// stage from the previous messages.
pub fn anneal_lp(
    model: &Model,
    counting: &CountingNumbers,
    schedule: &AnnealSchedule,
) -> Result<AnnealResult, MapError> {
    require_convex(counting)?;
    let temps = schedule.stages()?;
    let mut state = engine::init_messages(model);
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut stages = Vec::with_capacity(temps.len());
    let mut offset = 0;
    let mut last = None;
    for &eps in &temps {
        let cfg = RunConfig {
            epsilon: eps,
            tol: schedule.tol,
            max_sweeps: schedule.max_sweeps,
            metric: engine::ConvergenceMetric::MessageDelta,
            trace_every: schedule.trace_every,
        };
        let (beliefs, report, next) = engine::run_from(model, counting, &cfg, state)?;
        state = next;
        trace.extend(report.trace.iter().map(|row| TraceRow {
            sweep: row.sweep + offset,
            ..*row
        }));
        offset += report.sweeps_used;
        stages.push(StageSummary {
            epsilon: eps,
            sweeps: report.sweeps_used,
            converged: report.converged,
        });
        last = Some((beliefs, report));
    }
    let (beliefs, mut report) = last.expect("at least one stage");
    report.trace = trace;
    report.sweeps_used = offset;
    Ok(AnnealResult {
        beliefs,
        delta: lp_bound_delta(model, counting, schedule.eps_min),
        report,
        stages,
        messages: state,
    })
}

/// `δ = ε (Σ_α c_α ln n_α + Σ_i c_i ln n_i + Σ_{i,α} c_iα ln(n_α / n_i))` where
/// `n_i`, `n_α` are the numbers of states of a variable and a factor.
pub fn lp_bound_delta(model: &Model, counting: &CountingNumbers, eps: f64) -> f64 {
    let ln_n_i: Vec<f64> = model.cards().iter().map(|&c| math::ln(c as f64)).collect();
    let ln_n_alpha: Vec<f64> = model
        .factors()
        .iter()
        .map(|f| f.scope().iter().map(|&v| ln_n_i[v]).sum())
        .collect();
    let mut total = 0.0;
    for (a, &l) in ln_n_alpha.iter().enumerate() {
        total += counting.c_alpha()[a] * l;
    }
    for i in 0..model.num_vars() {
        total += counting.c_i()[i] * ln_n_i[i];
        for inc in model.incidences(i) {
            total += counting.c_i_alpha()[inc.id] * (ln_n_alpha[inc.factor] - ln_n_i[i]);
        }
    }
    eps * total
}
