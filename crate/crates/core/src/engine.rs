//! Norm-product belief propagation.
//!
//! Messages live in the log domain. For a variable block `i` the update first
//! recomputes every factor-to-variable message
//!
//! ```text
//! ln m_{α→i}(x_i) = εĉ_iα · LSE_{x_α∖x_i} [ o_α(x_α) / εĉ_iα ],
//! o_α(x_α)        = ln ψ_α(x_α) + Σ_{j∈N(α)∖i} ln n_{j→α}(x_α)
//! ```
//!
//! (a plain maximum when `εĉ_iα = 0`), then every variable-to-factor message
//!
//! ```text
//! ln n_{i→α}(x_α) = c_α · (B_i(x_i) − ln m_{α→i}(x_i) / ĉ_iα) − (c_iα / ĉ_iα) · o_α(x_α),
//! B_i(x_i)        = (ln φ_i(x_i) + Σ_{β∈N(i)} ln m_{β→i}(x_i)) / ĉ_i
//! ```
//!
//! and shifts each `ln n` table so that its maximum is zero.
//!
//! Zero potentials appear as `-∞`. A term whose coefficient is zero contributes
//! nothing even when its argument is `-∞`; otherwise a `-∞` argument makes the
//! message entry `-∞`, which only ever happens at configurations that already
//! carry zero weight in every product they enter.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::counting::CountingNumbers;
use crate::math::{self, LogSumExp};
use crate::model::Model;

/// Absolute tolerance (scaled by the magnitude of the maximum) under which two
/// log-domain scores count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("epsilon must be finite and non-negative, got {0}")]
    InvalidEpsilon(f64),
    #[error("hat c_i = {value} at variable {var}; must be positive")]
    NonPositiveHatCI { var: usize, value: f64 },
    #[error("hat c_i_alpha = {value} at variable {var}, factor {factor}; must be positive")]
    NonPositiveHatCIAlpha {
        var: usize,
        factor: usize,
        value: f64,
    },
    #[error("counting numbers do not match the model's index sets")]
    CountingMismatch,
    #[error("message state does not match the model")]
    StateMismatch,
    #[error(
        "numerical failure (NaN or +inf) in the message from variable {var} to factor {factor}"
    )]
    Numerical { var: usize, factor: usize },
    #[error("message from variable {var} to factor {factor} vanished everywhere; the model has no feasible assignment")]
    Infeasible { var: usize, factor: usize },
    #[error("dual objective requires convex counting numbers ({0})")]
    NotConvex(String),
    #[error("factor belief unavailable at factor {factor}: c_alpha must be positive")]
    FactorBeliefUnavailable { factor: usize },
    #[error("invalid run configuration: {0}")]
    Config(&'static str),
}

/// Log-domain messages, one table per incidence `(i, α)` (indexed by
/// incidence id). `log_m` is over `x_i`, `log_n` over the full scope `x_α`.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageState {
    pub log_m: Vec<Vec<f64>>,
    pub log_n: Vec<Vec<f64>>,
}

/// All `n_{i→α} ≡ 1` and `m_{α→i} ≡ 1`.
pub fn init_messages(model: &Model) -> MessageState {
    let mut log_m = vec![Vec::new(); model.num_incidences()];
    let mut log_n = vec![Vec::new(); model.num_incidences()];
    for (a, f) in model.factors().iter().enumerate() {
        for (pos, &v) in f.scope().iter().enumerate() {
            let id = model.incidence_id(a, pos);
            log_m[id] = vec![0.0; model.card(v)];
            log_n[id] = vec![0.0; f.len()];
        }
    }
    MessageState { log_m, log_n }
}

impl MessageState {
    pub fn new(model: &Model) -> Self {
        init_messages(model)
    }

    fn matches(&self, model: &Model) -> bool {
        self.log_n.len() == model.num_incidences()
            && self.log_m.len() == model.num_incidences()
            && model.factors().iter().enumerate().all(|(a, f)| {
                f.scope().iter().enumerate().all(|(pos, &v)| {
                    let id = model.incidence_id(a, pos);
                    self.log_n[id].len() == f.len() && self.log_m[id].len() == model.card(v)
                })
            })
    }
}

fn check_counting(model: &Model, counting: &CountingNumbers) -> Result<(), EngineError> {
    if counting.c_alpha().len() != model.num_factors()
        || counting.c_i().len() != model.num_vars()
        || counting.c_i_alpha().len() != model.num_incidences()
    {
        return Err(EngineError::CountingMismatch);
    }
    Ok(())
}

fn check_epsilon(eps: f64) -> Result<(), EngineError> {
    if eps.is_finite() && eps >= 0.0 {
        Ok(())
    } else {
        Err(EngineError::InvalidEpsilon(eps))
    }
}

/// Check the preconditions of [`update_block`] for every block at once.
pub fn check_preconditions(
    model: &Model,
    counting: &CountingNumbers,
    eps: f64,
) -> Result<(), EngineError> {
    check_epsilon(eps)?;
    check_counting(model, counting)?;
    for i in 0..model.num_vars() {
        let incs = model.incidences(i);
        if incs.is_empty() {
            continue;
        }
        let value = counting.hat_c_i()[i];
        if !(value > 0.0) {
            return Err(EngineError::NonPositiveHatCI { var: i, value });
        }
        for inc in incs {
            let value = counting.hat_c_i_alpha()[inc.id];
            if value == 0.0 || (eps > 0.0 && value < 0.0) {
                return Err(EngineError::NonPositiveHatCIAlpha {
                    var: i,
                    factor: inc.factor,
                    value,
                });
            }
        }
    }
    Ok(())
}

/// `ln ψ_α + Σ_{j∈N(α), j≠skip} ln n_{j→α}` written into `out`.
fn factor_product(
    model: &Model,
    state: &MessageState,
    factor: usize,
    skip: Option<usize>,
    out: &mut Vec<f64>,
) {
    let f = model.factor(factor);
    out.clear();
    out.extend_from_slice(f.log_psi());
    for pos in 0..f.arity() {
        if Some(pos) == skip {
            continue;
        }
        let n = &state.log_n[model.incidence_id(factor, pos)];
        for (o, &v) in out.iter_mut().zip(n) {
            *o += v;
        }
    }
}

/// `t · LSE_{x_α∖x_i}(table / t)` for each `x_i` (max when `t = 0`).
fn marginalize_power(table: &[f64], stride: usize, card: usize, t: f64, out: &mut [f64]) {
    if t == 0.0 {
        out.fill(f64::NEG_INFINITY);
        for (k, &v) in table.iter().enumerate() {
            let x = (k / stride) % card;
            if v > out[x] {
                out[x] = v;
            }
        }
    } else {
        let mut acc = vec![LogSumExp::new(); card];
        for (k, &v) in table.iter().enumerate() {
            acc[(k / stride) % card].push(v / t);
        }
        for (o, a) in out.iter_mut().zip(&acc) {
            *o = t * a.value();
        }
    }
}

fn log_delta(old: f64, new: f64) -> f64 {
    if old == new {
        0.0
    } else {
        (new - old).abs()
    }
}

/// Update block `i`: all `m_{α→i}`, then all `n_{i→α}`. Returns the largest
/// absolute change of any `ln n_{i→α}` entry.
pub fn update_block(
    model: &Model,
    counting: &CountingNumbers,
    eps: f64,
    state: &mut MessageState,
    i: usize,
) -> Result<f64, EngineError> {
    let incs = model.incidences(i);
    if incs.is_empty() {
        return Ok(0.0);
    }
    let hat_ci = counting.hat_c_i()[i];
    if !(hat_ci > 0.0) {
        return Err(EngineError::NonPositiveHatCI {
            var: i,
            value: hat_ci,
        });
    }
    let card = model.card(i);

    let mut products: Vec<Vec<f64>> = Vec::with_capacity(incs.len());
    for inc in incs {
        let hat = counting.hat_c_i_alpha()[inc.id];
        if hat == 0.0 || (eps > 0.0 && hat < 0.0) {
            return Err(EngineError::NonPositiveHatCIAlpha {
                var: i,
                factor: inc.factor,
                value: hat,
            });
        }
        let mut o = Vec::new();
        factor_product(model, state, inc.factor, Some(inc.position), &mut o);
        let stride = model.factor(inc.factor).strides()[inc.position];
        marginalize_power(&o, stride, card, eps * hat, &mut state.log_m[inc.id]);
        products.push(o);
    }

    let mut b = model.log_phi(i).to_vec();
    for inc in incs {
        for (bx, &m) in b.iter_mut().zip(&state.log_m[inc.id]) {
            *bx += m;
        }
    }
    for bx in b.iter_mut() {
        *bx /= hat_ci;
    }

    let mut delta: f64 = 0.0;
    for (inc, o) in incs.iter().zip(products) {
        let c_alpha = counting.c_alpha()[inc.factor];
        let c_ia = counting.c_i_alpha()[inc.id];
        let hat = counting.hat_c_i_alpha()[inc.id];
        let m = &state.log_m[inc.id];
        let first: Vec<f64> = (0..card)
            .map(|x| {
                if c_alpha == 0.0 {
                    0.0
                } else if b[x] == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    c_alpha * (b[x] - m[x] / hat)
                }
            })
            .collect();
        let ratio = c_ia / hat;
        let stride = model.factor(inc.factor).strides()[inc.position];
        let mut new: Vec<f64> = o
            .iter()
            .enumerate()
            .map(|(k, &ov)| {
                let second = if c_ia == 0.0 {
                    0.0
                } else if ov == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                } else {
                    -ratio * ov
                };
                first[(k / stride) % card] + second
            })
            .collect();
        if new.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(EngineError::Numerical {
                var: i,
                factor: inc.factor,
            });
        }
        if math::normalize_max(&mut new).is_none() {
            return Err(EngineError::Infeasible {
                var: i,
                factor: inc.factor,
            });
        }
        let old = &state.log_n[inc.id];
        for (&ov, &nv) in old.iter().zip(&new) {
            delta = delta.max(log_delta(ov, nv));
        }
        state.log_n[inc.id] = new;
    }
    Ok(delta)
}

/// One cyclic sweep over all variables; returns the largest message change.
pub fn sweep(
    model: &Model,
    counting: &CountingNumbers,
    eps: f64,
    state: &mut MessageState,
) -> Result<f64, EngineError> {
    let mut delta: f64 = 0.0;
    for i in 0..model.num_vars() {
        delta = delta.max(update_block(model, counting, eps, state, i)?);
    }
    Ok(delta)
}

/// Log-domain beliefs with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSet {
    pub epsilon: f64,
    /// Normalized `ln b_i`.
    pub log_b_i: Vec<Vec<f64>>,
    /// Normalized `ln b_α`, `None` where `c_α ≤ 0` makes it unavailable.
    pub log_b_alpha: Vec<Option<Vec<f64>>>,
    /// `(ln φ_i + Σ ln m_{α→i}) / ĉ_i`; at `ε = 0` these are the max-marginals.
    pub scores: Vec<Vec<f64>>,
    /// Number of states tied for the maximum score of each variable.
    pub ties: Vec<usize>,
    /// `max |Σ_{x_α∖x_i} b_α − b_i|`, `None` if some `b_α` is unavailable.
    pub consistency_residual: Option<f64>,
    /// `max |Σ b − 1|` over all available tables.
    pub simplex_residual: f64,
}

impl BeliefSet {
    pub fn b_i(&self, var: usize) -> Vec<f64> {
        self.log_b_i[var].iter().map(|&l| math::exp(l)).collect()
    }

    pub fn b_alpha(&self, factor: usize) -> Option<Vec<f64>> {
        self.log_b_alpha[factor]
            .as_ref()
            .map(|t| t.iter().map(|&l| math::exp(l)).collect())
    }

    pub fn has_ties(&self) -> bool {
        self.ties.iter().any(|&r| r > 1)
    }
}

fn is_tied(v: f64, max: f64) -> bool {
    v != f64::NEG_INFINITY && max - v <= TIE_TOLERANCE * max.abs().max(1.0)
}

/// Number of entries tied for the maximum.
pub fn tie_count(values: &[f64]) -> usize {
    let max = math::max_of(values);
    values.iter().filter(|&&v| is_tied(v, max)).count()
}

/// `ln` of the uniform distribution over the (tolerance-)argmax set.
fn tie_indicator(values: &[f64]) -> Vec<f64> {
    let max = math::max_of(values);
    let r = values.iter().filter(|&&v| is_tied(v, max)).count();
    let level = -math::ln(r as f64);
    values
        .iter()
        .map(|&v| {
            if is_tied(v, max) {
                level
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

/// Normalized log-belief `∝ exp(values / scale)`, or the tie indicator when
/// `scale = 0`.
fn belief_from(values: &[f64], scale: f64) -> Vec<f64> {
    if scale == 0.0 {
        return tie_indicator(values);
    }
    let mut out: Vec<f64> = values.iter().map(|&v| v / scale).collect();
    // an all-zero table stays all-zero
    math::normalize_lse(&mut out);
    out
}

pub fn beliefs_from_messages(
    model: &Model,
    counting: &CountingNumbers,
    eps: f64,
    state: &MessageState,
) -> Result<BeliefSet, EngineError> {
    check_epsilon(eps)?;
    check_counting(model, counting)?;
    if !state.matches(model) {
        return Err(EngineError::StateMismatch);
    }
    let mut scores = Vec::with_capacity(model.num_vars());
    let mut log_b_i = Vec::with_capacity(model.num_vars());
    let mut ties = Vec::with_capacity(model.num_vars());
    for i in 0..model.num_vars() {
        let hat_ci = counting.hat_c_i()[i];
        if !(hat_ci > 0.0) {
            return Err(EngineError::NonPositiveHatCI {
                var: i,
                value: hat_ci,
            });
        }
        let mut s = model.log_phi(i).to_vec();
        for inc in model.incidences(i) {
            for (sx, &m) in s.iter_mut().zip(&state.log_m[inc.id]) {
                *sx += m;
            }
        }
        for sx in s.iter_mut() {
            *sx /= hat_ci;
        }
        ties.push(tie_count(&s));
        log_b_i.push(belief_from(&s, eps));
        scores.push(s);
    }

    let mut log_b_alpha = Vec::with_capacity(model.num_factors());
    let mut buf = Vec::new();
    for a in 0..model.num_factors() {
        let c_alpha = counting.c_alpha()[a];
        if !(c_alpha > 0.0) {
            log_b_alpha.push(None);
            continue;
        }
        factor_product(model, state, a, None, &mut buf);
        log_b_alpha.push(Some(belief_from(&buf, eps * c_alpha)));
    }

    let mut beliefs = BeliefSet {
        epsilon: eps,
        log_b_i,
        log_b_alpha,
        scores,
        ties,
        consistency_residual: None,
        simplex_residual: 0.0,
    };
    beliefs.simplex_residual = simplex_residual(&beliefs);
    beliefs.consistency_residual = consistency_residual(model, &beliefs);
    Ok(beliefs)
}

fn simplex_residual(beliefs: &BeliefSet) -> f64 {
    let tables = beliefs
        .log_b_i
        .iter()
        .chain(beliefs.log_b_alpha.iter().flatten());
    tables
        .map(|t| (t.iter().map(|&l| math::exp(l)).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// `max_{i, α∈N(i), x_i} |Σ_{x_α∖x_i} b_α(x_α) − b_i(x_i)|`, or `None` when a
/// factor belief is missing.
pub fn consistency_residual(model: &Model, beliefs: &BeliefSet) -> Option<f64> {
    let mut worst: f64 = 0.0;
    for (a, f) in model.factors().iter().enumerate() {
        let b_alpha = beliefs.log_b_alpha[a].as_ref()?;
        for (pos, &v) in f.scope().iter().enumerate() {
            let card = model.card(v);
            let stride = f.strides()[pos];
            let mut marg = vec![0.0; card];
            for (k, &l) in b_alpha.iter().enumerate() {
                marg[(k / stride) % card] += math::exp(l);
            }
            for (x, &mx) in marg.iter().enumerate() {
                worst = worst.max((mx - math::exp(beliefs.log_b_i[v][x])).abs());
            }
        }
    }
    Some(worst)
}

/// `Σ b·θ` with `θ = −ln φ` and `0·∞ = 0`.
fn expected_energy(log_b: &[f64], log_pot: &[f64]) -> f64 {
    log_b
        .iter()
        .zip(log_pot)
        .filter(|(&lb, _)| lb != f64::NEG_INFINITY)
        .map(|(&lb, &lp)| -math::exp(lb) * lp)
        .sum()
}

/// `θᵀb − ε H̃(b)` with the fractional entropy of the counting numbers.
pub fn primal_objective(
    model: &Model,
    counting: &CountingNumbers,
    eps: f64,
    beliefs: &BeliefSet,
) -> Result<f64, EngineError> {
    check_epsilon(eps)?;
    check_counting(model, counting)?;
    let mut factor_beliefs = Vec::with_capacity(model.num_factors());
    for a in 0..model.num_factors() {
        match &beliefs.log_b_alpha[a] {
            Some(t) => factor_beliefs.push(t),
            None => return Err(EngineError::FactorBeliefUnavailable { factor: a }),
        }
    }
    let mut value = 0.0;
    for i in 0..model.num_vars() {
        value += expected_energy(&beliefs.log_b_i[i], model.log_phi(i));
    }
    for (a, f) in model.factors().iter().enumerate() {
        value += expected_energy(factor_beliefs[a], f.log_psi());
    }
    if eps == 0.0 {
        return Ok(value);
    }
    let h_i: Vec<f64> = beliefs
        .log_b_i
        .iter()
        .map(|t| math::entropy_of_log(t))
        .collect();
    let h_alpha: Vec<f64> = factor_beliefs
        .iter()
        .map(|t| math::entropy_of_log(t))
        .collect();
    let mut entropy = 0.0;
    for a in 0..model.num_factors() {
        entropy += counting.c_alpha()[a] * h_alpha[a];
    }
    for i in 0..model.num_vars() {
        entropy += counting.c_i()[i] * h_i[i];
        for inc in model.incidences(i) {
            entropy += counting.c_i_alpha()[inc.id] * (h_alpha[inc.factor] - h_i[i]);
        }
    }
    Ok(value - eps * entropy)
}

/// Dual value `q(λ)` with `λ_{i,α} = −ln n_{i→α}`:
///
/// ```text
/// q = −Σ_α ln‖ψ_α Π_i n_{i→α}‖_{1/εc_α} − Σ_i ln‖φ_i Π_α ‖1/n_{i→α}‖_{x_α∖x_i, 1/εc_iα}‖_{1/εc_i}
/// ```
///
/// Norms with a zero exponent weight are maxima. Entries where `n_{i→α} = 0`
/// are left out of the inner norm. Only defined for convex counting numbers.
pub fn dual_objective(
    model: &Model,
    counting: &CountingNumbers,
    eps: f64,
    state: &MessageState,
) -> Result<f64, EngineError> {
    check_epsilon(eps)?;
    check_counting(model, counting)?;
    if let Some(v) = counting.violations().first() {
        return Err(EngineError::NotConvex(format!("{v}")));
    }
    if !state.matches(model) {
        return Err(EngineError::StateMismatch);
    }
    let mut q = 0.0;
    let mut buf = Vec::new();
    for a in 0..model.num_factors() {
        factor_product(model, state, a, None, &mut buf);
        q -= math::log_power_sum(&buf, eps * counting.c_alpha()[a]);
    }
    for i in 0..model.num_vars() {
        let card = model.card(i);
        let mut s = model.log_phi(i).to_vec();
        let mut inner = vec![0.0; card];
        for inc in model.incidences(i) {
            let f = model.factor(inc.factor);
            let stride = f.strides()[inc.position];
            let neg: Vec<f64> = state.log_n[inc.id]
                .iter()
                .map(|&v| {
                    if v == f64::NEG_INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        -v
                    }
                })
                .collect();
            marginalize_power(
                &neg,
                stride,
                card,
                eps * counting.c_i_alpha()[inc.id],
                &mut inner,
            );
            for (sx, &v) in s.iter_mut().zip(&inner) {
                *sx += v;
            }
        }
        q -= math::log_power_sum(&s, eps * counting.c_i()[i]);
    }
    Ok(q)
}

/// Quantity compared against `tol` after every sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergenceMetric {
    /// Dual change for `ε = 0` with convex counting numbers, message change otherwise.
    Auto,
    /// `max |Δ ln n|` over a sweep.
    MessageDelta,
    /// `|Δ q|` over a sweep (convex counting numbers only).
    DualDelta,
}

#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub epsilon: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    pub metric: ConvergenceMetric,
    /// Record a trace row every this many sweeps (and at the last one); 0 disables tracing.
    pub trace_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            tol: 1e-8,
            max_sweeps: 10_000,
            metric: ConvergenceMetric::Auto,
            trace_every: 1,
        }
    }
}

impl RunConfig {
    pub fn with_epsilon(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    /// The concrete metric used for the given counting numbers.
    pub fn resolved_metric(&self, counting: &CountingNumbers) -> ConvergenceMetric {
        match self.metric {
            ConvergenceMetric::Auto if self.epsilon == 0.0 && counting.is_convex() => {
                ConvergenceMetric::DualDelta
            }
            ConvergenceMetric::Auto => ConvergenceMetric::MessageDelta,
            m => m,
        }
    }
}

/// One row of the run trace; unavailable quantities are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub sweep: usize,
    pub dual: f64,
    pub primal: f64,
    pub max_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub converged: bool,
    pub sweeps_used: usize,
    pub metric: ConvergenceMetric,
    pub trace: Vec<TraceRow>,
    /// Largest message change in the last sweep.
    pub final_delta: f64,
    pub final_dual: Option<f64>,
    pub final_primal: Option<f64>,
    pub consistency_residual: Option<f64>,
}

impl RunReport {
    /// `primal − dual` when both are available.
    pub fn duality_gap(&self) -> Option<f64> {
        Some(self.final_primal? - self.final_dual?)
    }
}

/// Run from freshly initialized messages.
pub fn run(
    model: &Model,
    counting: &CountingNumbers,
    cfg: &RunConfig,
) -> Result<(BeliefSet, RunReport, MessageState), EngineError> {
    run_from(model, counting, cfg, init_messages(model))
}

/// Run from the given messages (warm start).
pub fn run_from(
    model: &Model,
    counting: &CountingNumbers,
    cfg: &RunConfig,
    mut state: MessageState,
) -> Result<(BeliefSet, RunReport, MessageState), EngineError> {
    if !(cfg.tol > 0.0) {
        return Err(EngineError::Config("tol must be positive"));
    }
    if cfg.max_sweeps == 0 {
        return Err(EngineError::Config("max_sweeps must be at least 1"));
    }
    let eps = cfg.epsilon;
    check_preconditions(model, counting, eps)?;
    if !state.matches(model) {
        return Err(EngineError::StateMismatch);
    }
    let metric = cfg.resolved_metric(counting);
    let convex = counting.is_convex();
    if metric == ConvergenceMetric::DualDelta && !convex {
        return Err(EngineError::NotConvex(format!(
            "{}",
            counting.violations()[0]
        )));
    }

    let dual_of = |s: &MessageState| -> Result<Option<f64>, EngineError> {
        if convex {
            dual_objective(model, counting, eps, s).map(Some)
        } else {
            Ok(None)
        }
    };
    let mut dual = dual_of(&state)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps_used = 0;
    let mut delta = 0.0;
    for t in 1..=cfg.max_sweeps {
        sweeps_used = t;
        delta = sweep(model, counting, eps, &mut state)?;
        let new_dual = if metric == ConvergenceMetric::DualDelta
            || (cfg.trace_every > 0 && t % cfg.trace_every == 0)
        {
            dual_of(&state)?
        } else {
            None
        };
        converged = match metric {
            ConvergenceMetric::DualDelta => {
                let (old, new) = (dual.unwrap_or(f64::NAN), new_dual.unwrap_or(f64::NAN));
                (new - old).abs() < cfg.tol
            }
            _ => delta < cfg.tol,
        };
        if new_dual.is_some() {
            dual = new_dual;
        }
        let last = converged || t == cfg.max_sweeps;
        if cfg.trace_every > 0 && (t % cfg.trace_every == 0 || last) {
            let d = if new_dual.is_some() {
                new_dual
            } else {
                dual_of(&state)?
            };
            let primal = beliefs_from_messages(model, counting, eps, &state)
                .ok()
                .and_then(|b| primal_objective(model, counting, eps, &b).ok());
            trace.push(TraceRow {
                sweep: t,
                dual: d.unwrap_or(f64::NAN),
                primal: primal.unwrap_or(f64::NAN),
                max_delta: delta,
            });
        }
        if converged {
            break;
        }
    }

    let beliefs = beliefs_from_messages(model, counting, eps, &state)?;
    let final_dual = dual_of(&state)?;
    let final_primal = primal_objective(model, counting, eps, &beliefs).ok();
    let report = RunReport {
        converged,
        sweeps_used,
        metric,
        trace,
        final_delta: delta,
        final_dual,
        final_primal,
        consistency_residual: beliefs.consistency_residual,
    };
    Ok((beliefs, report, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counting::{bethe, trivial_convex, CountingNumbers};
    use crate::model::Factor;

    fn single_factor(table: [f64; 4]) -> Model {
        Model::new(
            vec![2, 2],
            vec![vec![0.0; 2]; 2],
            vec![Factor::new(
                vec![0, 1],
                table.iter().map(|&v| math::ln(v)).collect(),
            )],
            true,
        )
        .unwrap()
    }

    #[test]
    fn init_shapes() {
        let m = Model::new(
            vec![2, 2, 2],
            vec![vec![0.0; 2]; 3],
            vec![
                Factor::new(vec![0, 1], vec![0.0; 4]),
                Factor::new(vec![1, 2], vec![0.0; 4]),
            ],
            true,
        )
        .unwrap();
        let s = init_messages(&m);
        assert_eq!(s.log_n.len(), 4);
        assert!(s
            .log_n
            .iter()
            .all(|t| t.len() == 4 && t.iter().all(|&v| v == 0.0)));
        assert_eq!(init_messages(&m), s);
    }

    #[test]
    fn sum_message_example() {
        let m = single_factor([1.0, 2.0, 3.0, 4.0]);
        let c = bethe(&m);
        let mut s = init_messages(&m);
        update_block(&m, &c, 1.0, &mut s, 0).unwrap();
        let got: Vec<f64> = s.log_m[0].iter().map(|&v| math::exp(v)).collect();
        assert!((got[0] - 3.0).abs() < 1e-12 && (got[1] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn max_message_example() {
        let m = single_factor([1.0, 2.0, 3.0, 4.0]);
        let c = bethe(&m);
        let mut s = init_messages(&m);
        update_block(&m, &c, 0.0, &mut s, 0).unwrap();
        let got: Vec<f64> = s.log_m[0].iter().map(|&v| math::exp(v)).collect();
        assert!((got[0] - 2.0).abs() < 1e-12 && (got[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn power_sum_message_example() {
        let m = single_factor([1.0, 2.0, 3.0, 4.0]);
        // ĉ_iα = c_α + c_iα = 2
        let c = CountingNumbers::new(&m, vec![1.0], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let mut s = init_messages(&m);
        update_block(&m, &c, 1.0, &mut s, 0).unwrap();
        let expected = (1.0 + math::sqrt(2.0)) * (1.0 + math::sqrt(2.0));
        assert!((math::exp(s.log_m[0][0]) - expected).abs() < 1e-12);
    }

    #[test]
    fn single_variable_belief() {
        let m = Model::new(vec![2], vec![vec![0.0, math::ln(3.0)]], vec![], true).unwrap();
        let (b, report, _) = run(&m, &bethe(&m), &RunConfig::default()).unwrap();
        assert!(report.converged);
        let p = b.b_i(0);
        assert!((p[0] - 0.25).abs() < 1e-12 && (p[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn tie_beliefs_at_zero_temperature() {
        let m = Model::new(
            vec![2],
            vec![vec![math::ln(0.2), math::ln(0.8)]],
            vec![],
            true,
        )
        .unwrap();
        let b = beliefs_from_messages(&m, &bethe(&m), 0.0, &init_messages(&m)).unwrap();
        assert_eq!(b.b_i(0), vec![0.0, 1.0]);
        assert_eq!(b.ties[0], 1);
        let m = Model::new(
            vec![2],
            vec![vec![math::ln(0.5), math::ln(0.5)]],
            vec![],
            true,
        )
        .unwrap();
        let b = beliefs_from_messages(&m, &bethe(&m), 0.0, &init_messages(&m)).unwrap();
        assert_eq!(b.b_i(0), vec![0.5, 0.5]);
        assert_eq!(b.ties[0], 2);
    }

    #[test]
    fn dual_of_unary_factor() {
        let m = Model::new(
            vec![2],
            vec![vec![0.0; 2]],
            vec![Factor::new(vec![0], vec![0.0; 2])],
            false,
        )
        .unwrap();
        let q = dual_objective(&m, &trivial_convex(&m), 1.0, &init_messages(&m)).unwrap();
        assert!((q + math::ln(2.0)).abs() < 1e-12);
    }

    #[test]
    fn primal_of_uniform_beliefs() {
        let m = single_factor([1.0; 4]);
        let c = trivial_convex(&m);
        let b = beliefs_from_messages(&m, &c, 1.0, &init_messages(&m)).unwrap();
        let p = primal_objective(&m, &c, 1.0, &b).unwrap();
        assert!((p + math::ln(4.0)).abs() < 1e-12);
        assert_eq!(primal_objective(&m, &c, 0.0, &b).unwrap(), 0.0);
    }

    #[test]
    fn dual_requires_convexity() {
        let m = Model::new(
            vec![2, 2, 2],
            vec![vec![0.0; 2]; 3],
            vec![
                Factor::new(vec![0, 1], vec![0.0; 4]),
                Factor::new(vec![1, 2], vec![0.0; 4]),
            ],
            true,
        )
        .unwrap();
        assert!(matches!(
            dual_objective(&m, &bethe(&m), 1.0, &init_messages(&m)),
            Err(EngineError::NotConvex(_))
        ));
    }

    #[test]
    fn zero_hat_c_i_alpha_is_rejected() {
        let m = single_factor([1.0; 4]);
        let c = CountingNumbers::new(&m, vec![0.0], vec![1.0, 1.0], vec![0.0, 0.5]).unwrap();
        let mut s = init_messages(&m);
        assert!(matches!(
            update_block(&m, &c, 1.0, &mut s, 0),
            Err(EngineError::NonPositiveHatCIAlpha { var: 0, .. })
        ));
    }
}
