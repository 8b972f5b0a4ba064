//! Counting numbers `(c_α, c_i, c_iα)` parameterising the fractional entropy
//!
//! ```text
//! H̃(b) = Σ_α c_α H(b_α) + Σ_i c_i H(b_i) + Σ_{i,α∈N(i)} c_iα (H(b_α) − H(b_i))
//! ```
//!
//! together with the presets and transformations used by the solvers: Bethe,
//! TRW from spanning-tree edge probabilities, NMPLP, the trivial convex
//! setting, conversion of `c_α = 0` settings into the convex class, and the
//! least-squares uniformity heuristic.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::Model;
use crate::qp::{self, QpError, QpOptions};

/// Lower bound imposed on `c_α` wherever strict positivity is required.
pub const C_ALPHA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CountingError {
    #[error("{what} has {got} entries, the model needs {expected}")]
    IndexMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("factor {factor} is not pairwise (arity {arity})")]
    NotPairwise { factor: usize, arity: usize },
    #[error("graph is disconnected")]
    Disconnected,
    #[error("edge probability of factor {factor} is {value}, expected a value in (0, 1]")]
    EdgeProbabilityRange { factor: usize, value: f64 },
    #[error(
        "conversion input must have c_alpha = 0, c_i >= 0 and c_i_alpha >= 0 (violated at {0})"
    )]
    ConvexifyPrecondition(String),
    #[error("variable {var} gives no positive mass to any incident factor")]
    NoMassAtVariable { var: usize },
    #[error(
        "factor {factor} receives no mass from its variables; the converted c_alpha would be 0"
    )]
    ZeroFactorMass { factor: usize },
    #[error("least-squares counting numbers: {0}")]
    Qp(#[from] QpError),
    #[error("non-finite counting number")]
    NonFinite,
}

/// Convexity class of a counting-number setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convexity {
    /// `c_α > 0`, `c_i ≥ 0`, `c_iα ≥ 0`
    Convex,
    NonConvex,
}

/// The first condition that keeps a setting out of the convex class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    NonPositiveCAlpha { factor: usize },
    NegativeCI { var: usize },
    NegativeCIAlpha { var: usize, factor: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveCAlpha { factor } => write!(f, "c_alpha<=0 at factor {factor}"),
            Violation::NegativeCI { var } => write!(f, "c_i<0 at variable {var}"),
            Violation::NegativeCIAlpha { var, factor } => {
                write!(f, "c_i_alpha<0 at variable {var}, factor {factor}")
            }
        }
    }
}

/// `c̄_α = c_α + Σ_{i∈N(α)} c_iα` and `c̄_i = c_i − Σ_{α∈N(i)} c_iα`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarCoefficients {
    pub bar_c_alpha: Vec<f64>,
    pub bar_c_i: Vec<f64>,
}

/// Counting numbers bound to one model's index sets. `c_i_alpha` is indexed
/// by incidence id (see [`Model::incidence_id`]).
#[derive(Debug, Clone, PartialEq)]
pub struct CountingNumbers {
    c_alpha: Vec<f64>,
    c_i: Vec<f64>,
    c_i_alpha: Vec<f64>,
    hat_c_i: Vec<f64>,
    hat_c_i_alpha: Vec<f64>,
    bar: BarCoefficients,
    violations: Vec<Violation>,
}

impl CountingNumbers {
    pub fn new(
        model: &Model,
        c_alpha: Vec<f64>,
        c_i: Vec<f64>,
        c_i_alpha: Vec<f64>,
    ) -> Result<Self, CountingError> {
        check_len("c_alpha", c_alpha.len(), model.num_factors())?;
        check_len("c_i", c_i.len(), model.num_vars())?;
        check_len("c_i_alpha", c_i_alpha.len(), model.num_incidences())?;
        if c_alpha
            .iter()
            .chain(&c_i)
            .chain(&c_i_alpha)
            .any(|v| !v.is_finite())
        {
            return Err(CountingError::NonFinite);
        }

        let mut hat_c_i = c_i.clone();
        let mut bar_c_i = c_i.clone();
        let mut bar_c_alpha = c_alpha.clone();
        let mut hat_c_i_alpha = vec![0.0; model.num_incidences()];
        let mut violations = Vec::new();
        for (a, &ca) in c_alpha.iter().enumerate() {
            if !(ca > 0.0) {
                violations.push(Violation::NonPositiveCAlpha { factor: a });
            }
        }
        for i in 0..model.num_vars() {
            if c_i[i] < 0.0 {
                violations.push(Violation::NegativeCI { var: i });
            }
            for inc in model.incidences(i) {
                let cia = c_i_alpha[inc.id];
                hat_c_i[i] += c_alpha[inc.factor];
                bar_c_i[i] -= cia;
                bar_c_alpha[inc.factor] += cia;
                hat_c_i_alpha[inc.id] = c_alpha[inc.factor] + cia;
                if cia < 0.0 {
                    violations.push(Violation::NegativeCIAlpha {
                        var: i,
                        factor: inc.factor,
                    });
                }
            }
        }
        Ok(Self {
            c_alpha,
            c_i,
            c_i_alpha,
            hat_c_i,
            hat_c_i_alpha,
            bar: BarCoefficients {
                bar_c_alpha,
                bar_c_i,
            },
            violations,
        })
    }

    pub fn c_alpha(&self) -> &[f64] {
        &self.c_alpha
    }

    pub fn c_i(&self) -> &[f64] {
        &self.c_i
    }

    /// Indexed by incidence id.
    pub fn c_i_alpha(&self) -> &[f64] {
        &self.c_i_alpha
    }

    /// `ĉ_i = c_i + Σ_{α∈N(i)} c_α`
    pub fn hat_c_i(&self) -> &[f64] {
        &self.hat_c_i
    }

    /// `ĉ_iα = c_α + c_iα`, indexed by incidence id.
    pub fn hat_c_i_alpha(&self) -> &[f64] {
        &self.hat_c_i_alpha
    }

    pub fn bar(&self) -> &BarCoefficients {
        &self.bar
    }

    pub fn class(&self) -> Convexity {
        if self.violations.is_empty() {
            Convexity::Convex
        } else {
            Convexity::NonConvex
        }
    }

    pub fn is_convex(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    /// True when no `c_iα` is non-zero, i.e. `n_{i→α}` depends on `x_i` only.
    pub fn has_zero_c_i_alpha(&self) -> bool {
        self.c_i_alpha.iter().all(|&v| v == 0.0)
    }
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), CountingError> {
    if got == expected {
        Ok(())
    } else {
        Err(CountingError::IndexMismatch {
            what,
            got,
            expected,
        })
    }
}

pub fn bar_coefficients(counting: &CountingNumbers) -> BarCoefficients {
    counting.bar.clone()
}

/// Outcome of [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub bar: BarCoefficients,
    pub class: Convexity,
    /// `ĉ_i > 0` for every variable.
    pub hat_c_i_positive: bool,
    /// `ĉ_iα > 0` for every incidence.
    pub hat_c_i_alpha_positive: bool,
    /// Every reason the setting is not convex (empty when convex).
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    /// Short reason for the first failed convexity condition, e.g. `"c_i<0"`.
    pub fn reason(&self) -> Option<&'static str> {
        self.violations.first().map(|v| match v {
            Violation::NonPositiveCAlpha { .. } => "c_alpha<=0",
            Violation::NegativeCI { .. } => "c_i<0",
            Violation::NegativeCIAlpha { .. } => "c_i_alpha<0",
        })
    }
}

pub fn validate(
    model: &Model,
    counting: &CountingNumbers,
) -> Result<ValidationReport, CountingError> {
    check_len("c_alpha", counting.c_alpha.len(), model.num_factors())?;
    check_len("c_i", counting.c_i.len(), model.num_vars())?;
    check_len(
        "c_i_alpha",
        counting.c_i_alpha.len(),
        model.num_incidences(),
    )?;
    Ok(ValidationReport {
        bar: counting.bar.clone(),
        class: counting.class(),
        hat_c_i_positive: counting.hat_c_i.iter().all(|&v| v > 0.0),
        hat_c_i_alpha_positive: counting.hat_c_i_alpha.iter().all(|&v| v > 0.0),
        violations: counting.violations.clone(),
    })
}

/// Bethe: `c_α = 1`, `c_i = 1 − d_i`, `c_iα = 0`.
pub fn bethe(model: &Model) -> CountingNumbers {
    let c_i = (0..model.num_vars())
        .map(|i| 1.0 - model.degree(i) as f64)
        .collect();
    CountingNumbers::new(
        model,
        vec![1.0; model.num_factors()],
        c_i,
        vec![0.0; model.num_incidences()],
    )
    .expect("sizes derived from the model")
}

/// `c_α = 1`, `c_i = 0`, `c_iα = 0`; isolated variables get `c_i = 1` so that
/// `ĉ_i > 0` holds everywhere.
pub fn trivial_convex(model: &Model) -> CountingNumbers {
    let c_i = (0..model.num_vars())
        .map(|i| if model.degree(i) == 0 { 1.0 } else { 0.0 })
        .collect();
    CountingNumbers::new(
        model,
        vec![1.0; model.num_factors()],
        c_i,
        vec![0.0; model.num_incidences()],
    )
    .expect("sizes derived from the model")
}

fn require_pairwise(model: &Model) -> Result<(), CountingError> {
    match model
        .factors()
        .iter()
        .enumerate()
        .find(|(_, f)| f.arity() != 2)
    {
        Some((factor, f)) => Err(CountingError::NotPairwise {
            factor,
            arity: f.arity(),
        }),
        None => Ok(()),
    }
}

/// NMPLP: `c_α = 1`, `c_i = (1 − d_i)/2`, `c_iα = 0` (pairwise models only).
pub fn nmplp(model: &Model) -> Result<CountingNumbers, CountingError> {
    require_pairwise(model)?;
    let c_i = (0..model.num_vars())
        .map(|i| (1.0 - model.degree(i) as f64) / 2.0)
        .collect();
    CountingNumbers::new(
        model,
        vec![1.0; model.num_factors()],
        c_i,
        vec![0.0; model.num_incidences()],
    )
}

fn is_connected(model: &Model) -> bool {
    let n = model.num_vars();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for inc in model.incidences(v) {
            for &u in model.factor(inc.factor).scope() {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
    }
    count == n
}

/// Moore–Penrose pseudo-inverse of the graph Laplacian of a connected
/// pairwise model, via `L⁺ = (L + J/n)⁻¹ − J/n`.
fn laplacian_pinv(model: &Model) -> Result<DMatrix<f64>, CountingError> {
    require_pairwise(model)?;
    if !is_connected(model) {
        return Err(CountingError::Disconnected);
    }
    let n = model.num_vars();
    let shift = 1.0 / n as f64;
    let mut l = DMatrix::<f64>::from_element(n, n, shift);
    for f in model.factors() {
        let (i, j) = (f.scope()[0], f.scope()[1]);
        l[(i, i)] += 1.0;
        l[(j, j)] += 1.0;
        l[(i, j)] -= 1.0;
        l[(j, i)] -= 1.0;
    }
    let inv = l.cholesky().ok_or(CountingError::Disconnected)?.inverse();
    Ok(inv.map(|v| v - shift))
}

/// Edge appearance probabilities `ρ_e` under the uniform distribution over
/// spanning trees, computed as effective resistances `L⁺_ii + L⁺_jj − 2L⁺_ij`
/// (Kirchhoff's matrix-tree theorem).
pub fn spanning_tree_edge_probabilities(model: &Model) -> Result<Vec<f64>, CountingError> {
    let pinv = laplacian_pinv(model)?;
    Ok(model
        .factors()
        .iter()
        .map(|f| {
            let (i, j) = (f.scope()[0], f.scope()[1]);
            (pinv[(i, i)] + pinv[(j, j)] - 2.0 * pinv[(i, j)]).clamp(0.0, 1.0)
        })
        .collect())
}

/// TRW: `c_α = ρ_α`, `c_i = 1 − Σ_{α∈N(i)} ρ_α`, `c_iα = 0`.
pub fn trw_from_edge_probabilities(
    model: &Model,
    rho: &[f64],
) -> Result<CountingNumbers, CountingError> {
    check_len("rho", rho.len(), model.num_factors())?;
    if let Some((factor, &value)) = rho
        .iter()
        .enumerate()
        .find(|(_, &r)| !(r > 0.0 && r <= 1.0))
    {
        return Err(CountingError::EdgeProbabilityRange { factor, value });
    }
    let c_i = (0..model.num_vars())
        .map(|i| {
            1.0 - model
                .incidences(i)
                .iter()
                .map(|inc| rho[inc.factor])
                .sum::<f64>()
        })
        .collect();
    CountingNumbers::new(model, rho.to_vec(), c_i, vec![0.0; model.num_incidences()])
}

/// The same TRW entropy written with `c_α = 0`, `c_i, c_iα ≥ 0`: the tree
/// entropy rooted at a uniformly random vertex. `c_i = 1/n` and, for edge
/// `α = (i, j)`, `c_iα` is the probability that `α` is in the tree with `i`
/// on the root side, which equals `L⁺_jj − L⁺_ij`.
pub fn trw_uniform_root(model: &Model) -> Result<CountingNumbers, CountingError> {
    let pinv = laplacian_pinv(model)?;
    let n = model.num_vars();
    let mut c_i_alpha = vec![0.0; model.num_incidences()];
    for (a, f) in model.factors().iter().enumerate() {
        let (i, j) = (f.scope()[0], f.scope()[1]);
        c_i_alpha[model.incidence_id(a, 0)] = (pinv[(j, j)] - pinv[(i, j)]).max(0.0);
        c_i_alpha[model.incidence_id(a, 1)] = (pinv[(i, i)] - pinv[(i, j)]).max(0.0);
    }
    CountingNumbers::new(
        model,
        vec![0.0; model.num_factors()],
        vec![1.0 / n as f64; n],
        c_i_alpha,
    )
}

/// Convert a setting with `c_α = 0`, `c_i, c_iα ≥ 0` into an equivalent one
/// (same `c̄_α`, `c̄_i`) in the convex class. Every pair `(i, α ∈ N(i))` takes
/// the share `c_i/d_i` and compares it with `c_iα`:
///
/// * `c_iα ≤ c_i/d_i`: `c'_α += c_iα`, `c'_i += c_i/d_i − c_iα`
/// * otherwise: `c'_α += c_i/d_i`, `c'_iα += c_iα − c_i/d_i`
pub fn convexify(model: &Model, input: &CountingNumbers) -> Result<CountingNumbers, CountingError> {
    validate(model, input)?;
    if let Some(a) = input.c_alpha.iter().position(|&v| v != 0.0) {
        return Err(CountingError::ConvexifyPrecondition(alloc::format!(
            "c_alpha[{a}]"
        )));
    }
    if let Some(i) = input.c_i.iter().position(|&v| v < 0.0) {
        return Err(CountingError::ConvexifyPrecondition(alloc::format!(
            "c_i[{i}]"
        )));
    }
    if let Some(e) = input.c_i_alpha.iter().position(|&v| v < 0.0) {
        return Err(CountingError::ConvexifyPrecondition(alloc::format!(
            "c_i_alpha[{e}]"
        )));
    }

    let mut c_alpha = vec![0.0; model.num_factors()];
    let mut c_i = vec![0.0; model.num_vars()];
    let mut c_i_alpha = vec![0.0; model.num_incidences()];
    for i in 0..model.num_vars() {
        let incs = model.incidences(i);
        if incs.is_empty() {
            c_i[i] = input.c_i[i];
            continue;
        }
        let share = input.c_i[i] / incs.len() as f64;
        if incs
            .iter()
            .all(|inc| share + input.c_i_alpha[inc.id] <= 0.0)
        {
            return Err(CountingError::NoMassAtVariable { var: i });
        }
        for inc in incs {
            let cia = input.c_i_alpha[inc.id];
            if cia <= share {
                c_alpha[inc.factor] += cia;
                c_i[i] += share - cia;
            } else {
                c_alpha[inc.factor] += share;
                c_i_alpha[inc.id] += cia - share;
            }
        }
    }
    if let Some(factor) = c_alpha.iter().position(|&v| v <= 0.0) {
        return Err(CountingError::ZeroFactorMass { factor });
    }
    CountingNumbers::new(model, c_alpha, c_i, c_i_alpha)
}

/// TRW entropy in the convex class: [`convexify`] of [`trw_uniform_root`].
pub fn trw_convex(model: &Model) -> Result<CountingNumbers, CountingError> {
    convexify(model, &trw_uniform_root(model)?)
}

#[derive(Debug, Clone, Copy)]
pub struct L2Options {
    /// Tikhonov weight that selects one optimum among the flat directions.
    pub ridge: f64,
    /// Required equality residual and projected-gradient norm.
    pub tol: f64,
    /// Lower bound on every `c_α`.
    pub c_alpha_floor: f64,
}

impl Default for L2Options {
    fn default() -> Self {
        Self {
            ridge: 1e-9,
            tol: 1e-8,
            c_alpha_floor: C_ALPHA_FLOOR,
        }
    }
}

/// Diagnostics attached to an [`l2_convex`] solution.
#[derive(Debug, Clone, PartialEq)]
pub struct L2Report {
    /// `Σ_α (c̄_α − 1)²`
    pub objective: f64,
    pub eq_residual: f64,
    pub kkt_residual: f64,
}

/// Layout of the stacked variable vector `[c_α | c_i | c_iα]`.
struct Layout {
    nf: usize,
    nv: usize,
    ne: usize,
}

impl Layout {
    fn new(model: &Model) -> Self {
        Self {
            nf: model.num_factors(),
            nv: model.num_vars(),
            ne: model.num_incidences(),
        }
    }
    fn dim(&self) -> usize {
        self.nf + self.nv + self.ne
    }
    fn alpha(&self, a: usize) -> usize {
        a
    }
    fn var(&self, i: usize) -> usize {
        self.nf + i
    }
    fn inc(&self, e: usize) -> usize {
        self.nf + self.nv + e
    }
}

/// Admissibility equalities `c_i + Σ_{α∈N(i)} (c_α + Σ_{j∈N(α)∖i} c_jα) = 1`
/// and the bounds `c_α ≥ floor`, `c_i, c_iα ≥ 0`.
fn admissibility(
    model: &Model,
    layout: &Layout,
    floor: f64,
) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let mut a = DMatrix::<f64>::zeros(layout.nv, layout.dim());
    for i in 0..layout.nv {
        a[(i, layout.var(i))] = 1.0;
        for inc in model.incidences(i) {
            a[(i, layout.alpha(inc.factor))] += 1.0;
            for (pos, _) in model.factor(inc.factor).scope().iter().enumerate() {
                if pos != inc.position {
                    a[(i, layout.inc(model.incidence_id(inc.factor, pos)))] += 1.0;
                }
            }
        }
    }
    let b = DVector::from_element(layout.nv, 1.0);
    let mut lo = DVector::<f64>::zeros(layout.dim());
    for f in 0..layout.nf {
        lo[layout.alpha(f)] = floor;
    }
    (a, b, lo)
}

/// `c̄_α` as a linear map of the stacked vector.
fn bar_alpha_map(model: &Model, layout: &Layout) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(layout.nf, layout.dim());
    for (f, fac) in model.factors().iter().enumerate() {
        m[(f, layout.alpha(f))] = 1.0;
        for pos in 0..fac.arity() {
            m[(f, layout.inc(model.incidence_id(f, pos)))] = 1.0;
        }
    }
    m
}

fn unstack(
    model: &Model,
    layout: &Layout,
    x: &DVector<f64>,
) -> Result<CountingNumbers, CountingError> {
    let c_alpha = (0..layout.nf).map(|f| x[layout.alpha(f)]).collect();
    let c_i = (0..layout.nv).map(|i| x[layout.var(i)]).collect();
    let c_i_alpha = (0..layout.ne).map(|e| x[layout.inc(e)]).collect();
    CountingNumbers::new(model, c_alpha, c_i, c_i_alpha)
}

fn l2_objective(bar_map: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    (bar_map * x).iter().map(|&v| (v - 1.0) * (v - 1.0)).sum()
}

/// Least-squares uniformity heuristic: among admissible convex settings pick
/// the one minimising `Σ_α (c̄_α − 1)²` (plus a tiny ridge on all entries).
///
/// On graphs with at least as many factors as variables the optimum has every
/// `c_α` on its floor. Beliefs are recovered through `exp(·/εc_α)`, so a tiny
/// floor makes message passing converge very slowly; raise `c_alpha_floor` to
/// trade uniformity for conditioning.
pub fn l2_convex(
    model: &Model,
    opts: &L2Options,
) -> Result<(CountingNumbers, L2Report), CountingError> {
    let layout = Layout::new(model);
    let (a, b, lo) = admissibility(model, &layout, opts.c_alpha_floor);
    let bar_map = bar_alpha_map(model, &layout);
    let mut p = bar_map.transpose() * &bar_map * 2.0;
    for j in 0..layout.dim() {
        p[(j, j)] += 2.0 * opts.ridge;
    }
    let q = -(bar_map.transpose() * DVector::from_element(layout.nf, 1.0)) * 2.0;
    let qp_opts = QpOptions {
        tol: opts.tol,
        ..QpOptions::default()
    };
    let sol = qp::solve(&p, &q, &a, &b, &lo, &qp_opts)?;
    let report = L2Report {
        objective: l2_objective(&bar_map, &sol.x),
        eq_residual: sol.eq_residual,
        kkt_residual: sol.kkt_residual,
    };
    Ok((unstack(model, &layout, &sol.x)?, report))
}

/// Euclidean projection of `target` onto the admissible convex settings, with
/// its least-squares uniformity objective.
pub fn admissible_projection(
    model: &Model,
    target: &CountingNumbers,
) -> Result<(CountingNumbers, f64), CountingError> {
    let layout = Layout::new(model);
    let (a, b, lo) = admissibility(model, &layout, C_ALPHA_FLOOR);
    let mut t = DVector::<f64>::zeros(layout.dim());
    for f in 0..layout.nf {
        t[layout.alpha(f)] = target.c_alpha[f];
    }
    for i in 0..layout.nv {
        t[layout.var(i)] = target.c_i[i];
    }
    for e in 0..layout.ne {
        t[layout.inc(e)] = target.c_i_alpha[e];
    }
    let p = DMatrix::<f64>::identity(layout.dim(), layout.dim());
    let sol = qp::solve(&p, &(-t), &a, &b, &lo, &QpOptions::default())?;
    let bar_map = bar_alpha_map(model, &layout);
    Ok((
        unstack(model, &layout, &sol.x)?,
        l2_objective(&bar_map, &sol.x),
    ))
}

/// Largest violation of the admissibility equalities.
pub fn admissibility_residual(model: &Model, counting: &CountingNumbers) -> f64 {
    (0..model.num_vars())
        .map(|i| {
            let mut s = counting.c_i[i];
            for inc in model.incidences(i) {
                s += counting.c_alpha[inc.factor];
                for pos in 0..model.factor(inc.factor).arity() {
                    if pos != inc.position {
                        s += counting.c_i_alpha[model.incidence_id(inc.factor, pos)];
                    }
                }
            }
            (s - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Factor;

    fn pairwise(n: usize, edges: &[(usize, usize)]) -> Model {
        Model::new(
            vec![2; n],
            vec![vec![0.0; 2]; n],
            edges
                .iter()
                .map(|&(i, j)| Factor::new(vec![i, j], vec![0.0; 4]))
                .collect(),
            true,
        )
        .unwrap()
    }

    fn chain3() -> Model {
        pairwise(3, &[(0, 1), (1, 2)])
    }

    fn triangle() -> Model {
        pairwise(3, &[(0, 1), (0, 2), (1, 2)])
    }

    #[test]
    fn bethe_on_chain() {
        let c = bethe(&chain3());
        assert_eq!(c.c_i(), &[0.0, -1.0, 0.0]);
        assert_eq!(c.c_alpha(), &[1.0, 1.0]);
        assert_eq!(c.hat_c_i(), &[1.0, 1.0, 1.0]);
        assert_eq!(c.bar().bar_c_alpha, vec![1.0, 1.0]);
        assert_eq!(c.bar().bar_c_i, vec![0.0, -1.0, 0.0]);
        assert_eq!(c.class(), Convexity::NonConvex);
    }

    #[test]
    fn bethe_single_variable() {
        let m = pairwise(1, &[]);
        let c = bethe(&m);
        assert_eq!(c.c_i(), &[1.0]);
        assert_eq!(c.hat_c_i(), &[1.0]);
    }

    #[test]
    fn trivial_convex_presets() {
        let c = trivial_convex(&chain3());
        assert_eq!(c.hat_c_i(), &[1.0, 2.0, 1.0]);
        assert_eq!(c.class(), Convexity::Convex);
        let iso = trivial_convex(&pairwise(2, &[]));
        assert_eq!(iso.c_i(), &[1.0, 1.0]);
        assert!(iso.hat_c_i().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn nmplp_weights() {
        let star = pairwise(4, &[(0, 1), (0, 2), (0, 3)]);
        let c = nmplp(&star).unwrap();
        assert_eq!(c.c_i()[0], -1.0);
        assert_eq!(c.hat_c_i()[0], 2.0);
        assert_eq!(c.c_alpha()[0] / c.hat_c_i()[0], 2.0 / (3.0 + 1.0));
        assert_eq!(c.c_i()[1], 0.0);
        let t = nmplp(&triangle()).unwrap();
        assert!(t.hat_c_i().iter().all(|&v| v == 1.5));
        let report = validate(&star, &c).unwrap();
        assert_eq!(report.class, Convexity::NonConvex);
        assert_eq!(report.reason(), Some("c_i<0"));
    }

    #[test]
    fn nmplp_rejects_higher_order() {
        let m = Model::new(
            vec![2, 2, 2],
            vec![vec![0.0; 2]; 3],
            vec![Factor::new(vec![0, 1, 2], vec![0.0; 8])],
            true,
        )
        .unwrap();
        assert!(matches!(
            nmplp(&m),
            Err(CountingError::NotPairwise {
                factor: 0,
                arity: 3
            })
        ));
    }

    #[test]
    fn edge_probabilities_small_graphs() {
        let rho = spanning_tree_edge_probabilities(&triangle()).unwrap();
        for r in rho {
            assert!((r - 2.0 / 3.0).abs() < 1e-12);
        }
        let cycle = pairwise(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        for r in spanning_tree_edge_probabilities(&cycle).unwrap() {
            assert!((r - 0.75).abs() < 1e-12);
        }
        for r in spanning_tree_edge_probabilities(&chain3()).unwrap() {
            assert!((r - 1.0).abs() < 1e-12);
        }
        assert_eq!(
            spanning_tree_edge_probabilities(&pairwise(3, &[(0, 1)])),
            Err(CountingError::Disconnected)
        );
    }

    #[test]
    fn trw_settings() {
        let t = triangle();
        let c = trw_from_edge_probabilities(&t, &[2.0 / 3.0; 3]).unwrap();
        for &ci in c.c_i() {
            assert!((ci + 1.0 / 3.0).abs() < 1e-12);
        }
        for &h in c.hat_c_i() {
            assert!((h - 1.0).abs() < 1e-12);
        }
        let chain = chain3();
        assert_eq!(
            trw_from_edge_probabilities(&chain, &[1.0, 1.0]).unwrap(),
            bethe(&chain)
        );
        assert!(matches!(
            trw_from_edge_probabilities(&t, &[0.0, 0.5, 0.5]),
            Err(CountingError::EdgeProbabilityRange { factor: 0, .. })
        ));
    }

    #[test]
    fn uniform_root_matches_trw_bar_coefficients() {
        let m = pairwise(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)]);
        let rho = spanning_tree_edge_probabilities(&m).unwrap();
        let first = trw_from_edge_probabilities(&m, &rho).unwrap();
        let rooted = trw_uniform_root(&m).unwrap();
        for (x, y) in first
            .bar()
            .bar_c_alpha
            .iter()
            .zip(&rooted.bar().bar_c_alpha)
        {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in first.bar().bar_c_i.iter().zip(&rooted.bar().bar_c_i) {
            assert!((x - y).abs() < 1e-12);
        }
        let convex = trw_convex(&m).unwrap();
        assert_eq!(convex.class(), Convexity::Convex);
    }

    #[test]
    fn convexify_case_one() {
        // single edge; variable 0 has d=1, c_i=0.5, c_iα=0.2
        let m = pairwise(2, &[(0, 1)]);
        let input = CountingNumbers::new(&m, vec![0.0], vec![0.5, 0.5], vec![0.2, 0.2]).unwrap();
        let out = convexify(&m, &input).unwrap();
        assert!((out.c_alpha()[0] - 0.4).abs() < 1e-15);
        assert!((out.c_i()[0] - 0.3).abs() < 1e-15);
        assert_eq!(out.c_i_alpha(), &[0.0, 0.0]);
    }

    #[test]
    fn convexify_case_two() {
        let m = pairwise(2, &[(0, 1)]);
        let input = CountingNumbers::new(&m, vec![0.0], vec![0.5, 0.0], vec![0.8, 0.1]).unwrap();
        let out = convexify(&m, &input).unwrap();
        // var 0: case 2 → c'_α += 0.5, c'_0α += 0.3; var 1: share 0 < 0.1 → c'_α += 0, c'_1α += 0.1
        assert!((out.c_alpha()[0] - 0.5).abs() < 1e-15);
        assert!((out.c_i_alpha()[0] - 0.3).abs() < 1e-15);
        assert!((out.c_i_alpha()[1] - 0.1).abs() < 1e-15);
        assert_eq!(out.c_i(), &[0.0, 0.0]);
        assert_eq!(out.class(), Convexity::Convex);
        for (x, y) in out.bar().bar_c_i.iter().zip(&input.bar().bar_c_i) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn convexify_errors() {
        let m = pairwise(2, &[(0, 1)]);
        let bad = CountingNumbers::new(&m, vec![1.0], vec![0.5, 0.5], vec![0.2, 0.2]).unwrap();
        assert!(matches!(
            convexify(&m, &bad),
            Err(CountingError::ConvexifyPrecondition(_))
        ));
        let empty = CountingNumbers::new(&m, vec![0.0], vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            convexify(&m, &empty),
            Err(CountingError::NoMassAtVariable { var: 0 })
        ));
    }

    #[test]
    fn l2_single_variable() {
        let m = pairwise(1, &[]);
        let (c, _) = l2_convex(&m, &L2Options::default()).unwrap();
        assert!((c.c_i()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn index_mismatch_is_reported() {
        let m = chain3();
        assert!(matches!(
            CountingNumbers::new(&m, vec![1.0], vec![0.0; 3], vec![0.0; 4]),
            Err(CountingError::IndexMismatch {
                what: "c_alpha",
                ..
            })
        ));
        let other = triangle();
        assert!(validate(&other, &bethe(&m)).is_err());
    }
}
