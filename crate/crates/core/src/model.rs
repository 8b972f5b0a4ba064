//! Discrete factor graphs with log-domain potentials.
//!
//! A [`Model`] holds per-variable local potentials `ln φ_i(x_i)` and a list of
//! [`Factor`]s with tables `ln ψ_α(x_α)`. Zero potentials are stored as `-∞`.
//! Factor tables are laid out row-major over the (sorted) scope, so the last
//! variable of the scope varies fastest.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("variable {var} has cardinality 0")]
    ZeroCardinality { var: usize },
    #[error("local potential of variable {var} has {got} entries, expected {expected}")]
    LocalShape {
        var: usize,
        got: usize,
        expected: usize,
    },
    #[error("{got} local potential tables given for {expected} variables")]
    LocalCount { got: usize, expected: usize },
    #[error("factor {factor} has an empty scope")]
    EmptyScope { factor: usize },
    #[error("factor {factor} references variable {var} but the model has {num_vars} variables")]
    ScopeOutOfRange {
        factor: usize,
        var: usize,
        num_vars: usize,
    },
    #[error("factor {factor} scope is not strictly increasing")]
    UnsortedScope { factor: usize },
    #[error("factor {factor} table has {got} entries, expected {expected}")]
    TableShape {
        factor: usize,
        got: usize,
        expected: usize,
    },
    #[error("factor {factor} forbids every configuration")]
    ForbiddenFactor { factor: usize },
    #[error("variable {var} forbids every state")]
    ForbiddenVariable { var: usize },
    #[error("potential contains NaN or +inf (factor {factor:?}, variable {var:?})")]
    InvalidPotential {
        factor: Option<usize>,
        var: Option<usize>,
    },
    #[error("factors {first},{second} share {shared} variables")]
    Overlap {
        first: usize,
        second: usize,
        shared: usize,
    },
    #[error("assignment has {got} entries for {expected} variables")]
    AssignmentLength { got: usize, expected: usize },
    #[error("assignment gives variable {var} state {state} but it has {card} states")]
    AssignmentRange {
        var: usize,
        state: usize,
        card: usize,
    },
}

/// A factor `ψ_α` over a sorted scope, stored as `ln ψ_α` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    scope: Vec<usize>,
    log_psi: Vec<f64>,
    cards: Vec<usize>,
    strides: Vec<usize>,
}

impl Factor {
    /// An unvalidated factor; [`Model::new`] checks it against the variables.
    pub fn new(scope: Vec<usize>, log_psi: Vec<f64>) -> Self {
        Self {
            scope,
            log_psi,
            cards: Vec::new(),
            strides: Vec::new(),
        }
    }

    /// Build a factor from a table given in an arbitrary scope order, permuting
    /// it into the sorted layout. `cards` are the cardinalities of the whole model.
    pub fn from_unsorted(scope: &[usize], table: &[f64], cards: &[usize]) -> Self {
        let mut order: Vec<usize> = (0..scope.len()).collect();
        order.sort_by_key(|&k| scope[k]);
        let sorted: Vec<usize> = order.iter().map(|&k| scope[k]).collect();
        let in_cards: Vec<usize> = scope
            .iter()
            .map(|&v| cards.get(v).copied().unwrap_or(0))
            .collect();
        let in_strides = math::strides(&in_cards);
        let out_cards: Vec<usize> = order.iter().map(|&k| in_cards[k]).collect();
        let len: usize = in_cards.iter().product();
        if len != table.len() || in_cards.contains(&0) {
            // let validation report the mismatch
            return Self::new(sorted, table.to_vec());
        }
        let mut out = vec![0.0; len];
        let mut states = vec![0usize; scope.len()];
        let mut flat = 0usize;
        loop {
            let src: usize = order
                .iter()
                .zip(&states)
                .map(|(&k, &s)| s * in_strides[k])
                .sum();
            out[flat] = table[src];
            flat += 1;
            if !math::advance(&mut states, &out_cards) {
                break;
            }
        }
        Self::new(sorted, out)
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn log_psi(&self) -> &[f64] {
        &self.log_psi
    }

    /// Cardinalities of the scope variables, in scope order.
    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn arity(&self) -> usize {
        self.scope.len()
    }

    /// Number of joint configurations `n_α`.
    pub fn len(&self) -> usize {
        self.log_psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_psi.is_empty()
    }

    /// State of the scope variable at `position` inside configuration `flat`.
    #[inline]
    pub fn state_at(&self, flat: usize, position: usize) -> usize {
        (flat / self.strides[position]) % self.cards[position]
    }

    /// Flat index of the configuration selected by a full assignment.
    pub fn index_of(&self, states: &[usize]) -> usize {
        self.scope
            .iter()
            .zip(&self.strides)
            .map(|(&v, &s)| states[v] * s)
            .sum()
    }

    /// Position of `var` inside the scope.
    pub fn position_of(&self, var: usize) -> Option<usize> {
        self.scope.binary_search(&var).ok()
    }
}

/// Membership of a variable in a factor scope: one edge of the factor graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub factor: usize,
    /// Position of the variable inside the factor scope.
    pub position: usize,
    /// Dense edge id in `0..Model::num_incidences()`.
    pub id: usize,
}

/// An immutable discrete factor graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    cards: Vec<usize>,
    log_phi: Vec<Vec<f64>>,
    factors: Vec<Factor>,
    var_to_factors: Vec<Vec<Incidence>>,
    incidence_offset: Vec<usize>,
    num_incidences: usize,
}

impl Model {
    /// Validate and assemble a model. With `strict`, any two factors may share
    /// at most one variable.
    pub fn new(
        cards: Vec<usize>,
        log_phi: Vec<Vec<f64>>,
        mut factors: Vec<Factor>,
        strict: bool,
    ) -> Result<Self, ModelError> {
        let n = cards.len();
        if let Some(var) = cards.iter().position(|&c| c == 0) {
            return Err(ModelError::ZeroCardinality { var });
        }
        if log_phi.len() != n {
            return Err(ModelError::LocalCount {
                got: log_phi.len(),
                expected: n,
            });
        }
        for (var, (phi, &card)) in log_phi.iter().zip(&cards).enumerate() {
            if phi.len() != card {
                return Err(ModelError::LocalShape {
                    var,
                    got: phi.len(),
                    expected: card,
                });
            }
            if phi.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(ModelError::InvalidPotential {
                    factor: None,
                    var: Some(var),
                });
            }
            if phi.iter().all(|&v| v == f64::NEG_INFINITY) {
                return Err(ModelError::ForbiddenVariable { var });
            }
        }

        let mut var_to_factors: Vec<Vec<Incidence>> = vec![Vec::new(); n];
        let mut incidence_offset = Vec::with_capacity(factors.len());
        let mut next_id = 0usize;
        for (a, f) in factors.iter_mut().enumerate() {
            if f.scope.is_empty() {
                return Err(ModelError::EmptyScope { factor: a });
            }
            if let Some(&var) = f.scope.iter().find(|&&v| v >= n) {
                return Err(ModelError::ScopeOutOfRange {
                    factor: a,
                    var,
                    num_vars: n,
                });
            }
            if f.scope.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ModelError::UnsortedScope { factor: a });
            }
            f.cards = f.scope.iter().map(|&v| cards[v]).collect();
            f.strides = math::strides(&f.cards);
            let expected: usize = f.cards.iter().product();
            if f.log_psi.len() != expected {
                return Err(ModelError::TableShape {
                    factor: a,
                    got: f.log_psi.len(),
                    expected,
                });
            }
            if f.log_psi.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(ModelError::InvalidPotential {
                    factor: Some(a),
                    var: None,
                });
            }
            if f.log_psi.iter().all(|&v| v == f64::NEG_INFINITY) {
                return Err(ModelError::ForbiddenFactor { factor: a });
            }
            incidence_offset.push(next_id);
            for (position, &v) in f.scope.iter().enumerate() {
                var_to_factors[v].push(Incidence {
                    factor: a,
                    position,
                    id: next_id + position,
                });
            }
            next_id += f.scope.len();
        }

        if strict {
            check_single_intersection(&factors, &var_to_factors)?;
        }

        Ok(Self {
            cards,
            log_phi,
            factors,
            var_to_factors,
            incidence_offset,
            num_incidences: next_id,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.cards.len()
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn num_incidences(&self) -> usize {
        self.num_incidences
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn card(&self, var: usize) -> usize {
        self.cards[var]
    }

    pub fn log_phi(&self, var: usize) -> &[f64] {
        &self.log_phi[var]
    }

    pub fn log_phis(&self) -> &[Vec<f64>] {
        &self.log_phi
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, a: usize) -> &Factor {
        &self.factors[a]
    }

    /// `N(i)`: the factors containing variable `var`, in factor order.
    pub fn incidences(&self, var: usize) -> &[Incidence] {
        &self.var_to_factors[var]
    }

    /// Degree `d_i` in the factor graph.
    pub fn degree(&self, var: usize) -> usize {
        self.var_to_factors[var].len()
    }

    /// Edge id of `(factor, position)`.
    pub fn incidence_id(&self, factor: usize, position: usize) -> usize {
        self.incidence_offset[factor] + position
    }

    /// True when every factor has exactly two variables.
    pub fn is_pairwise(&self) -> bool {
        self.factors.iter().all(|f| f.arity() == 2)
    }

    /// Total number of joint configurations, saturating at `usize::MAX`.
    pub fn joint_size(&self) -> usize {
        self.cards
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .unwrap_or(usize::MAX)
    }

    /// `ln Π φ_i(x_i) Π ψ_α(x_α)` for a full assignment.
    pub fn log_weight(&self, states: &[usize]) -> f64 {
        let mut w: f64 = states
            .iter()
            .enumerate()
            .map(|(i, &s)| self.log_phi[i][s])
            .sum();
        for f in &self.factors {
            w += f.log_psi[f.index_of(states)];
        }
        w
    }

    /// Energy `Σ θ_i(x_i) + Σ θ_α(x_α)` with `θ = -ln φ`; zero potentials give `+∞`.
    pub fn energy(&self, assignment: &Assignment) -> f64 {
        -self.log_weight(&assignment.0)
    }
}

fn check_single_intersection(
    factors: &[Factor],
    var_to_factors: &[Vec<Incidence>],
) -> Result<(), ModelError> {
    let mut shared = vec![0usize; factors.len()];
    for (a, f) in factors.iter().enumerate() {
        for x in shared.iter_mut() {
            *x = 0;
        }
        for &v in &f.scope {
            for inc in &var_to_factors[v] {
                if inc.factor < a {
                    shared[inc.factor] += 1;
                }
            }
        }
        if let Some((b, &count)) = shared.iter().enumerate().find(|(_, &c)| c > 1) {
            return Err(ModelError::Overlap {
                first: b,
                second: a,
                shared: count,
            });
        }
    }
    Ok(())
}

/// A full assignment `x`, one state per variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn new(model: &Model, states: Vec<usize>) -> Result<Self, ModelError> {
        if states.len() != model.num_vars() {
            return Err(ModelError::AssignmentLength {
                got: states.len(),
                expected: model.num_vars(),
            });
        }
        for (var, (&state, &card)) in states.iter().zip(model.cards()).enumerate() {
            if state >= card {
                return Err(ModelError::AssignmentRange { var, state, card });
            }
        }
        Ok(Self(states))
    }

    pub fn states(&self) -> &[usize] {
        &self.0
    }
}

/// `energy_of_assignment` as a free function.
pub fn energy_of_assignment(model: &Model, assignment: &Assignment) -> f64 {
    model.energy(assignment)
}
