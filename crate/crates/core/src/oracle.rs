//! Exact inference: brute-force enumeration and variable elimination.
//!
//! Variable elimination builds the bucket tree of an elimination order and
//! calibrates it with one upward and one downward log-domain pass, so every
//! singleton and factor marginal comes out of a single run. MAP uses the same
//! tree with maxima and a traceback in reverse elimination order.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math::{self, LogSumExp};
use crate::model::{Assignment, Model};

pub const DEFAULT_MAX_STATES: usize = 1 << 22;
pub const MAX_CLIQUE_ENTRIES: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("joint state space has {states} states, above the limit of {limit}")]
    TooManyStates { states: f64, limit: usize },
    #[error("induced width {width} is too large (largest cluster needs {entries} table entries, limit {limit})")]
    InducedWidthTooLarge {
        width: usize,
        entries: f64,
        limit: usize,
    },
    #[error("elimination order is not a permutation of the {num_vars} variables")]
    BadOrder { num_vars: usize },
    #[error("every assignment has zero probability")]
    Infeasible,
}

/// Exact quantities of a model. Marginals are linear-domain probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    pub log_z: f64,
    pub marginals_i: Vec<Vec<f64>>,
    pub marginals_alpha: Vec<Vec<f64>>,
    pub map_assignment: Assignment,
    pub map_energy: f64,
}

/// Exhaustive enumeration. The MAP assignment is the lexicographically
/// smallest among the maximisers.
pub fn enumerate_exact(model: &Model, max_states: usize) -> Result<ExactResult, OracleError> {
    let states: f64 = model.cards().iter().map(|&c| c as f64).product();
    if states > max_states as f64 {
        return Err(OracleError::TooManyStates {
            states,
            limit: max_states,
        });
    }
    let cards = model.cards();
    let mut acc_z = LogSumExp::new();
    let mut acc_i: Vec<Vec<LogSumExp>> = cards.iter().map(|&c| vec![LogSumExp::new(); c]).collect();
    let mut acc_alpha: Vec<Vec<LogSumExp>> = model
        .factors()
        .iter()
        .map(|f| vec![LogSumExp::new(); f.len()])
        .collect();
    let mut best = f64::NEG_INFINITY;
    let mut best_states: Vec<usize> = vec![0; cards.len()];
    let mut x = vec![0usize; cards.len()];
    let mut fidx = vec![0usize; model.num_factors()];
    loop {
        let mut w = 0.0;
        for (i, &xi) in x.iter().enumerate() {
            w += model.log_phi(i)[xi];
        }
        for (a, f) in model.factors().iter().enumerate() {
            let k: usize = f
                .scope()
                .iter()
                .zip(f.strides())
                .map(|(&v, &s)| x[v] * s)
                .sum();
            fidx[a] = k;
            w += f.log_psi()[k];
        }
        if w != f64::NEG_INFINITY {
            acc_z.push(w);
            for (i, &xi) in x.iter().enumerate() {
                acc_i[i][xi].push(w);
            }
            for (a, &k) in fidx.iter().enumerate() {
                acc_alpha[a][k].push(w);
            }
            if w > best {
                best = w;
                best_states.copy_from_slice(&x);
            }
        }
        if !math::advance(&mut x, cards) {
            break;
        }
    }
    let log_z = acc_z.value();
    if log_z == f64::NEG_INFINITY {
        return Err(OracleError::Infeasible);
    }
    let to_probs = |accs: &Vec<LogSumExp>| -> Vec<f64> {
        accs.iter().map(|a| math::exp(a.value() - log_z)).collect()
    };
    let map_assignment = Assignment(best_states);
    Ok(ExactResult {
        log_z,
        marginals_i: acc_i.iter().map(to_probs).collect(),
        marginals_alpha: acc_alpha.iter().map(to_probs).collect(),
        map_energy: model.energy(&map_assignment),
        map_assignment,
    })
}

/// A log-domain table over `vars` (row-major in the listed order).
#[derive(Debug, Clone)]
struct Table {
    vars: Vec<usize>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Table {
    fn zeros(vars: Vec<usize>, model_cards: &[usize]) -> Self {
        let cards: Vec<usize> = vars.iter().map(|&v| model_cards[v]).collect();
        let len = cards.iter().product();
        Self {
            vars,
            cards,
            values: vec![0.0; len],
        }
    }

    /// For each of our positions, the stride of that variable in `other` (0 if absent).
    fn strides_in(&self, other: &Table) -> Vec<usize> {
        let other_strides = math::strides(&other.cards);
        self.vars
            .iter()
            .map(|v| {
                other
                    .vars
                    .iter()
                    .position(|w| w == v)
                    .map_or(0, |p| other_strides[p])
            })
            .collect()
    }

    /// Visit every flat index of `self` together with the matching flat index
    /// of `other`, whose variables must be a subset of ours.
    fn for_each_aligned(&self, other: &Table, mut f: impl FnMut(usize, usize)) {
        let map = self.strides_in(other);
        let mut states = vec![0usize; self.vars.len()];
        let mut j = 0usize;
        let len: usize = self.cards.iter().product();
        for k in 0..len {
            f(k, j);
            for p in (0..states.len()).rev() {
                states[p] += 1;
                j += map[p];
                if states[p] < self.cards[p] {
                    break;
                }
                j -= map[p] * states[p];
                states[p] = 0;
            }
        }
    }

    fn add(&mut self, other: &Table) {
        let mut vals = core::mem::take(&mut self.values);
        self.for_each_aligned(other, |k, j| vals[k] += other.values[j]);
        self.values = vals;
    }

    fn add_factor(&mut self, vars: &[usize], values: &[f64], model_cards: &[usize]) {
        let t = Table {
            vars: vars.to_vec(),
            cards: vars.iter().map(|&v| model_cards[v]).collect(),
            values: values.to_vec(),
        };
        self.add(&t);
    }

    /// Sum out (log-sum-exp) or max out every variable not in `keep`.
    fn project(&self, keep: &[usize], model_cards: &[usize], max: bool) -> Table {
        let out = Table::zeros(keep.to_vec(), model_cards);
        if max {
            let mut vals = vec![f64::NEG_INFINITY; out.values.len()];
            self.for_each_aligned(&out, |k, j| {
                if self.values[k] > vals[j] {
                    vals[j] = self.values[k];
                }
            });
            Table {
                values: vals,
                ..out
            }
        } else {
            let mut accs = vec![LogSumExp::new(); out.values.len()];
            self.for_each_aligned(&out, |k, j| accs[j].push(self.values[k]));
            Table {
                values: accs.iter().map(|a| a.value()).collect(),
                ..out
            }
        }
    }
}

/// Min-degree elimination order on the interaction graph (ties: lowest index).
pub fn min_degree_order(model: &Model) -> Vec<usize> {
    let n = model.num_vars();
    let mut adj: Vec<Vec<bool>> = vec![vec![false; n]; n];
    for f in model.factors() {
        for &u in f.scope() {
            for &v in f.scope() {
                if u != v {
                    adj[u][v] = true;
                }
            }
        }
    }
    let mut eliminated = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| !eliminated[v])
            .min_by_key(|&v| {
                (
                    adj[v]
                        .iter()
                        .enumerate()
                        .filter(|&(u, &e)| e && !eliminated[u])
                        .count(),
                    v,
                )
            })
            .expect("a variable remains");
        let nbrs: Vec<usize> = (0..n).filter(|&u| adj[v][u] && !eliminated[u]).collect();
        for &a in &nbrs {
            for &b in &nbrs {
                if a != b {
                    adj[a][b] = true;
                }
            }
        }
        eliminated[v] = true;
        order.push(v);
    }
    order
}

struct BucketTree {
    /// Cluster of each variable, in elimination order.
    order: Vec<usize>,
    scopes: Vec<Vec<usize>>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    /// Cluster index holding each original factor.
    factor_home: Vec<usize>,
    local: Vec<Table>,
}

fn build_bucket_tree(model: &Model, order: &[usize]) -> Result<BucketTree, OracleError> {
    let n = model.num_vars();
    let mut rank = vec![usize::MAX; n];
    for (r, &v) in order.iter().enumerate() {
        if v >= n || rank[v] != usize::MAX {
            return Err(OracleError::BadOrder { num_vars: n });
        }
        rank[v] = r;
    }
    if order.len() != n {
        return Err(OracleError::BadOrder { num_vars: n });
    }
    let earliest = |scope: &[usize]| {
        scope
            .iter()
            .copied()
            .min_by_key(|&v| rank[v])
            .expect("non-empty scope")
    };

    // symbolic pass: cluster scopes and tree edges
    let mut pending: Vec<Vec<usize>> = (0..n).map(|r| vec![order[r]]).collect();
    let mut factor_home = vec![0usize; model.num_factors()];
    for (a, f) in model.factors().iter().enumerate() {
        let r = rank[earliest(f.scope())];
        factor_home[a] = r;
        pending[r].extend_from_slice(f.scope());
    }
    let mut scopes = Vec::with_capacity(n);
    let mut parent = vec![None; n];
    let mut children = vec![Vec::new(); n];
    let mut worst = (0usize, 0.0f64);
    for r in 0..n {
        let mut scope = core::mem::take(&mut pending[r]);
        scope.sort_unstable();
        scope.dedup();
        let entries: f64 = scope.iter().map(|&v| model.card(v) as f64).product();
        if entries > worst.1 {
            worst = (scope.len() - 1, entries);
        }
        let sep: Vec<usize> = scope.iter().copied().filter(|&v| v != order[r]).collect();
        if !sep.is_empty() {
            let p = rank[earliest(&sep)];
            parent[r] = Some(p);
            children[p].push(r);
            pending[p].extend_from_slice(&sep);
        }
        scopes.push(scope);
    }
    if worst.1 > MAX_CLIQUE_ENTRIES as f64 {
        return Err(OracleError::InducedWidthTooLarge {
            width: worst.0,
            entries: worst.1,
            limit: MAX_CLIQUE_ENTRIES,
        });
    }

    let cards = model.cards();
    let mut local: Vec<Table> = scopes
        .iter()
        .map(|s| Table::zeros(s.clone(), cards))
        .collect();
    for (r, &v) in order.iter().enumerate() {
        local[r].add_factor(&[v], model.log_phi(v), cards);
    }
    for (a, f) in model.factors().iter().enumerate() {
        local[factor_home[a]].add_factor(f.scope(), f.log_psi(), cards);
    }
    Ok(BucketTree {
        order: order.to_vec(),
        scopes,
        parent,
        children,
        factor_home,
        local,
    })
}

impl BucketTree {
    fn separator(&self, r: usize) -> Vec<usize> {
        self.scopes[r]
            .iter()
            .copied()
            .filter(|&v| v != self.order[r])
            .collect()
    }

    /// Messages towards the root(s), in elimination order.
    fn upward(&self, cards: &[usize], max: bool) -> Vec<Option<Table>> {
        let mut up: Vec<Option<Table>> = vec![None; self.order.len()];
        for r in 0..self.order.len() {
            if self.parent[r].is_none() {
                continue;
            }
            let mut t = self.local[r].clone();
            for &c in &self.children[r] {
                t.add(up[c].as_ref().expect("children precede parents"));
            }
            up[r] = Some(t.project(&self.separator(r), cards, max));
        }
        up
    }
}

/// Variable elimination with the given order, or min-degree when `None`.
pub fn ve_exact(model: &Model, order: Option<&[usize]>) -> Result<ExactResult, OracleError> {
    let default_order;
    let order = match order {
        Some(o) => o,
        None => {
            default_order = min_degree_order(model);
            &default_order
        }
    };
    let tree = build_bucket_tree(model, order)?;
    let cards = model.cards();
    let n = model.num_vars();

    let up = tree.upward(cards, false);
    // downward pass in reverse elimination order
    let mut down: Vec<Option<Table>> = vec![None; n];
    let mut beliefs: Vec<Option<Table>> = vec![None; n];
    for r in (0..n).rev() {
        let mut base = tree.local[r].clone();
        if let Some(d) = &down[r] {
            base.add(d);
        }
        let kids = &tree.children[r];
        for (ci, &c) in kids.iter().enumerate() {
            let mut t = base.clone();
            for (ki, &k) in kids.iter().enumerate() {
                if ki != ci {
                    t.add(up[k].as_ref().expect("upward message"));
                }
            }
            down[c] = Some(t.project(&tree.separator(c), cards, false));
        }
        for &k in kids {
            base.add(up[k].as_ref().expect("upward message"));
        }
        beliefs[r] = Some(base);
    }
    let beliefs: Vec<Table> = beliefs
        .into_iter()
        .map(|b| b.expect("every cluster visited"))
        .collect();

    let mut log_z = 0.0;
    for r in 0..n {
        if tree.parent[r].is_none() {
            log_z += math::log_sum_exp(&beliefs[r].values);
        }
    }
    if log_z == f64::NEG_INFINITY {
        return Err(OracleError::Infeasible);
    }

    let normalized = |t: Table| -> Vec<f64> {
        let z = math::log_sum_exp(&t.values);
        t.values.iter().map(|&v| math::exp(v - z)).collect()
    };
    let mut marginals_i = vec![Vec::new(); n];
    for (r, &v) in tree.order.iter().enumerate() {
        marginals_i[v] = normalized(beliefs[r].project(&[v], cards, false));
    }
    let marginals_alpha = model
        .factors()
        .iter()
        .enumerate()
        .map(|(a, f)| normalized(beliefs[tree.factor_home[a]].project(f.scope(), cards, false)))
        .collect();

    // MAP: max-product upward pass then traceback
    let up_max = tree.upward(cards, true);
    let mut x = vec![0usize; n];
    for r in (0..n).rev() {
        let mut t = tree.local[r].clone();
        for &k in &tree.children[r] {
            t.add(up_max[k].as_ref().expect("upward message"));
        }
        let v = tree.order[r];
        let pos = t
            .vars
            .iter()
            .position(|&w| w == v)
            .expect("own variable in scope");
        let strides = math::strides(&t.cards);
        let mut base = 0usize;
        for (p, &w) in t.vars.iter().enumerate() {
            if p != pos {
                base += x[w] * strides[p];
            }
        }
        let mut best = (f64::NEG_INFINITY, 0usize);
        for s in 0..t.cards[pos] {
            let val = t.values[base + s * strides[pos]];
            if val > best.0 {
                best = (val, s);
            }
        }
        x[v] = best.1;
    }
    let map_assignment = Assignment(x);
    Ok(ExactResult {
        log_z,
        marginals_i,
        marginals_alpha,
        map_energy: model.energy(&map_assignment),
        map_assignment,
    })
}
