//! Seeded random instance generators.
//!
//! All generators draw from `ChaCha8Rng::seed_from_u64(seed)` (crate
//! `rand_chacha`), uniform reals via `rand::distr::Uniform` and normals via
//! `rand_distr::Normal` (ziggurat). Both are platform independent, so a
//! `(spec, seed)` pair always yields the same model bit for bit.
//!
//! Grid and complete-graph models follow the log-linear convention
//! `p(x) ∝ exp(Σ θ)`: the generated parameter is stored directly as `ln φ` or
//! `ln ψ`. For binary variables the local table is `θ_i·(-1)^{x_i}` and the
//! pairwise table carries `θ_ij` on the diagonal and `-θ_ij` off it. With more
//! than two states every table entry is an independent draw.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use thiserror::Error;

use crate::model::{Factor, Model, ModelError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("standard deviation must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("edge strength must be non-negative, got {0}")]
    NegativeOmega(f64),
    #[error("uniform interval [{0}, {1}] is empty or not finite")]
    BadInterval(f64, f64),
    #[error("grid needs at least one row and one column")]
    EmptyGrid,
    #[error("variables need at least one state")]
    NoStates,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Distribution of the local field parameters `θ_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldSpec {
    Gaussian { sigma: f64 },
    Uniform { lo: f64, hi: f64 },
}

/// Distribution of the pairwise coupling parameters `θ_ij`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingSpec {
    Gaussian {
        sigma: f64,
    },
    /// `θ_ij ~ U[0, ω]`
    Attractive {
        omega: f64,
    },
    /// `θ_ij ~ U[-ω, ω]`
    Mixed {
        omega: f64,
    },
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSpec::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            FieldSpec::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
        }
    }
}

impl fmt::Display for CouplingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CouplingSpec::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            CouplingSpec::Attractive { omega } => write!(f, "attractive:{omega}"),
            CouplingSpec::Mixed { omega } => write!(f, "mixed:{omega}"),
        }
    }
}

/// Error from parsing a generator spec such as `uniform:-0.05,0.05`.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse generator spec {0:?}")]
pub struct SpecParseError(pub alloc::string::String);

fn spec_numbers<const N: usize>(s: &str, rest: &str) -> Result<[f64; N], SpecParseError> {
    let err = || SpecParseError(s.into());
    let mut out = [0.0; N];
    let mut parts = rest.split(',');
    for slot in out.iter_mut() {
        *slot = parts
            .next()
            .ok_or_else(err)?
            .trim()
            .parse()
            .map_err(|_| err())?;
    }
    match parts.next() {
        Some(_) => Err(err()),
        None => Ok(out),
    }
}

impl core::str::FromStr for FieldSpec {
    type Err = SpecParseError;

    /// `gaussian:SIGMA` or `uniform:LO,HI`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("gaussian", rest)) => {
                spec_numbers::<1>(s, rest).map(|[sigma]| FieldSpec::Gaussian { sigma })
            }
            Some(("uniform", rest)) => {
                spec_numbers::<2>(s, rest).map(|[lo, hi]| FieldSpec::Uniform { lo, hi })
            }
            _ => Err(SpecParseError(s.into())),
        }
    }
}

impl core::str::FromStr for CouplingSpec {
    type Err = SpecParseError;

    /// `gaussian:SIGMA`, `attractive:OMEGA` or `mixed:OMEGA`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s.split_once(':').ok_or_else(|| SpecParseError(s.into()))?;
        let [v] = spec_numbers::<1>(s, rest)?;
        match kind {
            "gaussian" => Ok(CouplingSpec::Gaussian { sigma: v }),
            "attractive" => Ok(CouplingSpec::Attractive { omega: v }),
            "mixed" => Ok(CouplingSpec::Mixed { omega: v }),
            _ => Err(SpecParseError(s.into())),
        }
    }
}

enum Sampler {
    Normal(Normal<f64>),
    Uniform(Uniform<f64>),
}

impl Sampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Normal(d) => d.sample(rng),
            Sampler::Uniform(d) => d.sample(rng),
        }
    }
}

fn uniform(lo: f64, hi: f64) -> Result<Sampler, GenError> {
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(GenError::BadInterval(lo, hi));
    }
    Uniform::new_inclusive(lo, hi)
        .map(Sampler::Uniform)
        .map_err(|_| GenError::BadInterval(lo, hi))
}

fn normal(sigma: f64) -> Result<Sampler, GenError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(GenError::NonPositiveSigma(sigma));
    }
    Normal::new(0.0, sigma)
        .map(Sampler::Normal)
        .map_err(|_| GenError::NonPositiveSigma(sigma))
}

impl FieldSpec {
    fn sampler(&self) -> Result<Sampler, GenError> {
        match *self {
            FieldSpec::Gaussian { sigma } => normal(sigma),
            FieldSpec::Uniform { lo, hi } => uniform(lo, hi),
        }
    }
}

impl CouplingSpec {
    fn sampler(&self) -> Result<Sampler, GenError> {
        match *self {
            CouplingSpec::Gaussian { sigma } => normal(sigma),
            CouplingSpec::Attractive { omega } => {
                if !(omega >= 0.0) {
                    return Err(GenError::NegativeOmega(omega));
                }
                uniform(0.0, omega)
            }
            CouplingSpec::Mixed { omega } => {
                if !(omega >= 0.0) {
                    return Err(GenError::NegativeOmega(omega));
                }
                uniform(-omega, omega)
            }
        }
    }
}

fn pairwise_model(
    num_vars: usize,
    edges: &[(usize, usize)],
    states: usize,
    field: &FieldSpec,
    coupling: &CouplingSpec,
    seed: u64,
) -> Result<Model, GenError> {
    if states == 0 {
        return Err(GenError::NoStates);
    }
    let field = field.sampler()?;
    let coupling = coupling.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut log_phi = Vec::with_capacity(num_vars);
    for _ in 0..num_vars {
        if states == 2 {
            let theta = field.draw(&mut rng);
            log_phi.push(vec![theta, -theta]);
        } else {
            log_phi.push((0..states).map(|_| field.draw(&mut rng)).collect());
        }
    }

    let mut factors = Vec::with_capacity(edges.len());
    for &(i, j) in edges {
        let table = if states == 2 {
            let theta = coupling.draw(&mut rng);
            vec![theta, -theta, -theta, theta]
        } else {
            (0..states * states)
                .map(|_| coupling.draw(&mut rng))
                .collect()
        };
        factors.push(Factor::new(vec![i.min(j), i.max(j)], table));
    }
    Ok(Model::new(vec![states; num_vars], log_phi, factors, true)?)
}

/// Edges of a 4-connected `rows × cols` grid; variable `(r, c)` is `r·cols + c`.
/// For each cell the right edge is listed before the down edge.
pub fn grid_edges(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                edges.push((v, v + 1));
            }
            if r + 1 < rows {
                edges.push((v, v + cols));
            }
        }
    }
    edges
}

/// All pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn complete_edges(n: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            edges.push((i, j));
        }
    }
    edges
}

pub fn grid_model(
    rows: usize,
    cols: usize,
    states: usize,
    field: &FieldSpec,
    coupling: &CouplingSpec,
    seed: u64,
) -> Result<Model, GenError> {
    if rows == 0 || cols == 0 {
        return Err(GenError::EmptyGrid);
    }
    pairwise_model(
        rows * cols,
        &grid_edges(rows, cols),
        states,
        field,
        coupling,
        seed,
    )
}

pub fn complete_graph_model(
    num_vars: usize,
    states: usize,
    field: &FieldSpec,
    coupling: &CouplingSpec,
    seed: u64,
) -> Result<Model, GenError> {
    pairwise_model(
        num_vars,
        &complete_edges(num_vars),
        states,
        field,
        coupling,
        seed,
    )
}

/// A random tree on `num_vars` variables (each new vertex attaches to a
/// uniformly chosen earlier one) with cardinalities in `2..=max_card` and
/// standard-normal log-potentials.
pub fn random_tree_model(num_vars: usize, max_card: usize, seed: u64) -> Result<Model, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<(usize, usize)> = (1..num_vars).map(|v| (rng.random_range(0..v), v)).collect();
    random_model_on(num_vars, &edges, 2, max_card, &mut rng)
}

/// A random pairwise model: a spanning tree plus each remaining pair with
/// probability `extra_edge_prob`, so loops are common but the graph stays connected.
pub fn random_pairwise_model(
    num_vars: usize,
    extra_edge_prob: f64,
    min_card: usize,
    max_card: usize,
    seed: u64,
) -> Result<Model, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> =
        (1..num_vars).map(|v| (rng.random_range(0..v), v)).collect();
    for (i, j) in complete_edges(num_vars) {
        if !edges.contains(&(i, j)) && rng.random_bool(extra_edge_prob.clamp(0.0, 1.0)) {
            edges.push((i, j));
        }
    }
    random_model_on(num_vars, &edges, min_card, max_card, &mut rng)
}

fn random_model_on(
    num_vars: usize,
    edges: &[(usize, usize)],
    min_card: usize,
    max_card: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Model, GenError> {
    if max_card == 0 || min_card > max_card {
        return Err(GenError::NoStates);
    }
    let std_normal = normal(1.0)?;
    let cards: Vec<usize> = (0..num_vars)
        .map(|_| rng.random_range(min_card.max(1)..=max_card))
        .collect();
    let log_phi: Vec<Vec<f64>> = cards
        .iter()
        .map(|&c| (0..c).map(|_| std_normal.draw(rng)).collect())
        .collect();
    let factors = edges
        .iter()
        .map(|&(i, j)| {
            let (a, b) = (i.min(j), i.max(j));
            let table = (0..cards[a] * cards[b])
                .map(|_| std_normal.draw(rng))
                .collect();
            Factor::new(vec![a, b], table)
        })
        .collect();
    Ok(Model::new(cards, log_phi, factors, true)?)
}
