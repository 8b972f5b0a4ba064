//! Drive the engine and the reference side by side.

use normprod_core::counting::{self, CountingNumbers};
use normprod_core::engine::{self, MessageState};
use normprod_core::model::Model;

use super::reference::{shifted, Algorithm, Pairwise};

/// Counting numbers, temperature and edge weights that select `alg`.
pub fn engine_setup(model: &Model, alg: Algorithm) -> (CountingNumbers, f64, Vec<f64>) {
    match alg {
        Algorithm::SumProduct => (counting::bethe(model), 1.0, Vec::new()),
        Algorithm::MaxProduct => (counting::bethe(model), 0.0, Vec::new()),
        Algorithm::SumTrbp => {
            let rho = counting::spanning_tree_edge_probabilities(model).unwrap();
            (
                counting::trw_from_edge_probabilities(model, &rho).unwrap(),
                1.0,
                rho,
            )
        }
        Algorithm::Nmplp => (counting::nmplp(model).unwrap(), 0.0, Vec::new()),
    }
}

/// Engine messages that correspond to all reference messages being 1:
/// `m ≡ 1` and `n_{i→α}` computed from it.
pub fn matched_start(model: &Model, c: &CountingNumbers) -> MessageState {
    let mut state = engine::init_messages(model);
    for (a, f) in model.factors().iter().enumerate() {
        for (pos, &v) in f.scope().iter().enumerate() {
            let id = model.incidence_id(a, pos);
            let scale = c.c_alpha()[a] / c.hat_c_i()[v];
            for (k, n) in state.log_n[id].iter_mut().enumerate() {
                *n = scale * model.log_phi(v)[f.state_at(k, pos)];
            }
        }
    }
    state
}

/// Largest difference between normalized engine and reference messages after
/// one sweep from a common state, over `sweeps` consecutive sweeps. The
/// reference restarts from the engine's messages before every sweep, because
/// loopy dynamics amplify rounding differences geometrically.
pub fn compare_run(model: &Model, alg: Algorithm, sweeps: usize) -> f64 {
    let (c, eps, rho) = engine_setup(model, alg);
    let mut state = matched_start(model, &c);
    let pw = Pairwise::from_model(model);
    let mut msg = pw.init();
    let mut worst: f64 = 0.0;
    for _ in 0..sweeps {
        engine::sweep(model, &c, eps, &mut state).unwrap();
        pw.sweep(alg, &rho, &mut msg);
        for (a, f) in model.factors().iter().enumerate() {
            for pos in 0..f.arity() {
                let id = model.incidence_id(a, pos);
                let hat = c.hat_c_i_alpha()[id];
                let ours: Vec<f64> = state.log_m[id].iter().map(|m| m / hat).collect();
                for (x, y) in shifted(&ours).iter().zip(shifted(&msg[a][pos])) {
                    worst = worst.max((x - y).abs());
                }
                msg[a][pos] = ours;
            }
        }
    }
    worst
}
