//! The engine with the classic counting settings reproduces sum-product,
//! max-product, sum-TRBP and NMPLP message by message.

mod common;

use common::reductions::compare_run;
use common::reference::{shifted, Algorithm, Pairwise};
use normprod_core::generate::random_pairwise_model;

const MODELS: u64 = 50;
const SWEEPS: usize = 30;

fn check(alg: Algorithm) {
    let mut worst: f64 = 0.0;
    for seed in 0..MODELS {
        let model = random_pairwise_model(7, 0.3, 2, 3, 1000 + seed).unwrap();
        worst = worst.max(compare_run(&model, alg, SWEEPS));
    }
    assert!(
        worst <= 1e-10,
        "{alg:?}: worst per-sweep message difference {worst:e}"
    );
}

#[test]
fn sum_product() {
    check(Algorithm::SumProduct);
}

#[test]
fn max_product() {
    check(Algorithm::MaxProduct);
}

#[test]
fn sum_trbp() {
    check(Algorithm::SumTrbp);
}

#[test]
fn nmplp() {
    check(Algorithm::Nmplp);
}

#[test]
fn reference_sum_product_is_exact_on_a_tree() {
    // sanity check of the reference itself: converged messages give exact marginals
    let model = normprod_core::generate::random_tree_model(6, 3, 5).unwrap();
    let pw = Pairwise::from_model(&model);
    let mut msg = pw.init();
    for _ in 0..20 {
        pw.sweep(Algorithm::SumProduct, &[], &mut msg);
    }
    let exact = normprod_core::oracle::enumerate_exact(&model, 1 << 20).unwrap();
    for i in 0..model.num_vars() {
        let mut b = pw.theta_i[i].clone();
        for &(e, side) in &pw.nbrs[i] {
            for (bx, m) in b.iter_mut().zip(&msg[e][side]) {
                *bx += m;
            }
        }
        let b = shifted(&b);
        let z: f64 = b.iter().map(|v| v.exp()).sum();
        for (x, v) in b.iter().enumerate() {
            assert!((v.exp() / z - exact.marginals_i[i][x]).abs() < 1e-12);
        }
    }
}
