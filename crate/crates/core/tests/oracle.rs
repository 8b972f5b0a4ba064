use normprod_core::generate::{
    grid_model, random_pairwise_model, random_tree_model, CouplingSpec, FieldSpec,
};
use normprod_core::math;
use normprod_core::model::{Assignment, Factor, Model};
use normprod_core::oracle::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn assert_close(a: &ExactResult, b: &ExactResult, tol: f64) {
    assert!(
        (a.log_z - b.log_z).abs() < tol,
        "{} vs {}",
        a.log_z,
        b.log_z
    );
    for (x, y) in a
        .marginals_i
        .iter()
        .flatten()
        .zip(b.marginals_i.iter().flatten())
    {
        assert!((x - y).abs() < tol);
    }
    for (x, y) in a
        .marginals_alpha
        .iter()
        .flatten()
        .zip(b.marginals_alpha.iter().flatten())
    {
        assert!((x - y).abs() < tol);
    }
    assert!((a.map_energy - b.map_energy).abs() < 1e-9);
}

/// A random model with a mix of pairwise and triple factors.
fn random_mixed_model(seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=9);
    let cards: Vec<usize> = (0..n).map(|_| rng.random_range(2..=3)).collect();
    let log_phi = cards
        .iter()
        .map(|&c| (0..c).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut factors = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.35) {
                let len = cards[i] * cards[j];
                factors.push(Factor::new(
                    vec![i, j],
                    (0..len).map(|_| rng.random_range(-1.5..1.5)).collect(),
                ));
            }
        }
    }
    if n >= 3 && rng.random_bool(0.5) {
        factors.push(Factor::new(
            vec![0, 1, 2],
            (0..cards[0] * cards[1] * cards[2])
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        ));
    }
    let model = Model::new(cards, log_phi, factors, false).unwrap();
    assert!(model.joint_size() <= 1 << 16);
    model
}

#[test]
fn ve_matches_enumeration_on_random_models() {
    for seed in 0..100 {
        let m = random_mixed_model(seed);
        let e = enumerate_exact(&m, DEFAULT_MAX_STATES).unwrap();
        let v = ve_exact(&m, None).unwrap();
        assert_close(&e, &v, 1e-10);
    }
}

#[test]
fn log_z_is_order_invariant() {
    let m = random_pairwise_model(10, 0.3, 2, 3, 5).unwrap();
    let base = ve_exact(&m, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let mut order: Vec<usize> = (0..m.num_vars()).collect();
        for k in (1..order.len()).rev() {
            order.swap(k, rng.random_range(0..=k));
        }
        let r = ve_exact(&m, Some(&order)).unwrap();
        assert!((r.log_z - base.log_z).abs() < 1e-9);
    }
}

#[test]
fn ten_by_ten_grid_is_tractable() {
    let m = grid_model(
        10,
        10,
        2,
        &FieldSpec::Uniform {
            lo: -0.05,
            hi: 0.05,
        },
        &CouplingSpec::Attractive { omega: 1.0 },
        3,
    )
    .unwrap();
    let order = min_degree_order(&m);
    let r = ve_exact(&m, Some(&order)).unwrap();
    assert!(r.log_z.is_finite());
    for p in &r.marginals_i {
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn oracle_marginals_are_consistent() {
    for seed in 0..20 {
        let m = random_tree_model(8, 4, seed).unwrap();
        for r in [
            enumerate_exact(&m, DEFAULT_MAX_STATES).unwrap(),
            ve_exact(&m, None).unwrap(),
        ] {
            for (a, f) in m.factors().iter().enumerate() {
                for (pos, &v) in f.scope().iter().enumerate() {
                    let mut marg = vec![0.0; m.card(v)];
                    for (k, &p) in r.marginals_alpha[a].iter().enumerate() {
                        marg[f.state_at(k, pos)] += p;
                    }
                    for (x, y) in marg.iter().zip(&r.marginals_i[v]) {
                        assert!((x - y).abs() <= 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn map_beats_random_assignments() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..10 {
        let m = random_pairwise_model(8, 0.4, 2, 3, seed).unwrap();
        let r = enumerate_exact(&m, DEFAULT_MAX_STATES).unwrap();
        assert!(-r.map_energy <= r.log_z);
        for _ in 0..1000 {
            let x: Vec<usize> = m.cards().iter().map(|&c| rng.random_range(0..c)).collect();
            assert!(r.map_energy <= m.energy(&Assignment::new(&m, x).unwrap()) + 1e-12);
        }
    }
}

#[test]
fn lexicographic_map_tie_break() {
    // both (0,1) and (1,0) are optimal
    let m = Model::new(
        vec![2, 2],
        vec![vec![0.0; 2]; 2],
        vec![Factor::new(
            vec![0, 1],
            vec![0.0, math::ln(2.0), math::ln(2.0), 0.0],
        )],
        true,
    )
    .unwrap();
    let r = enumerate_exact(&m, DEFAULT_MAX_STATES).unwrap();
    assert_eq!(r.map_assignment.states(), &[0, 1]);
}

#[test]
fn zeroed_entries_have_zero_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..20 {
        let m = random_tree_model(7, 3, seed).unwrap();
        let factors: Vec<Factor> = m
            .factors()
            .iter()
            .map(|f| {
                let mut t = f.log_psi().to_vec();
                let k = rng.random_range(0..t.len());
                t[k] = f64::NEG_INFINITY;
                Factor::new(f.scope().to_vec(), t)
            })
            .collect();
        let zeroed = Model::new(m.cards().to_vec(), m.log_phis().to_vec(), factors, true).unwrap();
        let e = enumerate_exact(&zeroed, DEFAULT_MAX_STATES).unwrap();
        let v = ve_exact(&zeroed, None).unwrap();
        assert_close(&e, &v, 1e-10);
        for (a, f) in zeroed.factors().iter().enumerate() {
            for (k, &l) in f.log_psi().iter().enumerate() {
                if l == f64::NEG_INFINITY {
                    assert_eq!(v.marginals_alpha[a][k], 0.0);
                }
            }
        }
    }
}
