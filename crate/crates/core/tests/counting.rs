use normprod_core::counting::*;
use normprod_core::generate::{grid_edges, grid_model, CouplingSpec, FieldSpec};
use normprod_core::model::{Factor, Model};
use proptest::prelude::*;

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

/// Count spanning trees by brute force over edge subsets of size n-1.
fn tree_edge_frequencies(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let m = edges.len();
    let mut hits = vec![0usize; m];
    let mut trees = 0usize;
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != n - 1 {
            continue;
        }
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            if p[x] != x {
                let r = find(p, p[x]);
                p[x] = r;
            }
            p[x]
        }
        let mut acyclic = true;
        for (e, &(i, j)) in edges.iter().enumerate() {
            if mask & (1 << e) != 0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a == b {
                    acyclic = false;
                    break;
                }
                parent[a] = b;
            }
        }
        if acyclic {
            trees += 1;
            for e in 0..m {
                if mask & (1 << e) != 0 {
                    hits[e] += 1;
                }
            }
        }
    }
    hits.iter().map(|&h| h as f64 / trees as f64).collect()
}

#[test]
fn edge_probabilities_match_enumeration() {
    let graphs: Vec<(usize, Vec<(usize, usize)>)> = vec![
        (3, vec![(0, 1), (0, 2), (1, 2)]),
        (4, vec![(0, 1), (1, 2), (2, 3), (0, 3)]),
        (4, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]),
        (
            5,
            vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3), (0, 2)],
        ),
        (6, grid_edges(2, 3)),
        (9, grid_edges(3, 3)),
    ];
    for (n, edges) in graphs {
        let m = pairwise(n, &edges);
        let rho = spanning_tree_edge_probabilities(&m).unwrap();
        let expected = tree_edge_frequencies(n, &edges);
        for (r, e) in rho.iter().zip(&expected) {
            assert!((r - e).abs() < 1e-10, "{r} vs {e}");
        }
        // every spanning tree has n-1 edges
        assert!((rho.iter().sum::<f64>() - (n - 1) as f64).abs() < 1e-10);
    }
}

#[test]
fn trw_on_tree_is_bethe() {
    let m = pairwise(5, &[(0, 1), (1, 2), (1, 3), (3, 4)]);
    let rho = spanning_tree_edge_probabilities(&m).unwrap();
    let trw = trw_from_edge_probabilities(&m, &rho).unwrap();
    let b = bethe(&m);
    for (x, y) in trw.c_i().iter().zip(b.c_i()) {
        assert!((x - y).abs() < 1e-12);
    }
}

/// Brute-force oracle on the single edge: admissibility forces
/// `c_i + c_α + c_jα = 1` for both endpoints, so the free parameters are
/// `(c_α, c_0α, c_1α)` with `c_0 = 1 − c_α − c_1α`, `c_1 = 1 − c_α − c_0α`.
/// The objective `(c_α + c_0α + c_1α − 1)²` is zero on a face; the tiny ridge
/// picks its minimum-norm point.
#[test]
fn l2_single_edge_matches_grid_search() {
    let m = pairwise(2, &[(0, 1)]);
    let (c, report) = l2_convex(&m, &L2Options::default()).unwrap();
    assert!(report.objective < 1e-12);
    assert!(admissibility_residual(&m, &c) < 1e-8);

    let steps = 200;
    let h = 1.0 / steps as f64;
    let mut best = (f64::INFINITY, [0.0; 5]);
    for a in 1..=steps {
        for x in 0..=steps {
            let ca = a as f64 * h;
            let c0a = x as f64 * h;
            let c1a = 1.0 - ca - c0a;
            if c1a < -1e-12 {
                continue;
            }
            let c1a = c1a.max(0.0);
            let c0 = 1.0 - ca - c1a;
            let c1 = 1.0 - ca - c0a;
            if c0 < -1e-12 || c1 < -1e-12 {
                continue;
            }
            let norm = ca * ca + c0a * c0a + c1a * c1a + c0 * c0 + c1 * c1;
            if norm < best.0 {
                best = (norm, [ca, c0, c1, c0a, c1a]);
            }
        }
    }
    let [ca, c0, c1, c0a, c1a] = best.1;
    let tol = 1e-6;
    assert!((c.c_alpha()[0] - ca).abs() < tol, "{:?}", c);
    assert!((c.c_i()[0] - c0).abs() < tol && (c.c_i()[1] - c1).abs() < tol);
    assert!((c.c_i_alpha()[0] - c0a).abs() < tol && (c.c_i_alpha()[1] - c1a).abs() < tol);
    // frozen: c_α = 1/2, every other entry 1/4
    assert!((c.c_alpha()[0] - 0.5).abs() < tol);
    for &v in c.c_i().iter().chain(c.c_i_alpha()) {
        assert!((v - 0.25).abs() < tol);
    }
}

#[test]
fn l2_on_grid_is_convex_and_admissible() {
    let m = grid_model(
        10,
        10,
        2,
        &FieldSpec::Uniform {
            lo: -0.05,
            hi: 0.05,
        },
        &CouplingSpec::Mixed { omega: 1.0 },
        1,
    )
    .unwrap();
    let (c, report) = l2_convex(&m, &L2Options::default()).unwrap();
    assert_eq!(c.class(), Convexity::Convex);
    assert!(admissibility_residual(&m, &c) < 1e-8);
    assert!(report.kkt_residual < 1e-8);
    let trivial = trivial_convex(&m);
    let (_, trivial_obj) = admissible_projection(&m, &trivial).unwrap();
    assert!(report.objective <= trivial_obj + 1e-9);
}

#[test]
fn trw_convex_preserves_bar_coefficients() {
    let m = pairwise(9, &grid_edges(3, 3));
    let rho = spanning_tree_edge_probabilities(&m).unwrap();
    let first = trw_from_edge_probabilities(&m, &rho).unwrap();
    let convex = trw_convex(&m).unwrap();
    assert!(convex.is_convex());
    for (x, y) in first
        .bar()
        .bar_c_alpha
        .iter()
        .zip(&convex.bar().bar_c_alpha)
    {
        assert!((x - y).abs() < 1e-12);
    }
    for (x, y) in first.bar().bar_c_i.iter().zip(&convex.bar().bar_c_i) {
        assert!((x - y).abs() < 1e-12);
    }
}

fn small_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..7).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let k = pairs.len();
        (
            Just(n),
            Just(pairs),
            proptest::collection::vec(any::<bool>(), k),
        )
            .prop_map(|(n, pairs, keep)| {
                let edges = pairs
                    .into_iter()
                    .zip(keep)
                    .filter(|(_, k)| *k)
                    .map(|(e, _)| e)
                    .collect();
                (n, edges)
            })
    })
}

proptest! {
    #[test]
    fn convexify_keeps_bar_coefficients(
        (n, edges) in small_graph(),
        seed in proptest::collection::vec(0.0f64..1.0, 64),
    ) {
        prop_assume!(!edges.is_empty());
        let m = pairwise(n, &edges);
        let c_i: Vec<f64> = (0..n).map(|i| seed[i] + 0.1).collect();
        let c_i_alpha: Vec<f64> = (0..m.num_incidences()).map(|e| seed[(e + 10) % 64]).collect();
        let input = CountingNumbers::new(&m, vec![0.0; m.num_factors()], c_i, c_i_alpha).unwrap();
        let out = convexify(&m, &input).unwrap();
        prop_assert!(out.is_convex());
        prop_assert!(out.c_i().iter().all(|&v| v >= 0.0));
        prop_assert!(out.c_i_alpha().iter().all(|&v| v >= 0.0));
        for (x, y) in input.bar().bar_c_alpha.iter().zip(&out.bar().bar_c_alpha) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in input.bar().bar_c_i.iter().zip(&out.bar().bar_c_i) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn bar_coefficients_balance(
        (n, edges) in small_graph(),
        vals in proptest::collection::vec(-2.0f64..2.0, 64),
    ) {
        let m = pairwise(n, &edges);
        let c_alpha: Vec<f64> = (0..m.num_factors()).map(|a| vals[a % 64]).collect();
        let c_i: Vec<f64> = (0..n).map(|i| vals[(i + 20) % 64]).collect();
        let c_i_alpha: Vec<f64> = (0..m.num_incidences()).map(|e| vals[(e + 30) % 64]).collect();
        let c = CountingNumbers::new(&m, c_alpha.clone(), c_i.clone(), c_i_alpha.clone()).unwrap();
        let total: f64 = c_alpha.iter().sum::<f64>() + c_i.iter().sum::<f64>();
        let bar_total: f64 = c.bar().bar_c_alpha.iter().sum::<f64>() + c.bar().bar_c_i.iter().sum::<f64>();
        prop_assert!((total - bar_total).abs() < 1e-9);
        let report = validate(&m, &c).unwrap();
        prop_assert_eq!(report.class == Convexity::Convex, report.violations.is_empty());
    }

    #[test]
    fn edge_probabilities_sum_to_tree_size((n, edges) in small_graph()) {
        let m = pairwise(n, &edges);
        match spanning_tree_edge_probabilities(&m) {
            Ok(rho) => {
                prop_assert!((rho.iter().sum::<f64>() - (n - 1) as f64).abs() < 1e-9);
                let expected = tree_edge_frequencies(n, &edges);
                for (r, e) in rho.iter().zip(&expected) {
                    prop_assert!((r - e).abs() < 1e-9);
                }
            }
            Err(e) => prop_assert_eq!(e, CountingError::Disconnected),
        }
    }
}
