use convoarg::metrics::{betweenness_of, closeness_of, eigenvector_of, DAMPING};
use convoarg_oracles::{betweenness, harmonic_closeness, pagerank};
use proptest::prelude::*;

fn arb_digraph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..=8).prop_flat_map(|n| {
        let edge = (0..n, 0..n).prop_filter("no loops", |(a, b)| a != b);
        let edges = prop::collection::btree_set(edge, 0..=n * (n - 1));
        (Just(n), edges.prop_map(|s| s.into_iter().collect()))
    })
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #[test]
    fn measures_match_brute_force((n, edges) in arb_digraph()) {
        let bt = betweenness_of(n, &edges);
        prop_assert!(close(&bt, &betweenness(n, &edges), 1e-6), "{bt:?}");
        let ev = eigenvector_of(n, &edges).unwrap();
        prop_assert!(close(&ev, &pagerank(n, &edges, DAMPING), 1e-6), "{ev:?}");
        prop_assert!((ev.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(ev.iter().all(|&x| x >= 0.0));
        let cl = closeness_of(n, &edges);
        prop_assert!(close(&cl, &harmonic_closeness(n, &edges), 1e-6), "{cl:?}");
        prop_assert!(bt.iter().all(|&x| x >= 0.0));
        if n < 3 {
            prop_assert!(bt.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn eigenvector_ignores_node_order((n, edges) in arb_digraph(), perm_seed in any::<u64>()) {
        // relabel nodes with a seeded permutation
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = perm_seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let relabelled: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let base = eigenvector_of(n, &edges).unwrap();
        let moved = eigenvector_of(n, &relabelled).unwrap();
        for v in 0..n {
            prop_assert!((base[v] - moved[perm[v]]).abs() < 1e-8);
        }
    }

    #[test]
    fn closeness_grows_with_edges((n, edges) in arb_digraph(), a in 0usize..8, b in 0usize..8) {
        let (a, b) = (a % n, b % n);
        prop_assume!(a != b && !edges.contains(&(a, b)));
        let before = closeness_of(n, &edges);
        let mut more = edges.clone();
        more.push((a, b));
        let after = closeness_of(n, &more);
        for v in 0..n {
            prop_assert!(after[v] >= before[v] - 1e-12);
        }
    }
}

#[test]
fn isolated_and_complete() {
    assert_eq!(closeness_of(3, &[]), vec![0.0; 3]);
    let complete: Vec<(usize, usize)> = (0..3).flat_map(|a| (0..3).filter(move |&b| b != a).map(move |b| (a, b))).collect();
    assert_eq!(closeness_of(3, &complete), vec![2.0; 3]);
    let two_cycle = eigenvector_of(2, &[(0, 1), (1, 0)]).unwrap();
    assert!((two_cycle[0] - 0.5).abs() < 1e-12 && (two_cycle[1] - 0.5).abs() < 1e-12);
}
