use eon_core::instances::random_topology;
use eon_core::topology::{all_simple_paths, bundled, k_shortest_paths, neighbor_links, NodeId, RoutePath};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn is_simple(p: &RoutePath) -> bool {
    let mut seen = p.nodes().to_vec();
    seen.sort();
    seen.dedup();
    seen.len() == p.nodes().len()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn yen_matches_brute_force_top_k(seed in any::<u64>(), nodes in 2usize..=8, extra in 0usize..8, k in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = random_topology(&mut rng, nodes, extra);
        for s in 0..nodes {
            for d in 0..nodes {
                if s == d {
                    continue;
                }
                let yen = k_shortest_paths(&topo, NodeId(s), NodeId(d), k);
                let all = all_simple_paths(&topo, NodeId(s), NodeId(d));
                let want: Vec<_> = all.iter().take(k).map(|p| p.nodes().to_vec()).collect();
                let got: Vec<_> = yen.iter().map(|p| p.nodes().to_vec()).collect();
                prop_assert_eq!(got, want);
                prop_assert!(yen.iter().all(is_simple));
                prop_assert!(yen.windows(2).all(|w| w[0].length_km() <= w[1].length_km()));
                prop_assert!(yen.iter().all(|p| p.src() == NodeId(s) && p.dst() == NodeId(d)));
            }
        }
    }

    #[test]
    fn neighbor_links_exclude_path_and_ignore_direction(seed in any::<u64>(), nodes in 3usize..=8, extra in 0usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let topo = random_topology(&mut rng, nodes, extra);
        for path in all_simple_paths(&topo, NodeId(0), NodeId(nodes - 1)) {
            let pairs = neighbor_links(&topo, &path);
            prop_assert!(pairs.iter().all(|&(l, nb)| path.contains_link(l) && !path.contains_link(nb)));
            // every pair shares an endpoint
            for &(l, nb) in &pairs {
                let (a, b) = (topo.link(l), topo.link(nb));
                prop_assert!(b.touches(a.a) || b.touches(a.b));
            }
            let rev_links: Vec<_> = path.links().iter().rev().copied().collect();
            let rev = RoutePath::new(&topo, path.dst(), rev_links).unwrap();
            let mut fwd = pairs.clone();
            let mut bwd = neighbor_links(&topo, &rev);
            fwd.sort();
            bwd.sort();
            prop_assert_eq!(fwd, bwd);
        }
    }
}

#[test]
fn bundled_networks_are_connected() {
    for name in ["nsfnet", "usbackbone", "fig1"] {
        let topo = bundled(name).unwrap();
        for d in 1..topo.node_count() {
            assert!(
                !k_shortest_paths(&topo, NodeId(0), NodeId(d), 1).is_empty(),
                "{name} 0->{d}"
            );
        }
    }
}
