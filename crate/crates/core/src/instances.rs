//! Random small networks and grids for property tests and oracle checks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::spectrum::{RequestId, SpectrumBlock, SpectrumGrid};
use crate::topology::{k_shortest_paths, load_topology, NetworkTopology, NodeId};

/// Connected simple graph on `nodes` nodes: a random spanning tree plus up
/// to `extra_links` further links, lengths drawn from 50..=500 km.
pub fn random_topology(rng: &mut impl Rng, nodes: usize, extra_links: usize) -> NetworkTopology {
    assert!(nodes >= 2);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut order: Vec<usize> = (0..nodes).collect();
    order.shuffle(rng);
    for i in 1..nodes {
        let j = rng.random_range(0..i);
        edges.push((order[i].min(order[j]), order[i].max(order[j])));
    }
    let mut absent: Vec<(usize, usize)> = (0..nodes)
        .flat_map(|a| (a + 1..nodes).map(move |b| (a, b)))
        .filter(|e| !edges.contains(e))
        .collect();
    absent.shuffle(rng);
    edges.extend(absent.into_iter().take(extra_links));

    let links: Vec<serde_json::Value> = edges
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            serde_json::json!({
                "id": format!("L{}", i + 1),
                "a": format!("n{a}"),
                "b": format!("n{b}"),
                "length_km": rng.random_range(50..=500) as f64,
            })
        })
        .collect();
    let doc = serde_json::json!({
        "nodes": (0..nodes).map(|i| format!("n{i}")).collect::<Vec<_>>(),
        "links": links,
    });
    load_topology(&doc.to_string()).expect("generated topology is valid")
}

/// Grid filled by `attempts` random single-path allocations; each picks a
/// random node pair, one of its shortest paths, a random size and start,
/// and is skipped when it collides. Ids start at `first_id`.
pub fn random_grid(
    rng: &mut impl Rng,
    topo: &NetworkTopology,
    slot_count: usize,
    attempts: usize,
    first_id: u64,
) -> SpectrumGrid {
    let mut grid = SpectrumGrid::new(topo.link_count(), slot_count);
    let n = topo.node_count();
    let mut id = first_id;
    for _ in 0..attempts {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        let paths = k_shortest_paths(topo, NodeId(a), NodeId(b), 2);
        let path = &paths[rng.random_range(0..paths.len())];
        let size = rng.random_range(1..=slot_count.min(4));
        let start = rng.random_range(0..=slot_count - size);
        if grid
            .allocate(path.links(), SpectrumBlock::new(start, size), RequestId(id))
            .is_ok()
        {
            id += 1;
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::validate_assignment;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_instances_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for nodes in 2..=8 {
            let t = random_topology(&mut rng, nodes, 4);
            assert_eq!(t.node_count(), nodes);
            assert!(t.link_count() >= nodes - 1);
            let g = random_grid(&mut rng, &t, 12, 20, 1);
            let live: Vec<_> = g.live_assignments().cloned().collect();
            assert!(validate_assignment(&g, &live).is_empty());
        }
    }
}
