//! Undirected fiber topology, bundled benchmark networks and k-shortest
//! loopless path search (Yen over a lexicographically tie-broken Dijkstra).

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a node in declaration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

/// Index of a link in declaration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId(pub usize);

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("malformed topology document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("topology has no nodes")]
    Empty,
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("duplicate link id `{0}`")]
    DuplicateLink(String),
    #[error("link `{link}` references unknown node `{node}`")]
    UnknownEndpoint { link: String, node: String },
    #[error("link `{0}` is a self-loop")]
    SelfLoop(String),
    #[error("link `{link}` has non-positive length {length_km} km")]
    NonPositiveLength { link: String, length_km: f64 },
    #[error("topology is not connected (node `{0}` unreachable)")]
    Disconnected(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown bundled topology `{0}` (expected nsfnet, usbackbone or fig1)")]
    UnknownBundled(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TopologyDocument {
    nodes: Vec<String>,
    links: Vec<LinkDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LinkDocument {
    id: String,
    a: String,
    b: String,
    length_km: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub a: NodeId,
    pub b: NodeId,
    pub length_km: f64,
}

impl Link {
    pub fn other(&self, node: NodeId) -> Option<NodeId> {
        if node == self.a {
            Some(self.b)
        } else if node == self.b {
            Some(self.a)
        } else {
            None
        }
    }

    pub fn touches(&self, node: NodeId) -> bool {
        self.a == node || self.b == node
    }
}

/// Validated, immutable network graph.
#[derive(Debug, Clone)]
pub struct NetworkTopology {
    nodes: Vec<String>,
    links: Vec<Link>,
    incident: Vec<Vec<LinkId>>,
}

pub const NSFNET: &str = include_str!("../data/nsfnet.json");
pub const US_BACKBONE: &str = include_str!("../data/usbackbone.json");
pub const FIG1: &str = include_str!("../data/fig1.json");

/// Parses and validates a JSON topology document.
pub fn load_topology(source: &str) -> Result<NetworkTopology, TopologyError> {
    let doc: TopologyDocument = serde_json::from_str(source)?;
    NetworkTopology::from_document(doc)
}

/// Loads one of the bundled documents by name.
pub fn bundled(name: &str) -> Result<NetworkTopology, TopologyError> {
    let src = match name.to_ascii_lowercase().as_str() {
        "nsfnet" => NSFNET,
        "usbackbone" | "us-backbone" | "usnet" => US_BACKBONE,
        "fig1" => FIG1,
        other => return Err(TopologyError::UnknownBundled(other.to_string())),
    };
    load_topology(src)
}

impl NetworkTopology {
    fn from_document(doc: TopologyDocument) -> Result<Self, TopologyError> {
        if doc.nodes.is_empty() {
            return Err(TopologyError::Empty);
        }
        let mut index = HashMap::new();
        for (i, n) in doc.nodes.iter().enumerate() {
            if index.insert(n.clone(), NodeId(i)).is_some() {
                return Err(TopologyError::DuplicateNode(n.clone()));
            }
        }
        let mut seen_links = HashSet::new();
        let mut links = Vec::with_capacity(doc.links.len());
        for l in doc.links {
            if !seen_links.insert(l.id.clone()) {
                return Err(TopologyError::DuplicateLink(l.id));
            }
            let lookup = |n: &str| {
                index.get(n).copied().ok_or_else(|| TopologyError::UnknownEndpoint {
                    link: l.id.clone(),
                    node: n.to_string(),
                })
            };
            let a = lookup(&l.a)?;
            let b = lookup(&l.b)?;
            if a == b {
                return Err(TopologyError::SelfLoop(l.id));
            }
            if !(l.length_km > 0.0) || !l.length_km.is_finite() {
                return Err(TopologyError::NonPositiveLength {
                    link: l.id,
                    length_km: l.length_km,
                });
            }
            links.push(Link {
                name: l.id,
                a,
                b,
                length_km: l.length_km,
            });
        }
        let mut incident = vec![Vec::new(); doc.nodes.len()];
        for (i, l) in links.iter().enumerate() {
            incident[l.a.0].push(LinkId(i));
            incident[l.b.0].push(LinkId(i));
        }
        let topo = NetworkTopology {
            nodes: doc.nodes,
            links,
            incident,
        };
        topo.check_connected()?;
        Ok(topo)
    }

    fn check_connected(&self) -> Result<(), TopologyError> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![NodeId(0)];
        seen[0] = true;
        while let Some(n) = stack.pop() {
            for &l in &self.incident[n.0] {
                let m = self.links[l.0].other(n).expect("incident link");
                if !seen[m.0] {
                    seen[m.0] = true;
                    stack.push(m);
                }
            }
        }
        match seen.iter().position(|s| !s) {
            Some(i) => Err(TopologyError::Disconnected(self.nodes[i].clone())),
            None => Ok(()),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn link_ids(&self) -> impl Iterator<Item = LinkId> + '_ {
        (0..self.links.len()).map(LinkId)
    }

    pub fn node_name(&self, n: NodeId) -> &str {
        &self.nodes[n.0]
    }

    pub fn node_by_name(&self, name: &str) -> Result<NodeId, TopologyError> {
        self.nodes
            .iter()
            .position(|n| n == name)
            .map(NodeId)
            .ok_or_else(|| TopologyError::UnknownNode(name.to_string()))
    }

    pub fn link(&self, l: LinkId) -> &Link {
        &self.links[l.0]
    }

    pub fn link_by_name(&self, name: &str) -> Option<LinkId> {
        self.links.iter().position(|l| l.name == name).map(LinkId)
    }

    pub fn incident_links(&self, n: NodeId) -> &[LinkId] {
        &self.incident[n.0]
    }

    pub fn mean_link_length_km(&self) -> f64 {
        self.links.iter().map(|l| l.length_km).sum::<f64>() / self.links.len().max(1) as f64
    }

    /// Builds a path from a node sequence, picking the shortest link between
    /// consecutive nodes. Returns `None` if the walk is not a simple path.
    pub fn path_from_nodes(&self, nodes: &[NodeId]) -> Option<RoutePath> {
        if nodes.len() < 2 {
            return None;
        }
        let mut links = Vec::with_capacity(nodes.len() - 1);
        for w in nodes.windows(2) {
            let l = self.incident[w[0].0]
                .iter()
                .copied()
                .filter(|&l| self.links[l.0].other(w[0]) == Some(w[1]))
                .min_by(|x, y| self.links[x.0].length_km.total_cmp(&self.links[y.0].length_km))?;
            links.push(l);
        }
        RoutePath::new(self, nodes[0], links)
    }

    /// Renders a node sequence as `A-B-C`.
    pub fn format_nodes(&self, path: &RoutePath) -> String {
        path.nodes()
            .iter()
            .map(|&n| self.node_name(n))
            .collect::<Vec<_>>()
            .join("-")
    }
}

/// A simple path given as an ordered link list from a source node.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutePath {
    links: Vec<LinkId>,
    nodes: Vec<NodeId>,
    length_km: f64,
}

impl RoutePath {
    /// Walks `links` from `src`; rejects walks that are disconnected or revisit a node.
    pub fn new(topo: &NetworkTopology, src: NodeId, links: Vec<LinkId>) -> Option<Self> {
        if links.is_empty() {
            return None;
        }
        let mut nodes = vec![src];
        let mut length_km = 0.0;
        let mut cur = src;
        for &l in &links {
            let link = topo.links.get(l.0)?;
            cur = link.other(cur)?;
            if nodes.contains(&cur) {
                return None;
            }
            nodes.push(cur);
            length_km += link.length_km;
        }
        Some(RoutePath {
            links,
            nodes,
            length_km,
        })
    }

    pub fn links(&self) -> &[LinkId] {
        &self.links
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn src(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn dst(&self) -> NodeId {
        *self.nodes.last().expect("non-empty path")
    }

    pub fn length_km(&self) -> f64 {
        self.length_km
    }

    /// Number of links on the path.
    pub fn hop_count(&self) -> usize {
        self.links.len()
    }

    pub fn contains_link(&self, l: LinkId) -> bool {
        self.links.contains(&l)
    }

    /// Canonical ordering: total length, then node sequence.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        self.length_km
            .total_cmp(&other.length_km)
            .then_with(|| self.nodes.cmp(&other.nodes))
    }
}

impl fmt::Display for RoutePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.nodes.iter().map(|n| n.0.to_string()).collect();
        write!(f, "{} ({} km)", parts.join("-"), self.length_km)
    }
}

#[derive(Clone, PartialEq)]
struct Label {
    dist: f64,
    nodes: Vec<NodeId>,
    links: Vec<LinkId>,
}

impl Eq for Label {}

impl Ord for Label {
    // reversed for a min-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.nodes.cmp(&self.nodes))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest path from `src` to `dst` avoiding the given nodes and links.
/// Equal-length paths are resolved to the lexicographically smallest node
/// sequence; with strictly positive weights every prefix of that path is
/// itself lexicographically minimal, so labels can be settled greedily.
fn dijkstra_lex(
    topo: &NetworkTopology,
    src: NodeId,
    dst: NodeId,
    banned_nodes: &HashSet<NodeId>,
    banned_links: &HashSet<LinkId>,
) -> Option<(Vec<NodeId>, Vec<LinkId>, f64)> {
    let mut settled = vec![false; topo.node_count()];
    let mut heap = BinaryHeap::new();
    heap.push(Label {
        dist: 0.0,
        nodes: vec![src],
        links: Vec::new(),
    });
    while let Some(label) = heap.pop() {
        let here = *label.nodes.last().expect("label has a node");
        if settled[here.0] {
            continue;
        }
        settled[here.0] = true;
        if here == dst {
            return Some((label.nodes, label.links, label.dist));
        }
        for &l in topo.incident_links(here) {
            if banned_links.contains(&l) {
                continue;
            }
            let link = topo.link(l);
            let next = link.other(here).expect("incident link");
            if settled[next.0] || banned_nodes.contains(&next) || label.nodes.contains(&next) {
                continue;
            }
            let mut nodes = label.nodes.clone();
            nodes.push(next);
            let mut links = label.links.clone();
            links.push(l);
            heap.push(Label {
                dist: label.dist + link.length_km,
                nodes,
                links,
            });
        }
    }
    None
}

/// Up to `k` loopless paths from `src` to `dst`, ordered by total length and
/// then by node sequence. An empty result means the pair is unreachable.
pub fn k_shortest_paths(topo: &NetworkTopology, src: NodeId, dst: NodeId, k: usize) -> Vec<RoutePath> {
    if k == 0 || src == dst || src.0 >= topo.node_count() || dst.0 >= topo.node_count() {
        return Vec::new();
    }
    let none_n = HashSet::new();
    let none_l = HashSet::new();
    let Some((_, links, _)) = dijkstra_lex(topo, src, dst, &none_n, &none_l) else {
        return Vec::new();
    };
    let first = RoutePath::new(topo, src, links).expect("dijkstra yields a simple path");
    let mut accepted = vec![first];
    // candidate set keyed by (length, node sequence) so pops follow the tie-break
    let mut candidates: BTreeSet<CandidateKey> = BTreeSet::new();

    while accepted.len() < k {
        let last = accepted.last().expect("at least one path").clone();
        for spur_idx in 0..last.hop_count() {
            let spur_node = last.nodes()[spur_idx];
            let root_nodes = &last.nodes()[..=spur_idx];
            let root_links = &last.links()[..spur_idx];

            let mut banned_links = HashSet::new();
            for p in &accepted {
                if p.nodes().len() > spur_idx && &p.nodes()[..=spur_idx] == root_nodes {
                    banned_links.insert(p.links()[spur_idx]);
                }
            }
            for c in &candidates {
                if c.path.nodes().len() > spur_idx && &c.path.nodes()[..=spur_idx] == root_nodes {
                    banned_links.insert(c.path.links()[spur_idx]);
                }
            }
            let banned_nodes: HashSet<NodeId> = root_nodes[..spur_idx].iter().copied().collect();

            if let Some((_, spur_links, _)) = dijkstra_lex(topo, spur_node, dst, &banned_nodes, &banned_links) {
                let mut links = root_links.to_vec();
                links.extend(spur_links);
                if let Some(path) = RoutePath::new(topo, src, links) {
                    if !accepted.iter().any(|p| p.links() == path.links()) {
                        candidates.insert(CandidateKey { path });
                    }
                }
            }
        }
        match candidates.pop_first() {
            Some(c) => accepted.push(c.path),
            None => break,
        }
    }
    accepted
}

struct CandidateKey {
    path: RoutePath,
}

impl PartialEq for CandidateKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for CandidateKey {}

impl PartialOrd for CandidateKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CandidateKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.path
            .rank_cmp(&other.path)
            .then_with(|| self.path.links().cmp(other.path.links()))
    }
}

/// Every simple path between `src` and `dst` (depth-first enumeration), in
/// canonical rank order. Exponential; meant for small graphs.
pub fn all_simple_paths(topo: &NetworkTopology, src: NodeId, dst: NodeId) -> Vec<RoutePath> {
    fn walk(
        topo: &NetworkTopology,
        here: NodeId,
        dst: NodeId,
        visited: &mut Vec<bool>,
        links: &mut Vec<LinkId>,
        src: NodeId,
        out: &mut Vec<RoutePath>,
    ) {
        if here == dst {
            out.push(RoutePath::new(topo, src, links.clone()).expect("simple by construction"));
            return;
        }
        for &l in topo.incident_links(here) {
            let next = topo.link(l).other(here).expect("incident link");
            if visited[next.0] {
                continue;
            }
            visited[next.0] = true;
            links.push(l);
            walk(topo, next, dst, visited, links, src, out);
            links.pop();
            visited[next.0] = false;
        }
    }
    let mut out = Vec::new();
    if src == dst {
        return out;
    }
    let mut visited = vec![false; topo.node_count()];
    visited[src.0] = true;
    walk(topo, src, dst, &mut visited, &mut Vec::new(), src, &mut out);
    out.sort_by(|a, b| a.rank_cmp(b).then_with(|| a.links().cmp(b.links())));
    out
}

/// `(path link, neighbor link)` pairs: for each path link, every link incident
/// to either of its endpoints that is not itself on the path. A neighbor that
/// touches two path links is paired with each of them.
pub fn neighbor_links(topo: &NetworkTopology, path: &RoutePath) -> Vec<(LinkId, LinkId)> {
    let mut pairs = Vec::new();
    for &l in path.links() {
        let link = topo.link(l);
        let mut seen: Vec<LinkId> = Vec::new();
        for end in [link.a, link.b] {
            for &n in topo.incident_links(end) {
                if path.contains_link(n) || seen.contains(&n) {
                    continue;
                }
                seen.push(n);
                pairs.push((l, n));
            }
        }
    }
    pairs
}
