//! Per-link frequency-slot occupancy, candidate block search under the
//! continuity and contiguity constraints, and the fragmentation metrics used
//! by the network cost (cuts and signed misalignment change).
//!
//! Slots are 0-based internally. Snapshots and traces print them 1-based.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{neighbor_links, LinkId, NetworkTopology, RoutePath};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequestId(pub u64);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A run of `size` consecutive slots starting at `start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpectrumBlock {
    pub start: usize,
    pub size: usize,
}

impl SpectrumBlock {
    pub fn new(start: usize, size: usize) -> Self {
        SpectrumBlock { start, size }
    }

    /// One past the last slot.
    pub fn end(&self) -> usize {
        self.start + self.size
    }

    /// Central frequency index f_q; half-integer for even sizes.
    pub fn center(&self) -> f64 {
        self.start as f64 + self.size as f64 / 2.0
    }

    pub fn slots(&self) -> Range<usize> {
        self.start..self.end()
    }

    pub fn overlaps(&self, other: &SpectrumBlock) -> bool {
        self.start < other.end() && other.start < self.end()
    }

    /// Both band-edge constraints, in start/size form.
    pub fn fits(&self, slot_count: usize) -> bool {
        self.size >= 1 && self.end() <= slot_count
    }
}

impl fmt::Display for SpectrumBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let slots: Vec<String> = self.slots().map(|s| (s + 1).to_string()).collect();
        write!(f, "{{{}}}", slots.join(","))
    }
}

/// A live lightpath: the links it crosses and the block it holds on each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub request: RequestId,
    pub links: Vec<LinkId>,
    pub block: SpectrumBlock,
}

/// Occupancy of the six-node example network, 10 slots per link.
pub const FIG1_GRID: &str = include_str!("../data/fig1_grid.txt");

#[derive(Debug, Error, PartialEq)]
pub enum SpectrumError {
    #[error("block {block} does not fit in a {slot_count}-slot grid")]
    OutOfBand { block: SpectrumBlock, slot_count: usize },
    #[error("slot {slot} on link {link:?} already held by request {holder}")]
    Collision {
        link: LinkId,
        slot: usize,
        holder: RequestId,
    },
    #[error("request {0} is already allocated")]
    DuplicateRequest(RequestId),
    #[error("unknown request {0}")]
    UnknownRequest(RequestId),
    #[error("link {0:?} is not part of the grid")]
    UnknownLink(LinkId),
    #[error("malformed grid snapshot at line {line}: {reason}")]
    Snapshot { line: usize, reason: String },
}

/// Constraint violations found by [`validate_assignment`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    /// Constraints 1-2: the block leaves the band.
    BandEdge { request: RequestId, block: SpectrumBlock },
    /// Constraints 3-4: two lightpaths share a slot on a link.
    Overlap {
        link: LinkId,
        first: RequestId,
        second: RequestId,
    },
    /// Constraint 5: the slot set differs between links of one lightpath,
    /// or the grid disagrees with the recorded assignment.
    Continuity { request: RequestId, link: LinkId },
    /// The slots held on a link are not consecutive.
    Contiguity { request: RequestId, link: LinkId },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumGrid {
    slot_count: usize,
    rows: Vec<Vec<Option<RequestId>>>,
    live: BTreeMap<RequestId, Assignment>,
}

impl SpectrumGrid {
    pub fn new(link_count: usize, slot_count: usize) -> Self {
        SpectrumGrid {
            slot_count,
            rows: vec![vec![None; slot_count]; link_count],
            live: BTreeMap::new(),
        }
    }

    pub fn slot_count(&self) -> usize {
        self.slot_count
    }

    pub fn link_count(&self) -> usize {
        self.rows.len()
    }

    pub fn owner(&self, link: LinkId, slot: usize) -> Option<RequestId> {
        self.rows[link.0][slot]
    }

    pub fn is_free(&self, link: LinkId, slot: usize) -> bool {
        self.rows[link.0][slot].is_none()
    }

    pub fn row(&self, link: LinkId) -> &[Option<RequestId>] {
        &self.rows[link.0]
    }

    /// Writes one slot directly, bypassing allocation bookkeeping. Used by
    /// fixtures and tests that need deliberately inconsistent grids.
    pub fn set_slot(&mut self, link: LinkId, slot: usize, owner: Option<RequestId>) {
        self.rows[link.0][slot] = owner;
    }

    /// Assignments made through [`SpectrumGrid::allocate`] and not yet released.
    pub fn live_assignments(&self) -> impl Iterator<Item = &Assignment> {
        self.live.values()
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    pub fn occupied_slots(&self) -> usize {
        self.rows.iter().flatten().filter(|s| s.is_some()).count()
    }

    pub fn free_on_path(&self, path: &RoutePath, slot: usize) -> bool {
        path.links().iter().all(|&l| self.is_free(l, slot))
    }

    /// Marks `block` on every link of `links` as held by `request`. Leaves the
    /// grid untouched on any error.
    pub fn allocate(
        &mut self,
        links: &[LinkId],
        block: SpectrumBlock,
        request: RequestId,
    ) -> Result<(), SpectrumError> {
        if !block.fits(self.slot_count) {
            return Err(SpectrumError::OutOfBand {
                block,
                slot_count: self.slot_count,
            });
        }
        if self.live.contains_key(&request) {
            return Err(SpectrumError::DuplicateRequest(request));
        }
        for &l in links {
            let row = self.rows.get(l.0).ok_or(SpectrumError::UnknownLink(l))?;
            for s in block.slots() {
                if let Some(holder) = row[s] {
                    return Err(SpectrumError::Collision {
                        link: l,
                        slot: s,
                        holder,
                    });
                }
            }
        }
        for &l in links {
            for s in block.slots() {
                self.rows[l.0][s] = Some(request);
            }
        }
        self.live.insert(
            request,
            Assignment {
                request,
                links: links.to_vec(),
                block,
            },
        );
        Ok(())
    }

    /// Frees every slot held by `request`.
    pub fn release(&mut self, request: RequestId) -> Result<(), SpectrumError> {
        let mut found = self.live.remove(&request).is_some();
        for row in &mut self.rows {
            for slot in row.iter_mut() {
                if *slot == Some(request) {
                    *slot = None;
                    found = true;
                }
            }
        }
        if found {
            Ok(())
        } else {
            Err(SpectrumError::UnknownRequest(request))
        }
    }

    /// Text matrix: one row per link, `.` for free slots, request id otherwise.
    pub fn to_snapshot(&self, topo: &NetworkTopology) -> String {
        let width = self
            .rows
            .iter()
            .flatten()
            .map(|s| s.map_or(1, |r| r.to_string().len()))
            .max()
            .unwrap_or(1);
        let name_width = topo.link_ids().map(|l| topo.link(l).name.len()).max().unwrap_or(1);
        let mut out = format!("slots {}\n", self.slot_count);
        for (i, row) in self.rows.iter().enumerate() {
            let name = &topo.link(LinkId(i)).name;
            out.push_str(&format!("{name:<name_width$}"));
            for slot in row {
                let tok = slot.map_or_else(|| ".".to_string(), |r| r.to_string());
                out.push_str(&format!(" {tok:>width$}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`SpectrumGrid::to_snapshot`] output. Lines starting with `#`
    /// are comments; links missing from the snapshot are entirely free.
    pub fn from_snapshot(text: &str, topo: &NetworkTopology) -> Result<Self, SpectrumError> {
        let mut grid: Option<SpectrumGrid> = None;
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |reason: String| SpectrumError::Snapshot { line: i + 1, reason };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut toks = line.split_whitespace();
            let head = toks.next().expect("non-empty line");
            if head == "slots" {
                let n: usize = toks
                    .next()
                    .and_then(|t| t.parse().ok())
                    .filter(|&n| n > 0)
                    .ok_or_else(|| err("expected `slots <count>`".into()))?;
                grid = Some(SpectrumGrid::new(topo.link_count(), n));
                continue;
            }
            let g = grid
                .as_mut()
                .ok_or_else(|| err("`slots <count>` header must come first".into()))?;
            let link = topo
                .link_by_name(head)
                .ok_or_else(|| err(format!("unknown link `{head}`")))?;
            if !seen.insert(link) {
                return Err(err(format!("link `{head}` listed twice")));
            }
            let toks: Vec<&str> = toks.collect();
            if toks.len() != g.slot_count {
                return Err(err(format!("expected {} slots, found {}", g.slot_count, toks.len())));
            }
            for (s, tok) in toks.iter().enumerate() {
                g.rows[link.0][s] = match *tok {
                    "." => None,
                    t => Some(RequestId(t.parse().map_err(|_| err(format!("bad slot token `{t}`")))?)),
                };
            }
        }
        grid.ok_or(SpectrumError::Snapshot {
            line: 0,
            reason: "missing `slots <count>` header".into(),
        })
    }

    /// Reconstructs assignments for every request found in the grid, one per
    /// request, taking its links and the slot span of its first link.
    pub fn inferred_assignments(&self) -> Vec<Assignment> {
        let mut by_req: BTreeMap<RequestId, (Vec<LinkId>, usize, usize)> = BTreeMap::new();
        for (l, row) in self.rows.iter().enumerate() {
            for (s, slot) in row.iter().enumerate() {
                if let Some(r) = slot {
                    let e = by_req.entry(*r).or_insert((Vec::new(), s, s));
                    if e.0.last() != Some(&LinkId(l)) {
                        e.0.push(LinkId(l));
                    }
                    if e.0.len() == 1 {
                        e.1 = e.1.min(s);
                        e.2 = e.2.max(s);
                    }
                }
            }
        }
        by_req
            .into_iter()
            .map(|(request, (links, lo, hi))| Assignment {
                request,
                links,
                block: SpectrumBlock::new(lo, hi - lo + 1),
            })
            .collect()
    }
}

/// All blocks of `size` slots that are free on every link of `path`, by start.
pub fn free_contiguous_blocks(grid: &SpectrumGrid, path: &RoutePath, size: usize) -> Vec<SpectrumBlock> {
    let n = grid.slot_count();
    if size == 0 || size > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut run = 0;
    for s in 0..n {
        if grid.free_on_path(path, s) {
            run += 1;
            if run >= size {
                out.push(SpectrumBlock::new(s + 1 - size, size));
            }
        } else {
            run = 0;
        }
    }
    out
}

/// Links of `links` on which `block` would split a maximal free run in two,
/// i.e. both slots adjacent to the block are free.
pub fn count_cuts_on(grid: &SpectrumGrid, links: &[LinkId], block: SpectrumBlock) -> usize {
    links
        .iter()
        .filter(|&&l| {
            let left = block.start > 0 && grid.is_free(l, block.start - 1);
            let right = block.end() < grid.slot_count() && grid.is_free(l, block.end());
            left && right
        })
        .count()
}

pub fn count_cuts(grid: &SpectrumGrid, path: &RoutePath, block: SpectrumBlock) -> usize {
    count_cuts_on(grid, path.links(), block)
}

/// Signed misalignment change for precomputed neighbor pairs: per pair and
/// per block slot, +1 when the neighbor is free there, -1 when occupied.
pub fn misalignment_delta_for(grid: &SpectrumGrid, pairs: &[(LinkId, LinkId)], block: SpectrumBlock) -> i64 {
    pairs
        .iter()
        .map(|&(_, nb)| {
            block
                .slots()
                .map(|s| if grid.is_free(nb, s) { 1 } else { -1 })
                .sum::<i64>()
        })
        .sum()
}

pub fn misalignment_delta(grid: &SpectrumGrid, topo: &NetworkTopology, path: &RoutePath, block: SpectrumBlock) -> i64 {
    misalignment_delta_for(grid, &neighbor_links(topo, path), block)
}

/// Checks band edges, pairwise non-overlap per link, and slot continuity and
/// contiguity for `assignments` against the grid. Returns every violation.
pub fn validate_assignment(grid: &SpectrumGrid, assignments: &[Assignment]) -> Vec<Violation> {
    let mut violations = Vec::new();
    let n = grid.slot_count();

    for a in assignments {
        if !a.block.fits(n) {
            violations.push(Violation::BandEdge {
                request: a.request,
                block: a.block,
            });
        }
    }

    // per-link interval sweep
    let mut per_link: BTreeMap<LinkId, Vec<(SpectrumBlock, RequestId)>> = BTreeMap::new();
    for a in assignments {
        for &l in &a.links {
            per_link.entry(l).or_default().push((a.block, a.request));
        }
    }
    for (link, mut blocks) in per_link {
        blocks.sort();
        for i in 0..blocks.len() {
            for j in i + 1..blocks.len() {
                if blocks[j].0.start >= blocks[i].0.end() {
                    break;
                }
                violations.push(Violation::Overlap {
                    link,
                    first: blocks[i].1,
                    second: blocks[j].1,
                });
            }
        }
    }

    // what the grid says each request holds, per link
    let mut held: BTreeMap<RequestId, BTreeMap<LinkId, Vec<usize>>> = BTreeMap::new();
    for l in 0..grid.link_count() {
        for (s, slot) in grid.row(LinkId(l)).iter().enumerate() {
            if let Some(r) = slot {
                held.entry(*r).or_default().entry(LinkId(l)).or_default().push(s);
            }
        }
    }
    for (&request, links) in &held {
        let mut reference: Option<&Vec<usize>> = None;
        for (&link, slots) in links {
            if slots.windows(2).any(|w| w[1] != w[0] + 1) {
                violations.push(Violation::Contiguity { request, link });
            }
            match reference {
                None => reference = Some(slots),
                Some(r) if r != slots => violations.push(Violation::Continuity { request, link }),
                Some(_) => {}
            }
        }
    }
    for a in assignments {
        let on_grid = held.get(&a.request);
        let expected: Vec<usize> = a.block.slots().filter(|&s| s < n).collect();
        for &l in &a.links {
            let got = on_grid.and_then(|m| m.get(&l));
            if got != Some(&expected) {
                violations.push(Violation::Continuity {
                    request: a.request,
                    link: l,
                });
            }
        }
        if let Some(m) = on_grid {
            for &l in m.keys() {
                if !a.links.contains(&l) {
                    violations.push(Violation::Continuity {
                        request: a.request,
                        link: l,
                    });
                }
            }
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{bundled, k_shortest_paths};

    fn fig1() -> (NetworkTopology, SpectrumGrid, RoutePath, RoutePath) {
        let t = bundled("fig1").unwrap();
        let g = SpectrumGrid::from_snapshot(FIG1_GRID, &t).unwrap();
        let a = t.node_by_name("A").unwrap();
        let f = t.node_by_name("F").unwrap();
        let mut p = k_shortest_paths(&t, a, f, 2);
        let abdf = p.pop().unwrap();
        let acef = p.pop().unwrap();
        (t, g, acef, abdf)
    }

    // 1-based slot pair as shown in the figure
    fn blk(first: usize) -> SpectrumBlock {
        SpectrumBlock::new(first - 1, 2)
    }

    #[test]
    fn fig1_candidate_blocks() {
        let (_, g, acef, abdf) = fig1();
        assert_eq!(free_contiguous_blocks(&g, &acef, 2), vec![blk(8), blk(9)]);
        assert_eq!(free_contiguous_blocks(&g, &abdf, 2), vec![blk(5)]);
    }

    #[test]
    fn fig1_cuts() {
        let (_, g, acef, abdf) = fig1();
        assert_eq!(count_cuts(&g, &acef, blk(8)), 2);
        assert_eq!(count_cuts(&g, &acef, blk(9)), 0);
        assert_eq!(count_cuts(&g, &abdf, blk(5)), 1);
    }

    #[test]
    fn fig1_misalignment() {
        let (t, g, acef, abdf) = fig1();
        assert_eq!(misalignment_delta(&g, &t, &acef, blk(8)), 6);
        assert_eq!(misalignment_delta(&g, &t, &acef, blk(9)), 8);
        assert_eq!(misalignment_delta(&g, &t, &abdf, blk(5)), -6);
        // pair <Link1, Link2> on {8,9}: one free, one occupied
        let l1 = t.link_by_name("Link1").unwrap();
        let l2 = t.link_by_name("Link2").unwrap();
        assert_eq!(misalignment_delta_for(&g, &[(l2, l1)], blk(8)), 0);
    }

    #[test]
    fn fig1_fixture_is_valid() {
        let (_, g, _, _) = fig1();
        assert!(validate_assignment(&g, &g.inferred_assignments()).is_empty());
    }

    #[test]
    fn empty_grid_block_count() {
        let (t, _, acef, _) = fig1();
        let g = SpectrumGrid::new(t.link_count(), 10);
        for n in 1..=10 {
            assert_eq!(free_contiguous_blocks(&g, &acef, n).len(), 10 - n + 1);
        }
        assert!(free_contiguous_blocks(&g, &acef, 11).is_empty());
    }

    #[test]
    fn exact_cover_is_not_a_cut() {
        let (t, mut g, acef, _) = fig1();
        // leave exactly slots {9,10} free on the path
        for &l in acef.links() {
            g.set_slot(l, 7, Some(RequestId(99)));
        }
        assert_eq!(count_cuts(&g, &acef, blk(9)), 0);
        let _ = t;
    }

    #[test]
    fn occupied_neighbors_score_negative() {
        let (t, _, acef, _) = fig1();
        let mut g = SpectrumGrid::new(t.link_count(), 10);
        for l in t.link_ids() {
            if !acef.contains_link(l) {
                for s in 0..10 {
                    g.set_slot(l, s, Some(RequestId(1)));
                }
            }
        }
        let pairs = neighbor_links(&t, &acef).len() as i64;
        assert_eq!(misalignment_delta(&g, &t, &acef, SpectrumBlock::new(3, 3)), -3 * pairs);
    }

    #[test]
    fn allocate_release_roundtrip() {
        let (_, mut g, acef, abdf) = fig1();
        let before = g.clone();
        let cand_before = free_contiguous_blocks(&g, &acef, 2);
        g.allocate(abdf.links(), blk(5), RequestId(100)).unwrap();
        assert_eq!(free_contiguous_blocks(&g, &acef, 2), cand_before);
        assert!(free_contiguous_blocks(&g, &abdf, 2).is_empty());
        let err = g.allocate(abdf.links(), blk(5), RequestId(101)).unwrap_err();
        assert!(matches!(err, SpectrumError::Collision { .. }));
        g.release(RequestId(100)).unwrap();
        assert_eq!(g, before);
        assert_eq!(
            g.release(RequestId(100)),
            Err(SpectrumError::UnknownRequest(RequestId(100)))
        );
    }

    #[test]
    fn out_of_band_allocation_rejected() {
        let mut g = SpectrumGrid::new(1, 10);
        let err = g.allocate(&[LinkId(0)], SpectrumBlock::new(9, 2), RequestId(1));
        assert!(matches!(err, Err(SpectrumError::OutOfBand { .. })));
        assert_eq!(g.occupied_slots(), 0);
        g.allocate(&[LinkId(0)], SpectrumBlock::new(0, 2), RequestId(1))
            .unwrap();
        g.allocate(&[LinkId(0)], SpectrumBlock::new(8, 2), RequestId(2))
            .unwrap();
        let live: Vec<_> = g.live_assignments().cloned().collect();
        assert!(validate_assignment(&g, &live).is_empty());
    }

    #[test]
    fn detects_overlap() {
        let g = SpectrumGrid::new(1, 10);
        let a = Assignment {
            request: RequestId(1),
            links: vec![LinkId(0)],
            block: SpectrumBlock::new(2, 2),
        };
        let b = Assignment {
            request: RequestId(2),
            links: vec![LinkId(0)],
            block: SpectrumBlock::new(3, 2),
        };
        let v = validate_assignment(&g, &[a, b]);
        assert!(v.contains(&Violation::Overlap {
            link: LinkId(0),
            first: RequestId(1),
            second: RequestId(2)
        }));
    }

    #[test]
    fn detects_continuity_break() {
        let mut g = SpectrumGrid::new(2, 10);
        let r = RequestId(7);
        g.set_slot(LinkId(0), 1, Some(r));
        g.set_slot(LinkId(0), 2, Some(r));
        g.set_slot(LinkId(1), 3, Some(r));
        g.set_slot(LinkId(1), 4, Some(r));
        let v = validate_assignment(&g, &[]);
        assert!(v.contains(&Violation::Continuity {
            request: r,
            link: LinkId(1)
        }));
    }

    #[test]
    fn detects_band_edge() {
        let g = SpectrumGrid::new(1, 10);
        let a = Assignment {
            request: RequestId(1),
            links: vec![],
            block: SpectrumBlock::new(9, 2),
        };
        assert_eq!(
            validate_assignment(&g, &[a]),
            vec![Violation::BandEdge {
                request: RequestId(1),
                block: SpectrumBlock::new(9, 2)
            }]
        );
    }

    #[test]
    fn snapshot_roundtrip() {
        let (t, g, _, _) = fig1();
        let text = g.to_snapshot(&t);
        let back = SpectrumGrid::from_snapshot(&text, &t).unwrap();
        assert_eq!(back.rows, g.rows);
    }

    #[test]
    fn block_center_and_display() {
        let b = SpectrumBlock::new(4, 2);
        assert_eq!(b.center(), 5.0);
        assert_eq!(SpectrumBlock::new(0, 3).center(), 1.5);
        assert_eq!(b.to_string(), "{5,6}");
        assert!(SpectrumBlock::new(0, 2).fits(10));
        assert!(SpectrumBlock::new(8, 2).fits(10));
        assert!(!SpectrumBlock::new(9, 2).fits(10));
    }
}
