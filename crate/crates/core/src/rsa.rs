//! Joint fragmentation/video-quality routing and spectrum assignment.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::QualityEstimator;
use crate::qot::{ber_for_osnr_db, path_osnr_db, FiberParams, Modulation, QotError};
use crate::spectrum::{
    count_cuts_on, free_contiguous_blocks, misalignment_delta_for, RequestId, SpectrumBlock, SpectrumError,
    SpectrumGrid,
};
use crate::topology::{all_simple_paths, k_shortest_paths, neighbor_links, LinkId, NetworkTopology, NodeId, RoutePath};
use crate::video::{utility, video_cost};

#[derive(Debug, Error)]
pub enum RsaError {
    #[error("invalid request {id}: {reason}")]
    InvalidRequest { id: RequestId, reason: String },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error(transparent)]
    Qot(#[from] QotError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestKind {
    Video,
    NonVideo,
}

impl RequestKind {
    pub fn is_video(self) -> bool {
        self == RequestKind::Video
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RequestKind::Video => "video",
            RequestKind::NonVideo => "non-video",
        }
    }
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RequestKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "video" => Ok(RequestKind::Video),
            "non-video" | "nonvideo" | "data" => Ok(RequestKind::NonVideo),
            other => Err(format!("unknown request kind `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConnectionRequest {
    pub id: RequestId,
    pub src: NodeId,
    pub dst: NodeId,
    pub slots: usize,
    pub kind: RequestKind,
    pub arrival_time: f64,
    pub holding_time: f64,
    /// Minimum utility; ignored for non-video requests.
    pub u_th: f64,
}

impl ConnectionRequest {
    pub fn validate(&self, slot_count: usize) -> Result<(), RsaError> {
        let reason = if self.src == self.dst {
            "source equals destination"
        } else if self.slots == 0 || self.slots > slot_count {
            "slot demand outside [1, N_FS]"
        } else if !(self.holding_time > 0.0) {
            "holding time must be positive"
        } else {
            return Ok(());
        };
        Err(RsaError::InvalidRequest {
            id: self.id,
            reason: reason.to_string(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights { alpha: 1.0, beta: 1.0 }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), RsaError> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.alpha + self.beta > 0.0) {
            return Err(RsaError::InvalidWeights(format!(
                "alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Whether the utility gate applies to the single cheapest candidate or
/// to the cheapest candidate that passes it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    #[default]
    WinnerOnly,
    /// Fall back to the next-cheapest passing candidate.
    Fallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VideoTerms {
    pub psnr: f64,
    pub dfr: f64,
    pub utility: f64,
    pub f_video: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostBreakdown {
    /// Rank of the path among the candidate routes.
    pub path_rank: usize,
    pub path: RoutePath,
    pub block: SpectrumBlock,
    pub cuts: usize,
    pub misalignment: i64,
    pub neighbor_pairs: usize,
    pub f_network: f64,
    pub osnr_db: f64,
    pub ber: f64,
    pub video: Option<VideoTerms>,
    pub f_cost: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockReason {
    Congestion,
    Quality,
}

impl fmt::Display for BlockReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BlockReason::Congestion => "congestion",
            BlockReason::Quality => "quality",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RsaOutcome {
    Established(CostBreakdown),
    Blocked(BlockReason),
}

impl RsaOutcome {
    pub fn cost(&self) -> Option<&CostBreakdown> {
        match self {
            RsaOutcome::Established(c) => Some(c),
            RsaOutcome::Blocked(_) => None,
        }
    }

    pub fn is_established(&self) -> bool {
        matches!(self, RsaOutcome::Established(_))
    }
}

/// F_network = N_c + N_m / (S_q·N_NL), with the second term 0 when N_NL = 0.
pub fn network_cost(cuts: usize, misalignment: i64, slots: usize, neighbor_pairs: usize) -> f64 {
    let frag = if neighbor_pairs == 0 {
        0.0
    } else {
        misalignment as f64 / (slots * neighbor_pairs) as f64
    };
    cuts as f64 + frag
}

/// Per-path quantities that do not depend on the spectrum block.
#[derive(Clone, Debug)]
struct RouteInfo {
    path: RoutePath,
    pairs: Vec<(LinkId, LinkId)>,
    osnr_db: f64,
    ber: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub k: usize,
    pub weights: CostWeights,
    pub modulation: Modulation,
    pub gate: GateMode,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            k: 6,
            weights: CostWeights::default(),
            modulation: Modulation::Qpsk,
            gate: GateMode::WinnerOnly,
        }
    }
}

/// Route-caching RSA engine bound to one topology and one QoT setup.
pub struct RsaEngine<'a> {
    topo: &'a NetworkTopology,
    fiber: &'a FiberParams,
    estimator: &'a QualityEstimator,
    config: EngineConfig,
    routes: HashMap<(NodeId, NodeId), Vec<RouteInfo>>,
}

impl<'a> RsaEngine<'a> {
    pub fn new(
        topo: &'a NetworkTopology,
        fiber: &'a FiberParams,
        estimator: &'a QualityEstimator,
        config: EngineConfig,
    ) -> Result<Self, RsaError> {
        config.weights.validate()?;
        fiber.validate()?;
        Ok(RsaEngine {
            topo,
            fiber,
            estimator,
            config,
            routes: HashMap::new(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn topology(&self) -> &NetworkTopology {
        self.topo
    }

    fn routes_for(&mut self, src: NodeId, dst: NodeId) -> Result<&[RouteInfo], RsaError> {
        if !self.routes.contains_key(&(src, dst)) {
            let paths = k_shortest_paths(self.topo, src, dst, self.config.k);
            let infos = route_infos(self.topo, self.fiber, self.config.modulation, paths)?;
            self.routes.insert((src, dst), infos);
        }
        Ok(&self.routes[&(src, dst)])
    }

    /// Every (path, block) candidate with its cost, in path-rank then slot order.
    pub fn candidates(&mut self, grid: &SpectrumGrid, req: &ConnectionRequest) -> Result<Vec<CostBreakdown>, RsaError> {
        req.validate(grid.slot_count())?;
        let (weights, estimator) = (self.config.weights, self.estimator);
        let routes = self.routes_for(req.src, req.dst)?;
        Ok(enumerate_candidates(
            grid,
            routes,
            estimator,
            req,
            weights,
            |g, r, size| free_contiguous_blocks(g, &r.path, size),
        ))
    }

    /// The outcome `serve` would produce, without touching the grid.
    pub fn plan(&mut self, grid: &SpectrumGrid, req: &ConnectionRequest) -> Result<RsaOutcome, RsaError> {
        let gate = self.config.gate;
        let cands = self.candidates(grid, req)?;
        Ok(select(cands, req, gate))
    }

    /// Chooses and allocates a lightpath for `req`.
    pub fn serve(&mut self, grid: &mut SpectrumGrid, req: &ConnectionRequest) -> Result<RsaOutcome, RsaError> {
        let outcome = self.plan(grid, req)?;
        if let RsaOutcome::Established(c) = &outcome {
            grid.allocate(c.path.links(), c.block, req.id)?;
        }
        Ok(outcome)
    }
}

fn route_infos(
    topo: &NetworkTopology,
    fiber: &FiberParams,
    modulation: Modulation,
    paths: Vec<RoutePath>,
) -> Result<Vec<RouteInfo>, RsaError> {
    paths
        .into_iter()
        .map(|path| {
            let osnr_db = path_osnr_db(fiber, &path)?;
            Ok(RouteInfo {
                pairs: neighbor_links(topo, &path),
                ber: ber_for_osnr_db(fiber, osnr_db, modulation),
                osnr_db,
                path,
            })
        })
        .collect()
}

fn video_terms(estimator: &QualityEstimator, ber: f64) -> VideoTerms {
    let p = estimator.estimate(ber);
    let u = utility(p.psnr, p.dfr);
    VideoTerms {
        psnr: p.psnr,
        dfr: p.dfr,
        utility: u,
        f_video: video_cost(u),
    }
}

fn total_cost(weights: CostWeights, f_network: f64, video: Option<&VideoTerms>) -> f64 {
    match video {
        Some(v) => weights.alpha * f_network + weights.beta * v.f_video,
        None => weights.alpha * f_network,
    }
}

fn enumerate_candidates(
    grid: &SpectrumGrid,
    routes: &[RouteInfo],
    estimator: &QualityEstimator,
    req: &ConnectionRequest,
    weights: CostWeights,
    blocks: impl Fn(&SpectrumGrid, &RouteInfo, usize) -> Vec<SpectrumBlock>,
) -> Vec<CostBreakdown> {
    let mut out = Vec::new();
    for (rank, r) in routes.iter().enumerate() {
        let found = blocks(grid, r, req.slots);
        if found.is_empty() {
            continue;
        }
        let video = req.kind.is_video().then(|| video_terms(estimator, r.ber));
        for block in found {
            let cuts = count_cuts_on(grid, r.path.links(), block);
            let mis = misalignment_delta_for(grid, &r.pairs, block);
            out.push(breakdown(rank, r, block, cuts, mis, req.slots, video, weights));
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn breakdown(
    rank: usize,
    r: &RouteInfo,
    block: SpectrumBlock,
    cuts: usize,
    misalignment: i64,
    slots: usize,
    video: Option<VideoTerms>,
    weights: CostWeights,
) -> CostBreakdown {
    let f_network = network_cost(cuts, misalignment, slots, r.pairs.len());
    CostBreakdown {
        path_rank: rank,
        path: r.path.clone(),
        block,
        cuts,
        misalignment,
        neighbor_pairs: r.pairs.len(),
        f_network,
        osnr_db: r.osnr_db,
        ber: r.ber,
        f_cost: total_cost(weights, f_network, video.as_ref()),
        video,
    }
}

/// Lower cost first; ties go to the shorter path, then the lower start slot.
pub fn candidate_order(a: &CostBreakdown, b: &CostBreakdown) -> Ordering {
    a.f_cost
        .total_cmp(&b.f_cost)
        .then_with(|| a.path.rank_cmp(&b.path))
        .then_with(|| a.block.start.cmp(&b.block.start))
}

fn passes_gate(c: &CostBreakdown, req: &ConnectionRequest) -> bool {
    match &c.video {
        Some(v) if req.kind.is_video() => v.utility >= req.u_th,
        _ => true,
    }
}

fn select(cands: Vec<CostBreakdown>, req: &ConnectionRequest, gate: GateMode) -> RsaOutcome {
    let pool = cands.into_iter();
    let best = match gate {
        GateMode::WinnerOnly => pool.min_by(candidate_order),
        GateMode::Fallback => {
            let mut any = false;
            let best = pool
                .inspect(|_| any = true)
                .filter(|c| passes_gate(c, req))
                .min_by(candidate_order);
            if best.is_none() && any {
                return RsaOutcome::Blocked(BlockReason::Quality);
            }
            best
        }
    };
    match best {
        None => RsaOutcome::Blocked(BlockReason::Congestion),
        Some(c) if !passes_gate(&c, req) => RsaOutcome::Blocked(BlockReason::Quality),
        Some(c) => RsaOutcome::Established(c),
    }
}

/// Reference search over every simple path and every block, recomputing
/// cuts, misalignment and neighbor pairs from first principles. Does not
/// modify the grid.
#[allow(clippy::too_many_arguments)]
pub fn exhaustive_oracle(
    grid: &SpectrumGrid,
    topo: &NetworkTopology,
    fiber: &FiberParams,
    modulation: Modulation,
    estimator: &QualityEstimator,
    req: &ConnectionRequest,
    weights: CostWeights,
    gate: GateMode,
) -> Result<RsaOutcome, RsaError> {
    req.validate(grid.slot_count())?;
    weights.validate()?;
    let paths = all_simple_paths(topo, req.src, req.dst);
    let mut routes = Vec::with_capacity(paths.len());
    for path in paths {
        let osnr_db = path_osnr_db(fiber, &path)?;
        let mut pairs = Vec::new();
        for &l in path.links() {
            let pl = topo.link(l);
            for other in topo.link_ids() {
                let ol = topo.link(other);
                let adjacent = [ol.a, ol.b].iter().any(|&n| n == pl.a || n == pl.b);
                if adjacent && !path.links().contains(&other) {
                    pairs.push((l, other));
                }
            }
        }
        routes.push(RouteInfo {
            pairs,
            ber: ber_for_osnr_db(fiber, osnr_db, modulation),
            osnr_db,
            path,
        });
    }

    let n = grid.slot_count();
    let mut cands = Vec::new();
    for (rank, r) in routes.iter().enumerate() {
        let video = req.kind.is_video().then(|| video_terms(estimator, r.ber));
        for start in 0..n {
            let block = SpectrumBlock::new(start, req.slots);
            if !block.fits(n)
                || !r
                    .path
                    .links()
                    .iter()
                    .all(|&l| block.slots().all(|s| grid.is_free(l, s)))
            {
                continue;
            }
            let mut cuts = 0;
            for &l in r.path.links() {
                // maximal free run containing the block
                let mut lo = block.start;
                while lo > 0 && grid.is_free(l, lo - 1) {
                    lo -= 1;
                }
                let mut hi = block.end();
                while hi < n && grid.is_free(l, hi) {
                    hi += 1;
                }
                if lo < block.start && hi > block.end() {
                    cuts += 1;
                }
            }
            let mut mis = 0i64;
            for &(_, nb) in &r.pairs {
                for s in block.slots() {
                    mis += if grid.owner(nb, s).is_none() { 1 } else { -1 };
                }
            }
            cands.push(breakdown(rank, r, block, cuts, mis, req.slots, video, weights));
        }
    }
    Ok(select(cands, req, gate))
}

pub const DECISION_LOG_HEADER: &str =
    "request_id,kind,slots,outcome,path,start_slot,f_network,f_video,f_cost,osnr_db,ber,psnr,dfr";

/// One CSV line describing how a request was handled. Start slots are 1-based.
pub fn decision_log_line(topo: &NetworkTopology, req: &ConnectionRequest, outcome: &RsaOutcome) -> String {
    let head = format!("{},{},{}", req.id, req.kind, req.slots);
    match outcome {
        RsaOutcome::Blocked(r) => format!("{head},blocked-{r},,,,,,,,,"),
        RsaOutcome::Established(c) => {
            let v = |f: fn(&VideoTerms) -> f64| c.video.as_ref().map(|t| format!("{}", f(t))).unwrap_or_default();
            format!(
                "{head},established,{},{},{},{},{},{},{:e},{},{}",
                topo.format_nodes(&c.path),
                c.block.start + 1,
                c.f_network,
                v(|t| t.f_video),
                c.f_cost,
                c.osnr_db,
                c.ber,
                v(|t| t.psnr),
                v(|t| t.dfr),
            )
        }
    }
}

/// Human-readable listing of every candidate and the final decision.
pub fn render_trace(
    topo: &NetworkTopology,
    req: &ConnectionRequest,
    cands: &[CostBreakdown],
    outcome: &RsaOutcome,
) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "request {} {} -> {} slots={} kind={}{}",
        req.id,
        topo.node_name(req.src),
        topo.node_name(req.dst),
        req.slots,
        req.kind,
        if req.kind.is_video() {
            format!(" u_th={}", req.u_th)
        } else {
            String::new()
        }
    );
    let mut last_rank = None;
    for c in cands {
        if last_rank != Some(c.path_rank) {
            last_rank = Some(c.path_rank);
            let _ = writeln!(
                s,
                "path #{} {} length={} km hops={} N_NL={} osnr={:.3} dB ber={:.3e}",
                c.path_rank + 1,
                topo.format_nodes(&c.path),
                c.path.length_km(),
                c.path.hop_count(),
                c.neighbor_pairs,
                c.osnr_db,
                c.ber
            );
            if let Some(v) = &c.video {
                let _ = writeln!(
                    s,
                    "  psnr={:.3} dB dfr={:.4} U={:.3} F_video={:.4}",
                    v.psnr, v.dfr, v.utility, v.f_video
                );
            }
        }
        let _ = writeln!(
            s,
            "  block {} N_c={} N_m={} F_network={:.4} F_cost={:.4}",
            c.block, c.cuts, c.misalignment, c.f_network, c.f_cost
        );
    }
    match outcome {
        RsaOutcome::Established(c) => {
            let _ = writeln!(
                s,
                "decision: established {} {} F_cost={:.4}",
                topo.format_nodes(&c.path),
                c.block,
                c.f_cost
            );
        }
        RsaOutcome::Blocked(r) => {
            let _ = writeln!(s, "decision: blocked ({r})");
        }
    }
    s
}
