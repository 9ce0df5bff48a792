//! Event-driven traffic simulation and blocking/quality metrics.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::estimator::QualityEstimator;
use crate::rsa::{BlockReason, ConnectionRequest, RequestKind, RsaEngine, RsaError, RsaOutcome};
use crate::spectrum::{validate_assignment, RequestId, SpectrumGrid};
use crate::topology::{NetworkTopology, NodeId};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Rsa(#[from] RsaError),
    #[error("topology needs at least two nodes")]
    TooFewNodes,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrafficParams {
    pub lambda: f64,
    pub mu: f64,
    pub video_probability: f64,
    pub slot_demand_min: usize,
    pub slot_demand_max: usize,
    pub u_th: f64,
    pub count: usize,
}

/// Requests in arrival order. Per request the draws are: inter-arrival gap,
/// source, destination, slot demand, kind, holding time.
pub fn generate_traffic(node_count: usize, params: &TrafficParams, rng: &mut impl Rng) -> Vec<ConnectionRequest> {
    assert!(node_count >= 2, "need two nodes");
    let gap = Exp::new(params.lambda).expect("positive arrival rate");
    let hold = Exp::new(params.mu).expect("positive departure rate");
    let mut t = 0.0;
    (0..params.count)
        .map(|i| {
            t += gap.sample(rng);
            let src = rng.random_range(0..node_count);
            // uniform over ordered pairs with dst != src
            let mut dst = rng.random_range(0..node_count - 1);
            if dst >= src {
                dst += 1;
            }
            let slots = rng.random_range(params.slot_demand_min..=params.slot_demand_max);
            let kind = if rng.random_bool(params.video_probability) {
                RequestKind::Video
            } else {
                RequestKind::NonVideo
            };
            let mut holding_time = hold.sample(rng);
            if holding_time <= 0.0 {
                holding_time = f64::MIN_POSITIVE;
            }
            ConnectionRequest {
                id: RequestId(i as u64),
                src: NodeId(src),
                dst: NodeId(dst),
                slots,
                kind,
                arrival_time: t,
                holding_time,
                u_th: params.u_th,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EventKind {
    Departure,
    Arrival,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// Index into the request list.
    pub request: usize,
}

impl Eq for Event {}

impl Ord for Event {
    // reversed so BinaryHeap pops the earliest; departures first on ties
    fn cmp(&self, other: &Self) -> Ordering {
        let rank = |k: EventKind| match k {
            EventKind::Departure => 0,
            EventKind::Arrival => 1,
        };
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| rank(other.kind).cmp(&rank(self.kind)))
            .then_with(|| other.request.cmp(&self.request))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Slot-weighted blocking ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlockingProbability {
    pub value: f64,
    /// No demand was offered; `value` is 0 by convention.
    pub zero_sample: bool,
}

/// Σ N_i over blocked records / Σ N_i over all records.
pub fn blocking_probability(records: &[(usize, bool)]) -> BlockingProbability {
    let total: usize = records.iter().map(|r| r.0).sum();
    let blocked: usize = records.iter().filter(|r| r.1).map(|r| r.0).sum();
    if total == 0 {
        BlockingProbability {
            value: 0.0,
            zero_sample: true,
        }
    } else {
        BlockingProbability {
            value: blocked as f64 / total as f64,
            zero_sample: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct KindMetrics {
    pub n_offered: usize,
    pub n_established: usize,
    pub n_blocked_congestion: usize,
    pub n_blocked_quality: usize,
    pub offered_slots: usize,
    pub blocked_slots: usize,
    pub bp: f64,
    pub zero_sample: bool,
    pub mean_osnr_db: Option<f64>,
    pub mean_dfr: Option<f64>,
    pub mean_psnr: Option<f64>,
    /// Established video connections whose utility fell below the threshold.
    pub gate_violations: usize,
}

#[derive(Default)]
struct Accumulator {
    records: Vec<(usize, bool)>,
    m: KindMetrics,
    osnr_sum: f64,
    dfr_sum: f64,
    psnr_sum: f64,
    n_video_terms: usize,
}

impl Accumulator {
    fn record(&mut self, req: &ConnectionRequest, outcome: &RsaOutcome) {
        self.m.n_offered += 1;
        self.m.offered_slots += req.slots;
        match outcome {
            RsaOutcome::Established(c) => {
                self.records.push((req.slots, false));
                self.m.n_established += 1;
                self.osnr_sum += c.osnr_db;
                if let Some(v) = &c.video {
                    self.n_video_terms += 1;
                    self.dfr_sum += v.dfr;
                    self.psnr_sum += v.psnr;
                    if req.kind.is_video() && v.utility < req.u_th {
                        self.m.gate_violations += 1;
                    }
                }
            }
            RsaOutcome::Blocked(reason) => {
                self.records.push((req.slots, true));
                self.m.blocked_slots += req.slots;
                match reason {
                    BlockReason::Congestion => self.m.n_blocked_congestion += 1,
                    BlockReason::Quality => self.m.n_blocked_quality += 1,
                }
            }
        }
    }

    fn finish(mut self) -> KindMetrics {
        let bp = blocking_probability(&self.records);
        self.m.bp = bp.value;
        self.m.zero_sample = bp.zero_sample;
        let n = self.m.n_established;
        self.m.mean_osnr_db = (n > 0).then(|| self.osnr_sum / n as f64);
        let v = self.n_video_terms;
        self.m.mean_dfr = (v > 0).then(|| self.dfr_sum / v as f64);
        self.m.mean_psnr = (v > 0).then(|| self.psnr_sum / v as f64);
        self.m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LoadPointReport {
    pub topology: String,
    pub load_erlang: f64,
    pub seed: u64,
    pub video: KindMetrics,
    pub non_video: KindMetrics,
    /// Both kinds together.
    pub overall_bp: f64,
    pub zero_sample: bool,
    /// Invariant failures found when checking is enabled.
    pub invariant_violations: usize,
    pub invariant_checks: usize,
}

impl LoadPointReport {
    pub fn kind(&self, kind: RequestKind) -> &KindMetrics {
        match kind {
            RequestKind::Video => &self.video,
            RequestKind::NonVideo => &self.non_video,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub points: Vec<LoadPointReport>,
}

/// Simulates one load point with its own traffic stream.
pub fn run_load_point(
    topo: &NetworkTopology,
    config: &Config,
    estimator: &QualityEstimator,
    load: f64,
    seed: u64,
) -> Result<LoadPointReport, SimError> {
    config.validate()?;
    if topo.node_count() < 2 {
        return Err(SimError::TooFewNodes);
    }
    let sc = &config.scenario;
    let params = TrafficParams {
        lambda: load * sc.mu,
        mu: sc.mu,
        video_probability: sc.video_probability,
        slot_demand_min: sc.slot_demand_min,
        slot_demand_max: sc.slot_demand_max,
        u_th: sc.u_th,
        count: sc.total_requests,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let requests = generate_traffic(topo.node_count(), &params, &mut rng);

    let mut engine = RsaEngine::new(topo, &config.fiber, estimator, config.engine_config())?;
    let mut grid = SpectrumGrid::new(topo.link_count(), sc.slot_count);
    let mut live: HashMap<RequestId, usize> = HashMap::new();
    let mut heap: BinaryHeap<Event> = requests
        .iter()
        .enumerate()
        .map(|(i, r)| Event {
            time: r.arrival_time,
            kind: EventKind::Arrival,
            request: i,
        })
        .collect();

    let warmup = sc.warmup();
    let (mut video, mut non_video) = (Accumulator::default(), Accumulator::default());
    let mut all: Vec<(usize, bool)> = Vec::new();
    let mut violations = 0;
    let mut checks = 0;

    while let Some(ev) = heap.pop() {
        let req = &requests[ev.request];
        match ev.kind {
            EventKind::Departure => {
                if live.remove(&req.id).is_some() {
                    grid.release(req.id).map_err(RsaError::from)?;
                }
            }
            EventKind::Arrival => {
                let outcome = engine.serve(&mut grid, req)?;
                if let RsaOutcome::Established(c) = &outcome {
                    live.insert(req.id, req.slots * c.path.hop_count());
                    heap.push(Event {
                        time: req.arrival_time + req.holding_time,
                        kind: EventKind::Departure,
                        request: ev.request,
                    });
                }
                if ev.request >= warmup {
                    all.push((req.slots, !outcome.is_established()));
                    match req.kind {
                        RequestKind::Video => video.record(req, &outcome),
                        RequestKind::NonVideo => non_video.record(req, &outcome),
                    }
                }
            }
        }
        if sc.check_invariants {
            checks += 1;
            let assignments: Vec<_> = grid.live_assignments().cloned().collect();
            violations += validate_assignment(&grid, &assignments).len();
            let expected: usize = live.values().sum();
            if grid.occupied_slots() != expected || grid.live_count() != live.len() {
                violations += 1;
            }
        }
    }

    let bp = blocking_probability(&all);
    Ok(LoadPointReport {
        topology: sc.topology.clone(),
        load_erlang: load,
        seed,
        video: video.finish(),
        non_video: non_video.finish(),
        overall_bp: bp.value,
        zero_sample: bp.zero_sample,
        invariant_violations: violations,
        invariant_checks: checks,
    })
}

/// Every configured load point for the configured seed.
pub fn run_scenario(
    topo: &NetworkTopology,
    config: &Config,
    estimator: &QualityEstimator,
) -> Result<MetricsReport, SimError> {
    let points = config
        .scenario
        .load_points
        .iter()
        .map(|&load| run_load_point(topo, config, estimator, load, config.scenario.seed))
        .collect::<Result<_, _>>()?;
    Ok(MetricsReport { points })
}

pub const RESULTS_HEADER: &str =
    "topology,seed,load_erlang,kind,bp,mean_osnr_db,mean_dfr,mean_psnr,n_offered,n_blocked_congestion,n_blocked_quality";

/// Two CSV rows (video, non-video) for one load point. Video-quality
/// columns are left empty for non-video traffic.
pub fn results_rows(r: &LoadPointReport) -> [String; 2] {
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    [RequestKind::Video, RequestKind::NonVideo].map(|kind| {
        let m = r.kind(kind);
        let (dfr, psnr) = if kind.is_video() {
            (opt(m.mean_dfr), opt(m.mean_psnr))
        } else {
            (String::new(), String::new())
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.topology,
            r.seed,
            r.load_erlang,
            kind,
            m.bp,
            opt(m.mean_osnr_db),
            dfr,
            psnr,
            m.n_offered,
            m.n_blocked_congestion,
            m.n_blocked_quality
        )
    })
}
