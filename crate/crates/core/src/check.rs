//! Randomized ordering sweep: small meshes, mixed traffic, random stalls,
//! every run checked against the ordering oracle with the bypass paths on
//! and off.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::axi::{oracle_check_order, AxiTransaction, TxnKind};
use crate::experiment::simulate_schedule;
use crate::kernel::{mix_seed, SimConfig};
use crate::link::{AxiBus, Coord, TxnId, Variant};
use crate::metrics::SimReport;
use crate::ni::NiConfig;
use crate::par;
use crate::router::RouterConfig;
use crate::tile::Backpressure;
use crate::topology::{BoundaryMemory, Edge, MeshSpec, NetworkParams};
use crate::traffic::Schedule;

/// One randomized instance, run once per bypass setting.
#[derive(Clone, Debug)]
pub struct Instance {
    pub seed: u64,
    pub mesh: MeshSpec,
    pub params: NetworkParams,
    pub schedule: Schedule,
    pub id_width: u8,
}

impl Instance {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut w, mut h) = (0, 0);
        while w * h < 2 {
            w = rng.gen_range(1..=3);
            h = rng.gen_range(1..=3);
        }
        let mut mesh = MeshSpec::new(w, h);
        if rng.gen_bool(0.3) {
            let edge = *[Edge::North, Edge::South, Edge::East, Edge::West].choose(&mut rng).unwrap();
            let span = match edge {
                Edge::North | Edge::South => w,
                Edge::East | Edge::West => h,
            };
            mesh.boundary_memories.push(BoundaryMemory { edge, position: rng.gen_range(0..span) });
        }

        let variant = if rng.gen_bool(0.5) { Variant::NarrowWide } else { Variant::WideOnly };
        let ni = NiConfig {
            narrow_rob_bytes: 8 * rng.gen_range(16..=48),
            wide_rob_bytes: 64 * rng.gen_range(16..=48),
            b_table_entries: rng.gen_range(1..=16),
            reorder_table_entries: rng.gen_range(1..=16),
            internal_latency_cycles: rng.gen_range(0..=9),
            bypass: true,
        };
        let backpressure = if rng.gen_bool(0.7) {
            Backpressure { target_stall_prob: rng.gen_range(0.0..0.5), axi_stall_prob: rng.gen_range(0.0..0.5) }
        } else {
            Backpressure::default()
        };
        let params = NetworkParams {
            variant,
            router: RouterConfig {
                input_fifo_depth: rng.gen_range(1..=3),
                output_buffered: rng.gen_bool(0.5),
                ..RouterConfig::default()
            },
            ni,
            memory_latency: rng.gen_range(0..=4),
            backpressure,
        };

        let id_width = rng.gen_range(2..=4u8);
        let tiles = mesh.tiles();
        let endpoints = mesh.endpoints();
        let count = rng.gen_range(1..=24);
        let mut txns = Vec::with_capacity(count);
        for i in 0..count {
            let initiator = *tiles.choose(&mut rng).unwrap();
            let dst = loop {
                let d = *endpoints.choose(&mut rng).unwrap();
                if d != initiator {
                    break d;
                }
            };
            txns.push(AxiTransaction {
                id: TxnId(i as u64),
                initiator,
                axi_id: rng.gen_range(0..1u16 << id_width),
                kind: if rng.gen_bool(0.7) { TxnKind::Read } else { TxnKind::Write },
                bus: if rng.gen_bool(0.5) { AxiBus::Narrow } else { AxiBus::Wide },
                dst,
                burst_len: rng.gen_range(1..=16),
                issue_cycle: rng.gen_range(0..32),
            });
        }
        // presentation is in order per port, so keep earliest-first
        txns.sort_by_key(|t| (t.issue_cycle, t.id));
        let mut max_outstanding = [None; 4];
        for m in &mut max_outstanding {
            if rng.gen_bool(0.3) {
                *m = Some(rng.gen_range(1..=4));
            }
        }
        Self { seed, mesh, params, schedule: Schedule { txns, max_outstanding }, id_width }
    }

    fn with_bypass(&self, bypass: bool) -> NetworkParams {
        let mut p = self.params.clone();
        p.ni.bypass = bypass;
        p
    }
}

/// Why a run failed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    Simulation(String),
    Order(String),
    Timeout { completed: usize, scheduled: usize },
    Occupancy { endpoint: Coord, port: &'static str, free: u32, capacity: u32 },
    Conservation,
    BypassMismatch,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Simulation(e) => write!(f, "simulation error: {e}"),
            Violation::Order(e) => write!(f, "ordering oracle: {e}"),
            Violation::Timeout { completed, scheduled } => write!(f, "only {completed} of {scheduled} transactions completed"),
            Violation::Occupancy { endpoint, port, free, capacity } => {
                write!(f, "{endpoint} {port}: {free} of {capacity} bytes free after drain")
            }
            Violation::Conservation => write!(f, "a link lost or duplicated flits"),
            Violation::BypassMismatch => write!(f, "per-ID delivery order differs with bypass on and off"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Failure {
    pub seed: u64,
    pub bypass: Option<bool>,
    pub violation: Violation,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.bypass {
            Some(b) => write!(f, "seed {} (bypass {}): {}", self.seed, if b { "on" } else { "off" }, self.violation),
            None => write!(f, "seed {}: {}", self.seed, self.violation),
        }
    }
}

/// Outcome of one instance.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub transactions: usize,
    /// Pairs of different-ID responses that arrived out of issue order at
    /// the same port, i.e. the NI actually had to reorder around them.
    pub cross_id_reorders: u64,
    pub direct_beats: u64,
    pub buffered_beats: u64,
    pub failures: Vec<Failure>,
}

fn validate_run(inst: &Instance, r: &SimReport) -> Vec<Violation> {
    let mut v = Vec::new();
    if let Err(e) = oracle_check_order(&r.issued(), &r.deliveries) {
        v.push(Violation::Order(e.to_string()));
    }
    let scheduled = inst.schedule.txns.len();
    let completed = r.records.iter().filter(|t| t.completion.is_some()).count();
    if r.flagged() || completed != scheduled {
        v.push(Violation::Timeout { completed, scheduled });
    }
    for (endpoint, ports) in &r.occupancy {
        for p in ports {
            if p.free_bytes != p.capacity_bytes {
                v.push(Violation::Occupancy {
                    endpoint: *endpoint,
                    port: p.port,
                    free: p.free_bytes,
                    capacity: p.capacity_bytes,
                });
            }
        }
    }
    if !r.links_conserved {
        v.push(Violation::Conservation);
    }
    v
}

fn cross_id_reorders(r: &SimReport) -> u64 {
    let mut n = 0;
    let d = &r.deliveries.deliveries;
    let issue: std::collections::HashMap<TxnId, usize> =
        r.records.iter().enumerate().map(|(i, t)| (t.txn.id, i)).collect();
    for (i, a) in d.iter().enumerate() {
        for b in &d[i + 1..] {
            let same_port = a.key.initiator == b.key.initiator && a.key.bus == b.key.bus && a.key.kind == b.key.kind;
            if same_port && a.key.axi_id != b.key.axi_id && issue[&a.txn] > issue[&b.txn] {
                n += 1;
            }
        }
    }
    n
}

/// Run one instance with bypass on and off and compare.
pub fn check_instance(inst: &Instance) -> RunSummary {
    let sim = SimConfig {
        max_cycles: 200_000,
        seed: inst.seed,
        progress_watchdog: Some(20_000),
        ..SimConfig::default()
    };
    let mut summary = RunSummary { transactions: inst.schedule.txns.len(), ..RunSummary::default() };
    let mut orders = Vec::new();
    for bypass in [true, false] {
        let fail = |violation| Failure { seed: inst.seed, bypass: Some(bypass), violation };
        match simulate_schedule(&inst.mesh, &inst.with_bypass(bypass), &inst.schedule, &sim) {
            Err(e) => summary.failures.push(fail(Violation::Simulation(e.to_string()))),
            Ok(out) => {
                let r = out.report;
                summary.failures.extend(validate_run(inst, &r).into_iter().map(fail));
                if bypass {
                    summary.cross_id_reorders = cross_id_reorders(&r);
                    summary.direct_beats = r.direct_beats;
                    summary.buffered_beats = r.buffered_beats;
                }
                orders.push(r.deliveries.per_key_order());
            }
        }
    }
    if orders.len() == 2 && orders[0] != orders[1] {
        summary.failures.push(Failure { seed: inst.seed, bypass: None, violation: Violation::BypassMismatch });
    }
    summary
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CheckReport {
    pub runs: usize,
    pub transactions: usize,
    pub cross_id_reorders: u64,
    pub direct_beats: u64,
    pub buffered_beats: u64,
    pub failures: Vec<Failure>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self) -> String {
        format!(
            "runs,{}\ntransactions,{}\ncross_id_reorders,{}\ndirect_beats,{}\nbuffered_beats,{}\nviolations,{}\n",
            self.runs,
            self.transactions,
            self.cross_id_reorders,
            self.direct_beats,
            self.buffered_beats,
            self.failures.len()
        )
    }
}

/// `runs` instances derived from `seed`.
pub fn run_check(runs: usize, seed: u64) -> CheckReport {
    let seeds: Vec<u64> = (0..runs as u64).map(|i| mix_seed(seed, i)).collect();
    let results = par::map(&seeds, |&s| check_instance(&Instance::random(s)));
    let mut rep = CheckReport { runs, ..CheckReport::default() };
    for r in results {
        rep.transactions += r.transactions;
        rep.cross_id_reorders += r.cross_id_reorders;
        rep.direct_beats += r.direct_beats;
        rep.buffered_beats += r.buffered_beats;
        rep.failures.extend(r.failures);
    }
    rep
}
