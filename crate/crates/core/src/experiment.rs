//! Experiment configuration, single runs, interference sweeps and the
//! built-in reproductions.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{KernelError, SimConfig, TracePayload};
use crate::link::{Coord, Flit, Variant};
use crate::metrics::{measure, SimReport};
use crate::ni::NiConfig;
use crate::par;
use crate::router::RouterConfig;
use crate::tile::Backpressure;
use crate::topology::{
    boundary_bandwidth, boundary_bandwidth_narrow, build_mesh, peak_link_bandwidth, MeshSpec, NetworkParams,
    TopologyError,
};
use crate::traffic::{generate, Schedule, TrafficDirection, TrafficError, TrafficSpec};

/// Which count an interference sweep varies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    /// Single run with the counts as given.
    #[default]
    None,
    /// Wide transaction count follows the level, narrow count fixed.
    Wide,
    /// Narrow transaction count follows the level, wide count fixed.
    Narrow,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouterSection {
    pub input_fifo_depth: usize,
    /// Two-cycle routers with registered outputs, as in the calibrated tile.
    pub output_buffered: bool,
}

impl Default for RouterSection {
    fn default() -> Self {
        Self { input_fifo_depth: 2, output_buffered: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub sweep: Sweep,
    pub seed: u64,
    pub max_cycles: u64,
    /// Extra target latency on top of `ni.internal_latency_cycles`.
    pub memory_latency: u64,
    pub output_dir: Option<PathBuf>,
    pub mesh: MeshSpec,
    pub router: RouterSection,
    pub ni: NiConfig,
    pub traffic: TrafficSpec,
    pub backpressure: Backpressure,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: Variant::NarrowWide,
            sweep: Sweep::None,
            seed: 1,
            max_cycles: 1_000_000,
            memory_latency: 0,
            output_dir: None,
            mesh: MeshSpec::default(),
            router: RouterSection::default(),
            ni: NiConfig::default(),
            traffic: TrafficSpec::default(),
            backpressure: Backpressure::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error("simulation failed: {0}")]
    Kernel(#[from] KernelError),
    #[error("{0}")]
    Invalid(String),
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ExperimentError> {
        // toml errors carry line and column
        toml::from_str(s).map_err(|e| ExperimentError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Read { path: path.into(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn params(&self) -> NetworkParams {
        NetworkParams {
            variant: self.variant,
            router: RouterConfig {
                input_fifo_depth: self.router.input_fifo_depth,
                output_buffered: self.router.output_buffered,
                ..RouterConfig::default()
            },
            ni: self.ni.clone(),
            memory_latency: self.memory_latency,
            backpressure: self.backpressure,
        }
    }

    pub fn sim_config(&self, record_trace: bool) -> SimConfig {
        SimConfig { max_cycles: self.max_cycles, seed: self.seed, record_trace, ..SimConfig::default() }
    }

    /// Traffic of one sweep point.
    pub fn traffic_at(&self, level: u32) -> TrafficSpec {
        let mut t = self.traffic.clone();
        match self.sweep {
            Sweep::None => {}
            Sweep::Wide => t.wide_txn_count = level,
            Sweep::Narrow => t.narrow_txn_count = level,
        }
        t
    }
}

/// One finished simulation.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: SimReport,
    /// Transfer trace CSV when requested.
    pub trace: Option<String>,
}

/// Build and run a network for an explicit schedule.
pub fn simulate_schedule(
    mesh: &MeshSpec,
    params: &NetworkParams,
    schedule: &Schedule,
    sim: &SimConfig,
) -> Result<RunOutput, ExperimentError> {
    let mut net = build_mesh(mesh, params, schedule)?;
    let run = net.kernel.run(sim)?;
    let report = measure(&net, &run, schedule.txns.len());
    let trace = sim.record_trace.then(|| run.trace_csv(Flit::trace_header()));
    Ok(RunOutput { report, trace })
}

pub fn simulate(cfg: &ExperimentConfig, traffic: &TrafficSpec, record_trace: bool) -> Result<RunOutput, ExperimentError> {
    let schedule = generate(traffic)?;
    simulate_schedule(&cfg.mesh, &cfg.params(), &schedule, &cfg.sim_config(record_trace))
}

/// One row of a sweep.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub variant: Variant,
    pub direction: TrafficDirection,
    pub level: u32,
    pub report: SimReport,
}

/// Run every (variant, direction, level) combination as an isolated
/// instance; results come back sorted the same way.
pub fn run_sweep(
    base: &ExperimentConfig,
    variants: &[Variant],
    directions: &[TrafficDirection],
) -> Result<Vec<SweepPoint>, ExperimentError> {
    let mut jobs = Vec::new();
    for &variant in variants {
        for &direction in directions {
            for &level in &base.traffic.interference_levels {
                jobs.push((variant, direction, level));
            }
        }
    }
    let results = par::map(&jobs, |&(variant, direction, level)| {
        let cfg = ExperimentConfig { variant, ..base.clone() };
        let traffic = TrafficSpec { direction, ..cfg.traffic_at(level) };
        simulate(&cfg, &traffic, false).map(|out| SweepPoint { variant, direction, level, report: out.report })
    });
    results.into_iter().collect()
}

fn dir_name(d: TrafficDirection) -> &'static str {
    match d {
        TrafficDirection::Unidirectional => "one_dir",
        TrafficDirection::Bidirectional => "two_dir",
    }
}

pub fn lat_file_name(direction: TrafficDirection, variant: Variant) -> String {
    format!("lat_{}_{}.csv", dir_name(direction), variant.short_name())
}

pub fn bw_file_name(direction: TrafficDirection, variant: Variant) -> String {
    format!("bw_{}_{}.csv", dir_name(direction), variant.short_name())
}

/// Narrow read latency per level.
pub fn lat_csv(points: &[&SweepPoint]) -> String {
    let mut s = String::from("level,narrow_read_lat,narrow_read_median,narrow_read_p99,timeouts\n");
    for p in points {
        let l = &p.report.narrow_read;
        writeln!(s, "{},{:.3},{:.1},{:.1},{}", p.level, l.mean, l.median, l.p99, p.report.timeouts).unwrap();
    }
    s
}

/// Effective wide read bandwidth per level.
pub fn bw_csv(points: &[&SweepPoint]) -> String {
    let mut s = String::from("level,wide_read_bw,wide_read_lat,timeouts\n");
    for p in points {
        let r = &p.report;
        writeln!(s, "{},{:.3},{:.3},{}", p.level, r.wide_bw_percent, r.wide_read.mean, r.timeouts).unwrap();
    }
    s
}

/// Write through a temporary file and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    let err = |source| ExperimentError::Write { path: path.into(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(err)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}

/// The two interference experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    /// Narrow latency while the wide transaction count grows.
    Latency,
    /// Wide bandwidth while the narrow transaction count grows.
    Bandwidth,
}

pub fn figure_config(fig: Figure) -> ExperimentConfig {
    let sweep = match fig {
        Figure::Latency => Sweep::Wide,
        Figure::Bandwidth => Sweep::Narrow,
    };
    ExperimentConfig { sweep, ..ExperimentConfig::default() }
}

/// Result files of a figure sweep: (file name, contents).
pub fn figure_files(fig: Figure, points: &[SweepPoint]) -> Vec<(String, String)> {
    let mut files = Vec::new();
    for variant in [Variant::NarrowWide, Variant::WideOnly] {
        for direction in [TrafficDirection::Unidirectional, TrafficDirection::Bidirectional] {
            let sel: Vec<&SweepPoint> =
                points.iter().filter(|p| p.variant == variant && p.direction == direction).collect();
            if sel.is_empty() {
                continue;
            }
            files.push(match fig {
                Figure::Latency => (lat_file_name(direction, variant), lat_csv(&sel)),
                Figure::Bandwidth => (bw_file_name(direction, variant), bw_csv(&sel)),
            });
        }
    }
    files
}

/// Run a figure sweep over the given variants and both directions.
pub fn run_figure(fig: Figure, base: &ExperimentConfig, variants: &[Variant]) -> Result<Vec<SweepPoint>, ExperimentError> {
    let cfg = ExperimentConfig { sweep: figure_config(fig).sweep, ..base.clone() };
    run_sweep(&cfg, variants, &[TrafficDirection::Unidirectional, TrafficDirection::Bidirectional])
}

/// Zero-load round trip of one single-beat read between adjacent tiles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZeroLoad {
    pub round_trip: u64,
    pub router_latency: u64,
    pub router_traversals: u64,
    pub ni_cycles: u64,
    pub internal_cycles: u64,
}

impl ZeroLoad {
    pub fn summary(&self) -> String {
        format!(
            "round_trip_cycles,{}\nrouter_cycles,{}\nni_cycles,{}\nendpoint_internal_cycles,{}\n",
            self.round_trip,
            self.router_latency * self.router_traversals,
            self.ni_cycles,
            self.internal_cycles
        )
    }
}

pub fn zero_load(output_buffered: bool) -> Result<ZeroLoad, ExperimentError> {
    let mut cfg = ExperimentConfig::default();
    cfg.router.output_buffered = output_buffered;
    cfg.traffic = TrafficSpec { narrow_txn_count: 1, wide_txn_count: 0, ..TrafficSpec::default() };
    let out = simulate(&cfg, &cfg.traffic, false)?;
    let r = &out.report;
    let lat = r.records.first().and_then(|t| t.latency()).ok_or_else(|| {
        ExperimentError::Invalid("zero-load read did not complete".into())
    })?;
    let hops = u64::from(cfg.traffic.source.manhattan(cfg.traffic.target));
    Ok(ZeroLoad {
        round_trip: lat,
        router_latency: cfg.params().router.latency(),
        // request and response each cross hops + 1 routers
        router_traversals: 2 * (hops + 1),
        ni_cycles: 1,
        internal_cycles: cfg.ni.internal_latency_cycles + cfg.memory_latency,
    })
}

/// Boundary bandwidth report for a `width`x`height` mesh.
pub fn boundary_summary(mesh: &MeshSpec) -> String {
    let link = peak_link_bandwidth(512, mesh.frequency_hz);
    let agg = boundary_bandwidth(mesh);
    let narrow = boundary_bandwidth_narrow(mesh);
    format!(
        "mesh,{}x{}\nboundary_ports,{}\nlink_gbps,{:.2}\nlink_duplex_tbps,{:.4}\nboundary_tbps,{:.2}\nboundary_tb_per_s,{:.2}\nnarrow_extra_tb_per_s,{:.2}\n",
        mesh.width,
        mesh.height,
        mesh.boundary_ports(),
        link.simplex_bps / 1e9,
        link.duplex_bps / 1e12,
        agg * 8.0 / 1e12,
        agg / 1e12,
        narrow / 1e12
    )
}

/// Human-readable summary of a single run.
pub fn report_summary(r: &SimReport) -> String {
    let mut s = String::new();
    writeln!(s, "variant,{}", r.variant).unwrap();
    writeln!(s, "cycles,{}", r.cycles).unwrap();
    writeln!(s, "transactions,{}", r.records.len()).unwrap();
    writeln!(s, "timeouts,{}", r.timeouts).unwrap();
    writeln!(s, "narrow_read_lat,{:.3}", r.narrow_read.mean).unwrap();
    writeln!(s, "narrow_read_p99,{:.1}", r.narrow_read.p99).unwrap();
    writeln!(s, "wide_read_lat,{:.3}", r.wide_read.mean).unwrap();
    writeln!(s, "wide_read_bw,{:.3}", r.wide_bw_percent).unwrap();
    for c in &r.channels {
        writeln!(s, "{}_busy_link_cycles,{}", c.channel, c.busy_link_cycles).unwrap();
        writeln!(s, "{}_payload_bytes,{}", c.channel, c.payload_bytes).unwrap();
    }
    writeln!(s, "rob_stall_cycles,{}", r.rob_stall_cycles).unwrap();
    writeln!(s, "table_stall_cycles,{}", r.table_stall_cycles).unwrap();
    writeln!(s, "direct_beats,{}", r.direct_beats).unwrap();
    writeln!(s, "buffered_beats,{}", r.buffered_beats).unwrap();
    s
}

/// Per-NI occupancy after the run: coordinate, port, free bytes, peak use.
pub fn occupancy_csv(r: &SimReport) -> String {
    let mut s = String::from("endpoint,port,capacity_bytes,free_bytes,peak_used_bytes,outstanding\n");
    for (c, ports) in &r.occupancy {
        for p in ports {
            writeln!(s, "{c},{},{},{},{},{}", p.port, p.capacity_bytes, p.free_bytes, p.peak_used_bytes, p.outstanding)
                .unwrap();
        }
    }
    s
}

pub fn parse_mesh(s: &str) -> Result<(u32, u32), ExperimentError> {
    let bad = || ExperimentError::Invalid(format!("mesh size `{s}` is not of the form WxH"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: u32 = w.trim().parse().map_err(|_| bad())?;
    let h: u32 = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

/// Source and target used by the figure presets.
pub fn figure_endpoints() -> (Coord, Coord) {
    let t = TrafficSpec::default();
    (t.source, t.target)
}
