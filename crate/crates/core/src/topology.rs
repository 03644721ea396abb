//! Mesh construction and analytic bandwidth figures.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{ComponentId, Cycle, Kernel, KernelError, LinkId};
use crate::link::{ChannelKind, Coord, Flit, Variant};
use crate::ni::{NetworkInterface, NiConfig, NiError};
use crate::router::{PortWiring, RouteError, Router, RouterConfig, Routing, EAST, LOCAL, NORTH, SOUTH, WEST};
use crate::tile::{Backpressure, Tile};
use crate::traffic::{Schedule, TrafficSource};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    North,
    East,
    South,
    West,
}

/// A memory controller attached to the edge port of a boundary router.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BoundaryMemory {
    pub edge: Edge,
    /// Column for north/south, row for east/west.
    pub position: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSpec {
    pub width: u32,
    pub height: u32,
    pub boundary_memories: Vec<BoundaryMemory>,
    /// Only used to turn cycle counts into seconds.
    pub frequency_hz: f64,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self { width: 4, height: 4, boundary_memories: Vec::new(), frequency_hz: 1.23e9 }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("mesh must be at least 1x1, got {0}x{1}")]
    Empty(u32, u32),
    #[error("frequency must be positive, got {0}")]
    Frequency(f64),
    #[error("memory on the {edge:?} edge at {position} is off the boundary")]
    OffBoundary { edge: Edge, position: u32 },
    #[error("two memories on the {edge:?} edge at {position}")]
    DuplicateMemory { edge: Edge, position: u32 },
    #[error("traffic endpoint {0} is not a tile or memory of this mesh")]
    UnknownEndpoint(Coord),
    #[error("meshes are built with XY routing; tables are for hand-wired routers")]
    NeedsXy,
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Ni(#[from] NiError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

impl MeshSpec {
    pub fn new(width: u32, height: u32) -> Self {
        Self { width, height, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.width == 0 || self.height == 0 {
            return Err(TopologyError::Empty(self.width, self.height));
        }
        if self.frequency_hz.is_nan() || self.frequency_hz <= 0.0 {
            return Err(TopologyError::Frequency(self.frequency_hz));
        }
        let mut seen = BTreeSet::new();
        for m in &self.boundary_memories {
            let len = match m.edge {
                Edge::North | Edge::South => self.width,
                Edge::East | Edge::West => self.height,
            };
            if m.position >= len {
                return Err(TopologyError::OffBoundary { edge: m.edge, position: m.position });
            }
            if !seen.insert(*m) {
                return Err(TopologyError::DuplicateMemory { edge: m.edge, position: m.position });
            }
        }
        Ok(())
    }

    /// Coordinate one step outside the grid.
    pub fn memory_coord(&self, m: &BoundaryMemory) -> Coord {
        let p = m.position as i32;
        match m.edge {
            Edge::North => Coord::new(p, self.height as i32),
            Edge::South => Coord::new(p, -1),
            Edge::East => Coord::new(self.width as i32, p),
            Edge::West => Coord::new(-1, p),
        }
    }

    /// Router the memory hangs off, and the port it uses.
    fn memory_attachment(&self, m: &BoundaryMemory) -> (Coord, usize) {
        let p = m.position as i32;
        match m.edge {
            Edge::North => (Coord::new(p, self.height as i32 - 1), NORTH),
            Edge::South => (Coord::new(p, 0), SOUTH),
            Edge::East => (Coord::new(self.width as i32 - 1, p), EAST),
            Edge::West => (Coord::new(0, p), WEST),
        }
    }

    /// Tile coordinates in row-major order.
    pub fn tiles(&self) -> Vec<Coord> {
        (0..self.height as i32).flat_map(|y| (0..self.width as i32).map(move |x| Coord::new(x, y))).collect()
    }

    pub fn contains(&self, c: Coord) -> bool {
        (0..self.width as i32).contains(&c.x) && (0..self.height as i32).contains(&c.y)
    }

    /// Tiles followed by boundary memories.
    pub fn endpoints(&self) -> Vec<Coord> {
        let mut v = self.tiles();
        v.extend(self.boundary_memories.iter().map(|m| self.memory_coord(m)));
        v
    }

    /// Router ports facing off the grid, per channel.
    pub fn boundary_ports(&self) -> u32 {
        2 * (self.width + self.height)
    }
}

/// Everything besides geometry and traffic that shapes a network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub variant: Variant,
    /// Template; position and grid are filled in per router.
    pub router: RouterConfig,
    pub ni: NiConfig,
    /// Extra target-side latency on top of the interface's internal latency.
    pub memory_latency: Cycle,
    pub backpressure: Backpressure,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            variant: Variant::NarrowWide,
            router: RouterConfig::default(),
            ni: NiConfig::default(),
            memory_latency: 0,
            backpressure: Backpressure::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RouterHandle {
    pub channel: ChannelKind,
    pub coord: Coord,
    pub id: ComponentId,
}

/// A registered, fully wired simulation instance.
pub struct Network {
    pub kernel: Kernel<Flit>,
    pub spec: MeshSpec,
    pub variant: Variant,
    /// Endpoint tiles, then boundary memories.
    pub tiles: Vec<ComponentId>,
    pub routers: Vec<RouterHandle>,
}

impl Network {
    pub fn tile(&self, id: ComponentId) -> &Tile {
        self.kernel.downcast::<Tile>(id).expect("tile handle")
    }

    pub fn router(&self, h: &RouterHandle) -> &Router {
        self.kernel.downcast::<Router>(h.id).expect("router handle")
    }

    pub fn tile_at(&self, c: Coord) -> Option<&Tile> {
        self.tiles.iter().map(|&id| self.tile(id)).find(|t| t.coord() == c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    Router(ChannelKind, Coord),
    Endpoint(Coord),
}

fn neighbor(c: Coord, port: usize) -> Coord {
    match port {
        NORTH => Coord::new(c.x, c.y + 1),
        EAST => Coord::new(c.x + 1, c.y),
        SOUTH => Coord::new(c.x, c.y - 1),
        WEST => Coord::new(c.x - 1, c.y),
        _ => c,
    }
}

fn opposite(port: usize) -> usize {
    match port {
        NORTH => SOUTH,
        SOUTH => NORTH,
        EAST => WEST,
        WEST => EAST,
        p => p,
    }
}

/// Build router grids (one per channel of the variant), one interface and
/// traffic endpoint per tile, and the boundary memories. Router ports that
/// lead nowhere are left terminated.
pub fn build_mesh(spec: &MeshSpec, params: &NetworkParams, schedule: &Schedule) -> Result<Network, TopologyError> {
    spec.validate()?;
    params.ni.validate()?;
    if params.router.routing != Routing::Xy {
        return Err(TopologyError::NeedsXy);
    }
    let endpoints = spec.endpoints();
    let known: BTreeSet<Coord> = endpoints.iter().copied().collect();
    for t in &schedule.txns {
        for c in [t.initiator, t.dst] {
            if !known.contains(&c) {
                return Err(TopologyError::UnknownEndpoint(c));
            }
        }
    }

    let mut kernel = Kernel::new();
    let mut wiring: BTreeMap<(ChannelKind, Coord), Vec<PortWiring>> = BTreeMap::new();
    let mut ni_links: BTreeMap<Coord, Vec<(ChannelKind, LinkId, LinkId)>> = BTreeMap::new();
    let mut edges: Vec<(LinkId, Node, Node)> = Vec::new();
    let channels = params.variant.channels();

    let attachments: Vec<(Coord, Coord, usize)> = spec
        .tiles()
        .into_iter()
        .map(|t| (t, t, LOCAL))
        .chain(spec.boundary_memories.iter().map(|m| {
            let (r, port) = spec.memory_attachment(m);
            (spec.memory_coord(m), r, port)
        }))
        .collect();

    for &ch in channels {
        for r in spec.tiles() {
            wiring.insert((ch, r), vec![PortWiring::default(); 5]);
        }
        for r in spec.tiles() {
            for port in [NORTH, EAST, SOUTH, WEST] {
                let n = neighbor(r, port);
                if !spec.contains(n) {
                    continue;
                }
                let l = kernel.add_link(format!("{ch} {r}->{n}"), ch.name())?;
                wiring.get_mut(&(ch, r)).expect("router")[port].output = Some(l);
                wiring.get_mut(&(ch, n)).expect("router")[opposite(port)].input = Some(l);
                edges.push((l, Node::Router(ch, r), Node::Router(ch, n)));
            }
        }
        for &(ep, r, port) in &attachments {
            let up = kernel.add_link(format!("{ch} ni{ep}->{r}"), ch.name())?;
            let down = kernel.add_link(format!("{ch} {r}->ni{ep}"), ch.name())?;
            let w = &mut wiring.get_mut(&(ch, r)).expect("router")[port];
            *w = PortWiring { input: Some(up), output: Some(down), terminal: true };
            ni_links.entry(ep).or_default().push((ch, down, up));
            edges.push((up, Node::Endpoint(ep), Node::Router(ch, r)));
            edges.push((down, Node::Router(ch, r), Node::Endpoint(ep)));
        }
    }

    let mut ids: BTreeMap<Node, ComponentId> = BTreeMap::new();
    let mut tiles = Vec::new();
    for &ep in &endpoints {
        let mut ni = NetworkInterface::new(ep, params.variant, params.ni.clone())?;
        for &(ch, input, output) in &ni_links[&ep] {
            ni.attach(ch, input, output);
        }
        let source = TrafficSource::new(schedule.for_initiator(ep), schedule.max_outstanding);
        let tile = Tile::new(ni, source, params.memory_latency, params.backpressure);
        let id = kernel.register(Box::new(tile))?;
        ids.insert(Node::Endpoint(ep), id);
        tiles.push(id);
    }
    let mut routers = Vec::new();
    for ((ch, r), ports) in wiring {
        let cfg = RouterConfig { position: Some(r), grid: Some((spec.width, spec.height)), ..params.router.clone() };
        let router = Router::new(format!("{ch} router {r}"), cfg, ports)?;
        let id = kernel.register(Box::new(router))?;
        ids.insert(Node::Router(ch, r), id);
        routers.push(RouterHandle { channel: ch, coord: r, id });
    }
    for (l, from, to) in edges {
        kernel.connect(l, ids[&from], ids[&to]);
    }
    kernel.check_wiring()?;
    Ok(Network { kernel, spec: spec.clone(), variant: params.variant, tiles, routers })
}

/// Simplex and duplex bandwidth of one link direction pair, in bit/s.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkBandwidth {
    pub simplex_bps: f64,
    pub duplex_bps: f64,
}

pub fn peak_link_bandwidth(payload_bits_per_cycle: u32, frequency_hz: f64) -> LinkBandwidth {
    let simplex = f64::from(payload_bits_per_cycle) * frequency_hz;
    LinkBandwidth { simplex_bps: simplex, duplex_bps: 2.0 * simplex }
}

/// Aggregate wide-link bandwidth over all boundary ports, in bytes/s.
pub fn boundary_bandwidth(spec: &MeshSpec) -> f64 {
    let bw = peak_link_bandwidth(512, spec.frequency_hz);
    f64::from(spec.boundary_ports()) * bw.duplex_bps / 8.0
}

/// What the two 64-bit narrow networks would add on top, in bytes/s.
pub fn boundary_bandwidth_narrow(spec: &MeshSpec) -> f64 {
    let bw = peak_link_bandwidth(64, spec.frequency_hz);
    f64::from(spec.boundary_ports()) * 2.0 * bw.duplex_bps / 8.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn build(w: u32, h: u32, variant: Variant) -> Network {
        let params = NetworkParams { variant, ..Default::default() };
        build_mesh(&MeshSpec::new(w, h), &params, &Schedule::default()).unwrap()
    }

    #[test]
    fn router_counts() {
        assert_eq!(build(1, 1, Variant::NarrowWide).routers.len(), 3);
        let n = build(4, 4, Variant::NarrowWide);
        assert_eq!((n.routers.len(), n.tiles.len()), (48, 16));
        assert_eq!(build(7, 7, Variant::NarrowWide).routers.len(), 147);
        assert_eq!(build(4, 4, Variant::WideOnly).routers.len(), 16);
    }

    #[test]
    fn one_by_one_has_four_unused_ports() {
        let n = build(1, 1, Variant::NarrowWide);
        for h in &n.routers {
            let ports = n.router(h).ports();
            assert_eq!(ports.iter().filter(|p| p.is_terminated()).count(), 4);
        }
    }

    #[test]
    fn boundary_port_count() {
        let n = build(7, 7, Variant::NarrowWide);
        let wide_edge_ports: usize = n
            .routers
            .iter()
            .filter(|h| h.channel == ChannelKind::Wide)
            .map(|h| n.router(h).ports().iter().filter(|p| p.is_terminated()).count())
            .sum();
        assert_eq!(wide_edge_ports, 28);
        assert_eq!(MeshSpec::new(7, 7).boundary_ports(), 28);
    }

    #[test]
    fn memory_placement() {
        let mut spec = MeshSpec::new(4, 4);
        spec.boundary_memories.push(BoundaryMemory { edge: Edge::West, position: 2 });
        spec.boundary_memories.push(BoundaryMemory { edge: Edge::North, position: 0 });
        assert_eq!(spec.memory_coord(&spec.boundary_memories[0]), Coord::new(-1, 2));
        assert_eq!(spec.memory_coord(&spec.boundary_memories[1]), Coord::new(0, 4));
        let n = build_mesh(&spec, &NetworkParams::default(), &Schedule::default()).unwrap();
        assert_eq!(n.tiles.len(), 18);
        spec.boundary_memories.push(BoundaryMemory { edge: Edge::East, position: 4 });
        assert!(matches!(spec.validate(), Err(TopologyError::OffBoundary { .. })));
    }

    #[test]
    fn bandwidth_arithmetic() {
        let b = peak_link_bandwidth(512, 1.23e9);
        assert!((b.simplex_bps - 629.76e9).abs() < 1.0);
        assert!((b.duplex_bps - 1.25952e12).abs() < 1.0);
        assert_eq!(peak_link_bandwidth(512, 1.0).simplex_bps, 512.0);
        let agg = boundary_bandwidth(&MeshSpec::new(7, 7));
        assert!((agg - 28.0 * 1.25952e12 / 8.0).abs() < 1.0);
    }
}
