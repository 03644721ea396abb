//! Routing functions and the pruned switch connection matrix.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::link::Coord;

pub const LOCAL: usize = 0;
pub const NORTH: usize = 1;
pub const EAST: usize = 2;
pub const SOUTH: usize = 3;
pub const WEST: usize = 4;

pub fn port_name(port: usize) -> &'static str {
    match port {
        LOCAL => "local",
        NORTH => "north",
        EAST => "east",
        SOUTH => "south",
        WEST => "west",
        _ => "port",
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Routing {
    /// Dimension order: resolve x, then y. Needs a mesh position.
    Xy,
    /// Destination lookup table.
    Table(BTreeMap<Coord, usize>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RouterConfig {
    pub num_ports: usize,
    pub routing: Routing,
    pub input_fifo_depth: usize,
    /// Register outputs in an elastic buffer: two-cycle instead of one.
    pub output_buffered: bool,
    pub position: Option<Coord>,
    /// Mesh extent, lets XY steer towards endpoints just outside the grid.
    pub grid: Option<(u32, u32)>,
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self {
            num_ports: 5,
            routing: Routing::Xy,
            input_fifo_depth: 2,
            output_buffered: false,
            position: None,
            grid: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RouteError {
    #[error("no route to {0}")]
    Unroutable(Coord),
    #[error("invalid router configuration: {0}")]
    Config(&'static str),
}

impl RouterConfig {
    pub fn validate(&self) -> Result<(), RouteError> {
        if self.num_ports < 2 {
            return Err(RouteError::Config("a router needs at least two ports"));
        }
        if self.input_fifo_depth == 0 {
            return Err(RouteError::Config("input FIFO depth must be at least one"));
        }
        if let Routing::Table(t) = &self.routing {
            if t.values().any(|&p| p >= self.num_ports) {
                return Err(RouteError::Config("routing table names a port the router does not have"));
            }
        }
        if self.routing == Routing::Xy {
            if self.position.is_none() {
                return Err(RouteError::Config("XY routing needs a grid position"));
            }
            if self.num_ports != 5 {
                return Err(RouteError::Config("XY routing needs exactly five ports"));
            }
        }
        Ok(())
    }

    pub fn latency(&self) -> u64 {
        if self.output_buffered {
            2
        } else {
            1
        }
    }
}

/// Output port for a flit heading to `dst`.
///
/// Off-grid destinations (boundary endpoints) are reached by routing XY to
/// the nearest grid tile and then leaving through the edge port there.
pub fn route(cfg: &RouterConfig, dst: Coord) -> Result<usize, RouteError> {
    match &cfg.routing {
        Routing::Table(table) => table.get(&dst).copied().ok_or(RouteError::Unroutable(dst)),
        Routing::Xy => {
            let here = cfg.position.ok_or(RouteError::Config("XY routing needs a grid position"))?;
            let target = match cfg.grid {
                Some((w, h)) => Coord::new(dst.x.clamp(0, w as i32 - 1), dst.y.clamp(0, h as i32 - 1)),
                None => dst,
            };
            if target.x != here.x {
                return Ok(if target.x > here.x { EAST } else { WEST });
            }
            if target.y != here.y {
                return Ok(if target.y > here.y { NORTH } else { SOUTH });
            }
            if dst == here {
                return Ok(LOCAL);
            }
            // at the boundary tile next to an off-grid endpoint
            let (w, h) = cfg.grid.ok_or(RouteError::Unroutable(dst))?;
            let port = if dst.x < 0 {
                WEST
            } else if dst.x >= w as i32 {
                EAST
            } else if dst.y < 0 {
                SOUTH
            } else if dst.y >= h as i32 {
                NORTH
            } else {
                return Err(RouteError::Unroutable(dst));
            };
            // corners are not reachable: both coordinates off-grid
            if (dst.x < 0 || dst.x >= w as i32) && (dst.y < 0 || dst.y >= h as i32) {
                return Err(RouteError::Unroutable(dst));
            }
            Ok(port)
        }
    }
}

/// Whether the switch has a connection from `input` to `output`.
///
/// Loopbacks never exist. Under XY routing a flit that arrived from north
/// or south has finished its x leg, so the y-to-x turns are pruned. Edge
/// ports that end at an endpoint (`terminal`) behave like local ports and
/// keep all their connections.
pub fn turn_allowed(cfg: &RouterConfig, input: usize, output: usize, terminal: impl Fn(usize) -> bool) -> bool {
    if input == output {
        return false;
    }
    match cfg.routing {
        Routing::Xy => {
            let from_y = input == NORTH || input == SOUTH;
            let to_x = output == EAST || output == WEST;
            !(from_y && to_x) || terminal(output) || terminal(input)
        }
        Routing::Table(_) => true,
    }
}
