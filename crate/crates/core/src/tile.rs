//! One endpoint: network interface, issuing source and target memory.
//!
//! Boundary memory controllers are tiles without traffic.

use std::any::Any;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::axi::{AxiTransaction, Delivery, DeliveryTrace, OrderKey};
use crate::kernel::{Component, ComponentError, Cycle, Wires};
use crate::link::{ChannelKind, Coord, Flit};
use crate::ni::{Completion, NetworkInterface, NiError};
use crate::traffic::{MemoryEndpoint, TrafficSource};

/// Random stalls injected at the endpoint edges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Backpressure {
    /// Chance per cycle that the target refuses incoming request beats.
    pub target_stall_prob: f64,
    /// Chance per cycle and port that the AXI side refuses a response beat.
    pub axi_stall_prob: f64,
}

impl Backpressure {
    pub fn is_none(&self) -> bool {
        self.target_stall_prob <= 0.0 && self.axi_stall_prob <= 0.0
    }
}

pub struct Tile {
    name: String,
    ni: NetworkInterface,
    source: TrafficSource,
    memory: MemoryEndpoint,
    backpressure: Backpressure,
    rng: ChaCha8Rng,
    stall_requests: bool,
    axi_ready: [bool; 4],
    completions: Vec<Completion>,
    deliveries: DeliveryTrace,
}

impl Tile {
    pub fn new(ni: NetworkInterface, source: TrafficSource, memory_latency: Cycle, backpressure: Backpressure) -> Self {
        let coord = ni.coord();
        Self {
            name: format!("tile {coord}"),
            memory: MemoryEndpoint::new(coord, ni.config().internal_latency_cycles + memory_latency),
            ni,
            source,
            backpressure,
            rng: ChaCha8Rng::seed_from_u64(0),
            stall_requests: false,
            axi_ready: [true; 4],
            completions: Vec::new(),
            deliveries: DeliveryTrace::default(),
        }
    }

    pub fn coord(&self) -> Coord {
        self.ni.coord()
    }

    pub fn ni(&self) -> &NetworkInterface {
        &self.ni
    }

    pub fn memory(&self) -> &MemoryEndpoint {
        &self.memory
    }

    pub fn issued(&self) -> &[AxiTransaction] {
        self.source.issued()
    }

    pub fn completions(&self) -> &[Completion] {
        &self.completions
    }

    pub fn deliveries(&self) -> &DeliveryTrace {
        &self.deliveries
    }

    fn wrap(e: NiError) -> ComponentError {
        ComponentError::new(e.to_string())
    }
}

impl Component<Flit> for Tile {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn start(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn begin_cycle(&mut self, cycle: Cycle) -> Result<(), ComponentError> {
        let bp = self.backpressure;
        if bp.target_stall_prob > 0.0 {
            self.stall_requests = self.rng.gen_bool(bp.target_stall_prob.min(1.0));
        }
        if bp.axi_stall_prob > 0.0 {
            for r in &mut self.axi_ready {
                *r = !self.rng.gen_bool(bp.axi_stall_prob.min(1.0));
            }
        }

        let coord = self.coord();
        for c in self.ni.deliver(cycle, self.axi_ready).map_err(Self::wrap)? {
            self.source.on_complete(&c);
            let key = OrderKey { initiator: coord, bus: c.bus, kind: c.kind, axi_id: c.axi_id };
            self.deliveries.push(Delivery { txn: c.txn, key, cycle });
            self.completions.push(c);
        }
        let responses = self.memory.tick(cycle);
        self.ni.push_response(responses);
        self.source.present(cycle, &mut self.ni).map_err(Self::wrap)?;
        self.ni.inject().map_err(Self::wrap)?;
        Ok(())
    }

    fn evaluate(&mut self, _cycle: Cycle, wires: &mut Wires<Flit>) -> Result<(), ComponentError> {
        self.ni.drive(wires);
        for ch in ChannelKind::ALL {
            let (Some(input), _) = self.ni.links(ch) else { continue };
            // responses always have a reserved slot; only requests can stall
            let ready = match wires.peek(input) {
                Some(f) if f.header.msg_type.is_request() => !self.stall_requests,
                _ => true,
            };
            wires.set_ready(input, ready);
        }
        Ok(())
    }

    fn commit(&mut self, cycle: Cycle, wires: &mut Wires<Flit>) -> Result<(), ComponentError> {
        self.ni.commit_outputs(cycle, wires);
        for ch in ChannelKind::ALL {
            let (Some(input), _) = self.ni.links(ch) else { continue };
            if let Some(f) = wires.take(input) {
                if let Some(req) = self.ni.receive(f, ch, cycle).map_err(Self::wrap)? {
                    self.memory.on_request(req, cycle);
                }
            }
        }
        self.ni.release(cycle);
        self.ni.check_occupancy().map_err(Self::wrap)
    }

    fn is_combinational(&self) -> bool {
        true
    }

    fn is_idle(&self) -> bool {
        self.source.is_done() && self.ni.is_idle() && self.memory.is_idle()
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
