//! Input-buffered wormhole router.
//!
//! Each input has a FIFO; a flit written into it in cycle `t` can leave in
//! cycle `t + 1`. With `output_buffered` the switch writes into a two-entry
//! elastic buffer per output instead, adding one cycle. Input readiness only
//! depends on FIFO occupancy, so routers never form combinational paths.

mod arbiter;
mod routing;

use std::any::Any;
use std::collections::VecDeque;

pub use arbiter::{arbitrate, ArbRequest, OutputArbiter};
pub use routing::{
    port_name, route, turn_allowed, RouteError, RouterConfig, Routing, EAST, LOCAL, NORTH, SOUTH, WEST,
};

use crate::kernel::{Component, ComponentError, Cycle, LinkId, Wires};
use crate::link::Flit;

const OUTPUT_BUFFER_DEPTH: usize = 2;

/// How one router port is wired.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PortWiring {
    pub input: Option<LinkId>,
    pub output: Option<LinkId>,
    /// The port ends at an endpoint (local tile or boundary controller).
    pub terminal: bool,
}

impl PortWiring {
    pub fn is_terminated(&self) -> bool {
        self.input.is_none() && self.output.is_none()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RouterStats {
    pub flits_in: u64,
    pub flits_out: u64,
    pub peak_fifo: usize,
}

pub struct Router {
    name: String,
    cfg: RouterConfig,
    ports: Vec<PortWiring>,
    /// Buffered flits with their precomputed output port.
    fifos: Vec<VecDeque<(Flit, usize)>>,
    out_bufs: Vec<VecDeque<Flit>>,
    arbiters: Vec<OutputArbiter>,
    /// Per-output winner decided in evaluate.
    plan: Vec<Option<usize>>,
    stats: RouterStats,
}

impl Router {
    pub fn new(name: impl Into<String>, cfg: RouterConfig, ports: Vec<PortWiring>) -> Result<Self, RouteError> {
        cfg.validate()?;
        if ports.len() != cfg.num_ports {
            return Err(RouteError::Config("port wiring does not match the port count"));
        }
        let n = cfg.num_ports;
        Ok(Self {
            name: name.into(),
            ports,
            fifos: vec![VecDeque::with_capacity(cfg.input_fifo_depth); n],
            out_bufs: vec![VecDeque::with_capacity(OUTPUT_BUFFER_DEPTH); n],
            arbiters: vec![OutputArbiter::new(); n],
            plan: vec![None; n],
            stats: RouterStats::default(),
            cfg,
        })
    }

    pub fn config(&self) -> &RouterConfig {
        &self.cfg
    }

    pub fn ports(&self) -> &[PortWiring] {
        &self.ports
    }

    pub fn stats(&self) -> &RouterStats {
        &self.stats
    }

    pub fn buffered(&self) -> usize {
        self.fifos.iter().map(VecDeque::len).sum::<usize>() + self.out_bufs.iter().map(VecDeque::len).sum::<usize>()
    }

    fn choose(&self, out: usize) -> Option<usize> {
        let fifos = &self.fifos;
        self.arbiters[out].choose(fifos.len(), |i| fifos[i].front().is_some_and(|(_, o)| *o == out))
    }

    fn accept(&mut self, port: usize, flit: Flit) -> Result<(), ComponentError> {
        let out = route(&self.cfg, flit.header.dst).map_err(|e| ComponentError::new(e.to_string()))?;
        let ports = &self.ports;
        if !turn_allowed(&self.cfg, port, out, |p| ports[p].terminal) {
            return Err(ComponentError::new(format!(
                "flit to {} would turn {} -> {}, which the switch does not connect",
                flit.header.dst,
                port_name(port),
                port_name(out)
            )));
        }
        if self.ports[out].output.is_none() {
            return Err(ComponentError::new(format!(
                "flit to {} routed to unconnected port {}",
                flit.header.dst,
                port_name(out)
            )));
        }
        let fifo = &mut self.fifos[port];
        if fifo.len() >= self.cfg.input_fifo_depth {
            return Err(ComponentError::new(format!("input FIFO {} overflow", port_name(port))));
        }
        fifo.push_back((flit, out));
        self.stats.flits_in += 1;
        self.stats.peak_fifo = self.stats.peak_fifo.max(fifo.len());
        Ok(())
    }
}

impl Component<Flit> for Router {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn evaluate(&mut self, _cycle: Cycle, wires: &mut Wires<Flit>) -> Result<(), ComponentError> {
        for (p, wiring) in self.ports.iter().enumerate() {
            if let Some(link) = wiring.input {
                wires.set_ready(link, self.fifos[p].len() < self.cfg.input_fifo_depth);
            }
        }
        for out in 0..self.ports.len() {
            if self.cfg.output_buffered {
                if let Some(link) = self.ports[out].output {
                    wires.drive(link, self.out_bufs[out].front().copied());
                }
                self.plan[out] = if self.out_bufs[out].len() < OUTPUT_BUFFER_DEPTH { self.choose(out) } else { None };
            } else {
                self.plan[out] = self.choose(out);
                if let Some(link) = self.ports[out].output {
                    wires.drive(link, self.plan[out].map(|i| self.fifos[i].front().expect("planned input").0));
                }
            }
        }
        Ok(())
    }

    fn commit(&mut self, _cycle: Cycle, wires: &mut Wires<Flit>) -> Result<(), ComponentError> {
        let n = self.ports.len();
        for out in 0..n {
            let link = self.ports[out].output;
            if self.cfg.output_buffered {
                if link.is_some_and(|l| wires.fired(l)) {
                    self.out_bufs[out].pop_front();
                    self.stats.flits_out += 1;
                }
                if let Some(i) = self.plan[out] {
                    let (flit, _) = self.fifos[i].pop_front().expect("planned input");
                    self.arbiters[out].transferred(i, n, flit.header.last);
                    self.out_bufs[out].push_back(flit);
                }
            } else if let Some(i) = self.plan[out] {
                if link.is_some_and(|l| wires.fired(l)) {
                    let (flit, _) = self.fifos[i].pop_front().expect("planned input");
                    self.arbiters[out].transferred(i, n, flit.header.last);
                    self.stats.flits_out += 1;
                } else {
                    self.arbiters[out].stalled(i);
                }
            }
        }
        for p in 0..n {
            if let Some(link) = self.ports[p].input {
                if let Some(flit) = wires.take(link) {
                    self.accept(p, flit)?;
                }
            }
        }
        Ok(())
    }

    fn is_idle(&self) -> bool {
        self.buffered() == 0
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Kernel, SimConfig};
    use crate::link::{Coord, FlitHeader, MsgType, TxnId};

    /// Drives a fixed list of (cycle, flit) into one link, holding each
    /// flit until accepted.
    struct Injector {
        out: LinkId,
        queue: VecDeque<(Cycle, Flit)>,
    }

    impl Component<Flit> for Injector {
        fn name(&self) -> String {
            "inj".into()
        }
        fn evaluate(&mut self, cycle: Cycle, w: &mut Wires<Flit>) -> Result<(), ComponentError> {
            let f = self.queue.front().filter(|(c, _)| *c <= cycle).map(|(_, f)| *f);
            w.drive(self.out, f);
            Ok(())
        }
        fn commit(&mut self, _: Cycle, w: &mut Wires<Flit>) -> Result<(), ComponentError> {
            if w.fired(self.out) {
                self.queue.pop_front();
            }
            Ok(())
        }
        fn is_idle(&self) -> bool {
            self.queue.is_empty()
        }
        fn as_any(&self) -> &dyn Any {
            self
        }
    }

    struct Collector {
        input: LinkId,
        ready: fn(Cycle) -> bool,
        got: Vec<(Cycle, Flit)>,
    }

    impl Component<Flit> for Collector {
        fn name(&self) -> String {
            "col".into()
        }
        fn evaluate(&mut self, cycle: Cycle, w: &mut Wires<Flit>) -> Result<(), ComponentError> {
            w.set_ready(self.input, (self.ready)(cycle));
            Ok(())
        }
        fn commit(&mut self, cycle: Cycle, w: &mut Wires<Flit>) -> Result<(), ComponentError> {
            if let Some(f) = w.take(self.input) {
                self.got.push((cycle, f));
            }
            Ok(())
        }
        fn is_idle(&self) -> bool {
            true
        }
        fn as_any(&self) -> &dyn Any {
            self
        }
    }

    fn flit(dst: Coord, src: Coord, beat: u16, last: bool) -> Flit {
        Flit {
            header: FlitHeader { dst, src, rob_idx: 0, msg_type: MsgType::WideR, last, axi_id: 0 },
            payload_bits: 512,
            txn: TxnId(u64::from(src.x as u32) << 8 | u64::from(src.y as u32)),
            beat,
            len: 16,
        }
    }

    /// Router at (1,1) in a 3x3 grid with injectors on the given input
    /// ports and a collector on every output.
    fn harness(
        output_buffered: bool,
        inputs: Vec<(usize, Vec<(Cycle, Flit)>)>,
        ready: fn(Cycle) -> bool,
    ) -> (Kernel<Flit>, Vec<(usize, crate::kernel::ComponentId)>) {
        let mut k = Kernel::new();
        let mut ports = vec![PortWiring::default(); 5];
        let mut pending = Vec::new();
        for (p, port) in ports.iter_mut().enumerate() {
            let inl = k.add_link(format!("in{p}"), "wide").unwrap();
            let outl = k.add_link(format!("out{p}"), "wide").unwrap();
            *port = PortWiring { input: Some(inl), output: Some(outl), terminal: p == LOCAL };
            pending.push((p, inl, outl));
        }
        let cfg = RouterConfig {
            position: Some(Coord::new(1, 1)),
            grid: Some((3, 3)),
            output_buffered,
            ..Default::default()
        };
        let r = k.register(Box::new(Router::new("r", cfg, ports).unwrap())).unwrap();
        let mut cols = Vec::new();
        let mut inputs: std::collections::BTreeMap<usize, Vec<(Cycle, Flit)>> = inputs.into_iter().collect();
        for (p, inl, outl) in pending {
            let q = inputs.remove(&p).unwrap_or_default();
            let inj = k.register(Box::new(Injector { out: inl, queue: q.into() })).unwrap();
            k.connect(inl, inj, r);
            let c = k.register(Box::new(Collector { input: outl, ready, got: vec![] })).unwrap();
            k.connect(outl, r, c);
            cols.push((p, c));
        }
        (k, cols)
    }

    fn got(k: &Kernel<Flit>, cols: &[(usize, crate::kernel::ComponentId)], port: usize) -> Vec<(Cycle, Flit)> {
        let id = cols.iter().find(|(p, _)| *p == port).unwrap().1;
        k.downcast::<Collector>(id).unwrap().got.clone()
    }

    #[test]
    fn one_cycle_latency() {
        let f = flit(Coord::new(2, 1), Coord::new(0, 1), 0, true);
        let (mut k, cols) = harness(false, vec![(WEST, vec![(5, f)])], |_| true);
        k.run(&SimConfig::default()).unwrap();
        // enters the input FIFO in cycle 5, leaves east in cycle 6
        assert_eq!(got(&k, &cols, EAST), vec![(6, f)]);
    }

    #[test]
    fn two_cycle_latency_with_output_buffer() {
        let f = flit(Coord::new(2, 1), Coord::new(0, 1), 0, true);
        let (mut k, cols) = harness(true, vec![(WEST, vec![(5, f)])], |_| true);
        k.run(&SimConfig::default()).unwrap();
        assert_eq!(got(&k, &cols, EAST), vec![(7, f)]);
    }

    #[test]
    fn backpressure_holds_flit() {
        let f = flit(Coord::new(1, 1), Coord::new(0, 1), 0, true);
        let (mut k, cols) = harness(false, vec![(WEST, vec![(0, f)])], |c| !(1..=3).contains(&c));
        k.run(&SimConfig::default()).unwrap();
        assert_eq!(got(&k, &cols, LOCAL), vec![(4, f)]);
    }

    #[test]
    fn full_throughput_stream() {
        let stream: Vec<_> = (0..16).map(|b| (0, flit(Coord::new(2, 1), Coord::new(0, 1), b, b == 15))).collect();
        for ob in [false, true] {
            let (mut k, cols) = harness(ob, vec![(WEST, stream.clone())], |_| true);
            k.run(&SimConfig::default()).unwrap();
            let out = got(&k, &cols, EAST);
            let first = out[0].0;
            assert!(out.iter().enumerate().all(|(i, (c, f))| *c == first + i as u64 && f.beat == i as u16));
        }
    }

    #[test]
    fn wormhole_keeps_bursts_contiguous() {
        let a: Vec<_> = (0..4).map(|b| (0, flit(Coord::new(2, 1), Coord::new(0, 1), b, b == 3))).collect();
        let b: Vec<_> = (0..4).map(|b| (0, flit(Coord::new(2, 1), Coord::new(1, 1), b, b == 3))).collect();
        let (mut k, cols) = harness(false, vec![(WEST, a), (LOCAL, b)], |_| true);
        k.run(&SimConfig::default()).unwrap();
        let srcs: Vec<_> = got(&k, &cols, EAST).iter().map(|(_, f)| f.header.src.x).collect();
        assert_eq!(srcs, vec![1, 1, 1, 1, 0, 0, 0, 0]);
    }

    #[test]
    fn pruned_turn_is_an_error() {
        // arriving from the north heading east is a y-to-x turn
        let f = flit(Coord::new(2, 1), Coord::new(1, 2), 0, true);
        let (mut k, _) = harness(false, vec![(NORTH, vec![(0, f)])], |_| true);
        assert!(k.run(&SimConfig::default()).is_err());
    }
}
