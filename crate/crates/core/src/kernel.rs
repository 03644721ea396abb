//! Deterministic two-phase cycle engine.
//!
//! Every cycle runs three steps over all registered components:
//!
//! 1. `begin_cycle`: once per cycle, before any signal is driven. Endpoints
//!    use it to present new work that is combinationally visible this cycle.
//! 2. `evaluate`: drive `valid` (with payload) on outputs and `ready` on
//!    inputs. Registered components are evaluated once; components that
//!    declare a combinational path (ready depending on an input's valid) are
//!    re-evaluated until their signals stop changing.
//! 3. `commit`: every link with `valid && ready` transferred exactly one
//!    payload; producers pop, consumers `take`.
//!
//! The kernel owns the wires, so it can check handshake stability and
//! per-link conservation without trusting the components.

use std::any::Any;
use std::collections::hash_map::DefaultHasher;
use std::fmt::{self, Debug};
use std::hash::{Hash, Hasher};

use thiserror::Error;

/// Clock periods since reset.
pub type Cycle = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ComponentId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub usize);

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Valid/ready pair as seen on one link in one cycle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Handshake {
    pub valid: bool,
    pub ready: bool,
}

impl Handshake {
    pub fn fires(self) -> bool {
        self.valid && self.ready
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimConfig {
    pub max_cycles: u64,
    pub seed: u64,
    pub record_trace: bool,
    /// Stop as soon as every component reports idle and no link is valid.
    pub stop_when_idle: bool,
    /// Check payload stability of stalled handshakes every cycle.
    pub debug_checks: bool,
    /// Abort with [`KernelError::NoProgress`] after this many consecutive
    /// cycles without any transfer while some component is busy.
    pub progress_watchdog: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            max_cycles: 1_000_000,
            seed: 0,
            record_trace: false,
            stop_when_idle: true,
            debug_checks: true,
            progress_watchdog: Some(20_000),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("component registered after the simulation started")]
    RegisteredAfterStart,
    #[error("link {link} has no {missing}")]
    Unconnected { link: String, missing: &'static str },
    #[error("combinational loop did not settle in cycle {cycle}: links {links:?} through {components:?}")]
    CombinationalLoop { cycle: Cycle, links: Vec<String>, components: Vec<String> },
    #[error("cycle {cycle}: link {link} changed or dropped a stalled payload")]
    Unstable { cycle: Cycle, link: String },
    #[error("cycle {cycle}: link {link} transferred a payload that was never taken")]
    Conservation { cycle: Cycle, link: String },
    #[error("cycle {cycle}: no transfer for {idle_for} cycles while busy: {busy:?}")]
    NoProgress { cycle: Cycle, idle_for: u64, busy: Vec<String> },
    #[error("cycle {cycle}: {component}: {message}")]
    Component { cycle: Cycle, component: String, message: String },
}

/// Failure raised by a component during evaluate or commit.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{0}")]
pub struct ComponentError(pub String);

impl ComponentError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

/// Formatting hook for the optional transfer trace.
pub trait TracePayload {
    /// CSV columns appended after `cycle,link,channel`.
    fn trace_header() -> &'static str;
    fn trace_fields(&self) -> String;
}

/// A clocked hardware block.
pub trait Component<T>: Any {
    fn name(&self) -> String;

    /// Seeds per-instance randomness; called once before cycle 0.
    fn start(&mut self, _seed: u64) {}

    fn begin_cycle(&mut self, _cycle: Cycle) -> Result<(), ComponentError> {
        Ok(())
    }

    /// Drive outputs and readies. May be called more than once per cycle for
    /// combinational components and must then be a pure function of the
    /// registered state and the current input signals.
    fn evaluate(&mut self, cycle: Cycle, wires: &mut Wires<T>) -> Result<(), ComponentError>;

    fn commit(&mut self, cycle: Cycle, wires: &mut Wires<T>) -> Result<(), ComponentError>;

    /// True if some ready output depends combinationally on an input valid.
    fn is_combinational(&self) -> bool {
        false
    }

    fn is_idle(&self) -> bool;

    fn as_any(&self) -> &dyn Any;
}

struct Wire<T> {
    name: String,
    tag: String,
    producer: Option<ComponentId>,
    consumer: Option<ComponentId>,
    valid: Option<T>,
    ready: bool,
    fired: bool,
    taken: bool,
    stalled: Option<T>,
    sent: u64,
    received: u64,
}

/// Signal board shared by all components of one simulation instance.
pub struct Wires<T> {
    wires: Vec<Wire<T>>,
    /// Links whose signals changed since the last settle pass.
    changed: Vec<usize>,
}

impl<T: Clone + PartialEq> Wires<T> {
    fn new() -> Self {
        Self { wires: Vec::new(), changed: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.wires.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wires.is_empty()
    }

    /// Assert `valid` with `payload`, or deassert with `None`.
    pub fn drive(&mut self, link: LinkId, payload: Option<T>) {
        let w = &mut self.wires[link.0];
        if w.valid != payload {
            w.valid = payload;
            self.changed.push(link.0);
        }
    }

    pub fn set_ready(&mut self, link: LinkId, ready: bool) {
        let w = &mut self.wires[link.0];
        if w.ready != ready {
            w.ready = ready;
            self.changed.push(link.0);
        }
    }

    pub fn peek(&self, link: LinkId) -> Option<&T> {
        self.wires[link.0].valid.as_ref()
    }

    pub fn is_ready(&self, link: LinkId) -> bool {
        self.wires[link.0].ready
    }

    pub fn handshake(&self, link: LinkId) -> Handshake {
        let w = &self.wires[link.0];
        Handshake { valid: w.valid.is_some(), ready: w.ready }
    }

    /// Whether the link transferred this cycle. Only meaningful in commit.
    pub fn fired(&self, link: LinkId) -> bool {
        self.wires[link.0].fired
    }

    /// Consumer side of a transfer. Returns the payload exactly once.
    pub fn take(&mut self, link: LinkId) -> Option<T> {
        let w = &mut self.wires[link.0];
        if !w.fired || w.taken {
            return None;
        }
        w.taken = true;
        w.received += 1;
        w.valid.clone()
    }

    pub fn name(&self, link: LinkId) -> &str {
        &self.wires[link.0].name
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkStats {
    pub name: String,
    pub tag: String,
    pub sent: u64,
    pub received: u64,
}

/// Outcome of [`Kernel::run`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KernelReport {
    pub cycles: u64,
    pub transfers: u64,
    pub drained: bool,
    pub links: Vec<LinkStats>,
    /// Hash over every (cycle, link, payload) transfer, in order.
    pub trace_digest: u64,
    /// CSV lines, only filled when `record_trace` is set.
    pub trace: Vec<String>,
}

impl KernelReport {
    pub fn trace_csv(&self, payload_header: &str) -> String {
        let mut out = format!("cycle,link,channel,{payload_header}\n");
        for line in &self.trace {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

pub struct Kernel<T> {
    components: Vec<Box<dyn Component<T>>>,
    wires: Wires<T>,
    started: bool,
}

impl<T> Default for Kernel<T>
where
    T: Clone + PartialEq + Hash + Debug + TracePayload + 'static,
{
    fn default() -> Self {
        Self::new()
    }
}

impl<T> Kernel<T>
where
    T: Clone + PartialEq + Hash + Debug + TracePayload + 'static,
{
    pub fn new() -> Self {
        Self { components: Vec::new(), wires: Wires::new(), started: false }
    }

    /// Add a component; it takes part in every subsequent cycle.
    pub fn register(&mut self, component: Box<dyn Component<T>>) -> Result<ComponentId, KernelError> {
        if self.started {
            return Err(KernelError::RegisteredAfterStart);
        }
        self.components.push(component);
        Ok(ComponentId(self.components.len() - 1))
    }

    /// Create a point-to-point link. `tag` labels the trace (channel name).
    pub fn add_link(&mut self, name: impl Into<String>, tag: impl Into<String>) -> Result<LinkId, KernelError> {
        if self.started {
            return Err(KernelError::RegisteredAfterStart);
        }
        self.wires.wires.push(Wire {
            name: name.into(),
            tag: tag.into(),
            producer: None,
            consumer: None,
            valid: None,
            ready: false,
            fired: false,
            taken: false,
            stalled: None,
            sent: 0,
            received: 0,
        });
        Ok(LinkId(self.wires.wires.len() - 1))
    }

    /// Record which components sit on either end of a link. Used for the
    /// wiring-completeness check and for naming loops.
    pub fn connect(&mut self, link: LinkId, producer: ComponentId, consumer: ComponentId) {
        let w = &mut self.wires.wires[link.0];
        w.producer = Some(producer);
        w.consumer = Some(consumer);
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn num_links(&self) -> usize {
        self.wires.len()
    }

    pub fn component(&self, id: ComponentId) -> &dyn Component<T> {
        self.components[id.0].as_ref()
    }

    pub fn downcast<C: 'static>(&self, id: ComponentId) -> Option<&C> {
        self.components[id.0].as_any().downcast_ref::<C>()
    }

    pub fn link_name(&self, link: LinkId) -> &str {
        self.wires.name(link)
    }

    /// Every link must have a producer and a consumer.
    pub fn check_wiring(&self) -> Result<(), KernelError> {
        for w in &self.wires.wires {
            if w.producer.is_none() {
                return Err(KernelError::Unconnected { link: w.name.clone(), missing: "producer" });
            }
            if w.consumer.is_none() {
                return Err(KernelError::Unconnected { link: w.name.clone(), missing: "consumer" });
            }
        }
        Ok(())
    }

    pub fn run(&mut self, cfg: &SimConfig) -> Result<KernelReport, KernelError> {
        if cfg.max_cycles == 0 {
            return Err(KernelError::Config("max_cycles must be positive".into()));
        }
        self.check_wiring()?;
        self.started = true;

        let mut report = KernelReport {
            cycles: 0,
            transfers: 0,
            drained: false,
            links: Vec::new(),
            trace_digest: 0,
            trace: Vec::new(),
        };
        if self.components.is_empty() {
            report.drained = true;
            return Ok(report);
        }

        for (i, c) in self.components.iter_mut().enumerate() {
            c.start(mix_seed(cfg.seed, i as u64));
        }

        let comb: Vec<usize> =
            (0..self.components.len()).filter(|&i| self.components[i].is_combinational()).collect();
        let mut digest = DefaultHasher::new();
        let mut quiet_for = 0u64;
        let mut cycle: Cycle = 0;

        while cycle < cfg.max_cycles {
            for w in &mut self.wires.wires {
                w.valid = None;
                w.ready = false;
                w.fired = false;
                w.taken = false;
            }
            self.wires.changed.clear();
            for c in &mut self.components {
                c.begin_cycle(cycle).map_err(|e| component_err(cycle, c.as_ref(), e))?;
            }
            for c in self.components.iter_mut().filter(|c| !c.is_combinational()) {
                c.evaluate(cycle, &mut self.wires).map_err(|e| component_err(cycle, c.as_ref(), e))?;
            }
            self.settle(cycle, &comb)?;

            let mut fired_any = false;
            for (idx, w) in self.wires.wires.iter_mut().enumerate() {
                w.fired = w.valid.is_some() && w.ready;
                if cfg.debug_checks {
                    if let Some(prev) = w.stalled.take() {
                        if w.valid.as_ref() != Some(&prev) {
                            return Err(KernelError::Unstable { cycle, link: w.name.clone() });
                        }
                    }
                    if !w.fired {
                        w.stalled = w.valid.clone();
                    }
                }
                if w.fired {
                    fired_any = true;
                    w.sent += 1;
                    report.transfers += 1;
                    let payload = w.valid.as_ref().expect("fired implies valid");
                    (cycle, idx).hash(&mut digest);
                    payload.hash(&mut digest);
                    if cfg.record_trace {
                        report.trace.push(format!("{cycle},{idx},{},{}", w.tag, payload.trace_fields()));
                    }
                }
            }

            for c in &mut self.components {
                c.commit(cycle, &mut self.wires).map_err(|e| component_err(cycle, c.as_ref(), e))?;
            }
            for w in &self.wires.wires {
                if w.fired && !w.taken {
                    return Err(KernelError::Conservation { cycle, link: w.name.clone() });
                }
            }

            cycle += 1;
            quiet_for = if fired_any { 0 } else { quiet_for + 1 };
            let idle = self.components.iter().all(|c| c.is_idle());
            if cfg.stop_when_idle && idle {
                report.drained = true;
                break;
            }
            if let Some(limit) = cfg.progress_watchdog {
                if !idle && quiet_for >= limit {
                    let busy = self.components.iter().filter(|c| !c.is_idle()).map(|c| c.name()).collect();
                    return Err(KernelError::NoProgress { cycle, idle_for: quiet_for, busy });
                }
            }
        }
        if !report.drained {
            report.drained = self.components.iter().all(|c| c.is_idle());
        }

        report.cycles = cycle;
        report.trace_digest = digest.finish();
        report.links = self
            .wires
            .wires
            .iter()
            .map(|w| LinkStats { name: w.name.clone(), tag: w.tag.clone(), sent: w.sent, received: w.received })
            .collect();
        Ok(report)
    }

    /// Re-evaluate combinational components until their signals are stable.
    /// Any acyclic dependency chain settles within `comb.len() + 1` passes.
    fn settle(&mut self, cycle: Cycle, comb: &[usize]) -> Result<(), KernelError> {
        if comb.is_empty() {
            return Ok(());
        }
        for _ in 0..=comb.len() + 1 {
            self.wires.changed.clear();
            for &i in comb {
                let c = &mut self.components[i];
                c.evaluate(cycle, &mut self.wires).map_err(|e| component_err(cycle, c.as_ref(), e))?;
            }
            if self.wires.changed.is_empty() {
                return Ok(());
            }
        }
        let mut changed = std::mem::take(&mut self.wires.changed);
        changed.sort_unstable();
        changed.dedup();
        let links = changed.iter().map(|&i| self.wires.wires[i].name.clone()).collect();
        let components = comb.iter().map(|&i| self.components[i].name()).collect();
        Err(KernelError::CombinationalLoop { cycle, links, components })
    }
}

fn component_err<T: 'static>(cycle: Cycle, c: &dyn Component<T>, e: ComponentError) -> KernelError {
    KernelError::Component { cycle, component: c.name(), message: e.0 }
}

/// Derive a per-component seed so instances never share a stream.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
