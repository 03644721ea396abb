use std::collections::{BTreeMap, HashMap, VecDeque};

use proptest::prelude::*;

use nocsim::axi::{oracle_check_order, AxiTransaction, Delivery, DeliveryTrace, TxnKind};
use nocsim::check::{check_instance, Instance};
use nocsim::link::{AxiBus, Coord, TxnId};
use nocsim::ni::{ReorderUnit, RobAllocator};
use nocsim::router::{arbitrate, route, turn_allowed, ArbRequest, OutputArbiter, RouterConfig, EAST, LOCAL, NORTH, SOUTH, WEST};

fn xy_cfg(at: Coord, w: u32, h: u32) -> RouterConfig {
    RouterConfig { position: Some(at), grid: Some((w, h)), ..RouterConfig::default() }
}

fn step(c: Coord, port: usize) -> Coord {
    match port {
        EAST => Coord::new(c.x + 1, c.y),
        WEST => Coord::new(c.x - 1, c.y),
        NORTH => Coord::new(c.x, c.y + 1),
        SOUTH => Coord::new(c.x, c.y - 1),
        _ => unreachable!(),
    }
}

fn opposite(port: usize) -> usize {
    match port {
        EAST => WEST,
        WEST => EAST,
        NORTH => SOUTH,
        SOUTH => NORTH,
        p => p,
    }
}

proptest! {
    #[test]
    fn xy_walk_takes_manhattan_hops(w in 1u32..8, h in 1u32..8, sx in 0i32..8, sy in 0i32..8, dx in 0i32..8, dy in 0i32..8) {
        let src = Coord::new(sx % w as i32, sy % h as i32);
        let dst = Coord::new(dx % w as i32, dy % h as i32);
        let mut here = src;
        let mut input = LOCAL;
        let mut hops = 0;
        loop {
            let cfg = xy_cfg(here, w, h);
            let out = route(&cfg, dst).unwrap();
            if out == LOCAL {
                break;
            }
            prop_assert!(turn_allowed(&cfg, input, out, |p| p == LOCAL));
            here = step(here, out);
            input = opposite(out);
            hops += 1;
            prop_assert!(hops <= 16);
        }
        prop_assert!(here == src || turn_allowed(&xy_cfg(here, w, h), input, LOCAL, |p| p == LOCAL));
        prop_assert_eq!(here, dst);
        prop_assert_eq!(hops, src.manhattan(dst));
    }

    #[test]
    fn boundary_endpoints_are_reached(w in 1u32..6, h in 1u32..6, sx in 0i32..6, sy in 0i32..6, edge in 0usize..4, pos in 0u32..6) {
        let src = Coord::new(sx % w as i32, sy % h as i32);
        let dst = match edge {
            0 => Coord::new((pos % w) as i32, h as i32),
            1 => Coord::new((pos % w) as i32, -1),
            2 => Coord::new(w as i32, (pos % h) as i32),
            _ => Coord::new(-1, (pos % h) as i32),
        };
        let mut here = src;
        let mut input = LOCAL;
        for _ in 0..20 {
            let cfg = xy_cfg(here, w, h);
            let out = route(&cfg, dst).unwrap();
            let next = step(here, out);
            // the edge port towards the memory is terminal
            prop_assert!(turn_allowed(&cfg, input, out, |p| p == LOCAL || (p == out && next == dst)));
            if next == dst {
                prop_assert_eq!(src.manhattan(dst), src.manhattan(here) + 1);
                return Ok(());
            }
            here = next;
            input = opposite(out);
        }
        prop_assert!(false, "no arrival");
    }

    #[test]
    fn single_flit_round_robin_is_fair(n in 2usize..6, rounds in 1usize..6) {
        // every input always asks for output 0 with one-flit packets
        let mut arbs = vec![OutputArbiter::new()];
        let reqs = vec![Some(ArbRequest { output: 0, last: true }); n];
        let mut grants = vec![0usize; n];
        for _ in 0..n * rounds {
            let g = arbitrate(&reqs, &mut arbs);
            grants[g[0].unwrap()] += 1;
        }
        prop_assert!(grants.iter().all(|&c| c == rounds));
    }

    #[test]
    fn wormhole_lock_holds_until_last(n in 2usize..5, len in 1usize..6) {
        let mut arbs = vec![OutputArbiter::new()];
        let mut left = vec![len; n];
        let mut order = Vec::new();
        while left.iter().any(|&l| l > 0) {
            let reqs: Vec<_> = left.iter().map(|&l| (l > 0).then_some(ArbRequest { output: 0, last: l == 1 })).collect();
            let g = arbitrate(&reqs, &mut arbs)[0].unwrap();
            left[g] -= 1;
            order.push(g);
        }
        // each packet is a contiguous run
        for chunk in order.chunks(len) {
            prop_assert!(chunk.iter().all(|&i| i == chunk[0]));
        }
    }
}

/// Bitmap first-fit, the obvious model of the allocator.
struct BitmapModel {
    used: Vec<bool>,
    live: BTreeMap<u32, u32>,
}

impl BitmapModel {
    fn allocate(&mut self, n: u32) -> Option<u32> {
        let n = n as usize;
        let start = (0..=self.used.len().checked_sub(n)?).find(|&s| self.used[s..s + n].iter().all(|u| !u))?;
        self.used[start..start + n].iter_mut().for_each(|u| *u = true);
        self.live.insert(start as u32, n as u32);
        Some(start as u32)
    }

    fn free(&mut self, start: u32) {
        let n = self.live.remove(&start).unwrap();
        self.used[start as usize..(start + n) as usize].iter_mut().for_each(|u| *u = false);
    }
}

proptest! {
    #[test]
    fn allocator_matches_first_fit_model(slots in 1u32..64, ops in prop::collection::vec((any::<bool>(), 1u32..20, any::<prop::sample::Index>()), 1..200)) {
        let mut rob = RobAllocator::new(slots * 8, 8).unwrap();
        let mut model = BitmapModel { used: vec![false; slots as usize], live: BTreeMap::new() };
        for (alloc, n, pick) in ops {
            if alloc || model.live.is_empty() {
                prop_assert_eq!(rob.allocate(n), model.allocate(n));
            } else {
                let keys: Vec<u32> = model.live.keys().copied().collect();
                let k = keys[pick.index(keys.len())];
                prop_assert_eq!(rob.free(k).unwrap(), model.live[&k]);
                model.free(k);
            }
            let used = model.used.iter().filter(|&&u| u).count() as u32;
            prop_assert_eq!(rob.used_slots(), used);
            prop_assert_eq!(rob.free_bytes(), (slots - used) * 8);
            prop_assert!(rob.consistent());
        }
        for k in model.live.keys().copied().collect::<Vec<_>>() {
            rob.free(k).unwrap();
        }
        prop_assert_eq!(rob.free_bytes(), rob.capacity_bytes());
    }

    #[test]
    fn oracle_accepts_per_key_order_and_rejects_swaps(
        ids in prop::collection::vec(0u16..3, 2..30),
        interleave in prop::collection::vec(any::<prop::sample::Index>(), 30),
    ) {
        let txns: Vec<AxiTransaction> = ids.iter().enumerate().map(|(i, &a)| AxiTransaction {
            id: TxnId(i as u64),
            initiator: Coord::new(0, 0),
            axi_id: a,
            kind: TxnKind::Read,
            bus: AxiBus::Narrow,
            dst: Coord::new(1, 0),
            burst_len: 1,
            issue_cycle: i as u64,
        }).collect();
        // any merge of the per-ID queues is legal
        let mut queues: BTreeMap<u16, VecDeque<&AxiTransaction>> = BTreeMap::new();
        for t in &txns {
            queues.entry(t.axi_id).or_default().push_back(t);
        }
        let mut trace = DeliveryTrace::default();
        let mut i = 0;
        while queues.values().any(|q| !q.is_empty()) {
            let live: Vec<u16> = queues.iter().filter(|(_, q)| !q.is_empty()).map(|(&k, _)| k).collect();
            let k = live[interleave[i % interleave.len()].index(live.len())];
            let t = queues.get_mut(&k).unwrap().pop_front().unwrap();
            trace.push(Delivery { txn: t.id, key: t.order_key(), cycle: i as u64 });
            i += 1;
        }
        prop_assert!(oracle_check_order(&txns, &trace).is_ok());

        // swapping the first same-ID pair must be caught
        let d = &trace.deliveries;
        let pair = (0..d.len()).flat_map(|a| (a + 1..d.len()).map(move |b| (a, b))).find(|&(a, b)| d[a].key == d[b].key);
        if let Some((a, b)) = pair {
            let mut bad = trace.clone();
            bad.deliveries.swap(a, b);
            prop_assert!(oracle_check_order(&txns, &bad).is_err());
        }
    }
}

#[derive(Clone, Debug)]
struct Issued {
    txn: TxnId,
    axi_id: u16,
    dst: u8,
    beats: u16,
}

fn issued_strategy() -> impl Strategy<Value = Vec<Issued>> {
    prop::collection::vec((0u16..3, 0u8..3, 1u16..5), 1..16).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (axi_id, dst, beats))| Issued { txn: TxnId(i as u64), axi_id, dst, beats })
            .collect()
    })
}

/// Feed the reorder unit with responses that are in order per destination
/// (each target serves its queue in FIFO order over a fixed path) but
/// arbitrarily interleaved across destinations. Every ID must come out in
/// issue order with its beats in sequence.
fn run_reorder(bypass: bool, txns: &[Issued], picks: &[prop::sample::Index], pops: &[bool]) -> Result<Vec<TxnId>, TestCaseError> {
    let mut unit = ReorderUnit::new(bypass, txns.len());
    let mut rob_of = HashMap::new();
    let mut next_rob = 0u32;
    let mut per_dst: BTreeMap<u8, VecDeque<(u32, u16, u16, bool)>> = BTreeMap::new();
    for t in txns {
        unit.issue(t.txn, t.axi_id, Coord::new(i32::from(t.dst), 0), next_rob, t.beats).unwrap();
        rob_of.insert(next_rob, t);
        for b in 0..t.beats {
            per_dst.entry(t.dst).or_default().push_back((next_rob, t.axi_id, b, b + 1 == t.beats));
        }
        next_rob += u32::from(t.beats);
    }
    let mut done = Vec::new();
    let mut beat_seen: HashMap<u32, u16> = HashMap::new();
    let mut cycle = 0u64;
    let mut i = 0usize;
    let total: usize = txns.iter().map(|t| t.beats as usize).sum();
    let mut popped = 0;
    while popped < total {
        cycle += 1;
        prop_assert!(cycle < 10_000, "stuck");
        let live: Vec<u8> = per_dst.iter().filter(|(_, q)| !q.is_empty()).map(|(&k, _)| k).collect();
        if !live.is_empty() {
            let d = live[picks[i % picks.len()].index(live.len())];
            let (rob, id, beat, last) = per_dst.get_mut(&d).unwrap().pop_front().unwrap();
            unit.on_response(rob, id, beat, last, cycle).map_err(|e| TestCaseError::fail(e.to_string()))?;
        }
        unit.release(cycle);
        if pops[i % pops.len()] || live.is_empty() {
            while let Some(b) = unit.pop(cycle).map_err(|e| TestCaseError::fail(e.to_string()))? {
                let seen = beat_seen.entry(b.rob_idx).or_insert(0);
                prop_assert_eq!(*seen, b.beat);
                *seen += 1;
                popped += 1;
                if b.last {
                    done.push(b.txn);
                }
            }
        }
        i += 1;
    }
    // per-ID completion order equals issue order
    for id in 0..3u16 {
        let want: Vec<TxnId> = txns.iter().filter(|t| t.axi_id == id).map(|t| t.txn).collect();
        let got: Vec<TxnId> = done.iter().copied().filter(|t| rob_of.values().any(|x| x.txn == *t && x.axi_id == id)).collect();
        prop_assert_eq!(want, got);
    }
    prop_assert!(unit.is_empty());
    Ok(done)
}

proptest! {
    #[test]
    fn reorder_unit_restores_per_id_order(
        txns in issued_strategy(),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 1..40),
        pops in prop::collection::vec(any::<bool>(), 1..10),
    ) {
        let with = run_reorder(true, &txns, &picks, &pops)?;
        let without = run_reorder(false, &txns, &picks, &pops)?;
        let per_id = |v: &[TxnId]| {
            let mut m: BTreeMap<u16, Vec<TxnId>> = BTreeMap::new();
            for t in v {
                let id = txns.iter().find(|x| x.txn == *t).unwrap().axi_id;
                m.entry(id).or_default().push(*t);
            }
            m
        };
        prop_assert_eq!(per_id(&with), per_id(&without));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_networks_respect_ordering(seed in any::<u64>()) {
        let summary = check_instance(&Instance::random(seed));
        prop_assert!(summary.failures.is_empty(), "{:?}", summary.failures);
    }
}
