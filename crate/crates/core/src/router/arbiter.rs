//! Per-output round-robin arbitration with wormhole locking.

/// Arbitration state of one output.
///
/// Three pieces of state: the round-robin pointer, the wormhole owner and a
/// pending offer. An offer that was presented but not accepted is repeated
/// unchanged next cycle, which keeps `valid` and its payload stable.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OutputArbiter {
    next: usize,
    lock: Option<usize>,
    held: Option<usize>,
}

/// What an input asks of the switch this cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArbRequest {
    pub output: usize,
    pub last: bool,
}

impl OutputArbiter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pick the input to serve among `0..inputs` for which `wants` holds.
    pub fn choose(&self, inputs: usize, mut wants: impl FnMut(usize) -> bool) -> Option<usize> {
        if let Some(h) = self.held {
            return Some(h);
        }
        if let Some(owner) = self.lock {
            return wants(owner).then_some(owner);
        }
        (0..inputs).map(|k| (self.next + k) % inputs).find(|&i| wants(i))
    }

    /// The chosen input transferred a flit.
    pub fn transferred(&mut self, input: usize, inputs: usize, last: bool) {
        self.held = None;
        self.lock = if last { None } else { Some(input) };
        self.next = (input + 1) % inputs;
    }

    /// The chosen input was offered downstream but not accepted.
    pub fn stalled(&mut self, input: usize) {
        self.held = Some(input);
    }

    pub fn locked_by(&self) -> Option<usize> {
        self.lock
    }
}

/// One arbitration round over all outputs, treating every grant as an
/// immediate transfer. `requests[i]` is what input `i` asks for.
pub fn arbitrate(requests: &[Option<ArbRequest>], arbiters: &mut [OutputArbiter]) -> Vec<Option<usize>> {
    let n = requests.len();
    let mut grants = vec![None; arbiters.len()];
    for (out, arb) in arbiters.iter_mut().enumerate() {
        let pick = arb.choose(n, |i| requests[i].is_some_and(|r| r.output == out));
        if let Some(i) = pick {
            let last = requests[i].is_none_or(|r| r.last);
            arb.transferred(i, n, last);
            grants[out] = Some(i);
        }
    }
    grants
}

#[cfg(test)]
mod tests {
    use super::*;

    const N: usize = 1;
    const E: usize = 2;
    const S: usize = 3;
    const W: usize = 4;

    fn req(output: usize, last: bool) -> Option<ArbRequest> {
        Some(ArbRequest { output, last })
    }

    #[test]
    fn single_requester_granted() {
        let mut arbs = vec![OutputArbiter::new(); 5];
        let mut reqs = vec![None; 5];
        reqs[N] = req(E, true);
        assert_eq!(arbitrate(&reqs, &mut arbs)[E], Some(N));
    }

    #[test]
    fn two_requesters_alternate() {
        let mut arbs = vec![OutputArbiter::new(); 5];
        let mut reqs = vec![None; 5];
        reqs[N] = req(E, true);
        reqs[S] = req(E, true);
        let seq: Vec<_> = (0..4).map(|_| arbitrate(&reqs, &mut arbs)[E].unwrap()).collect();
        assert_eq!(seq, vec![N, S, N, S]);
    }

    #[test]
    fn lock_excludes_others_until_last() {
        let mut arbs = vec![OutputArbiter::new(); 5];
        let mut reqs = vec![None; 5];
        reqs[W] = req(E, false);
        assert_eq!(arbitrate(&reqs, &mut arbs)[E], Some(W));
        assert_eq!(arbs[E].locked_by(), Some(W));

        reqs[N] = req(E, true);
        // W has a beat in flight upstream: nothing granted, N still waits
        reqs[W] = None;
        assert_eq!(arbitrate(&reqs, &mut arbs)[E], None);
        reqs[W] = req(E, false);
        assert_eq!(arbitrate(&reqs, &mut arbs)[E], Some(W));
        reqs[W] = req(E, true);
        assert_eq!(arbitrate(&reqs, &mut arbs)[E], Some(W));
        assert_eq!(arbs[E].locked_by(), None);
        reqs[W] = None;
        assert_eq!(arbitrate(&reqs, &mut arbs)[E], Some(N));
    }

    #[test]
    fn stalled_offer_is_repeated() {
        let mut a = OutputArbiter::new();
        assert_eq!(a.choose(5, |i| i == 3), Some(3));
        a.stalled(3);
        // a lower-numbered input showing up must not steal the held offer
        assert_eq!(a.choose(5, |i| i == 1 || i == 3), Some(3));
        a.transferred(3, 5, true);
        assert_eq!(a.choose(5, |i| i == 1 || i == 3), Some(1));
    }

    #[test]
    fn pointer_only_moves_on_grant() {
        let mut a = OutputArbiter::new();
        assert_eq!(a.choose(3, |_| false), None);
        assert_eq!(a.choose(3, |i| i == 0 || i == 2), Some(0));
        a.transferred(0, 3, true);
        assert_eq!(a.choose(3, |i| i == 0 || i == 2), Some(2));
    }
}
