//! Independent cross-checks for the two most subtle rule sets: the rating
//! discipline and route-discovery acceptance. Each oracle restates the rules
//! from scratch in a different shape (a flat fold, a simple-path enumerator)
//! so a bug in the production path cannot hide in its own mirror image.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{NodeId, ObservationEvent, Sign, SimTime};
use crate::ranker::{RankerParams, RouteRanker};
use crate::routing::flood_accepted_routes;

// --- rating replay ---

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatingOp {
    Observe { sign: Sign, at: SimTime },
    /// A reinstatement sweep, as the engine schedules them.
    Sweep { at: SimTime },
    /// A second-hand accusation adopted from a neighbor.
    Accuse { at: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatingState {
    pub rating: i32,
    pub faulty: bool,
    pub last_event: SimTime,
}

/// Literal fold of the rating rules for a single subject:
/// observations step the rating and saturate at the floor, a crossing
/// strictly below the threshold faults the subject, an accusation pins the
/// rating at the threshold, and a sweep reinstates at the threshold once the
/// subject has been quiet for the full timeout.
pub fn replay_rating(params: &RankerParams, ops: &[RatingOp]) -> Vec<RatingState> {
    let floor = params.floor_factor * params.faulty_threshold;
    let mut st = RatingState {
        rating: params.neutral,
        faulty: false,
        last_event: SimTime::ZERO,
    };
    let mut out = Vec::with_capacity(ops.len());
    for op in ops {
        match *op {
            RatingOp::Observe { sign, at } => {
                let step = match sign {
                    Sign::Positive => params.positive_step,
                    Sign::Negative => params.negative_step,
                };
                st.rating = (st.rating + step).max(floor);
                st.last_event = at;
                if st.rating < params.faulty_threshold {
                    st.faulty = true;
                }
            }
            RatingOp::Sweep { at } => {
                if st.faulty && at.since(st.last_event) >= params.faulty_timeout_us {
                    st.faulty = false;
                    st.rating = params.faulty_threshold;
                }
            }
            RatingOp::Accuse { at } => {
                st.rating = params.faulty_threshold;
                st.last_event = at;
                st.faulty = true;
            }
        }
        out.push(st);
    }
    out
}

/// Drive the same op sequence through the production ranker, observing the
/// subject's state after each op.
pub fn drive_ranker(params: &RankerParams, ops: &[RatingOp]) -> Vec<RatingState> {
    let observer = NodeId(0);
    let subject = NodeId(1);
    let mut ranker = RouteRanker::new(*params);
    let mut out = Vec::with_capacity(ops.len());
    for op in ops {
        match *op {
            RatingOp::Observe { sign, at } => {
                ranker.apply_event(&ObservationEvent { observer, subject, sign, time: at });
            }
            RatingOp::Sweep { at } => {
                ranker.second_chance_sweep(at);
            }
            RatingOp::Accuse { at } => {
                ranker.mark_faulty_external(subject, at);
            }
        }
        out.push(RatingState {
            rating: ranker.rating(subject),
            faulty: ranker.is_faulty(subject),
            last_event: ranker.last_event(subject).unwrap_or(SimTime::ZERO),
        });
    }
    out
}

// --- route discovery enumeration ---

/// Every route the discovery pipeline can accept on a static topology,
/// restated as a depth-first walk over simple paths. The avoid list grows
/// along the path exactly as relays would grow it; the return trip applies
/// each relay's own faulty view to the route's interior, then the
/// originator's.
pub fn enumerate_accepted_routes(
    num_nodes: usize,
    edges: &BTreeSet<(u16, u16)>,
    faulty: &[BTreeSet<NodeId>],
    src: NodeId,
    dst: NodeId,
    hop_limit: u8,
) -> BTreeSet<Vec<NodeId>> {
    assert_eq!(faulty.len(), num_nodes);
    let connected = |a: NodeId, b: NodeId| {
        let (lo, hi) = (a.0.min(b.0), a.0.max(b.0));
        a != b && edges.contains(&(lo, hi))
    };
    let minus_origin = |set: &BTreeSet<NodeId>| {
        let mut s = set.clone();
        s.remove(&src);
        s
    };

    let mut accepted = BTreeSet::new();
    // Stack entries: the path so far (ending at the current holder) and the
    // avoid list the next receiver would see.
    let mut stack = vec![(vec![src], minus_origin(&faulty[src.0 as usize]))];
    while let Some((path, avoid)) = stack.pop() {
        let holder = *path.last().unwrap();
        for next in (0..num_nodes as u16).map(NodeId) {
            if !connected(holder, next) || path.contains(&next) {
                continue;
            }
            if path.iter().any(|h| avoid.contains(h)) {
                continue;
            }
            if next == dst {
                // The destination ignores its own avoid-list entry and the
                // hop limit; it answers any clean record.
                let mut route = path.clone();
                route.push(dst);
                // Only interior hops are checked on the return trip: the
                // endpoints terminate the route rather than forward along it.
                let interior = &route[1..route.len() - 1];
                let round_trip_clean = interior.iter().all(|r| {
                    interior.iter().all(|h| !faulty[r.0 as usize].contains(h))
                }) && interior.iter().all(|h| !faulty[src.0 as usize].contains(h));
                if round_trip_clean {
                    accepted.insert(route);
                }
                continue;
            }
            if avoid.contains(&next) {
                continue;
            }
            // Interior relays: path holds `path.len() - 1` rebroadcasts so
            // far; one more must still be within the hop budget.
            if path.len() > hop_limit as usize {
                continue;
            }
            let mut grown = avoid.clone();
            grown.extend(minus_origin(&faulty[next.0 as usize]));
            let mut longer = path.clone();
            longer.push(next);
            stack.push((longer, grown));
        }
    }
    accepted
}

// --- randomized self-check ---

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelfCheckReport {
    pub rating_cases: usize,
    pub rating_mismatches: usize,
    pub route_cases: usize,
    pub route_mismatches: usize,
}

impl SelfCheckReport {
    pub fn all_match(&self) -> bool {
        self.rating_mismatches == 0 && self.route_mismatches == 0
    }
}

fn random_params(rng: &mut ChaCha8Rng) -> RankerParams {
    let thresholds = [-10, -20, -40, -80];
    RankerParams {
        neutral: 0,
        positive_step: rng.gen_range(1..=3),
        negative_step: -rng.gen_range(1..=4),
        faulty_threshold: thresholds[rng.gen_range(0..thresholds.len())],
        faulty_timeout_us: [1_000_000, 5_000_000, 30_000_000][rng.gen_range(0..3)],
        floor_factor: rng.gen_range(1..=5),
    }
}

fn random_ops(rng: &mut ChaCha8Rng) -> Vec<RatingOp> {
    let len = rng.gen_range(1..=60);
    let mut t = 0u64;
    (0..len)
        .map(|_| {
            t += rng.gen_range(1..5_000_000);
            let at = SimTime(t);
            match rng.gen_range(0..10) {
                // Negative-heavy mix so threshold crossings are common.
                0..=4 => RatingOp::Observe { sign: Sign::Negative, at },
                5..=6 => RatingOp::Observe { sign: Sign::Positive, at },
                7..=8 => RatingOp::Sweep { at },
                _ => RatingOp::Accuse { at },
            }
        })
        .collect()
}

fn random_topology(
    rng: &mut ChaCha8Rng,
) -> (usize, BTreeSet<(u16, u16)>, Vec<BTreeSet<NodeId>>, NodeId, NodeId, u8) {
    let n = rng.gen_range(2..=6usize);
    let mut edges = BTreeSet::new();
    for a in 0..n as u16 {
        for b in (a + 1)..n as u16 {
            if rng.gen_bool(0.5) {
                edges.insert((a, b));
            }
        }
    }
    let faulty: Vec<BTreeSet<NodeId>> = (0..n)
        .map(|_| {
            (0..n as u16)
                .filter(|_| rng.gen_bool(0.25))
                .map(NodeId)
                .collect()
        })
        .collect();
    let src = NodeId(rng.gen_range(0..n as u16));
    let mut dst = NodeId(rng.gen_range(0..n as u16 - 1));
    if dst.0 >= src.0 {
        dst.0 += 1;
    }
    let hop_limit = [1, 2, 3, 16][rng.gen_range(0..4)];
    (n, edges, faulty, src, dst, hop_limit)
}

pub fn run_self_check(rating_cases: usize, route_cases: usize, seed: u64) -> SelfCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rating_mismatches = 0;
    for _ in 0..rating_cases {
        let params = random_params(&mut rng);
        let ops = random_ops(&mut rng);
        if replay_rating(&params, &ops) != drive_ranker(&params, &ops) {
            rating_mismatches += 1;
        }
    }
    let mut route_mismatches = 0;
    for _ in 0..route_cases {
        let (n, edges, faulty, src, dst, hop_limit) = random_topology(&mut rng);
        let flood = flood_accepted_routes(n, &edges, &faulty, src, dst, hop_limit);
        let enumerated = enumerate_accepted_routes(n, &edges, &faulty, src, dst, hop_limit);
        if flood != enumerated {
            route_mismatches += 1;
        }
    }
    SelfCheckReport {
        rating_cases,
        rating_mismatches,
        route_cases,
        route_mismatches,
    }
}
