//! DSR-lite source routing with avoid-list propagation, RREQ/RREP suppression
//! rules, malicious traffic rejection, and route maintenance.
//!
//! All rule evaluation is pure with respect to the caller-supplied faulty
//! list; the engine owns timing (jitter, MAC retries) and side effects.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{NodeId, Packet, PacketBody, SimTime, SourceRoute};

#[derive(Debug, Clone, Copy)]
pub struct RoutingParams {
    pub jitter_max_us: u64,
    pub retransmit_attempts: u32,
    pub cache_lifetime_us: u64,
    pub hop_limit: u8,
    pub send_buffer_timeout_us: u64,
    pub rreq_retry_initial_us: u64,
    pub rreq_retry_max_us: u64,
}

impl Default for RoutingParams {
    fn default() -> RoutingParams {
        RoutingParams {
            jitter_max_us: 10_000,
            retransmit_attempts: 3,
            cache_lifetime_us: 30_000_000,
            hop_limit: 16,
            send_buffer_timeout_us: 5_000_000,
            rreq_retry_initial_us: 500_000,
            rreq_retry_max_us: 8_000_000,
        }
    }
}

#[derive(Debug, Clone)]
struct CachedRoute {
    route: SourceRoute,
    learned: SimTime,
}

/// Per-destination cached routes with staleness eviction.
#[derive(Debug, Clone, Default)]
pub struct RouteCache {
    routes: BTreeMap<NodeId, Vec<CachedRoute>>,
}

impl RouteCache {
    pub fn insert(&mut self, route: SourceRoute, now: SimTime) {
        debug_assert!(route.is_valid());
        let dst = route.dst();
        let entry = self.routes.entry(dst).or_default();
        if let Some(existing) = entry.iter_mut().find(|c| c.route == route) {
            existing.learned = now;
        } else {
            entry.push(CachedRoute { route, learned: now });
        }
    }

    pub fn purge_stale(&mut self, now: SimTime, lifetime_us: u64) {
        for entry in self.routes.values_mut() {
            entry.retain(|c| now.since(c.learned) < lifetime_us);
        }
        self.routes.retain(|_, v| !v.is_empty());
    }

    pub fn purge_link(&mut self, a: NodeId, b: NodeId) {
        for entry in self.routes.values_mut() {
            entry.retain(|c| !c.route.uses_link(a, b));
        }
        self.routes.retain(|_, v| !v.is_empty());
    }

    /// Shortest cached route to dst whose next hop is not faulty; ties broken
    /// by most recently learned, then lexicographic hop order. The destination
    /// itself is exempt from the next-hop check: it terminates the route, so
    /// its forwarding behavior is irrelevant.
    pub fn select(
        &self,
        dst: NodeId,
        faulty: &BTreeSet<NodeId>,
        now: SimTime,
        lifetime_us: u64,
    ) -> Option<SourceRoute> {
        let candidates = self.routes.get(&dst)?;
        candidates
            .iter()
            .filter(|c| now.since(c.learned) < lifetime_us)
            .filter(|c| c.route.hops[1] == dst || !faulty.contains(&c.route.hops[1]))
            .min_by(|a, b| {
                a.route
                    .len()
                    .cmp(&b.route.len())
                    .then(b.learned.cmp(&a.learned))
                    .then(a.route.hops.cmp(&b.route.hops))
            })
            .map(|c| c.route.clone())
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuppressReason {
    Duplicate,
    AvoidIntersection,
    SelfAvoided,
    AlreadyInRecord,
    Malformed,
    HopLimit,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RreqAction {
    Suppress(SuppressReason),
    Rebroadcast(Packet),
    Reply(Packet),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RrepAction {
    AcceptRoute(SourceRoute),
    Relay(Packet),
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataAction {
    Deliver,
    Forward { packet: Packet, next_hop: NodeId },
    RejectMalicious,
    BadIndex,
}

#[derive(Debug, Clone)]
pub struct PendingData {
    pub packet: Packet,
    pub enqueued: SimTime,
}

#[derive(Debug, Clone)]
struct Discovery {
    backoff_us: u64,
}

/// Per-node DSR state.
#[derive(Debug, Clone)]
pub struct DsrState {
    pub params: RoutingParams,
    self_id: NodeId,
    pub cache: RouteCache,
    seen: BTreeSet<(NodeId, u32)>,
    next_seq: u32,
    send_buffer: BTreeMap<NodeId, Vec<PendingData>>,
    discovery: BTreeMap<NodeId, Discovery>,
}

/// Append a faulty list to an avoid list. The originator is never added: all
/// route records contain it, so including it would poison every copy.
pub fn extend_avoid_list(
    avoid: &BTreeSet<NodeId>,
    faulty: &BTreeSet<NodeId>,
    originator: NodeId,
) -> BTreeSet<NodeId> {
    let mut out = avoid.clone();
    for n in faulty {
        if *n != originator {
            out.insert(*n);
        }
    }
    out
}

/// Pure RREQ rule pipeline for one received copy, independent of the
/// duplicate-suppression table (which `handle_rreq` layers on top).
pub fn evaluate_rreq(self_id: NodeId, faulty: &BTreeSet<NodeId>, p: &Packet) -> RreqAction {
    let PacketBody::Rreq {
        route_record,
        avoid_list,
        hops_left,
    } = &p.body
    else {
        return RreqAction::Suppress(SuppressReason::Malformed);
    };
    if route_record.is_empty() || route_record[0] != p.src || has_duplicates(route_record) {
        return RreqAction::Suppress(SuppressReason::Malformed);
    }
    if route_record.contains(&self_id) {
        return RreqAction::Suppress(SuppressReason::AlreadyInRecord);
    }
    if route_record.iter().any(|h| avoid_list.contains(h)) {
        return RreqAction::Suppress(SuppressReason::AvoidIntersection);
    }
    if self_id == p.dst {
        let mut hops = route_record.clone();
        hops.push(self_id);
        let route = SourceRoute::new(hops);
        let cursor = route.len() - 1;
        return RreqAction::Reply(Packet {
            src: self_id,
            dst: p.src,
            seq: p.seq,
            body: PacketBody::Rrep { route, cursor },
        });
    }
    if avoid_list.contains(&self_id) {
        return RreqAction::Suppress(SuppressReason::SelfAvoided);
    }
    if *hops_left == 0 {
        return RreqAction::Suppress(SuppressReason::HopLimit);
    }
    let mut record = route_record.clone();
    record.push(self_id);
    RreqAction::Rebroadcast(Packet {
        src: p.src,
        dst: p.dst,
        seq: p.seq,
        body: PacketBody::Rreq {
            route_record: record,
            avoid_list: extend_avoid_list(avoid_list, faulty, p.src),
            hops_left: hops_left - 1,
        },
    })
}

/// The RREP faulty-list check shared by relays and the originator. Only
/// interior hops count: the endpoints terminate the route rather than forward
/// along it, and blocking them would make a blacklisted node permanently
/// unreachable as a destination.
pub fn rrep_route_acceptable(route: &SourceRoute, faulty: &BTreeSet<NodeId>) -> bool {
    let interior = &route.hops[1..route.hops.len() - 1];
    !interior.iter().any(|h| faulty.contains(h))
}

fn has_duplicates(hops: &[NodeId]) -> bool {
    let mut seen = BTreeSet::new();
    !hops.iter().all(|h| seen.insert(*h))
}

impl DsrState {
    pub fn new(self_id: NodeId, params: RoutingParams) -> DsrState {
        DsrState {
            params,
            self_id,
            cache: RouteCache::default(),
            seen: BTreeSet::new(),
            next_seq: 0,
            send_buffer: BTreeMap::new(),
            discovery: BTreeMap::new(),
        }
    }

    pub fn fresh_seq(&mut self) -> u32 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    /// Build a route request for dst carrying this node's faulty list.
    pub fn originate_rreq(&mut self, dst: NodeId, faulty: &BTreeSet<NodeId>) -> Packet {
        let seq = self.fresh_seq();
        self.seen.insert((self.self_id, seq));
        Packet {
            src: self.self_id,
            dst,
            seq,
            body: PacketBody::Rreq {
                route_record: vec![self.self_id],
                avoid_list: extend_avoid_list(&BTreeSet::new(), faulty, self.self_id),
                hops_left: self.params.hop_limit,
            },
        }
    }

    /// Full RREQ handling: duplicate suppression wrapped around the rule
    /// pipeline. A copy only counts as processed when the node acts on it
    /// (rebroadcast or reply); suppressed copies do not block later clean
    /// copies of the same request. The destination bypasses duplicate
    /// suppression entirely so that it can answer every copy it receives.
    pub fn handle_rreq(&mut self, p: &Packet, faulty: &BTreeSet<NodeId>) -> RreqAction {
        let key = (p.src, p.seq);
        let at_destination = p.dst == self.self_id;
        if !at_destination && self.seen.contains(&key) {
            return RreqAction::Suppress(SuppressReason::Duplicate);
        }
        let action = evaluate_rreq(self.self_id, faulty, p);
        if matches!(action, RreqAction::Rebroadcast(_)) {
            self.seen.insert(key);
        }
        action
    }

    /// RREP handling at the cursor's node: drop on faulty intersection,
    /// accept into the cache at the originator, relay otherwise.
    pub fn handle_rrep(&mut self, p: &Packet, faulty: &BTreeSet<NodeId>, now: SimTime) -> RrepAction {
        let PacketBody::Rrep { route, cursor } = &p.body else {
            return RrepAction::Drop;
        };
        if *cursor >= route.len() || route.hops[*cursor] != self.self_id || !route.is_valid() {
            return RrepAction::Drop;
        }
        if !rrep_route_acceptable(route, faulty) {
            return RrepAction::Drop;
        }
        if *cursor == 0 {
            debug_assert!(rrep_route_acceptable(route, faulty));
            self.cache.insert(route.clone(), now);
            return RrepAction::AcceptRoute(route.clone());
        }
        let mut fwd = p.clone();
        if let PacketBody::Rrep { cursor, .. } = &mut fwd.body {
            *cursor -= 1;
        }
        RrepAction::Relay(fwd)
    }

    pub fn select_route(&mut self, dst: NodeId, faulty: &BTreeSet<NodeId>, now: SimTime) -> Option<SourceRoute> {
        self.cache.purge_stale(now, self.params.cache_lifetime_us);
        self.cache.select(dst, faulty, now, self.params.cache_lifetime_us)
    }

    /// Forwarding decision for a DATA packet currently held by this node.
    /// `prev_hop` is None for self-originated packets, which are never
    /// rejected by their own source.
    pub fn forward_data(
        &self,
        p: &Packet,
        prev_hop: Option<NodeId>,
        faulty: &BTreeSet<NodeId>,
    ) -> DataAction {
        let PacketBody::Data { route, index, .. } = &p.body else {
            return DataAction::BadIndex;
        };
        if *index >= route.len() || route.hops[*index] != self.self_id {
            return DataAction::BadIndex;
        }
        if *index == route.len() - 1 {
            return DataAction::Deliver;
        }
        if let Some(prev) = prev_hop {
            if faulty.contains(&prev) {
                return DataAction::RejectMalicious;
            }
        }
        let next_hop = route.hops[*index + 1];
        let mut fwd = p.clone();
        if let PacketBody::Data { index, .. } = &mut fwd.body {
            *index += 1;
        }
        DataAction::Forward { packet: fwd, next_hop }
    }

    /// Route maintenance after the MAC gives up on a next hop: purge local
    /// routes over the dead link and build the RERR for the traffic source
    /// (None when this node originated the packet; the local purge suffices).
    pub fn handle_broken_link(&mut self, p: &Packet, failed_next: NodeId) -> Option<Packet> {
        self.cache.purge_link(self.self_id, failed_next);
        let PacketBody::Data { route, index, .. } = &p.body else {
            return None;
        };
        if *index == 0 || route.hops[*index] != self.self_id {
            return None;
        }
        let mut path: Vec<NodeId> = route.hops[..=*index].to_vec();
        path.reverse();
        let seq = self.fresh_seq();
        Some(Packet {
            src: self.self_id,
            dst: route.src(),
            seq,
            body: PacketBody::Rerr {
                broken_link: (self.self_id, failed_next),
                alarm: None,
                path,
                cursor: 0,
            },
        })
    }

    /// Process an RERR addressed to this node: purge and relay onward when
    /// the reverse path continues. The incoming cursor names the previous
    /// holder, so this node sits at cursor + 1 and relays toward cursor + 2.
    pub fn handle_rerr(&mut self, p: &Packet) -> Option<Packet> {
        let PacketBody::Rerr {
            broken_link,
            path,
            cursor,
            ..
        } = &p.body
        else {
            return None;
        };
        self.cache.purge_link(broken_link.0, broken_link.1);
        if cursor + 2 >= path.len() {
            return None;
        }
        let mut fwd = p.clone();
        if let PacketBody::Rerr { cursor, .. } = &mut fwd.body {
            *cursor += 1;
        }
        Some(fwd)
    }

    // --- send buffer and discovery bookkeeping ---

    pub fn buffer_packet(&mut self, dst: NodeId, packet: Packet, now: SimTime) {
        self.send_buffer
            .entry(dst)
            .or_default()
            .push(PendingData { packet, enqueued: now });
    }

    pub fn take_buffered(&mut self, dst: NodeId) -> Vec<Packet> {
        self.send_buffer
            .remove(&dst)
            .map(|v| v.into_iter().map(|p| p.packet).collect())
            .unwrap_or_default()
    }

    pub fn buffered_count(&self, dst: NodeId) -> usize {
        self.send_buffer.get(&dst).map_or(0, Vec::len)
    }

    /// Drop buffered packets older than the send-buffer timeout.
    pub fn expire_buffered(&mut self, now: SimTime) -> Vec<Packet> {
        let timeout = self.params.send_buffer_timeout_us;
        let mut dropped = Vec::new();
        for entry in self.send_buffer.values_mut() {
            entry.retain(|p| {
                if now.since(p.enqueued) >= timeout {
                    dropped.push(p.packet.clone());
                    false
                } else {
                    true
                }
            });
        }
        self.send_buffer.retain(|_, v| !v.is_empty());
        dropped
    }

    /// Start tracking a discovery for dst. Returns the retry delay to
    /// schedule, or None when a discovery is already outstanding.
    pub fn begin_discovery(&mut self, dst: NodeId) -> Option<u64> {
        if self.discovery.contains_key(&dst) {
            return None;
        }
        let backoff = self.params.rreq_retry_initial_us;
        self.discovery.insert(dst, Discovery { backoff_us: backoff });
        Some(backoff)
    }

    /// Escalate the backoff for a retried discovery; returns the next delay.
    pub fn escalate_discovery(&mut self, dst: NodeId) -> u64 {
        let max = self.params.rreq_retry_max_us;
        let d = self
            .discovery
            .entry(dst)
            .or_insert(Discovery { backoff_us: self.params.rreq_retry_initial_us });
        d.backoff_us = (d.backoff_us * 2).min(max);
        d.backoff_us
    }

    pub fn end_discovery(&mut self, dst: NodeId) {
        self.discovery.remove(&dst);
    }

    pub fn discovery_pending(&self, dst: NodeId) -> bool {
        self.discovery.contains_key(&dst)
    }
}

/// Exhaustive, timing-free flood of one route discovery over a static
/// topology: every copy is processed at every node with duplicate
/// suppression disabled, so the accepted set depends only on the rule
/// pipeline. Used to check rule equivalence against the independent
/// brute-force enumerator in `oracle`.
pub fn flood_accepted_routes(
    num_nodes: usize,
    edges: &BTreeSet<(u16, u16)>,
    faulty: &[BTreeSet<NodeId>],
    src: NodeId,
    dst: NodeId,
    hop_limit: u8,
) -> BTreeSet<Vec<NodeId>> {
    assert_eq!(faulty.len(), num_nodes);
    let neighbors = |n: NodeId| -> Vec<NodeId> {
        (0..num_nodes as u16)
            .map(NodeId)
            .filter(|m| {
                let (a, b) = (n.0.min(m.0), n.0.max(m.0));
                *m != n && edges.contains(&(a, b))
            })
            .collect()
    };

    let seed = Packet {
        src,
        dst,
        seq: 0,
        body: PacketBody::Rreq {
            route_record: vec![src],
            avoid_list: extend_avoid_list(&BTreeSet::new(), &faulty[src.0 as usize], src),
            hops_left: hop_limit,
        },
    };
    let mut accepted = BTreeSet::new();
    let mut frontier = vec![(src, seed)];
    while let Some((transmitter, packet)) = frontier.pop() {
        for receiver in neighbors(transmitter) {
            match evaluate_rreq(receiver, &faulty[receiver.0 as usize], &packet) {
                RreqAction::Rebroadcast(p) => frontier.push((receiver, p)),
                RreqAction::Reply(p) => {
                    let PacketBody::Rrep { route, .. } = &p.body else {
                        continue;
                    };
                    // Walk the reply back: every interior relay applies the
                    // faulty check, then the originator does.
                    let relays_pass = route.hops[1..route.len() - 1]
                        .iter()
                        .all(|r| rrep_route_acceptable(route, &faulty[r.0 as usize]));
                    let origin_pass = rrep_route_acceptable(route, &faulty[src.0 as usize]);
                    if relays_pass && origin_pass {
                        accepted.insert(route.hops.clone());
                    }
                }
                RreqAction::Suppress(_) => {}
            }
        }
    }
    accepted
}
