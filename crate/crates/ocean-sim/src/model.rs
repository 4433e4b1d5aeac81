//! Shared domain types: identities, time, routes, packets, observation events.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Node identity, stable for the lifetime of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u16);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Microseconds since simulation start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs_f64(s: f64) -> SimTime {
        SimTime((s * 1_000_000.0).round() as u64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1_000_000.0
    }

    pub fn plus(self, micros: u64) -> SimTime {
        SimTime(self.0 + micros)
    }

    /// Saturating distance in microseconds.
    pub fn since(self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

pub fn secs_to_micros(s: f64) -> u64 {
    (s * 1_000_000.0).round() as u64
}

/// Ordered hop list from source to destination, inclusive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceRoute {
    pub hops: Vec<NodeId>,
}

impl SourceRoute {
    pub fn new(hops: Vec<NodeId>) -> SourceRoute {
        SourceRoute { hops }
    }

    pub fn src(&self) -> NodeId {
        self.hops[0]
    }

    pub fn dst(&self) -> NodeId {
        *self.hops.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.hops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hops.is_empty()
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.hops.contains(&n)
    }

    /// Hop count (edges), one less than the node count.
    pub fn hop_count(&self) -> usize {
        self.hops.len().saturating_sub(1)
    }

    /// True when the route satisfies its structural invariants:
    /// at least two hops and no duplicates.
    pub fn is_valid(&self) -> bool {
        if self.hops.len() < 2 {
            return false;
        }
        let mut seen = BTreeSet::new();
        self.hops.iter().all(|h| seen.insert(*h))
    }

    /// True when the route contains the directed or reverse link (a, b)
    /// as consecutive hops.
    pub fn uses_link(&self, a: NodeId, b: NodeId) -> bool {
        self.hops
            .windows(2)
            .any(|w| (w[0] == a && w[1] == b) || (w[0] == b && w[1] == a))
    }
}

/// What a transmission carries. Sizes are modeled, not serialized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PacketBody {
    Rreq {
        route_record: Vec<NodeId>,
        avoid_list: BTreeSet<NodeId>,
        hops_left: u8,
    },
    Rrep {
        route: SourceRoute,
        /// Index into `route` of the node currently holding the reply as it
        /// travels destination -> source.
        cursor: usize,
    },
    Rerr {
        broken_link: (NodeId, NodeId),
        alarm: Option<NodeId>,
        /// Reverse delivery path (detector first, traffic source last).
        path: Vec<NodeId>,
        cursor: usize,
    },
    Data {
        route: SourceRoute,
        /// Position of the node currently holding the packet.
        index: usize,
        payload_bytes: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub src: NodeId,
    pub dst: NodeId,
    pub seq: u32,
    pub body: PacketBody,
}

impl Packet {
    pub fn is_data(&self) -> bool {
        matches!(self.body, PacketBody::Data { .. })
    }

    /// Modeled on-air size: header plus variant-specific payload.
    pub fn size_bytes(&self, header_bytes: u32) -> u32 {
        let body = match &self.body {
            PacketBody::Rreq {
                route_record,
                avoid_list,
                ..
            } => 4 * (route_record.len() + avoid_list.len()) as u32,
            PacketBody::Rrep { route, .. } => 4 * route.len() as u32,
            PacketBody::Rerr { path, alarm, .. } => {
                8 + 4 * path.len() as u32 + if alarm.is_some() { 4 } else { 0 }
            }
            PacketBody::Data { payload_bytes, .. } => *payload_bytes,
        };
        header_bytes + body
    }
}

pub type Digest = u64;

/// Digest over the identifying fields of a DATA packet. The hop cursor is
/// excluded: it legitimately changes at every hop while the packet identity
/// does not.
///
/// Panics on non-DATA packets; that is a caller bug.
pub fn packet_digest(p: &Packet) -> Digest {
    let PacketBody::Data {
        route,
        payload_bytes,
        ..
    } = &p.body
    else {
        panic!("packet_digest: not a DATA packet");
    };
    let mut h = Fnv64::new();
    h.write_u16(p.src.0);
    h.write_u16(p.dst.0);
    h.write_u32(p.seq);
    for hop in &route.hops {
        h.write_u16(hop.0);
    }
    h.write_u32(*payload_bytes);
    h.finish()
}

/// FNV-1a, pinned here so digests do not depend on std hasher internals.
struct Fnv64(u64);

impl Fnv64 {
    fn new() -> Fnv64 {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }

    fn write_byte(&mut self, b: u8) {
        self.0 ^= b as u64;
        self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
    }

    fn write_u16(&mut self, v: u16) {
        for b in v.to_le_bytes() {
            self.write_byte(b);
        }
    }

    fn write_u32(&mut self, v: u32) {
        for b in v.to_le_bytes() {
            self.write_byte(b);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Positive,
    Negative,
}

/// A single NeighborWatch verdict about a directly observed neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservationEvent {
    pub observer: NodeId,
    pub subject: NodeId,
    pub sign: Sign,
    pub time: SimTime,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data_packet(src: u16, dst: u16, seq: u32, hops: &[u16], index: usize) -> Packet {
        Packet {
            src: NodeId(src),
            dst: NodeId(dst),
            seq,
            body: PacketBody::Data {
                route: SourceRoute::new(hops.iter().map(|&h| NodeId(h)).collect()),
                index,
                payload_bytes: 64,
            },
        }
    }

    #[test]
    fn digest_ignores_hop_cursor() {
        let a = data_packet(1, 5, 7, &[1, 2, 5], 1);
        let b = data_packet(1, 5, 7, &[1, 2, 5], 2);
        assert_eq!(packet_digest(&a), packet_digest(&b));
    }

    #[test]
    fn digest_distinguishes_seq() {
        let a = data_packet(1, 5, 7, &[1, 2, 5], 1);
        let b = data_packet(1, 5, 8, &[1, 2, 5], 1);
        assert_ne!(packet_digest(&a), packet_digest(&b));
    }

    #[test]
    fn digest_no_collisions_across_random_packets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut packets = Vec::new();
        let mut keys = BTreeSet::new();
        while packets.len() < 1000 {
            let src = rng.gen_range(0..40u16);
            let dst = rng.gen_range(0..40u16);
            if src == dst {
                continue;
            }
            let seq = rng.gen_range(0..100_000u32);
            let mid = rng.gen_range(40..80u16);
            if !keys.insert((src, dst, seq, mid)) {
                continue;
            }
            packets.push(data_packet(src, dst, seq, &[src, mid, dst], 0));
        }
        let digests: Vec<Digest> = packets.iter().map(packet_digest).collect();
        for i in 0..digests.len() {
            for j in (i + 1)..digests.len() {
                assert_ne!(digests[i], digests[j], "collision between {i} and {j}");
            }
        }
    }

    #[test]
    fn digest_equality_is_an_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let seq = rng.gen_range(0..4u32);
            let idx = rng.gen_range(0..3usize);
            let a = data_packet(1, 9, seq, &[1, 4, 9], idx);
            let b = data_packet(1, 9, seq, &[1, 4, 9], (idx + 1) % 3);
            let c = data_packet(1, 9, seq, &[1, 4, 9], (idx + 2) % 3);
            assert_eq!(packet_digest(&a), packet_digest(&a));
            assert_eq!(packet_digest(&a) == packet_digest(&b), packet_digest(&b) == packet_digest(&a));
            if packet_digest(&a) == packet_digest(&b) && packet_digest(&b) == packet_digest(&c) {
                assert_eq!(packet_digest(&a), packet_digest(&c));
            }
        }
    }

    #[test]
    #[should_panic(expected = "not a DATA packet")]
    fn digest_rejects_control_packets() {
        let p = Packet {
            src: NodeId(1),
            dst: NodeId(2),
            seq: 0,
            body: PacketBody::Rreq {
                route_record: vec![NodeId(1)],
                avoid_list: BTreeSet::new(),
                hops_left: 16,
            },
        };
        packet_digest(&p);
    }

    #[test]
    fn route_validator_flags_duplicates_and_short_routes() {
        assert!(SourceRoute::new(vec![NodeId(1), NodeId(2), NodeId(3)]).is_valid());
        assert!(!SourceRoute::new(vec![NodeId(1)]).is_valid());
        assert!(!SourceRoute::new(vec![NodeId(1), NodeId(2), NodeId(1)]).is_valid());
    }

    #[test]
    fn route_link_lookup_is_direction_agnostic() {
        let r = SourceRoute::new(vec![NodeId(1), NodeId(2), NodeId(3)]);
        assert!(r.uses_link(NodeId(2), NodeId(3)));
        assert!(r.uses_link(NodeId(3), NodeId(2)));
        assert!(!r.uses_link(NodeId(1), NodeId(3)));
    }

    #[test]
    fn time_conversions_round_trip() {
        let t = SimTime::from_secs_f64(1.5);
        assert_eq!(t.0, 1_500_000);
        assert_eq!(t.as_secs_f64(), 1.5);
        assert_eq!(t.plus(500).0, 1_500_500);
        assert_eq!(SimTime(2000).since(SimTime(500)), 1500);
        assert_eq!(SimTime(500).since(SimTime(2000)), 0);
    }
}
