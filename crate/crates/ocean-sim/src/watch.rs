//! NeighborWatch: passive forwarding monitor.
//!
//! After handing a DATA packet to a neighbor, the node buffers the packet
//! digest and expects to overhear the neighbor retransmit it within a timeout.
//! A matching overhear yields a Positive observation; expiry yields a
//! Negative. Only DATA forwarding is monitored.

use crate::model::{packet_digest, Digest, NodeId, ObservationEvent, Packet, Sign, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChecksumBufferEntry {
    pub digest: Digest,
    pub neighbor: NodeId,
    pub deadline: SimTime,
}

#[derive(Debug, Clone)]
pub struct NeighborWatch {
    observer: NodeId,
    timeout_us: u64,
    entries: Vec<ChecksumBufferEntry>,
}

impl NeighborWatch {
    pub fn new(observer: NodeId, timeout_us: u64) -> NeighborWatch {
        NeighborWatch {
            observer,
            timeout_us,
            entries: Vec::new(),
        }
    }

    /// Record a fresh handoff. No entry is created when the next hop is the
    /// packet's destination: a destination consumes, it does not forward.
    pub fn on_handoff(&mut self, p: &Packet, next_hop: NodeId, now: SimTime) {
        debug_assert!(p.is_data());
        if next_hop == p.dst {
            return;
        }
        self.entries.push(ChecksumBufferEntry {
            digest: packet_digest(p),
            neighbor: next_hop,
            deadline: now.plus(self.timeout_us),
        });
    }

    /// Process an overheard DATA transmission by a direct neighbor. A digest
    /// match consumes exactly one entry and yields Positive. A transmission
    /// that matches no buffered digest for this neighbor leaves the buffer
    /// untouched; pending entries expire on their own.
    pub fn on_overhear(
        &mut self,
        p: &Packet,
        transmitter: NodeId,
        now: SimTime,
    ) -> Option<ObservationEvent> {
        if !p.is_data() {
            return None;
        }
        let digest = packet_digest(p);
        let pos = self
            .entries
            .iter()
            .position(|e| e.neighbor == transmitter && e.digest == digest)?;
        self.entries.remove(pos);
        Some(ObservationEvent {
            observer: self.observer,
            subject: transmitter,
            sign: Sign::Positive,
            time: now,
        })
    }

    /// Remove every entry whose deadline has passed, one Negative per entry.
    pub fn expire(&mut self, now: SimTime) -> Vec<ObservationEvent> {
        let mut events = Vec::new();
        self.entries.retain(|e| {
            if e.deadline <= now {
                events.push(ObservationEvent {
                    observer: self.observer,
                    subject: e.neighbor,
                    sign: Sign::Negative,
                    time: now,
                });
                false
            } else {
                true
            }
        });
        events
    }

    pub fn pending(&self) -> usize {
        self.entries.len()
    }

    pub fn next_deadline(&self) -> Option<SimTime> {
        self.entries.iter().map(|e| e.deadline).min()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PacketBody, SourceRoute};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data(src: u16, dst: u16, seq: u32, hops: &[u16]) -> Packet {
        Packet {
            src: NodeId(src),
            dst: NodeId(dst),
            seq,
            body: PacketBody::Data {
                route: SourceRoute::new(hops.iter().map(|&h| NodeId(h)).collect()),
                index: 1,
                payload_bytes: 64,
            },
        }
    }

    #[test]
    fn handoff_buffers_with_deadline() {
        let mut w = NeighborWatch::new(NodeId(1), 1000);
        w.on_handoff(&data(1, 5, 0, &[1, 3, 5]), NodeId(3), SimTime(100));
        assert_eq!(w.pending(), 1);
        assert_eq!(w.next_deadline(), Some(SimTime(1100)));
    }

    #[test]
    fn handoff_to_destination_creates_no_entry() {
        let mut w = NeighborWatch::new(NodeId(3), 1000);
        w.on_handoff(&data(1, 5, 0, &[1, 3, 5]), NodeId(5), SimTime(100));
        assert_eq!(w.pending(), 0);
    }

    #[test]
    fn distinct_packets_to_one_neighbor_buffer_independently() {
        let mut w = NeighborWatch::new(NodeId(1), 1000);
        w.on_handoff(&data(1, 5, 0, &[1, 3, 5]), NodeId(3), SimTime(0));
        w.on_handoff(&data(1, 5, 1, &[1, 3, 5]), NodeId(3), SimTime(50));
        assert_eq!(w.pending(), 2);
    }

    #[test]
    fn matching_overhear_yields_positive_and_consumes() {
        let mut w = NeighborWatch::new(NodeId(1), 1000);
        let p = data(1, 5, 0, &[1, 3, 5]);
        w.on_handoff(&p, NodeId(3), SimTime(0));
        // The neighbor retransmits with its own advanced cursor.
        let mut forwarded = p.clone();
        if let PacketBody::Data { index, .. } = &mut forwarded.body {
            *index += 1;
        }
        let ev = w.on_overhear(&forwarded, NodeId(3), SimTime(400)).unwrap();
        assert_eq!(ev.sign, Sign::Positive);
        assert_eq!(ev.subject, NodeId(3));
        assert_eq!(w.pending(), 0);
    }

    #[test]
    fn tampered_overhear_leaves_entry_to_expire() {
        let mut w = NeighborWatch::new(NodeId(1), 1000);
        w.on_handoff(&data(1, 5, 0, &[1, 3, 5]), NodeId(3), SimTime(0));
        // Same neighbor transmits a different packet: digest mismatch.
        assert!(w.on_overhear(&data(1, 5, 9, &[1, 3, 5]), NodeId(3), SimTime(400)).is_none());
        assert_eq!(w.pending(), 1);
        let evs = w.expire(SimTime(1000));
        assert_eq!(evs.len(), 1);
        assert_eq!(evs[0].sign, Sign::Negative);
        assert_eq!(evs[0].subject, NodeId(3));
    }

    #[test]
    fn overhear_with_nothing_pending_is_silent() {
        let mut w = NeighborWatch::new(NodeId(1), 1000);
        assert!(w.on_overhear(&data(2, 6, 0, &[2, 4, 6]), NodeId(4), SimTime(10)).is_none());
    }

    #[test]
    fn expiry_is_inclusive_and_batched() {
        let mut w = NeighborWatch::new(NodeId(1), 1000);
        for seq in 0..5 {
            w.on_handoff(&data(1, 5, seq, &[1, 3, 5]), NodeId(3), SimTime(100));
        }
        assert!(w.expire(SimTime(1099)).is_empty());
        let evs = w.expire(SimTime(1100));
        assert_eq!(evs.len(), 5);
        assert!(evs.iter().all(|e| e.sign == Sign::Negative && e.subject == NodeId(3)));
        assert_eq!(w.pending(), 0);
    }

    // Conservation: every created entry resolves exactly once, as a Positive,
    // a Negative, or survival to the end of the timeline.
    #[test]
    fn random_timeline_conserves_entries() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let mut w = NeighborWatch::new(NodeId(0), 1000);
            let mut created = 0u32;
            let mut positives = 0u32;
            let mut negatives = 0u32;
            let mut pending_packets: Vec<Packet> = Vec::new();
            let mut now = SimTime(0);
            for seq in 0..rng.gen_range(5..60u32) {
                now = now.plus(rng.gen_range(0..700));
                negatives += w.expire(now).len() as u32;
                if rng.gen_bool(0.5) || pending_packets.is_empty() {
                    let p = data(0, 9, seq, &[0, 3, 9]);
                    w.on_handoff(&p, NodeId(3), now);
                    pending_packets.push(p);
                    created += 1;
                } else {
                    let k = rng.gen_range(0..pending_packets.len());
                    let p = pending_packets.swap_remove(k);
                    if w.on_overhear(&p, NodeId(3), now).is_some() {
                        positives += 1;
                    }
                }
            }
            assert_eq!(created, positives + negatives + w.pending() as u32);
        }
    }

    #[test]
    fn dropping_neighbor_earns_one_negative_per_handoff() {
        let mut w = NeighborWatch::new(NodeId(1), 1000);
        for seq in 0..10 {
            w.on_handoff(&data(1, 5, seq, &[1, 3, 5]), NodeId(3), SimTime(seq as u64 * 2000));
        }
        let evs = w.expire(SimTime(1_000_000));
        assert_eq!(evs.len(), 10);
        assert!(evs.iter().all(|e| e.sign == Sign::Negative));
    }
}
