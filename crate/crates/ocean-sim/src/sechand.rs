//! Second-hand reputation: accusation alarms carried in RERR packets.
//!
//! An accuser stamps the alarm field on route errors it sends anyway, and a
//! fresh local detection of a silently-dropping next hop synthesizes the
//! RERR itself (such a neighbor keeps accepting packets at the MAC, so no
//! organic broken-link error would ever carry the accusation). Receiving is
//! one-sided by design: overhearers adopt the accused with no trust filter.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{NodeId, Packet, PacketBody, SourceRoute};

/// Per-node alarm bookkeeping for sechand mode.
#[derive(Debug, Clone, Default)]
pub struct AlarmState {
    // Route context of the most recent DATA handed to each next hop; the
    // alarm about that neighbor retraces this packet's path to the source.
    last_handoff: BTreeMap<NodeId, (SourceRoute, usize)>,
    // Accusations already sent this faulty episode.
    alarmed: BTreeSet<NodeId>,
}

impl AlarmState {
    pub fn new() -> AlarmState {
        AlarmState::default()
    }

    pub fn record_handoff(&mut self, next_hop: NodeId, route: &SourceRoute, self_index: usize) {
        debug_assert_eq!(route.hops.get(self_index + 1), Some(&next_hop));
        self.last_handoff.insert(next_hop, (route.clone(), self_index));
    }

    /// A reinstated neighbor starts a clean episode: accusing it again is
    /// allowed once it crosses the threshold again.
    pub fn note_reinstated(&mut self, n: NodeId) {
        self.alarmed.remove(&n);
    }

    /// Build the accusation RERR for a freshly detected neighbor. Returns
    /// None when this node never forwarded anything to the accused, when it
    /// originated that traffic itself (no reverse path to send along), or
    /// when the episode was already alarmed.
    pub fn build_alarm(&mut self, self_id: NodeId, accused: NodeId, seq: u32) -> Option<Packet> {
        if self.alarmed.contains(&accused) {
            return None;
        }
        let (route, idx) = self.last_handoff.get(&accused)?;
        if *idx == 0 {
            return None;
        }
        debug_assert_eq!(route.hops[*idx], self_id);
        let mut path: Vec<NodeId> = route.hops[..=*idx].to_vec();
        path.reverse();
        self.alarmed.insert(accused);
        Some(Packet {
            src: self_id,
            dst: route.src(),
            seq,
            body: PacketBody::Rerr {
                broken_link: (self_id, accused),
                alarm: Some(accused),
                path,
                cursor: 0,
            },
        })
    }

    /// Piggyback the accusation on a route error generated for a real MAC
    /// failure, when its broken far end is an un-alarmed faulty neighbor.
    pub fn stamp_organic(&mut self, rerr: &mut Packet, faulty: &BTreeSet<NodeId>) {
        let PacketBody::Rerr {
            broken_link, alarm, ..
        } = &mut rerr.body
        else {
            return;
        };
        let far = broken_link.1;
        if alarm.is_none() && faulty.contains(&far) && !self.alarmed.contains(&far) {
            *alarm = Some(far);
            self.alarmed.insert(far);
        }
    }
}

/// The overhear rule: whether a node hearing this transmission should add
/// the accused to its faulty list. A node never blacklists itself.
pub fn overheard_accusation(p: &Packet, self_id: NodeId) -> Option<NodeId> {
    let PacketBody::Rerr { alarm: Some(a), .. } = &p.body else {
        return None;
    };
    if *a == self_id {
        return None;
    }
    Some(*a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SimTime;
    use crate::ranker::{RankerParams, RouteRanker};

    fn route(v: &[u16]) -> SourceRoute {
        SourceRoute::new(v.iter().map(|&n| NodeId(n)).collect())
    }

    #[test]
    fn alarm_retraces_the_reverse_route_of_the_last_handoff() {
        let mut st = AlarmState::new();
        st.record_handoff(NodeId(3), &route(&[1, 2, 3, 5]), 1);
        let p = st.build_alarm(NodeId(2), NodeId(3), 7).unwrap();
        assert_eq!(p.dst, NodeId(1));
        let PacketBody::Rerr { broken_link, alarm, path, cursor } = &p.body else {
            panic!()
        };
        assert_eq!(*broken_link, (NodeId(2), NodeId(3)));
        assert_eq!(*alarm, Some(NodeId(3)));
        assert_eq!(*path, vec![NodeId(2), NodeId(1)]);
        assert_eq!(*cursor, 0);
    }

    #[test]
    fn source_accuser_has_no_reverse_path() {
        let mut st = AlarmState::new();
        st.record_handoff(NodeId(3), &route(&[1, 3, 5]), 0);
        assert!(st.build_alarm(NodeId(1), NodeId(3), 0).is_none());
    }

    #[test]
    fn one_alarm_per_episode_until_reinstatement() {
        let mut st = AlarmState::new();
        st.record_handoff(NodeId(3), &route(&[1, 2, 3, 5]), 1);
        assert!(st.build_alarm(NodeId(2), NodeId(3), 0).is_some());
        assert!(st.build_alarm(NodeId(2), NodeId(3), 1).is_none());
        st.note_reinstated(NodeId(3));
        assert!(st.build_alarm(NodeId(2), NodeId(3), 2).is_some());
    }

    #[test]
    fn newer_handoff_context_replaces_older() {
        let mut st = AlarmState::new();
        st.record_handoff(NodeId(3), &route(&[1, 2, 3, 5]), 1);
        st.record_handoff(NodeId(3), &route(&[6, 4, 2, 3, 5]), 2);
        let p = st.build_alarm(NodeId(2), NodeId(3), 0).unwrap();
        assert_eq!(p.dst, NodeId(6));
        let PacketBody::Rerr { path, .. } = &p.body else { panic!() };
        assert_eq!(*path, vec![NodeId(2), NodeId(4), NodeId(6)]);
    }

    #[test]
    fn organic_rerr_carries_the_accusation_once() {
        let mut st = AlarmState::new();
        let faulty: BTreeSet<NodeId> = [NodeId(3)].into_iter().collect();
        let mk = || Packet {
            src: NodeId(2),
            dst: NodeId(1),
            seq: 0,
            body: PacketBody::Rerr {
                broken_link: (NodeId(2), NodeId(3)),
                alarm: None,
                path: vec![NodeId(2), NodeId(1)],
                cursor: 0,
            },
        };
        let mut first = mk();
        st.stamp_organic(&mut first, &faulty);
        assert!(matches!(first.body, PacketBody::Rerr { alarm: Some(NodeId(3)), .. }));
        let mut second = mk();
        st.stamp_organic(&mut second, &faulty);
        assert!(matches!(second.body, PacketBody::Rerr { alarm: None, .. }));
    }

    #[test]
    fn organic_rerr_with_healthy_far_end_stays_clean() {
        let mut st = AlarmState::new();
        let mut p = Packet {
            src: NodeId(2),
            dst: NodeId(1),
            seq: 0,
            body: PacketBody::Rerr {
                broken_link: (NodeId(2), NodeId(4)),
                alarm: None,
                path: vec![NodeId(2), NodeId(1)],
                cursor: 0,
            },
        };
        st.stamp_organic(&mut p, &BTreeSet::new());
        assert!(matches!(p.body, PacketBody::Rerr { alarm: None, .. }));
    }

    #[test]
    fn overhearers_adopt_the_accused_but_never_themselves() {
        let p = Packet {
            src: NodeId(2),
            dst: NodeId(1),
            seq: 0,
            body: PacketBody::Rerr {
                broken_link: (NodeId(2), NodeId(3)),
                alarm: Some(NodeId(3)),
                path: vec![NodeId(2), NodeId(1)],
                cursor: 0,
            },
        };
        assert_eq!(overheard_accusation(&p, NodeId(7)), Some(NodeId(3)));
        assert_eq!(overheard_accusation(&p, NodeId(3)), None);

        let mut ranker = RouteRanker::new(RankerParams::default());
        assert!(ranker.mark_faulty_external(NodeId(3), SimTime(5)));
        assert!(ranker.is_faulty(NodeId(3)));
        assert_eq!(ranker.rating(NodeId(3)), -40);
        // A repeat accusation refreshes the episode rather than opening one.
        assert!(!ranker.mark_faulty_external(NodeId(3), SimTime(9)));
    }
}
