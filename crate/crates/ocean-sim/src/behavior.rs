//! Node behavior profiles: cooperating baseline plus the attacker taxonomy.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::model::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorKind {
    Cooperating,
    Misleading,
    Selfish,
    Rushing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BehaviorProfile {
    pub kind: BehaviorKind,
    /// Misleading nodes maintain their own ratings and avoid lists when set.
    pub runs_ocean: bool,
    /// Avoid-list tampering plus zero rebroadcast jitter (always on for
    /// Rushing; optionally enabled for Misleading attackers).
    pub rush_tamper: bool,
    /// When tampering, drop the entire received avoid list instead of just
    /// this node's own entry.
    pub rush_clear_avoid: bool,
    /// Self-defeating manipulations: extra hops appended to the route record,
    /// and injection of a nonexistent hop.
    pub route_padding: u8,
    pub bogus_hop: bool,
}

impl BehaviorProfile {
    pub fn cooperating() -> BehaviorProfile {
        BehaviorProfile {
            kind: BehaviorKind::Cooperating,
            runs_ocean: true,
            rush_tamper: false,
            rush_clear_avoid: false,
            route_padding: 0,
            bogus_hop: false,
        }
    }

    pub fn misleading(runs_ocean: bool) -> BehaviorProfile {
        BehaviorProfile {
            kind: BehaviorKind::Misleading,
            runs_ocean,
            ..BehaviorProfile::cooperating()
        }
    }

    pub fn selfish() -> BehaviorProfile {
        BehaviorProfile {
            kind: BehaviorKind::Selfish,
            ..BehaviorProfile::cooperating()
        }
    }

    pub fn rushing() -> BehaviorProfile {
        BehaviorProfile {
            kind: BehaviorKind::Rushing,
            rush_tamper: true,
            ..BehaviorProfile::cooperating()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardDecision {
    Forward,
    SilentDrop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RreqDecision {
    Participate,
    SilentDrop,
    RushTampered,
}

/// Decision for a transit DATA packet (the node is a non-terminal hop).
/// Originated and destined traffic never reaches this point.
pub fn decide_data_forward(profile: &BehaviorProfile) -> ForwardDecision {
    match profile.kind {
        BehaviorKind::Cooperating | BehaviorKind::Rushing => ForwardDecision::Forward,
        BehaviorKind::Misleading | BehaviorKind::Selfish => ForwardDecision::SilentDrop,
    }
}

/// Decision for a received RREQ broadcast where the node is not the
/// destination.
pub fn decide_rreq(profile: &BehaviorProfile) -> RreqDecision {
    match profile.kind {
        BehaviorKind::Selfish => RreqDecision::SilentDrop,
        BehaviorKind::Rushing => RreqDecision::RushTampered,
        BehaviorKind::Misleading if profile.rush_tamper => RreqDecision::RushTampered,
        BehaviorKind::Cooperating | BehaviorKind::Misleading => RreqDecision::Participate,
    }
}

/// Avoid-list tampering: strip this node (and, when configured, everything
/// else) out of the received avoid list. The route record is never touched.
pub fn tamper_avoid_list(
    profile: &BehaviorProfile,
    received: &BTreeSet<NodeId>,
    self_id: NodeId,
) -> BTreeSet<NodeId> {
    if profile.rush_clear_avoid {
        BTreeSet::new()
    } else {
        let mut out = received.clone();
        out.remove(&self_id);
        out
    }
}

/// Self-defeating route-record manipulations, applied to an outgoing
/// rebroadcast whose record already ends in this node: pad with extra real
/// hops, or splice in a hop that does not exist. Both make the advertised
/// route longer or unusable, which is exactly why they lose.
pub fn manipulate_route_record(
    profile: &BehaviorProfile,
    record: &mut Vec<NodeId>,
    num_nodes: usize,
) {
    let insert_at = record.len() - 1;
    if profile.route_padding > 0 {
        let mut pads = Vec::new();
        for id in (0..num_nodes as u16).rev() {
            if pads.len() == profile.route_padding as usize {
                break;
            }
            let cand = NodeId(id);
            if !record.contains(&cand) {
                pads.push(cand);
            }
        }
        for pad in pads {
            record.insert(insert_at, pad);
        }
    }
    if profile.bogus_hop {
        // One past any real id: num_nodes is capped at 65535, so the top of
        // the id space is always vacant.
        let insert_at = record.len() - 1;
        record.insert(insert_at, NodeId(u16::MAX));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn misleading_drops_transit_data() {
        assert_eq!(
            decide_data_forward(&BehaviorProfile::misleading(true)),
            ForwardDecision::SilentDrop
        );
    }

    #[test]
    fn cooperating_and_rushing_forward_data() {
        assert_eq!(decide_data_forward(&BehaviorProfile::cooperating()), ForwardDecision::Forward);
        assert_eq!(decide_data_forward(&BehaviorProfile::rushing()), ForwardDecision::Forward);
    }

    #[test]
    fn selfish_never_joins_routes() {
        assert_eq!(decide_rreq(&BehaviorProfile::selfish()), RreqDecision::SilentDrop);
    }

    #[test]
    fn rushing_tampers_rreqs() {
        assert_eq!(decide_rreq(&BehaviorProfile::rushing()), RreqDecision::RushTampered);
    }

    #[test]
    fn misleading_tampering_is_opt_in() {
        assert_eq!(decide_rreq(&BehaviorProfile::misleading(true)), RreqDecision::Participate);
        let mut attacker = BehaviorProfile::misleading(true);
        attacker.rush_tamper = true;
        assert_eq!(decide_rreq(&attacker), RreqDecision::RushTampered);
    }

    #[test]
    fn tampering_strips_self_from_avoid_list() {
        let avoid: BTreeSet<NodeId> = [NodeId(4), NodeId(9)].into_iter().collect();
        let out = tamper_avoid_list(&BehaviorProfile::rushing(), &avoid, NodeId(4));
        assert_eq!(out, [NodeId(9)].into_iter().collect());
    }

    #[test]
    fn clear_avoid_flag_empties_the_list() {
        let mut p = BehaviorProfile::rushing();
        p.rush_clear_avoid = true;
        let avoid: BTreeSet<NodeId> = [NodeId(4), NodeId(9)].into_iter().collect();
        assert!(tamper_avoid_list(&p, &avoid, NodeId(4)).is_empty());
    }

    #[test]
    fn padding_inserts_fresh_real_hops_before_self() {
        let mut p = BehaviorProfile::rushing();
        p.route_padding = 2;
        let mut record = vec![NodeId(0), NodeId(1), NodeId(4)];
        manipulate_route_record(&p, &mut record, 6);
        assert_eq!(record, vec![NodeId(0), NodeId(1), NodeId(3), NodeId(5), NodeId(4)]);
    }

    #[test]
    fn bogus_hop_names_a_node_that_does_not_exist() {
        let mut p = BehaviorProfile::rushing();
        p.bogus_hop = true;
        let mut record = vec![NodeId(0), NodeId(4)];
        manipulate_route_record(&p, &mut record, 6);
        assert_eq!(record, vec![NodeId(0), NodeId(u16::MAX), NodeId(4)]);
        assert!(record.iter().all(|n| n.0 == u16::MAX || (n.0 as usize) < 6));
    }

    #[test]
    fn no_flags_leave_the_record_alone() {
        let mut record = vec![NodeId(0), NodeId(4)];
        manipulate_route_record(&BehaviorProfile::rushing(), &mut record, 6);
        assert_eq!(record, vec![NodeId(0), NodeId(4)]);
    }
}
