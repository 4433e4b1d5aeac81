//! Run accounting: per-class traffic counters, drop causes, per-node
//! punishment counters, and the packet ledger backing the conservation
//! invariant (every originated DATA packet settles in exactly one bucket).

use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::{NodeId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeClass {
    Cooperating,
    Misleading,
    Selfish,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropCause {
    Misbehavior,
    EconomyDenial,
    NoRoute,
    LinkLoss,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub originated: u64,
    pub delivered: u64,
}

impl ClassCounts {
    pub fn ratio(&self) -> f64 {
        if self.originated == 0 {
            0.0
        } else {
            self.delivered as f64 / self.originated as f64
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunMetrics {
    pub cooperating: ClassCounts,
    pub misleading: ClassCounts,
    pub selfish: ClassCounts,
    pub dropped_misbehavior: u64,
    pub dropped_economy: u64,
    pub dropped_no_route: u64,
    pub dropped_link_loss: u64,
    pub in_flight_at_end: u64,
    pub alarm_count: u64,
    pub connections_started: u64,
    pub pair_search_failures: u64,
    pub routes_accepted: u64,
    // sorted (node, count) pairs; vectors rather than maps so the canonical
    // JSON form is stable and needs no string keys
    pub reject_malicious: Vec<(NodeId, u64)>,
    pub economy_denials: Vec<(NodeId, u64)>,
    pub route_members: Vec<(NodeId, u64)>,
    // (time in microseconds, total faulty-list entries across all nodes)
    pub faulty_series: Vec<(u64, u64)>,
}

/// Mutable accounting state carried by the engine during a run.
#[derive(Debug, Clone, Default)]
pub struct Accounting {
    pub cooperating: ClassCounts,
    pub misleading: ClassCounts,
    pub selfish: ClassCounts,
    drops: BTreeMap<DropCause, u64>,
    reject_malicious: BTreeMap<NodeId, u64>,
    economy_denials: BTreeMap<NodeId, u64>,
    route_members: BTreeMap<NodeId, u64>,
    routes_accepted: u64,
    alarm_count: u64,
    connections_started: u64,
    pair_search_failures: u64,
    faulty_series: Vec<(u64, u64)>,
    // originated DATA packets not yet delivered or dropped
    outstanding: BTreeMap<(NodeId, u32), NodeClass>,
}

impl Accounting {
    pub fn new() -> Accounting {
        Accounting::default()
    }

    fn class_mut(&mut self, class: NodeClass) -> &mut ClassCounts {
        match class {
            NodeClass::Cooperating => &mut self.cooperating,
            NodeClass::Misleading => &mut self.misleading,
            NodeClass::Selfish => &mut self.selfish,
        }
    }

    pub fn record_originated(&mut self, src: NodeId, seq: u32, class: NodeClass) {
        self.class_mut(class).originated += 1;
        let prev = self.outstanding.insert((src, seq), class);
        debug_assert!(prev.is_none(), "packet ({src}, {seq}) originated twice");
    }

    /// Settle an outstanding packet as delivered. Panics in debug builds if
    /// the packet was already settled; the conservation invariant depends on
    /// exactly-once settlement.
    pub fn record_delivered(&mut self, src: NodeId, seq: u32) {
        let Some(class) = self.outstanding.remove(&(src, seq)) else {
            debug_assert!(false, "packet ({src}, {seq}) settled twice");
            return;
        };
        self.class_mut(class).delivered += 1;
    }

    pub fn record_dropped(&mut self, src: NodeId, seq: u32, cause: DropCause) {
        let removed = self.outstanding.remove(&(src, seq));
        debug_assert!(removed.is_some(), "packet ({src}, {seq}) settled twice");
        if removed.is_some() {
            *self.drops.entry(cause).or_insert(0) += 1;
        }
    }

    pub fn is_outstanding(&self, src: NodeId, seq: u32) -> bool {
        self.outstanding.contains_key(&(src, seq))
    }

    pub fn record_reject_malicious(&mut self, rejector: NodeId) {
        *self.reject_malicious.entry(rejector).or_insert(0) += 1;
    }

    pub fn record_economy_denial(&mut self, denier: NodeId) {
        *self.economy_denials.entry(denier).or_insert(0) += 1;
    }

    pub fn record_route_accepted(&mut self, hops: &[NodeId]) {
        self.routes_accepted += 1;
        for h in hops {
            *self.route_members.entry(*h).or_insert(0) += 1;
        }
    }

    pub fn record_alarm(&mut self) {
        self.alarm_count += 1;
    }

    pub fn record_connection_started(&mut self) {
        self.connections_started += 1;
    }

    pub fn record_pair_search_failure(&mut self) {
        self.pair_search_failures += 1;
    }

    pub fn sample_faulty_total(&mut self, now: SimTime, total: u64) {
        self.faulty_series.push((now.0, total));
    }

    pub fn drop_count(&self, cause: DropCause) -> u64 {
        self.drops.get(&cause).copied().unwrap_or(0)
    }

    pub fn finalize(self) -> RunMetrics {
        let m = RunMetrics {
            cooperating: self.cooperating,
            misleading: self.misleading,
            selfish: self.selfish,
            dropped_misbehavior: self.drops.get(&DropCause::Misbehavior).copied().unwrap_or(0),
            dropped_economy: self.drops.get(&DropCause::EconomyDenial).copied().unwrap_or(0),
            dropped_no_route: self.drops.get(&DropCause::NoRoute).copied().unwrap_or(0),
            dropped_link_loss: self.drops.get(&DropCause::LinkLoss).copied().unwrap_or(0),
            in_flight_at_end: self.outstanding.len() as u64,
            alarm_count: self.alarm_count,
            connections_started: self.connections_started,
            pair_search_failures: self.pair_search_failures,
            routes_accepted: self.routes_accepted,
            reject_malicious: self.reject_malicious.into_iter().collect(),
            economy_denials: self.economy_denials.into_iter().collect(),
            route_members: self.route_members.into_iter().collect(),
            faulty_series: self.faulty_series,
        };
        debug_assert!(m.conservation_holds());
        m
    }
}

impl RunMetrics {
    pub fn originated_total(&self) -> u64 {
        self.cooperating.originated + self.misleading.originated + self.selfish.originated
    }

    pub fn delivered_total(&self) -> u64 {
        self.cooperating.delivered + self.misleading.delivered + self.selfish.delivered
    }

    pub fn dropped_total(&self) -> u64 {
        self.dropped_misbehavior + self.dropped_economy + self.dropped_no_route + self.dropped_link_loss
    }

    pub fn overall_ratio(&self) -> f64 {
        if self.originated_total() == 0 {
            0.0
        } else {
            self.delivered_total() as f64 / self.originated_total() as f64
        }
    }

    pub fn conservation_holds(&self) -> bool {
        let classes_sound = self.cooperating.delivered <= self.cooperating.originated
            && self.misleading.delivered <= self.misleading.originated
            && self.selfish.delivered <= self.selfish.originated;
        classes_sound
            && self.delivered_total() + self.dropped_total() + self.in_flight_at_end
                == self.originated_total()
    }

    pub fn route_appearances(&self, n: NodeId) -> u64 {
        self.route_members
            .iter()
            .find(|(m, _)| *m == n)
            .map_or(0, |(_, c)| *c)
    }

    pub fn reject_malicious_total(&self) -> u64 {
        self.reject_malicious.iter().map(|(_, c)| c).sum()
    }

    /// Canonical JSON form used for byte-level determinism comparison.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }
}
