//! Chipcount economy: per-neighbor chip ledgers that gate DATA relaying.
//!
//! A node spends a chip at its neighbor for every packet the neighbor relays
//! on its behalf, and earns chips back by relaying in return (credited
//! optimistically on acceptance, or pessimistically on observed forwarding).
//! All balances additionally grow at the Chip Accumulation Rate.

use std::collections::BTreeMap;

use crate::model::{NodeId, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChipScheme {
    Optimistic,
    Pessimistic,
}

#[derive(Debug, Clone, Copy)]
pub struct ChipParams {
    pub scheme: ChipScheme,
    pub car_per_s: f64,
    pub spend_threshold: f64,
    pub initial_balance: f64,
    pub ceiling: f64,
}

impl Default for ChipParams {
    fn default() -> ChipParams {
        ChipParams {
            scheme: ChipScheme::Optimistic,
            car_per_s: 0.0,
            spend_threshold: 0.0,
            initial_balance: 0.0,
            ceiling: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Allow,
    Deny,
}

#[derive(Debug, Clone)]
pub struct ChipLedger {
    params: ChipParams,
    balances: BTreeMap<NodeId, f64>,
    last_car_update: SimTime,
}

impl ChipLedger {
    pub fn new(params: ChipParams) -> ChipLedger {
        ChipLedger {
            params,
            balances: BTreeMap::new(),
            last_car_update: SimTime::ZERO,
        }
    }

    pub fn scheme(&self) -> ChipScheme {
        self.params.scheme
    }

    /// Lazy CAR accrual: bring every balance up to `now`. Path-independent
    /// because the increment depends only on elapsed time.
    fn accrue(&mut self, now: SimTime) {
        let dt = now.since(self.last_car_update);
        if dt > 0 && self.params.car_per_s > 0.0 {
            let gain = self.params.car_per_s * dt as f64 / 1e6;
            let ceiling = self.params.ceiling;
            for b in self.balances.values_mut() {
                *b = (*b + gain).min(ceiling);
            }
        }
        self.last_car_update = now;
    }

    /// Every chipcount conceptually exists from t=0; an entry first touched
    /// mid-run is created already caught up to the ledger clock.
    fn slot(&mut self, n: NodeId) -> &mut f64 {
        let catch_up = self.params.initial_balance
            + self.params.car_per_s * self.last_car_update.0 as f64 / 1e6;
        let ceiling = self.params.ceiling;
        self.balances.entry(n).or_insert(catch_up.min(ceiling))
    }

    /// Admission decision for a DATA packet the requester (previous hop)
    /// wants relayed. Allow spends exactly one chip.
    pub fn admit_forward(&mut self, requester: NodeId, now: SimTime) -> Admission {
        self.accrue(now);
        let threshold = self.params.spend_threshold;
        let b = self.slot(requester);
        if *b > threshold {
            *b -= 1.0;
            Admission::Allow
        } else {
            Admission::Deny
        }
    }

    /// Optimistic credit: the neighbor accepted a packet from us, whether or
    /// not it ever forwards it.
    pub fn credit_on_accept(&mut self, neighbor: NodeId, now: SimTime) {
        assert_eq!(
            self.params.scheme,
            ChipScheme::Optimistic,
            "credit_on_accept under the pessimistic scheme"
        );
        self.credit(neighbor, now);
    }

    /// Pessimistic credit: the neighbor was observed forwarding a packet we
    /// handed it.
    pub fn credit_on_observed_forward(&mut self, neighbor: NodeId, now: SimTime) {
        assert_eq!(
            self.params.scheme,
            ChipScheme::Pessimistic,
            "credit_on_observed_forward under the optimistic scheme"
        );
        self.credit(neighbor, now);
    }

    fn credit(&mut self, neighbor: NodeId, now: SimTime) {
        self.accrue(now);
        let ceiling = self.params.ceiling;
        let b = self.slot(neighbor);
        *b = (*b + 1.0).min(ceiling);
    }

    pub fn balance(&mut self, n: NodeId, now: SimTime) -> f64 {
        self.accrue(now);
        *self.slot(n)
    }
}
