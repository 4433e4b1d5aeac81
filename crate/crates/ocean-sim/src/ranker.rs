//! RouteRanker: per-neighbor ratings, the faulty list, and second chances.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::model::{NodeId, ObservationEvent, Sign, SimTime};

#[derive(Debug, Clone, Copy)]
pub struct RankerParams {
    pub neutral: i32,
    pub positive_step: i32,
    pub negative_step: i32,
    pub faulty_threshold: i32,
    pub faulty_timeout_us: u64,
    /// Ratings never fall below floor_factor * faulty_threshold.
    pub floor_factor: i32,
}

impl Default for RankerParams {
    fn default() -> RankerParams {
        RankerParams {
            neutral: 0,
            positive_step: 1,
            negative_step: -2,
            faulty_threshold: -40,
            faulty_timeout_us: 30_000_000,
            floor_factor: 5,
        }
    }
}

impl RankerParams {
    pub fn rating_floor(&self) -> i32 {
        self.floor_factor * self.faulty_threshold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborRating {
    pub rating: i32,
    pub faulty: bool,
    pub last_event: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultyTransition {
    BecameFaulty(NodeId),
}

#[derive(Debug, Clone)]
pub struct RouteRanker {
    params: RankerParams,
    table: BTreeMap<NodeId, NeighborRating>,
}

impl RouteRanker {
    pub fn new(params: RankerParams) -> RouteRanker {
        RouteRanker {
            params,
            table: BTreeMap::new(),
        }
    }

    pub fn params(&self) -> &RankerParams {
        &self.params
    }

    fn entry(&mut self, n: NodeId) -> &mut NeighborRating {
        let neutral = self.params.neutral;
        self.table.entry(n).or_insert(NeighborRating {
            rating: neutral,
            faulty: false,
            last_event: SimTime::ZERO,
        })
    }

    /// Fold one observation into the table. Returns the transition when this
    /// event pushed the subject strictly below the faulty threshold.
    pub fn apply_event(&mut self, e: &ObservationEvent) -> Option<FaultyTransition> {
        let step = match e.sign {
            Sign::Positive => self.params.positive_step,
            Sign::Negative => self.params.negative_step,
        };
        let floor = self.params.rating_floor();
        let threshold = self.params.faulty_threshold;
        let r = self.entry(e.subject);
        r.rating = (r.rating + step).max(floor);
        r.last_event = e.time;
        if r.rating < threshold && !r.faulty {
            r.faulty = true;
            Some(FaultyTransition::BecameFaulty(e.subject))
        } else {
            None
        }
    }

    pub fn is_faulty(&self, n: NodeId) -> bool {
        self.table.get(&n).map_or(false, |r| r.faulty)
    }

    pub fn faulty_list(&self) -> BTreeSet<NodeId> {
        self.table
            .iter()
            .filter(|(_, r)| r.faulty)
            .map(|(n, _)| *n)
            .collect()
    }

    pub fn rating(&self, n: NodeId) -> i32 {
        self.table.get(&n).map_or(self.params.neutral, |r| r.rating)
    }

    pub fn last_event(&self, n: NodeId) -> Option<SimTime> {
        self.table.get(&n).map(|r| r.last_event)
    }

    /// Second chance: reinstate every faulty neighbor that has been quiet for
    /// at least the faulty timeout. Reinstated ratings restart at the
    /// threshold, not neutral, so one more Negative re-faults the node.
    pub fn second_chance_sweep(&mut self, now: SimTime) -> Vec<NodeId> {
        let timeout = self.params.faulty_timeout_us;
        let threshold = self.params.faulty_threshold;
        let mut reinstated = Vec::new();
        for (n, r) in self.table.iter_mut() {
            if r.faulty && now.since(r.last_event) >= timeout {
                r.faulty = false;
                r.rating = threshold;
                reinstated.push(*n);
            }
        }
        reinstated
    }

    /// Earliest instant at which some currently-faulty neighbor could be
    /// reinstated, for scheduling sweeps.
    pub fn next_reinstatement(&self) -> Option<SimTime> {
        self.table
            .values()
            .filter(|r| r.faulty)
            .map(|r| r.last_event.plus(self.params.faulty_timeout_us))
            .min()
    }

    /// Accept a second-hand accusation: force the subject onto the faulty
    /// list with rating pinned at the threshold. Re-accusation of an
    /// already-faulty node just refreshes its last-event time. Returns true
    /// when this started a new faulty episode.
    pub fn mark_faulty_external(&mut self, n: NodeId, now: SimTime) -> bool {
        let threshold = self.params.faulty_threshold;
        let r = self.entry(n);
        r.last_event = now;
        r.rating = threshold;
        if r.faulty {
            false
        } else {
            r.faulty = true;
            true
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neg(subject: u16, t: u64) -> ObservationEvent {
        ObservationEvent {
            observer: NodeId(0),
            subject: NodeId(subject),
            sign: Sign::Negative,
            time: SimTime(t),
        }
    }

    fn pos(subject: u16, t: u64) -> ObservationEvent {
        ObservationEvent {
            observer: NodeId(0),
            subject: NodeId(subject),
            sign: Sign::Positive,
            time: SimTime(t),
        }
    }

    #[test]
    fn twenty_one_consecutive_negatives_fault_a_fresh_neighbor() {
        let mut rk = RouteRanker::new(RankerParams::default());
        let mut transition_at = None;
        for i in 0..21 {
            if rk.apply_event(&neg(3, i)).is_some() {
                transition_at = Some(i + 1);
            }
        }
        assert_eq!(transition_at, Some(21));
        assert_eq!(rk.rating(NodeId(3)), -42);
        assert!(rk.is_faulty(NodeId(3)));
    }

    #[test]
    fn twenty_negatives_sit_exactly_on_the_threshold() {
        let mut rk = RouteRanker::new(RankerParams::default());
        for i in 0..20 {
            assert!(rk.apply_event(&neg(3, i)).is_none());
        }
        assert_eq!(rk.rating(NodeId(3)), -40);
        assert!(!rk.is_faulty(NodeId(3)));
    }

    #[test]
    fn alternating_pairs_fault_on_the_forty_first_negative() {
        let mut rk = RouteRanker::new(RankerParams::default());
        let mut t = 0;
        let mut faulted_on_negative = None;
        let mut negatives = 0;
        'outer: for _ in 0..100 {
            rk.apply_event(&pos(3, t));
            t += 1;
            negatives += 1;
            if rk.apply_event(&neg(3, t)).is_some() {
                faulted_on_negative = Some(negatives);
                break 'outer;
            }
            t += 1;
        }
        assert_eq!(faulted_on_negative, Some(41));
        assert_eq!(rk.rating(NodeId(3)), -41);
    }

    #[test]
    fn becames_faulty_fires_once_per_episode() {
        let mut rk = RouteRanker::new(RankerParams::default());
        let mut transitions = 0;
        for i in 0..30 {
            if rk.apply_event(&neg(3, i)).is_some() {
                transitions += 1;
            }
        }
        assert_eq!(transitions, 1);
    }

    #[test]
    fn faulty_list_tracks_membership() {
        let mut rk = RouteRanker::new(RankerParams::default());
        assert!(rk.faulty_list().is_empty());
        for i in 0..21 {
            rk.apply_event(&neg(3, i));
            rk.apply_event(&neg(7, i));
        }
        let l: Vec<u16> = rk.faulty_list().iter().map(|n| n.0).collect();
        assert_eq!(l, vec![3, 7]);
        assert!(!rk.is_faulty(NodeId(4)));
    }

    #[test]
    fn second_chance_boundary_is_inclusive() {
        let mut rk = RouteRanker::new(RankerParams::default());
        for i in 0..21 {
            rk.apply_event(&neg(3, i));
        }
        let last = SimTime(20);
        assert!(rk.second_chance_sweep(last.plus(29_999_999)).is_empty());
        let back = rk.second_chance_sweep(last.plus(30_000_000));
        assert_eq!(back, vec![NodeId(3)]);
        assert!(!rk.is_faulty(NodeId(3)));
        assert_eq!(rk.rating(NodeId(3)), -40);
    }

    #[test]
    fn reinstated_node_refaults_on_a_single_negative() {
        let mut rk = RouteRanker::new(RankerParams::default());
        for i in 0..21 {
            rk.apply_event(&neg(3, i));
        }
        rk.second_chance_sweep(SimTime(40_000_000));
        let tr = rk.apply_event(&neg(3, 40_000_100));
        assert_eq!(tr, Some(FaultyTransition::BecameFaulty(NodeId(3))));
        assert_eq!(rk.rating(NodeId(3)), -42);
    }

    #[test]
    fn active_faulty_node_is_never_reinstated() {
        let mut rk = RouteRanker::new(RankerParams::default());
        for i in 0..21 {
            rk.apply_event(&neg(3, i));
        }
        // Events keep arriving inside the window; each sweep sees recent activity.
        let mut t = 20;
        for _ in 0..10 {
            t += 20_000_000;
            rk.apply_event(&neg(3, t));
            assert!(rk.second_chance_sweep(SimTime(t + 10_000_000)).is_empty());
        }
        assert!(rk.is_faulty(NodeId(3)));
    }

    #[test]
    fn partial_timeout_reinstates_only_idle_nodes() {
        let mut rk = RouteRanker::new(RankerParams::default());
        for i in 0..21 {
            rk.apply_event(&neg(3, i));
            rk.apply_event(&neg(7, i));
        }
        // Node 7 stays active late, node 3 goes quiet.
        rk.apply_event(&neg(7, 25_000_000));
        let back = rk.second_chance_sweep(SimTime(31_000_000));
        assert_eq!(back, vec![NodeId(3)]);
        let l: Vec<u16> = rk.faulty_list().iter().map(|n| n.0).collect();
        assert_eq!(l, vec![7]);
    }

    #[test]
    fn ratings_clamp_at_the_floor() {
        let mut rk = RouteRanker::new(RankerParams::default());
        for i in 0..500 {
            rk.apply_event(&neg(3, i));
        }
        assert_eq!(rk.rating(NodeId(3)), -200);
    }

    #[test]
    fn minimum_all_negative_crossing_count_matches_closed_form() {
        let params = RankerParams::default();
        let mut rk = RouteRanker::new(params);
        let mut count = 0;
        loop {
            count += 1;
            if rk.apply_event(&neg(3, count)).is_some() {
                break;
            }
        }
        // Strict crossing: first count with neutral + count*step < threshold.
        let steps = (params.faulty_threshold - params.neutral) / params.negative_step + 1;
        assert_eq!(count as i32, steps);
        assert_eq!(steps, 21);
    }

    #[test]
    fn external_accusation_pins_rating_and_refreshes() {
        let mut rk = RouteRanker::new(RankerParams::default());
        assert!(rk.mark_faulty_external(NodeId(9), SimTime(1000)));
        assert!(rk.is_faulty(NodeId(9)));
        assert_eq!(rk.rating(NodeId(9)), -40);
        // Re-accusation refreshes the clock without a new episode.
        assert!(!rk.mark_faulty_external(NodeId(9), SimTime(2000)));
        assert_eq!(rk.last_event(NodeId(9)), Some(SimTime(2000)));
    }
}
