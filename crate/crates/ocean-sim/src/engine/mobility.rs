//! Random-waypoint mobility with lazy position interpolation.
//!
//! Nodes alternate between pausing and gliding to a uniformly drawn
//! waypoint at a uniformly drawn speed. State only changes in `advance`,
//! which the engine calls at the wake times this module reports, so the RNG
//! draw sequence is a deterministic function of the event order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::model::{secs_to_micros, SimTime};

#[derive(Debug, Clone, Copy)]
enum Motion {
    /// `until = None` pauses forever (static topologies).
    Paused { at: (f64, f64), until: Option<SimTime> },
    Moving {
        from: (f64, f64),
        to: (f64, f64),
        depart: SimTime,
        arrive: SimTime,
    },
}

pub struct MobilityModel {
    width: f64,
    height: f64,
    min_speed: f64,
    max_speed: f64,
    pause_us: Option<u64>,
    states: Vec<Motion>,
    rng: ChaCha8Rng,
}

impl MobilityModel {
    /// `pause_us = None` freezes every node at its initial position.
    pub fn new(
        initial: Vec<(f64, f64)>,
        width: f64,
        height: f64,
        min_speed: f64,
        max_speed: f64,
        pause_us: Option<u64>,
        rng: ChaCha8Rng,
    ) -> MobilityModel {
        let states = initial
            .into_iter()
            .map(|at| Motion::Paused {
                at,
                until: pause_us.map(SimTime),
            })
            .collect();
        MobilityModel {
            width,
            height,
            min_speed,
            max_speed,
            pause_us,
            states,
            rng,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn position(&self, i: usize, now: SimTime) -> (f64, f64) {
        match self.states[i] {
            Motion::Paused { at, .. } => at,
            Motion::Moving {
                from,
                to,
                depart,
                arrive,
            } => {
                let span = arrive.since(depart) as f64;
                if span == 0.0 {
                    return to;
                }
                let frac = (now.since(depart) as f64 / span).clamp(0.0, 1.0);
                (from.0 + (to.0 - from.0) * frac, from.1 + (to.1 - from.1) * frac)
            }
        }
    }

    pub fn positions(&self, now: SimTime) -> Vec<(f64, f64)> {
        (0..self.states.len()).map(|i| self.position(i, now)).collect()
    }

    /// Next time the node's motion state changes, if ever.
    pub fn next_wake(&self, i: usize) -> Option<SimTime> {
        match self.states[i] {
            Motion::Paused { until, .. } => until,
            Motion::Moving { arrive, .. } => Some(arrive),
        }
    }

    /// Apply all transitions due at `now` for node `i`.
    pub fn advance(&mut self, i: usize, now: SimTime) {
        loop {
            match self.states[i] {
                Motion::Paused { at, until: Some(u) } if now >= u => {
                    let to = (
                        self.rng.gen_range(0.0..=self.width),
                        self.rng.gen_range(0.0..=self.height),
                    );
                    let speed = self.rng.gen_range(self.min_speed..=self.max_speed);
                    let dist = ((to.0 - at.0).powi(2) + (to.1 - at.1).powi(2)).sqrt();
                    let travel_us = secs_to_micros(dist / speed);
                    if travel_us == 0 {
                        // Degenerate waypoint on top of the node: pause again.
                        self.states[i] = Motion::Paused {
                            at,
                            until: Some(now.plus(self.pause_us.unwrap_or(0).max(1))),
                        };
                    } else {
                        self.states[i] = Motion::Moving {
                            from: at,
                            to,
                            depart: now,
                            arrive: now.plus(travel_us),
                        };
                    }
                }
                Motion::Moving { to, arrive, .. } if now >= arrive => {
                    self.states[i] = Motion::Paused {
                        at: to,
                        until: Some(arrive.plus(self.pause_us.unwrap_or(0))),
                    };
                }
                _ => return,
            }
        }
    }
}
