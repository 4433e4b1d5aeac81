//! CBR connection generation: random source/destination pairs filtered by
//! ground-truth hop distance, or a fixed pair list for hand-built scenarios.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::model::NodeId;

/// BFS hop distance over the unit-disk graph induced by `positions` and
/// `range`; None when dst is unreachable.
pub fn hop_distance(
    positions: &[(f64, f64)],
    range: f64,
    src: NodeId,
    dst: NodeId,
) -> Option<u32> {
    let n = positions.len();
    let in_range = |a: usize, b: usize| {
        let (ax, ay) = positions[a];
        let (bx, by) = positions[b];
        (ax - bx).powi(2) + (ay - by).powi(2) <= range * range
    };
    let mut dist = vec![u32::MAX; n];
    let mut frontier = std::collections::VecDeque::new();
    dist[src.0 as usize] = 0;
    frontier.push_back(src.0 as usize);
    while let Some(u) = frontier.pop_front() {
        if u == dst.0 as usize {
            return Some(dist[u]);
        }
        for v in 0..n {
            if v != u && dist[v] == u32::MAX && in_range(u, v) {
                dist[v] = dist[u] + 1;
                frontier.push_back(v);
            }
        }
    }
    None
}

pub struct PairPicker {
    rng: ChaCha8Rng,
    fixed: Option<Vec<(NodeId, NodeId)>>,
}

impl PairPicker {
    pub fn new(rng: ChaCha8Rng, fixed: Option<Vec<(NodeId, NodeId)>>) -> PairPicker {
        PairPicker { rng, fixed }
    }

    /// Pick the (src, dst) for a connection slot. Random pairs are resampled
    /// until the current hop distance clears `min_hops` (bounded attempts:
    /// a partitioned moment returns None and the caller retries later).
    pub fn pick(
        &mut self,
        slot: usize,
        positions: &[(f64, f64)],
        range: f64,
        min_hops: u32,
    ) -> Option<(NodeId, NodeId)> {
        if let Some(fixed) = &self.fixed {
            return Some(fixed[slot % fixed.len()]);
        }
        let n = positions.len();
        if n < 2 {
            return None;
        }
        for _ in 0..100 {
            let src = self.rng.gen_range(0..n);
            let mut dst = self.rng.gen_range(0..n - 1);
            if dst >= src {
                dst += 1;
            }
            let (src, dst) = (NodeId(src as u16), NodeId(dst as u16));
            if let Some(d) = hop_distance(positions, range, src, dst) {
                if d >= min_hops {
                    return Some((src, dst));
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn chain(n: usize, spacing: f64) -> Vec<(f64, f64)> {
        (0..n).map(|i| (i as f64 * spacing, 0.0)).collect()
    }

    #[test]
    fn hop_distance_on_a_chain() {
        let pos = chain(5, 200.0);
        assert_eq!(hop_distance(&pos, 250.0, NodeId(0), NodeId(0)), Some(0));
        assert_eq!(hop_distance(&pos, 250.0, NodeId(0), NodeId(1)), Some(1));
        assert_eq!(hop_distance(&pos, 250.0, NodeId(0), NodeId(4)), Some(4));
        assert_eq!(hop_distance(&pos, 450.0, NodeId(0), NodeId(4)), Some(2));
    }

    #[test]
    fn partitioned_nodes_are_unreachable() {
        let pos = vec![(0.0, 0.0), (200.0, 0.0), (1000.0, 0.0)];
        assert_eq!(hop_distance(&pos, 250.0, NodeId(0), NodeId(2)), None);
        assert_eq!(hop_distance(&pos, 250.0, NodeId(0), NodeId(1)), Some(1));
    }

    #[test]
    fn random_pairs_respect_the_hop_floor() {
        let pos = chain(8, 200.0);
        let mut picker = PairPicker::new(ChaCha8Rng::seed_from_u64(3), None);
        for _ in 0..50 {
            let (s, d) = picker.pick(0, &pos, 250.0, 2).unwrap();
            assert_ne!(s, d);
            assert!(hop_distance(&pos, 250.0, s, d).unwrap() >= 2);
        }
    }

    #[test]
    fn isolated_cluster_yields_no_pair() {
        // Everyone within one hop of everyone: min_hops 2 is unsatisfiable.
        let pos = vec![(0.0, 0.0), (50.0, 0.0), (0.0, 50.0)];
        let mut picker = PairPicker::new(ChaCha8Rng::seed_from_u64(3), None);
        assert_eq!(picker.pick(0, &pos, 250.0, 2), None);
    }

    #[test]
    fn fixed_pairs_cycle_by_slot() {
        let fixed = vec![(NodeId(0), NodeId(3)), (NodeId(2), NodeId(1))];
        let mut picker = PairPicker::new(ChaCha8Rng::seed_from_u64(3), Some(fixed));
        let pos = chain(4, 200.0);
        assert_eq!(picker.pick(0, &pos, 250.0, 2), Some((NodeId(0), NodeId(3))));
        assert_eq!(picker.pick(1, &pos, 250.0, 2), Some((NodeId(2), NodeId(1))));
        assert_eq!(picker.pick(2, &pos, 250.0, 2), Some((NodeId(0), NodeId(3))));
    }
}
