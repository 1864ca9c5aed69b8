use std::collections::{HashMap, VecDeque};

use rand::Rng;

use super::trajectory::{Source, Trajectory};

/// Per-theorem FIFO rings of past trajectories. Stored log-rewards are
/// frozen at insertion; log-probabilities are recomputed on every draw.
///
/// With `unique` set, a trajectory whose tactic sequence is already stored
/// is not inserted again.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    unique: bool,
    rings: HashMap<String, VecDeque<Trajectory>>,
    reads: u64,
}

impl ReplayBuffer {
    pub const DEFAULT_CAPACITY: usize = 64;

    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            unique: false,
            rings: HashMap::new(),
            reads: 0,
        }
    }

    pub fn unique(capacity: usize) -> Self {
        Self {
            unique: true,
            ..Self::new(capacity)
        }
    }

    pub fn insert(&mut self, traj: &Trajectory) {
        let ring = self.rings.entry(traj.theorem.clone()).or_default();
        if self.unique && ring.iter().any(|t| t.tactics == traj.tactics) {
            return;
        }
        if ring.len() == self.capacity {
            ring.pop_front();
        }
        let mut stored = traj.clone();
        stored.source = Source::Replay;
        stored.temperature = 1.0;
        ring.push_back(stored);
    }

    pub fn len_for(&self, theorem: &str) -> usize {
        self.rings.get(theorem).map_or(0, VecDeque::len)
    }

    pub fn has(&self, theorem: &str) -> bool {
        self.len_for(theorem) > 0
    }

    /// Total trajectories handed out so far.
    pub fn reads(&self) -> u64 {
        self.reads
    }

    pub fn entries(&self, theorem: &str) -> impl Iterator<Item = &Trajectory> {
        self.rings.get(theorem).into_iter().flat_map(|r| r.iter())
    }

    /// `n` draws, uniform with replacement.
    pub fn sample(&mut self, theorem: &str, n: usize, rng: &mut impl Rng) -> Vec<Trajectory> {
        let Some(ring) = self.rings.get(theorem) else {
            return Vec::new();
        };
        if ring.is_empty() {
            return Vec::new();
        }
        let out: Vec<Trajectory> = (0..n)
            .map(|_| ring[rng.gen_range(0..ring.len())].clone())
            .collect();
        self.reads += out.len() as u64;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ProofState;
    use crate::gfn::Outcome;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unique_mode_skips_repeats() {
        let mut b = ReplayBuffer::unique(4);
        let t = traj("x", -1.0);
        b.insert(&t);
        b.insert(&t);
        assert_eq!(b.len_for("x"), 1);
        let mut other = t.clone();
        other.tactics.push(crate::env::Tactic::SPLIT);
        b.insert(&other);
        assert_eq!(b.len_for("x"), 2);
    }

    fn traj(theorem: &str, log_r: f64) -> Trajectory {
        Trajectory {
            theorem: theorem.into(),
            tactics: vec![],
            states: vec![ProofState::new(vec![])],
            outcome: Outcome::EnvError,
            log_pf: -1.0,
            log_r,
            source: Source::Online,
            temperature: 0.5,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.insert(&traj("x", -(i as f64)));
        }
        let kept: Vec<f64> = buf.entries("x").map(|t| t.log_r).collect();
        assert_eq!(kept, vec![-2.0, -3.0, -4.0]);
        assert!(!buf.has("y"));
    }

    #[test]
    fn sampling_counts_reads_and_keeps_rewards() {
        let mut buf = ReplayBuffer::new(64);
        buf.insert(&traj("x", -7.5));
        buf.insert(&traj("x", -1.25));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let drawn = buf.sample("x", 5, &mut rng);
        assert_eq!(drawn.len(), 5);
        assert_eq!(buf.reads(), 5);
        for t in &drawn {
            assert!(t.log_r == -7.5 || t.log_r == -1.25);
            assert_eq!(t.source, Source::Replay);
        }
        assert!(buf.sample("missing", 5, &mut rng).is_empty());
        assert_eq!(buf.reads(), 5);
    }
}
