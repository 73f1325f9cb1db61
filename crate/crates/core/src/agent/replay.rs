//! Episode replay buffer with hindsight goal relabeling.
//!
//! Episodes are stored whole so relabeling can reach into each transition's
//! future; eviction drops the oldest episode first. No reward is ever stored —
//! rewards are recomputed from the live ensemble at training time.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::envs::{goal_projection, Action, EnvState};
use crate::GoalPoint;

/// One complete episode: `states.len() == actions.len() + 1`, with the goal
/// that was active at each step (goal switching can change it mid-episode).
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub states: Vec<EnvState>,
    pub actions: Vec<Action>,
    pub goals: Vec<GoalPoint>,
    pub terminals: Vec<bool>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn validate(&self) {
        assert_eq!(self.states.len(), self.actions.len() + 1, "episode shape mismatch");
        assert_eq!(self.goals.len(), self.actions.len());
        assert_eq!(self.terminals.len(), self.actions.len());
    }
}

/// Reference to one stored transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionRef {
    pub episode: usize,
    pub t: usize,
}

/// A transition after (possible) hindsight relabeling. Every non-goal field
/// is read straight from the stored episode.
#[derive(Debug, Clone, Copy)]
pub struct RelabeledRef {
    pub r: TransitionRef,
    pub goal: GoalPoint,
    pub relabeled: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    episodes: VecDeque<Episode>,
    capacity_transitions: usize,
    transitions: usize,
    /// Prefix sums of episode lengths for uniform transition sampling.
    cumulative: Vec<usize>,
    cumulative_dirty: bool,
}

impl ReplayBuffer {
    pub fn new(capacity_transitions: usize) -> Self {
        assert!(capacity_transitions > 0);
        ReplayBuffer {
            episodes: VecDeque::new(),
            capacity_transitions,
            transitions: 0,
            cumulative: Vec::new(),
            cumulative_dirty: false,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity_transitions
    }

    pub fn transition_count(&self) -> usize {
        self.transitions
    }

    pub fn episode_count(&self) -> usize {
        self.episodes.len()
    }

    pub fn episode(&self, idx: usize) -> &Episode {
        &self.episodes[idx]
    }

    pub fn episodes(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter()
    }

    /// Appends a whole episode, evicting oldest-first once the transition
    /// capacity is exceeded.
    pub fn push_episode(&mut self, episode: Episode) {
        episode.validate();
        assert!(!episode.is_empty(), "refusing to store an empty episode");
        self.transitions += episode.len();
        self.episodes.push_back(episode);
        while self.transitions > self.capacity_transitions && self.episodes.len() > 1 {
            let dropped = self.episodes.pop_front().expect("nonempty");
            self.transitions -= dropped.len();
        }
        self.cumulative_dirty = true;
    }

    fn refresh_cumulative(&mut self) {
        if !self.cumulative_dirty {
            return;
        }
        self.cumulative.clear();
        let mut acc = 0;
        for ep in &self.episodes {
            acc += ep.len();
            self.cumulative.push(acc);
        }
        self.cumulative_dirty = false;
    }

    /// Uniform sample (with replacement) over all stored transitions.
    pub fn sample_refs(&mut self, rng: &mut ChaCha8Rng, n: usize) -> Vec<TransitionRef> {
        assert!(self.transitions > 0, "cannot sample from an empty buffer");
        self.refresh_cumulative();
        (0..n)
            .map(|_| {
                let flat = rng.gen_range(0..self.transitions);
                let episode = self.cumulative.partition_point(|&c| c <= flat);
                let before = if episode == 0 { 0 } else { self.cumulative[episode - 1] };
                TransitionRef { episode, t: flat - before }
            })
            .collect()
    }

    /// Every achieved goal-space point in storage order (all states of all
    /// episodes, initial states included). This is the candidate pool for the
    /// curriculum matcher and the negative-label pool for the classifier.
    pub fn achieved_points(&self) -> Vec<GoalPoint> {
        self.episodes
            .iter()
            .flat_map(|ep| ep.states.iter().map(goal_projection))
            .collect()
    }
}

/// Hindsight relabeling, strategy "future": with probability `ratio` a
/// transition's goal is replaced by the projection of a uniformly chosen
/// strictly-future state of its own episode. Rewards are recomputed from the
/// ensemble after substitution, never here.
pub fn relabel(
    buffer: &ReplayBuffer,
    refs: &[TransitionRef],
    ratio: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<RelabeledRef> {
    refs.iter()
        .map(|&r| {
            let ep = buffer.episode(r.episode);
            if ratio > 0.0 && rng.gen_range(0.0..1.0) < ratio {
                // Future states are s_{t+1}..=s_T; for the last transition the
                // only choice is its own next state.
                let future = rng.gen_range(r.t + 1..ep.states.len());
                RelabeledRef { r, goal: goal_projection(&ep.states[future]), relabeled: true }
            } else {
                RelabeledRef { r, goal: ep.goals[r.t], relabeled: false }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn episode_line(len: usize, x0: f64, goal: GoalPoint) -> Episode {
        // Straight-line episode along x starting at x0.
        let states: Vec<EnvState> = (0..=len)
            .map(|t| EnvState {
                pos: [x0 + t as f64, 0.0],
                heading: 0.0,
                vel: 1.0,
                ang_vel: 0.0,
                step: t,
            })
            .collect();
        Episode {
            states,
            actions: vec![Action { v: 1.0, omega: 0.0 }; len],
            goals: vec![goal; len],
            terminals: (0..len).map(|t| t + 1 == len).collect(),
        }
    }

    #[test]
    fn eviction_drops_oldest_episode_first() {
        let mut buf = ReplayBuffer::new(25);
        for k in 0..4 {
            buf.push_episode(episode_line(10, k as f64 * 100.0, [0.0, 0.0]));
        }
        // 40 transitions pushed into capacity 25: two oldest evicted.
        assert_eq!(buf.transition_count(), 20);
        assert_eq!(buf.episode_count(), 2);
        assert_eq!(buf.episode(0).states[0].pos[0], 200.0);
    }

    #[test]
    fn sampling_covers_all_episodes() {
        let mut buf = ReplayBuffer::new(1000);
        for k in 0..5 {
            buf.push_episode(episode_line(7, k as f64, [0.0, 0.0]));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let refs = buf.sample_refs(&mut rng, 2000);
        let mut seen = [false; 5];
        for r in &refs {
            assert!(r.t < 7);
            seen[r.episode] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn relabel_ratio_zero_keeps_goals_bitwise() {
        let mut buf = ReplayBuffer::new(100);
        buf.push_episode(episode_line(6, 0.0, [42.0, -7.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let refs = buf.sample_refs(&mut rng, 32);
        let out = relabel(&buf, &refs, 0.0, &mut rng);
        assert_eq!(out.len(), refs.len());
        for (s, r) in out.iter().zip(refs.iter()) {
            assert_eq!(s.r, *r);
            assert_eq!(s.goal, [42.0, -7.0]);
            assert!(!s.relabeled);
        }
    }

    #[test]
    fn relabel_final_transition_uses_its_next_state() {
        let mut buf = ReplayBuffer::new(100);
        buf.push_episode(episode_line(5, 0.0, [99.0, 99.0]));
        let refs = [TransitionRef { episode: 0, t: 4 }];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = relabel(&buf, &refs, 1.0, &mut rng);
        // Only future state of the last transition is s_5 = (5, 0).
        assert_eq!(out[0].goal, [5.0, 0.0]);
        assert!(out[0].relabeled);
    }

    #[test]
    fn relabeled_goals_lie_on_the_source_trajectory() {
        let mut buf = ReplayBuffer::new(500);
        for k in 0..3 {
            buf.push_episode(episode_line(9, 10.0 * k as f64, [0.0, 0.0]));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let refs = buf.sample_refs(&mut rng, 200);
        let out = relabel(&buf, &refs, 1.0, &mut rng);
        for s in &out {
            let ep = buf.episode(s.r.episode);
            let on_trajectory = ep
                .states
                .iter()
                .any(|st| goal_projection(st) == s.goal);
            assert!(on_trajectory, "goal {:?} not on source episode", s.goal);
            // Stronger: it must come from a strictly-future step.
            let future = ep.states[s.r.t + 1..]
                .iter()
                .any(|st| goal_projection(st) == s.goal);
            assert!(future);
        }
    }
}
