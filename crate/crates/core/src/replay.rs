//! Experience replay with episode-aware subsequence sampling.

use std::collections::VecDeque;

use ndarray::Array2;
use rand::Rng;
use thiserror::Error;

use crate::env::{Action, Observation};

pub const DEFAULT_CAPACITY: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("insufficient data: no episode segment holds {needed} contiguous transitions")]
    InsufficientData { needed: usize },
    #[error("replay buffer is empty")]
    Empty,
    #[error("sequence length must be at least 1")]
    ZeroLength,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub observation: Observation,
    pub action: Action,
    pub reward: f64,
    pub next_observation: Observation,
    pub done: bool,
    pub episode: u64,
    /// Index of this transition within its episode.
    pub step: usize,
}

/// One contiguous slice of a single episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub observations: Vec<Observation>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Observation following the last transition.
    pub final_next_observation: Observation,
    /// True when the slice begins at the episode's first step.
    pub starts_episode: bool,
    pub episode: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBatch {
    pub sequences: Vec<Sequence>,
}

impl SequenceBatch {
    pub fn batch_size(&self) -> usize {
        self.sequences.len()
    }

    pub fn seq_len(&self) -> usize {
        self.sequences.first().map_or(0, |s| s.actions.len())
    }

    /// Observations at time `t` stacked as `B × obs_dim`.
    pub fn observations_at(&self, t: usize) -> Array2<f64> {
        let dim = self.sequences[0].observations[t].len();
        let mut out = Array2::zeros((self.batch_size(), dim));
        for (mut row, s) in out.rows_mut().into_iter().zip(&self.sequences) {
            row.assign(&ndarray::aview1(s.observations[t].as_slice()));
        }
        out
    }

    pub fn actions_at(&self, t: usize) -> Vec<Action> {
        self.sequences.iter().map(|s| s.actions[t]).collect()
    }

    /// Rewards at time `t` as a `B × 1` column.
    pub fn rewards_at(&self, t: usize) -> Array2<f64> {
        Array2::from_shape_fn((self.batch_size(), 1), |(b, _)| self.sequences[b].rewards[t])
    }
}

/// Maximal run of buffered transitions from one episode.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Run {
    episode: u64,
    /// Absolute index (count of all transitions ever appended) of the first.
    start: u64,
    len: usize,
    closed: bool,
}

/// FIFO transition store.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
    /// Absolute index of `items[0]`.
    head: u64,
    runs: VecDeque<Run>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "replay capacity must be at least 1");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            head: 0,
            runs: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn episodes(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.runs.iter().map(|r| r.episode).collect();
        ids.dedup();
        ids
    }

    pub fn append(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
            self.head += 1;
            let front = self.runs.front_mut().expect("non-empty buffer has a run");
            front.start += 1;
            front.len -= 1;
            if front.len == 0 {
                self.runs.pop_front();
            }
        }
        let abs = self.head + self.items.len() as u64;
        match self.runs.back_mut() {
            Some(run) if run.episode == t.episode && !run.closed => {
                run.len += 1;
                run.closed = t.done;
            }
            _ => self.runs.push_back(Run {
                episode: t.episode,
                start: abs,
                len: 1,
                closed: t.done,
            }),
        }
        self.items.push_back(t);
    }

    fn valid_starts(&self, len: usize) -> u64 {
        self.runs
            .iter()
            .map(|r| (r.len + 1).saturating_sub(len) as u64)
            .sum()
    }

    /// `batch` subsequences of `len` transitions, uniform over all start
    /// offsets that keep the slice inside one episode.
    pub fn sample_sequences<R: Rng + ?Sized>(
        &self,
        batch: usize,
        len: usize,
        rng: &mut R,
    ) -> Result<SequenceBatch, ReplayError> {
        if len == 0 {
            return Err(ReplayError::ZeroLength);
        }
        let total = self.valid_starts(len);
        if total == 0 {
            return Err(ReplayError::InsufficientData { needed: len });
        }
        let sequences = (0..batch)
            .map(|_| {
                let mut k = rng.random_range(0..total);
                let run = self
                    .runs
                    .iter()
                    .find(|r| {
                        let n = (r.len + 1).saturating_sub(len) as u64;
                        if k < n {
                            true
                        } else {
                            k -= n;
                            false
                        }
                    })
                    .expect("offset falls inside some run");
                let first = (run.start + k - self.head) as usize;
                self.slice(first, len)
            })
            .collect();
        Ok(SequenceBatch { sequences })
    }

    fn slice(&self, first: usize, len: usize) -> Sequence {
        let items = self.items.range(first..first + len);
        let mut s = Sequence {
            observations: Vec::with_capacity(len),
            actions: Vec::with_capacity(len),
            rewards: Vec::with_capacity(len),
            dones: Vec::with_capacity(len),
            final_next_observation: self.items[first + len - 1].next_observation.clone(),
            starts_episode: self.items[first].step == 0,
            episode: self.items[first].episode,
        };
        for t in items {
            s.observations.push(t.observation.clone());
            s.actions.push(t.action);
            s.rewards.push(t.reward);
            s.dones.push(t.done);
        }
        s
    }

    /// `batch` transitions drawn uniformly with replacement.
    pub fn sample_transitions<R: Rng + ?Sized>(
        &self,
        batch: usize,
        rng: &mut R,
    ) -> Result<Vec<Transition>, ReplayError> {
        if self.items.is_empty() {
            return Err(ReplayError::Empty);
        }
        Ok((0..batch)
            .map(|_| self.items[rng.random_range(0..self.items.len())].clone())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn obs(v: f64) -> Observation {
        Observation(vec![v])
    }

    fn tr(episode: u64, step: usize, len: usize) -> Transition {
        Transition {
            observation: obs(step as f64),
            action: Action::from_index(step % 5),
            reward: episode as f64 * 1000.0 + step as f64,
            next_observation: obs(step as f64 + 1.0),
            done: step + 1 == len,
            episode,
            step,
        }
    }

    fn fill(buf: &mut ReplayBuffer, episode: u64, len: usize) {
        for s in 0..len {
            buf.append(tr(episode, s, len));
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut buf = ReplayBuffer::new(2);
        assert!(buf.is_empty());
        buf.append(tr(0, 0, 10));
        assert_eq!(buf.len(), 1);
        buf.append(tr(0, 1, 10));
        buf.append(tr(0, 2, 10));
        let steps: Vec<usize> = buf.iter().map(|t| t.step).collect();
        assert_eq!(steps, vec![1, 2]);
    }

    #[test]
    fn episodes_are_tracked() {
        let mut buf = ReplayBuffer::new(100);
        fill(&mut buf, 4, 3);
        fill(&mut buf, 9, 2);
        assert_eq!(buf.episodes(), vec![4, 9]);
        let ids: Vec<u64> = buf.iter().map(|t| t.episode).collect();
        assert_eq!(ids, vec![4, 4, 4, 9, 9]);
    }

    #[test]
    fn sequence_length_equal_to_episode_has_one_offset() {
        let mut buf = ReplayBuffer::new(1000);
        fill(&mut buf, 0, 16);
        fill(&mut buf, 1, 16);
        let mut rng = stream(0, Stream::Replay);
        let batch = buf.sample_sequences(50, 16, &mut rng).unwrap();
        for s in &batch.sequences {
            assert!(s.starts_episode);
            assert_eq!(s.rewards[0], s.episode as f64 * 1000.0);
            assert!(s.dones[15]);
        }
    }

    #[test]
    fn short_episodes_are_insufficient() {
        let mut buf = ReplayBuffer::new(1000);
        for e in 0..10 {
            fill(&mut buf, e, 5);
        }
        let mut rng = stream(0, Stream::Replay);
        assert_eq!(
            buf.sample_sequences(4, 16, &mut rng).unwrap_err(),
            ReplayError::InsufficientData { needed: 16 }
        );
    }

    #[test]
    fn partially_evicted_episode_still_yields_valid_slices() {
        let mut buf = ReplayBuffer::new(30);
        fill(&mut buf, 0, 20);
        fill(&mut buf, 1, 20);
        // episode 0 keeps its last 10 transitions
        let mut rng = stream(3, Stream::Replay);
        let batch = buf.sample_sequences(500, 8, &mut rng).unwrap();
        for s in &batch.sequences {
            assert!(s.dones[..7].iter().all(|d| !d));
            let first = s.rewards[0] as usize % 1000;
            for (k, r) in s.rewards.iter().enumerate() {
                assert_eq!(*r as usize % 1000, first + k);
            }
            if s.episode == 0 {
                assert!(first >= 10);
            }
        }
    }

    #[test]
    fn transition_sampling_edge_cases() {
        let mut rng = stream(0, Stream::Replay);
        let mut buf = ReplayBuffer::new(10);
        assert_eq!(buf.sample_transitions(3, &mut rng).unwrap_err(), ReplayError::Empty);
        buf.append(tr(0, 0, 5));
        let draws = buf.sample_transitions(8, &mut rng).unwrap();
        assert!(draws.iter().all(|t| t == &draws[0]));
        assert!(buf.sample_transitions(0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn sampling_does_not_mutate() {
        let mut buf = ReplayBuffer::new(100);
        fill(&mut buf, 0, 40);
        let before: Vec<Transition> = buf.iter().cloned().collect();
        let mut rng = stream(0, Stream::Replay);
        buf.sample_sequences(10, 5, &mut rng).unwrap();
        buf.sample_transitions(10, &mut rng).unwrap();
        let after: Vec<Transition> = buf.iter().cloned().collect();
        assert_eq!(before, after);
    }

    #[test]
    fn batch_views() {
        let mut buf = ReplayBuffer::new(100);
        fill(&mut buf, 2, 10);
        let mut rng = stream(0, Stream::Replay);
        let b = buf.sample_sequences(3, 4, &mut rng).unwrap();
        assert_eq!((b.batch_size(), b.seq_len()), (3, 4));
        assert_eq!(b.observations_at(1).dim(), (3, 1));
        assert_eq!(b.rewards_at(2).dim(), (3, 1));
        assert_eq!(b.actions_at(0).len(), 3);
    }
}
