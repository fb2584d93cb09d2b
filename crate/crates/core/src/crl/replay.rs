//! Fixed-capacity FIFO replay buffer.

use ndarray::{Array1, Array2};
use rand::Rng;

use super::policy::normalize_obs;
use crate::env::{Observation, OBS_DIM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub obs: Observation,
    pub action: f64,
    pub reward: f64,
    pub cost: f64,
    pub next_obs: Observation,
}

/// A sampled minibatch with normalized observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub action: Array1<f64>,
    pub reward: Array1<f64>,
    pub cost: Array1<f64>,
    pub next_obs: Array2<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.action.len()
    }

    pub fn is_empty(&self) -> bool {
        self.action.is_empty()
    }

    pub fn from_records(records: &[Record]) -> Self {
        let n = records.len();
        let norm = |f: fn(&Record) -> &Observation| {
            Array2::from_shape_vec(
                (n, OBS_DIM),
                records.iter().flat_map(|r| normalize_obs(f(r))).collect(),
            )
            .expect("rows are OBS_DIM wide")
        };
        Self {
            obs: norm(|r| &r.obs),
            action: records.iter().map(|r| r.action).collect(),
            reward: records.iter().map(|r| r.reward).collect(),
            cost: records.iter().map(|r| r.cost).collect(),
            next_obs: norm(|r| &r.next_obs),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<Record>,
    /// Slot the next push overwrites once full.
    head: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::param("buffer_capacity", "must be at least 1"));
        }
        Ok(Self {
            capacity,
            data: Vec::new(),
            head: 0,
            pushed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, r: Record) {
        if self.data.len() < self.capacity {
            self.data.push(r);
        } else {
            self.data[self.head] = r;
        }
        self.head = (self.head + 1) % self.capacity;
        self.pushed += 1;
    }

    /// Records from oldest to newest.
    pub fn iter_fifo(&self) -> impl Iterator<Item = &Record> {
        let split = if self.data.len() < self.capacity { 0 } else { self.head };
        self.data[split..].iter().chain(&self.data[..split])
    }

    /// Uniform sample with replacement from the filled region.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        if self.data.is_empty() {
            return Err(Error::Empty("replay buffer"));
        }
        if n == 0 {
            return Err(Error::Empty("batch"));
        }
        let picked: Vec<Record> = (0..n)
            .map(|_| self.data[rng.random_range(0..self.data.len())])
            .collect();
        Ok(Batch::from_records(&picked))
    }
}
