use std::collections::VecDeque;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

/// Trainer games needed in the window before a snapshot can be taken.
pub const WARMUP_GAMES: usize = 100;

/// Assumed win rate against a snapshot with no recorded results.
pub const PRIOR_WIN_RATE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoolError {
    #[error("the opponent pool is empty")]
    Empty,
    #[error("unknown snapshot {0:?}")]
    Unknown(String),
    #[error("snapshot {0:?} is already in the pool")]
    Duplicate(String),
    #[error("result must lie in [0, 1], got {0}")]
    Result(f64),
}

/// The most recent results, oldest evicted first. Scores: win 1, draw 0.5,
/// loss 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultWindow {
    capacity: usize,
    results: VecDeque<f64>,
    sum: f64,
}

impl ResultWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        Self {
            capacity,
            results: VecDeque::with_capacity(capacity),
            sum: 0.0,
        }
    }

    pub fn push(&mut self, score: f64) {
        if self.results.len() == self.capacity {
            self.results.pop_front();
        }
        self.results.push_back(score);
        // Recomputed rather than updated so rounding never drifts.
        self.sum = self.results.iter().sum();
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.results.is_empty()).then(|| self.sum / self.results.len() as f64)
    }

    pub fn clear(&mut self) {
        self.results.clear();
        self.sum = 0.0;
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.results.iter().copied()
    }
}

/// Sampling probabilities from the trainer's win rates against each
/// snapshot: `p_i = (1 - w_i / sum_j w_j) / (n - 1)`, so snapshots the
/// trainer beats least are drawn most. One snapshot gets probability 1;
/// all-zero win rates give a uniform draw.
pub fn opponent_probabilities(win_rates: &[f64]) -> Vec<f64> {
    let n = win_rates.len();
    if n <= 1 {
        return vec![1.0; n];
    }
    let total: f64 = win_rates.iter().sum();
    if total <= 0.0 {
        return vec![1.0 / n as f64; n];
    }
    win_rates.iter().map(|w| (1.0 - w / total) / (n - 1) as f64).collect()
}

#[derive(Clone, Debug, PartialEq)]
struct Entry {
    id: String,
    results: ResultWindow,
}

/// Frozen opponents with the trainer's recent results against each.
#[derive(Clone, Debug, PartialEq)]
pub struct OpponentPool {
    capacity: usize,
    entries: Vec<Entry>,
}

impl OpponentPool {
    /// `capacity` results are kept per snapshot.
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, id: impl Into<String>) -> Result<(), PoolError> {
        let id = id.into();
        if self.entries.iter().any(|e| e.id == id) {
            return Err(PoolError::Duplicate(id));
        }
        self.entries.push(Entry {
            id,
            results: ResultWindow::new(self.capacity),
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    fn entry(&self, id: &str) -> Result<&Entry, PoolError> {
        self.entries.iter().find(|e| e.id == id).ok_or_else(|| PoolError::Unknown(id.into()))
    }

    /// Trainer's mean score against `id`; the prior when nothing is
    /// recorded yet.
    pub fn win_rate(&self, id: &str) -> Result<f64, PoolError> {
        Ok(self.entry(id)?.results.mean().unwrap_or(PRIOR_WIN_RATE))
    }

    pub fn results(&self, id: &str) -> Result<Vec<f64>, PoolError> {
        Ok(self.entry(id)?.results.iter().collect())
    }

    pub fn record_result(&mut self, id: &str, score: f64) -> Result<(), PoolError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(PoolError::Result(score));
        }
        let e = self.entries.iter_mut().find(|e| e.id == id).ok_or_else(|| PoolError::Unknown(id.into()))?;
        e.results.push(score);
        Ok(())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let w: Vec<f64> = self.entries.iter().map(|e| e.results.mean().unwrap_or(PRIOR_WIN_RATE)).collect();
        opponent_probabilities(&w)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<&str, PoolError> {
        match self.entries.len() {
            0 => Err(PoolError::Empty),
            1 => Ok(&self.entries[0].id),
            _ => {
                let p = self.probabilities();
                // A snapshot at probability 0 (the only one beaten) must
                // never be drawn; WeightedIndex honors zero weights.
                let dist = WeightedIndex::new(&p).expect("probabilities sum to 1");
                Ok(&self.entries[dist.sample(rng)].id)
            }
        }
    }
}

/// Snapshot rule: at least `warmup` games in the trainer's window and a
/// mean score of at least `threshold`.
pub fn snapshot_due(window: &ResultWindow, threshold: f64, warmup: usize) -> bool {
    window.len() >= warmup.max(1) && window.mean().is_some_and(|m| m >= threshold - 1e-12)
}
