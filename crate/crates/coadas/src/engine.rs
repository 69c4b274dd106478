//! Deterministic fixed-tick clock, the timed event queue used for message
//! deliveries, and seeded random streams.
//!
//! Within-tick ordering is owned by the world step loop: (1) deliver due
//! events in (deliver_at, sequence) order, (2) per-vehicle protocol logic in
//! ascending vehicle id, (3) mobility integration, (4) trace emission.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use ordered_float::NotNan;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Default tick length, seconds. Matches the 100 ms CAM latency bound and the
/// 10 Hz beacon cap, so both are exactly representable in ticks.
pub const DEFAULT_DT: f64 = 0.1;

/// Slack used when comparing scheduled times against the tick clock.
pub const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("negative delay {0}")]
    NegativeDelay(f64),
    #[error("non-finite time")]
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct SimClock {
    tick: u64,
    dt: f64,
}

impl SimClock {
    pub fn new(dt: f64) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        Self { tick: 0, dt }
    }

    pub fn now(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn advance(&mut self) {
        self.tick += 1;
    }
}

#[derive(Debug)]
struct Scheduled<T> {
    deliver_at: NotNan<f64>,
    sequence: u64,
    payload: T,
}

impl<T> PartialEq for Scheduled<T> {
    fn eq(&self, other: &Self) -> bool {
        self.deliver_at == other.deliver_at && self.sequence == other.sequence
    }
}
impl<T> Eq for Scheduled<T> {}
impl<T> PartialOrd for Scheduled<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Scheduled<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.deliver_at, self.sequence).cmp(&(other.deliver_at, other.sequence))
    }
}

/// Min-heap of timed events with insertion-order tie breaking.
#[derive(Debug)]
pub struct EventQueue<T> {
    heap: BinaryHeap<Reverse<Scheduled<T>>>,
    next_sequence: u64,
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        Self { heap: BinaryHeap::new(), next_sequence: 0 }
    }
}

impl<T> EventQueue<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Schedule `payload` for delivery `delay` seconds after `now`. The event
    /// is handed out by the first `pop_due` whose tick time reaches the
    /// target.
    pub fn schedule(&mut self, now: f64, delay: f64, payload: T) -> Result<(), ScheduleError> {
        if !delay.is_finite() || !now.is_finite() {
            return Err(ScheduleError::NonFinite);
        }
        if delay < 0.0 {
            return Err(ScheduleError::NegativeDelay(delay));
        }
        let deliver_at = NotNan::new(now + delay).map_err(|_| ScheduleError::NonFinite)?;
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Reverse(Scheduled { deliver_at, sequence, payload }));
        Ok(())
    }

    /// Pop the next event due at or before `now`, in (deliver_at, sequence)
    /// order.
    pub fn pop_due(&mut self, now: f64) -> Option<(f64, T)> {
        let due = self
            .heap
            .peek()
            .map(|Reverse(s)| s.deliver_at.into_inner() <= now + TIME_EPS)
            .unwrap_or(false);
        if due {
            let Reverse(s) = self.heap.pop().unwrap();
            Some((s.deliver_at.into_inner(), s.payload))
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// Derive an independent random stream from the scenario seed and a fixed
/// consumer label. Adding a consumer does not perturb the draws of others.
pub fn derive_rng(seed: u64, label: &str) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(key)
}
