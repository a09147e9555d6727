//! Deterministic systematic sampling of relevant-event occurrences.
//!
//! Sampling is every-k-th per event type, not probabilistic: with period
//! `p = round(1/rate)` the p-th, 2p-th, ... occurrences are traced, so a
//! replayed stream always yields the identical sampled subset and the
//! trace volume over N occurrences is exactly floor(N/p).

use std::sync::atomic::{AtomicU64, Ordering};

use dashmap::DashMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, Error, PartialEq)]
#[error("sampling rate must be within [0, 1], got {0}")]
pub struct InvalidRate(pub f64);

/// One sampling decision: the per-type occurrence index after this call
/// and whether the occurrence is traced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub occurrence: u64,
    pub sampled: bool,
}

/// Per-event-type systematic sampler. Counters advance on every call;
/// different event types never share a counter.
pub struct Sampler {
    rate_bits: AtomicU64,
    /// Sampling period; 0 encodes rate 0 (sample nothing).
    period: AtomicU64,
    counters: DashMap<String, u64>,
}

fn period_for(rate: f64) -> u64 {
    if rate == 0.0 {
        0
    } else {
        ((1.0 / rate).round() as u64).max(1)
    }
}

fn check_rate(rate: f64) -> Result<f64, InvalidRate> {
    if rate.is_finite() && (0.0..=1.0).contains(&rate) {
        Ok(rate)
    } else {
        Err(InvalidRate(rate))
    }
}

impl Sampler {
    pub fn new(rate: f64) -> Result<Self, InvalidRate> {
        let rate = check_rate(rate)?;
        Ok(Sampler {
            rate_bits: AtomicU64::new(rate.to_bits()),
            period: AtomicU64::new(period_for(rate)),
            counters: DashMap::new(),
        })
    }

    pub fn rate(&self) -> f64 {
        f64::from_bits(self.rate_bits.load(Ordering::Acquire))
    }

    /// Effective every-k-th period; `None` when the rate is 0.
    pub fn period(&self) -> Option<u64> {
        match self.period.load(Ordering::Acquire) {
            0 => None,
            p => Some(p),
        }
    }

    /// Change the rate at runtime. Counters are preserved, so subsequent
    /// decisions continue from the current per-type occurrence indices.
    pub fn set_rate(&self, rate: f64) -> Result<(), InvalidRate> {
        let rate = check_rate(rate)?;
        self.rate_bits.store(rate.to_bits(), Ordering::Release);
        self.period.store(period_for(rate), Ordering::Release);
        Ok(())
    }

    /// Count one occurrence of the event type and decide whether to trace
    /// it: true exactly when the counter is a multiple of the period.
    pub fn observe(&self, event_type_id: &str) -> Observation {
        let occurrence = {
            let mut entry = self
                .counters
                .entry(event_type_id.to_string())
                .or_insert(0);
            *entry += 1;
            *entry
        };
        let sampled = match self.period.load(Ordering::Acquire) {
            0 => false,
            p => occurrence % p == 0,
        };
        Observation {
            occurrence,
            sampled,
        }
    }

    pub fn should_sample(&self, event_type_id: &str) -> bool {
        self.observe(event_type_id).sampled
    }

    /// Current occurrence count for an event type (0 if never observed
    /// since it entered the relevance set).
    pub fn counter(&self, event_type_id: &str) -> u64 {
        self.counters.get(event_type_id).map(|c| *c).unwrap_or(0)
    }

    pub fn counters(&self) -> impl Iterator<Item = (String, u64)> + '_ {
        self.counters.iter().map(|e| (e.key().clone(), *e.value()))
    }

    /// Apply a relevance-set diff: newly added types start from a fresh
    /// counter, removed types forget theirs (so a later re-entry also
    /// starts fresh). Types present across cycles keep counting.
    pub fn sync_relevance<'a>(
        &self,
        added: impl IntoIterator<Item = &'a str>,
        removed: impl IntoIterator<Item = &'a str>,
    ) {
        for id in added {
            self.counters.insert(id.to_string(), 0);
        }
        for id in removed {
            self.counters.remove(id);
        }
    }
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn sampled_count_is_floor_n_over_p(
            rate in 0.01f64..=1.0,
            n in 0u64..5000,
        ) {
            let sampler = Sampler::new(rate).unwrap();
            let p = sampler.period().unwrap();
            let mut count = 0u64;
            for _ in 0..n {
                if sampler.observe("m").sampled {
                    count += 1;
                }
            }
            prop_assert_eq!(count, n / p);
        }

        #[test]
        fn replay_determinism(rate in 0.0f64..=1.0, n in 0u64..2000) {
            let run = |n: u64| -> Vec<u64> {
                let sampler = Sampler::new(rate).unwrap();
                (0..n)
                    .filter_map(|_| {
                        let obs = sampler.observe("m");
                        obs.sampled.then_some(obs.occurrence)
                    })
                    .collect()
            };
            prop_assert_eq!(run(n), run(n));
        }
    }
}
