use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};

use crate::clock::to_chrono;

/// Requests-per-window budget.
///
/// A bucket of `limit` tokens where each spent token comes back exactly one
/// window after it was spent. That keeps every sliding window at or below
/// `limit` dispatches for any call pattern, which a bucket that trickles
/// tokens back continuously does not guarantee.
///
/// Callers reserve a dispatch slot under the lock and then sleep until it,
/// so waiting never holds the lock and slots are handed out first come,
/// first served.
#[derive(Debug)]
pub struct RateLimiter {
    limit: usize,
    window: chrono::Duration,
    // Most recent `limit` reserved slots, oldest first.
    slots: Mutex<VecDeque<DateTime<Utc>>>,
}

impl RateLimiter {
    pub fn new(limit: u32, window: Duration) -> Self {
        let limit = limit.max(1) as usize;
        Self {
            limit,
            window: to_chrono(window),
            slots: Mutex::new(VecDeque::with_capacity(limit)),
        }
    }

    pub fn per_minute(rpm: u32) -> Self {
        Self::new(rpm, Duration::from_secs(60))
    }

    /// Reserve the earliest admissible slot at or after `now`. Fails without
    /// reserving anything if that slot is more than `max_wait` away, returning
    /// the wait that would have been needed.
    pub fn reserve(
        &self,
        now: DateTime<Utc>,
        max_wait: Duration,
    ) -> Result<DateTime<Utc>, Duration> {
        let mut slots = self.slots.lock().unwrap();
        // Slots are handed out in non-decreasing order; the k-th slot is at
        // least one window after the (k - limit)-th.
        let mut slot = now.max(slots.back().copied().unwrap_or(now));
        if slots.len() == self.limit {
            slot = slot.max(slots[0] + self.window);
        }
        let wait = (slot - now).to_std().unwrap_or_default();
        if wait > max_wait {
            return Err(wait);
        }
        if slots.len() == self.limit {
            slots.pop_front();
        }
        slots.push_back(slot);
        Ok(slot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{Clock, SimulatedClock};

    fn max_in_window(times: &[DateTime<Utc>], window: chrono::Duration) -> usize {
        times
            .iter()
            .map(|t| {
                times
                    .iter()
                    .filter(|u| **u >= *t && **u < *t + window)
                    .count()
            })
            .max()
            .unwrap_or(0)
    }

    #[test]
    fn two_per_minute_delays_the_rest() {
        let clock = SimulatedClock::at_epoch();
        let start = clock.now();
        let lim = RateLimiter::per_minute(2);
        let mut times = Vec::new();
        for _ in 0..5 {
            let slot = lim.reserve(clock.now(), Duration::from_secs(3600)).unwrap();
            clock.sleep_until(slot);
            times.push(slot);
        }
        let offsets: Vec<i64> = times.iter().map(|t| (*t - start).num_seconds()).collect();
        assert_eq!(offsets, vec![0, 0, 60, 60, 120]);
        assert!(max_in_window(&times, chrono::Duration::seconds(60)) <= 2);
    }

    #[test]
    fn refuses_when_wait_exceeds_bound() {
        let clock = SimulatedClock::at_epoch();
        let lim = RateLimiter::per_minute(1);
        lim.reserve(clock.now(), Duration::ZERO).unwrap();
        let err = lim
            .reserve(clock.now(), Duration::from_secs(30))
            .unwrap_err();
        assert_eq!(err, Duration::from_secs(60));
        // The refused call reserved nothing.
        let slot = lim.reserve(clock.now(), Duration::from_secs(60)).unwrap();
        assert_eq!((slot - clock.now()).num_seconds(), 60);
    }

    #[test]
    fn spread_out_calls_are_not_delayed() {
        let clock = SimulatedClock::at_epoch();
        let lim = RateLimiter::per_minute(3);
        for _ in 0..10 {
            let now = clock.now();
            assert_eq!(lim.reserve(now, Duration::ZERO).unwrap(), now);
            clock.advance(Duration::from_secs(20));
        }
    }

    proptest::proptest! {
        #[test]
        fn sliding_window_never_exceeds_limit(
            rpm in 1u32..20,
            gaps in proptest::collection::vec(0u64..40, 1..120),
        ) {
            let clock = SimulatedClock::at_epoch();
            let lim = RateLimiter::per_minute(rpm);
            let mut times = Vec::new();
            for g in gaps {
                clock.advance(Duration::from_secs(g));
                let slot = lim.reserve(clock.now(), Duration::from_secs(86_400)).unwrap();
                times.push(slot);
            }
            proptest::prop_assert!(
                max_in_window(&times, chrono::Duration::seconds(60)) <= rpm as usize
            );
        }
    }
}
