//! Time sources and request pacing.

use std::cell::Cell;
use std::collections::VecDeque;
use std::rc::Rc;
use std::time::{Duration, Instant};

/// Monotonic time plus the ability to wait.
pub trait Clock {
    /// Time elapsed since the clock's origin.
    fn now(&self) -> Duration;
    fn sleep(&mut self, d: Duration);
}

/// Wall-clock time.
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&mut self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Virtual time that only moves when slept on. Clones share the same time.
#[derive(Clone, Default)]
pub struct ManualClock {
    now: Rc<Cell<Duration>>,
}

impl ManualClock {
    pub fn advance(&self, d: Duration) {
        self.now.set(self.now.get() + d);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> Duration {
        self.now.get()
    }

    fn sleep(&mut self, d: Duration) {
        self.advance(d);
    }
}

/// Spaces requests at least `1/rate` seconds apart and, for rates of one
/// or more, admits at most `floor(rate)` requests in any one-second window.
pub struct RateLimiter {
    rate: f64,
    recent: VecDeque<Duration>,
}

const WINDOW: Duration = Duration::from_secs(1);

impl RateLimiter {
    /// `rate` is in requests per second and must be positive.
    pub fn new(rate: f64) -> Self {
        assert!(rate > 0.0 && rate.is_finite(), "rate must be positive");
        RateLimiter {
            rate,
            recent: VecDeque::new(),
        }
    }

    fn per_window(&self) -> usize {
        (self.rate.floor() as usize).max(1)
    }

    /// Blocks on `clock` until a request may be issued, then records it.
    /// Returns the issue time.
    pub fn acquire(&mut self, clock: &mut dyn Clock) -> Duration {
        let spacing = Duration::from_secs_f64(1.0 / self.rate);
        loop {
            let now = clock.now();
            while self.recent.front().is_some_and(|&t| t + WINDOW <= now) {
                self.recent.pop_front();
            }
            let mut ready = now;
            if let Some(&last) = self.recent.back() {
                ready = ready.max(last + spacing);
            }
            if self.recent.len() >= self.per_window() {
                ready = ready.max(self.recent[self.recent.len() - self.per_window()] + WINDOW);
            }
            if ready <= now {
                self.recent.push_back(now);
                return now;
            }
            clock.sleep(ready - now);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Largest number of issue times inside any half-open one-second window.
    fn max_in_window(times: &[Duration]) -> usize {
        (0..times.len())
            .map(|i| times[i..].iter().take_while(|&&t| t < times[i] + WINDOW).count())
            .max()
            .unwrap_or(0)
    }

    #[test]
    fn manual_clock_advances_on_sleep() {
        let mut c = ManualClock::default();
        let shared = c.clone();
        c.sleep(Duration::from_millis(250));
        assert_eq!(shared.now(), Duration::from_millis(250));
    }

    #[test]
    fn spacing_at_two_per_second() {
        let mut clock = ManualClock::default();
        let mut rl = RateLimiter::new(2.0);
        let times: Vec<_> = (0..5).map(|_| rl.acquire(&mut clock)).collect();
        assert_eq!(times[1] - times[0], Duration::from_millis(500));
        assert_eq!(times[4], Duration::from_secs(2));
    }

    proptest! {
        #[test]
        fn never_exceeds_rate(rate in 0.2f64..12.0, gaps in prop::collection::vec(0u64..700, 1..40)) {
            let mut clock = ManualClock::default();
            let mut rl = RateLimiter::new(rate);
            let mut times = Vec::new();
            for g in gaps {
                clock.advance(Duration::from_millis(g));
                times.push(rl.acquire(&mut clock));
            }
            let spacing = Duration::from_secs_f64(1.0 / rate);
            for w in times.windows(2) {
                prop_assert!(w[1] - w[0] + Duration::from_nanos(1) >= spacing);
            }
            if rate >= 1.0 {
                prop_assert!(max_in_window(&times) as f64 <= rate);
            }
        }
    }
}
