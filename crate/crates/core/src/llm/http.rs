//! Retry schedule and fan-out limit shared by remote clients.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::Rng;

use super::{GatewayError, Result};

/// Exponential backoff: the k-th retry waits `initial · 2^k · (1 + jitter·u)`
/// with `u ∈ [0, 1)`. With `jitter < 1` the schedule is non-decreasing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub initial: Duration,
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: 3,
            initial: Duration::from_secs(1),
            jitter: 0.1,
        }
    }
}

impl RetryPolicy {
    pub fn max_attempts(&self) -> usize {
        self.retries as usize + 1
    }

    pub fn delay(&self, retry: u32, rng: &mut impl Rng) -> Duration {
        let base = self.initial.as_secs_f64() * 2f64.powi(retry as i32);
        let u: f64 = rng.random();
        Duration::from_secs_f64(base * (1.0 + self.jitter.clamp(0.0, 0.99) * u))
    }

    /// Runs `attempt` until it succeeds, fails permanently, or the budget is spent.
    /// `attempt` returns `Err((error, retryable))`.
    pub fn run<T>(&self, mut attempt: impl FnMut(usize) -> Result<T, (GatewayError, bool)>) -> Result<T> {
        let mut rng = rand::rng();
        let mut last = None;
        for n in 0..self.max_attempts() {
            if n > 0 {
                std::thread::sleep(self.delay(n as u32 - 1, &mut rng));
            }
            match attempt(n + 1) {
                Ok(v) => return Ok(v),
                Err((e, true)) => {
                    tracing::warn!(attempt = n + 1, error = %e, "transient gateway failure");
                    last = Some(e);
                }
                Err((e, false)) => return Err(e),
            }
        }
        let message = last.map(|e| e.to_string()).unwrap_or_default();
        Err(GatewayError::Transport {
            attempts: self.max_attempts(),
            message,
        })
    }
}

/// Counting semaphore bounding concurrent in-flight requests.
#[derive(Debug)]
pub struct Semaphore {
    available: Mutex<usize>,
    cond: Condvar,
}

pub struct SemaphorePermit<'a> {
    sem: &'a Semaphore,
}

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Semaphore {
            available: Mutex::new(permits.max(1)),
            cond: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> SemaphorePermit<'_> {
        let mut n = self.available.lock().unwrap();
        while *n == 0 {
            n = self.cond.wait(n).unwrap();
        }
        *n -= 1;
        SemaphorePermit { sem: self }
    }
}

impl Drop for SemaphorePermit<'_> {
    fn drop(&mut self) {
        *self.sem.available.lock().unwrap() += 1;
        self.sem.cond.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn backoff_is_non_decreasing_and_starts_at_initial() {
        let policy = RetryPolicy::default();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let delays: Vec<Duration> = (0..6).map(|k| policy.delay(k, &mut rng)).collect();
            assert!(delays[0] >= Duration::from_secs(1) && delays[0] < Duration::from_millis(1100));
            assert!(delays.windows(2).all(|w| w[0] <= w[1]), "{delays:?}");
        }
    }

    #[test]
    fn attempts_never_exceed_budget() {
        let policy = RetryPolicy {
            retries: 3,
            initial: Duration::from_millis(1),
            jitter: 0.1,
        };
        let mut calls = 0;
        let err = policy
            .run::<()>(|_| {
                calls += 1;
                Err((GatewayError::Decode("flaky".into()), true))
            })
            .unwrap_err();
        assert_eq!(calls, 4);
        assert!(matches!(err, GatewayError::Transport { attempts: 4, .. }));
    }

    #[test]
    fn permanent_failure_stops_immediately() {
        let policy = RetryPolicy { initial: Duration::from_millis(1), ..RetryPolicy::default() };
        let mut calls = 0;
        let err = policy
            .run::<()>(|_| {
                calls += 1;
                Err((GatewayError::Remote { status: 400, body: "bad".into() }, false))
            })
            .unwrap_err();
        assert_eq!(calls, 1);
        assert!(matches!(err, GatewayError::Remote { status: 400, .. }));
    }

    #[test]
    fn semaphore_bounds_concurrency() {
        let sem = Arc::new(Semaphore::new(2));
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (sem, active, peak) = (sem.clone(), active.clone(), peak.clone());
                std::thread::spawn(move || {
                    let _permit = sem.acquire();
                    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(5));
                    active.fetch_sub(1, Ordering::SeqCst);
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
