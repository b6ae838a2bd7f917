use std::thread;
use std::time::Duration;

use super::BackendError;

/// Bounded exponential backoff for retryable backend failures.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            ..Self::default()
        }
    }

    pub fn delay_for(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }

    /// Runs `op`, retrying rate limits and transport failures only.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, BackendError>) -> Result<T, BackendError> {
        let mut retry = 0;
        loop {
            match op() {
                Err(e) if e.is_retryable() && retry < self.max_retries => {
                    let mut delay = self.delay_for(retry);
                    if let BackendError::RateLimited {
                        retry_after_secs: Some(s),
                    } = e
                    {
                        delay = delay.max(Duration::from_secs(s)).min(self.max_delay);
                    }
                    tracing::debug!(retry, ?delay, error = %e, "retrying backend call");
                    thread::sleep(delay);
                    retry += 1;
                }
                other => return other,
            }
        }
    }
}
