//! Shared plumbing for remote model backends: the error type, the retry
//! policy, and HTTP clients for the chat, embedding and fill-mask services.

use std::thread;
use std::time::Duration;

pub mod http;

pub use http::{HttpChatClient, HttpEmbedder, HttpFillMask};

#[derive(Debug, Clone, thiserror::Error)]
pub enum BackendError {
    #[error("{endpoint}: request failed: {message}")]
    Transport { endpoint: String, message: String },
    #[error("{endpoint}: HTTP {status}: {body}")]
    Status {
        endpoint: String,
        status: u16,
        body: String,
    },
    #[error("{endpoint}: invalid response: {message}")]
    InvalidResponse { endpoint: String, message: String },
    #[error("{backend}: {message}")]
    Failed { backend: String, message: String },
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted {
        attempts: u32,
        #[source]
        last: Box<BackendError>,
    },
}

impl BackendError {
    /// Client errors other than 408/429 are not worth repeating.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Status { status, .. } => {
                matches!(status, 408 | 429) || *status >= 500
            }
            BackendError::Exhausted { .. } => false,
            _ => true,
        }
    }
}

/// Exponential backoff: attempt `k` (0-based) waits `initial_delay * multiplier^(k-1)`
/// before running, up to `max_attempts` attempts in total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_delay: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_delay: Duration::from_millis(250),
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Same attempt count without sleeping; for tests and mocks.
    pub fn immediate() -> Self {
        RetryPolicy {
            initial_delay: Duration::ZERO,
            ..Self::default()
        }
    }

    pub fn delay_before(&self, attempt: u32) -> Duration {
        if attempt == 0 {
            return Duration::ZERO;
        }
        self.initial_delay
            .mul_f64(self.multiplier.powi(attempt as i32 - 1))
    }

    /// Run `op` until it succeeds, fails with a non-retryable error, or the
    /// attempts are used up.
    pub fn run<T>(
        &self,
        label: &str,
        mut op: impl FnMut(u32) -> Result<T, BackendError>,
    ) -> Result<T, BackendError> {
        let attempts = self.max_attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            let delay = self.delay_before(attempt);
            if !delay.is_zero() {
                thread::sleep(delay);
            }
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if !e.is_retryable() => return Err(e),
                Err(e) => {
                    tracing::warn!(%label, attempt = attempt + 1, error = %e, "backend call failed");
                    last = Some(e);
                }
            }
        }
        Err(BackendError::Exhausted {
            attempts,
            last: Box::new(last.expect("at least one attempt ran")),
        })
    }
}
