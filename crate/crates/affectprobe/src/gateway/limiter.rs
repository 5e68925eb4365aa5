//! Sliding-window rate limiter: at most `max` acquisitions inside any
//! window of the configured width.
//!
//! Stricter than a classic token bucket, which permits an initial burst of
//! up to twice the sustained rate inside the first window.

use std::collections::VecDeque;

use std::time::Duration;
use tokio::sync::Mutex;
use tokio::time::Instant;

pub struct RateLimiter {
    max: usize,
    window: Duration,
    stamps: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    pub fn new(max: u32, window: Duration) -> Self {
        Self {
            max: max.max(1) as usize,
            window,
            stamps: Mutex::new(VecDeque::new()),
        }
    }

    /// Wait until issuing one more request keeps the window under `max`.
    pub async fn acquire(&self) {
        loop {
            let wait = {
                let mut stamps = self.stamps.lock().await;
                let now = Instant::now();
                while stamps
                    .front()
                    .is_some_and(|&t| now.duration_since(t) >= self.window)
                {
                    stamps.pop_front();
                }
                if stamps.len() < self.max {
                    stamps.push_back(now);
                    return;
                }
                *stamps.front().expect("nonempty") + self.window - now
            };
            tokio::time::sleep(wait).await;
        }
    }
}
