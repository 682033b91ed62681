use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::identity::Timestamp;

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> Timestamp;
}

/// Wall-clock epoch milliseconds.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> Timestamp {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
    }
}

/// A clock that advances by one millisecond per reading, or by hand.
/// Runs that share a seed and a call sequence see identical timestamps.
#[derive(Debug, Default)]
pub struct LogicalClock {
    ms: AtomicU64,
}

impl LogicalClock {
    pub fn starting_at(ms: Timestamp) -> Self {
        LogicalClock { ms: AtomicU64::new(ms) }
    }

    pub fn advance(&self, ms: u64) {
        self.ms.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for LogicalClock {
    fn now_ms(&self) -> Timestamp {
        self.ms.fetch_add(1, Ordering::SeqCst) + 1
    }
}
