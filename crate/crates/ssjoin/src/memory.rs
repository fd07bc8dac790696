//! Byte accountant that enforces a memory budget across threads.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use crate::error::{Error, Result};

#[derive(Debug, Default)]
struct Usage {
    in_use: u64,
    peak: u64,
}

#[derive(Debug)]
pub struct MemoryAccountant {
    limit: u64,
    usage: Mutex<Usage>,
    freed: Condvar,
}

impl MemoryAccountant {
    pub fn new(limit: u64) -> Self {
        MemoryAccountant {
            limit,
            usage: Mutex::new(Usage::default()),
            freed: Condvar::new(),
        }
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn in_use(&self) -> u64 {
        self.usage.lock().unwrap().in_use
    }

    pub fn peak(&self) -> u64 {
        self.usage.lock().unwrap().peak
    }

    fn exceeded(&self, requested: u64, in_use: u64) -> Error {
        Error::BudgetExceeded { requested, in_use, limit: self.limit }
    }

    /// Reserves `bytes` or fails immediately.
    pub fn reserve(&self, bytes: u64) -> Result<Reservation<'_>> {
        let mut u = self.usage.lock().unwrap();
        if u.in_use + bytes > self.limit {
            return Err(self.exceeded(bytes, u.in_use));
        }
        u.in_use += bytes;
        u.peak = u.peak.max(u.in_use);
        Ok(Reservation { owner: self, bytes })
    }

    /// Waits until `bytes` fit. Fails if they never can, or when `abort` is set.
    pub fn acquire(&self, bytes: u64, abort: &AtomicBool) -> Result<()> {
        let mut u = self.usage.lock().unwrap();
        if bytes > self.limit {
            return Err(self.exceeded(bytes, u.in_use));
        }
        while u.in_use + bytes > self.limit {
            if abort.load(Ordering::Relaxed) {
                return Err(self.exceeded(bytes, u.in_use));
            }
            u = self.freed.wait_timeout(u, Duration::from_millis(50)).unwrap().0;
        }
        u.in_use += bytes;
        u.peak = u.peak.max(u.in_use);
        Ok(())
    }

    pub fn release(&self, bytes: u64) {
        let mut u = self.usage.lock().unwrap();
        debug_assert!(u.in_use >= bytes);
        u.in_use -= bytes.min(u.in_use);
        self.freed.notify_all();
    }
}

/// Scoped reservation, released on drop.
#[derive(Debug)]
pub struct Reservation<'a> {
    owner: &'a MemoryAccountant,
    bytes: u64,
}

impl Reservation<'_> {
    pub fn bytes(&self) -> u64 {
        self.bytes
    }
}

impl Drop for Reservation<'_> {
    fn drop(&mut self) {
        self.owner.release(self.bytes);
    }
}
