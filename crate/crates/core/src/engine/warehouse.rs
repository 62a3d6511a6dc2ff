use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use super::Value;

/// Counters of a [`Warehouse`]. `hits + misses` is the number of lookups.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WarehouseStats {
    pub hits: u64,
    pub misses: u64,
    pub stores: u64,
}

/// Memo of computed identifier values keyed by context key.
///
/// Safe to share between threads. A key is written at most once: the first
/// store wins and later stores of the same key return the stored value.
#[derive(Debug, Default)]
pub struct Warehouse {
    memo: RwLock<HashMap<String, Value>>,
    hits: AtomicU64,
    misses: AtomicU64,
    stores: AtomicU64,
}

impl Warehouse {
    pub fn new() -> Self {
        Warehouse::default()
    }

    pub fn get(&self, key: &str) -> Option<Value> {
        let found = self.memo.read().expect("warehouse lock").get(key).copied();
        match found {
            Some(_) => self.hits.fetch_add(1, Ordering::Relaxed),
            None => self.misses.fetch_add(1, Ordering::Relaxed),
        };
        found
    }

    /// Stores `value` under `key` unless already present; returns the value
    /// now held for `key`.
    pub fn store(&self, key: String, value: Value) -> Value {
        let mut memo = self.memo.write().expect("warehouse lock");
        match memo.get(&key) {
            Some(existing) => *existing,
            None => {
                memo.insert(key, value);
                self.stores.fetch_add(1, Ordering::Relaxed);
                value
            }
        }
    }

    pub fn len(&self) -> usize {
        self.memo.read().expect("warehouse lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> WarehouseStats {
        WarehouseStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
            stores: self.stores.load(Ordering::Relaxed),
        }
    }

    /// Drops every entry and resets the counters.
    pub fn clear(&self) {
        self.memo.write().expect("warehouse lock").clear();
        self.hits.store(0, Ordering::Relaxed);
        self.misses.store(0, Ordering::Relaxed);
        self.stores.store(0, Ordering::Relaxed);
    }
}
