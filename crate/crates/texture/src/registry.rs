//! Loaded datasets and their derived columns.

use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use lru::LruCache;
use texture_core::{DerivedColumn, DerivedSet, NormalizedStore};

/// Derived columns kept per dataset; the least recently used is evicted first.
pub const DERIVED_CAPACITY: usize = 32;

pub struct Dataset {
    store: Arc<NormalizedStore>,
    derived: Mutex<LruCache<String, Arc<DerivedColumn>>>,
}

impl Dataset {
    pub fn new(store: NormalizedStore) -> Self {
        Self::with_capacity(store, DERIVED_CAPACITY)
    }

    pub fn with_capacity(store: NormalizedStore, capacity: usize) -> Self {
        let capacity = NonZeroUsize::new(capacity).unwrap_or(NonZeroUsize::MIN);
        Self {
            store: Arc::new(store),
            derived: Mutex::new(LruCache::new(capacity)),
        }
    }

    pub fn name(&self) -> &str {
        self.store.name()
    }

    pub fn store(&self) -> &Arc<NormalizedStore> {
        &self.store
    }

    /// Stamps and registers a derived column, replacing any with the same handle.
    pub fn register(&self, mut column: DerivedColumn) -> Arc<DerivedColumn> {
        column.created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let column = Arc::new(column);
        self.lock().put(column.handle.clone(), column.clone());
        column
    }

    /// Every live derived column. Handles in `used` count as a use for eviction.
    pub fn derived_snapshot<'a>(&self, used: impl IntoIterator<Item = &'a str>) -> DerivedSet {
        let mut cache = self.lock();
        for handle in used {
            cache.get(handle);
        }
        cache.iter().map(|(_, c)| c.clone()).collect()
    }

    pub fn derived_handles(&self) -> Vec<String> {
        self.lock().iter().map(|(h, _)| h.clone()).collect()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, LruCache<String, Arc<DerivedColumn>>> {
        // A panic while holding the lock cannot leave the cache half-updated.
        self.derived.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("dataset `{0}` is already loaded")]
pub struct DuplicateDataset(pub String);

/// Datasets in load order.
#[derive(Default)]
pub struct Registry {
    datasets: Vec<Arc<Dataset>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, dataset: Dataset) -> Result<Arc<Dataset>, DuplicateDataset> {
        if self.get(dataset.name()).is_some() {
            return Err(DuplicateDataset(dataset.name().to_string()));
        }
        let d = Arc::new(dataset);
        self.datasets.push(d.clone());
        Ok(d)
    }

    pub fn get(&self, name: &str) -> Option<&Arc<Dataset>> {
        self.datasets.iter().find(|d| d.name() == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<Dataset>> {
        self.datasets.iter()
    }

    pub fn len(&self) -> usize {
        self.datasets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.datasets.is_empty()
    }
}
