use std::sync::{Arc, Mutex, RwLock};

use super::{ContinuousQuerySpec, QueryError};

/// Handle to a registered query. Specs are immutable once registered.
#[derive(Debug, Clone)]
pub struct QueryHandle {
    spec: Arc<ContinuousQuerySpec>,
}

impl QueryHandle {
    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn spec(&self) -> &Arc<ContinuousQuerySpec> {
        &self.spec
    }
}

/// Registered queries in registration order.
///
/// Writers are serialized; readers take a cheap snapshot of the current
/// list and never wait on a query's execution.
#[derive(Debug, Default)]
pub struct QueryRegistry {
    write: Mutex<()>,
    current: RwLock<Arc<Vec<QueryHandle>>>,
}

impl QueryRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, spec: ContinuousQuerySpec) -> Result<QueryHandle, QueryError> {
        let _guard = self.write.lock().unwrap();
        let snapshot = self.snapshot();
        if snapshot.iter().any(|h| h.id() == spec.id) {
            return Err(QueryError::DuplicateQueryId(spec.id));
        }
        let handle = QueryHandle { spec: Arc::new(spec) };
        let mut next = Vec::clone(&snapshot);
        next.push(handle.clone());
        *self.current.write().unwrap() = Arc::new(next);
        Ok(handle)
    }

    pub fn snapshot(&self) -> Arc<Vec<QueryHandle>> {
        self.current.read().unwrap().clone()
    }

    pub fn list(&self) -> Vec<String> {
        self.snapshot().iter().map(|h| h.id().to_string()).collect()
    }

    pub fn get(&self, id: &str) -> Option<QueryHandle> {
        self.snapshot().iter().find(|h| h.id() == id).cloned()
    }
}
