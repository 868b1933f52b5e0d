use std::sync::Arc;

use crate::class_model::Request;
use crate::service::{Classifier, ServiceError, ServiceOp};

/// A request as issued by a client, before it is ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientRequest {
    pub client_id: u32,
    pub client_seq: u64,
    pub op: ServiceOp,
}

/// The totally ordered stream every replica consumes. Entries are never
/// changed once appended and sequence numbers are dense from 0.
#[derive(Debug, Clone, Default)]
pub struct BroadcastLog {
    entries: Vec<Arc<Request>>,
}

impl BroadcastLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, seq: u64) -> Option<&Arc<Request>> {
        self.entries.get(seq as usize)
    }

    /// Entries from `seq` onwards.
    pub fn replay_from(&self, seq: u64) -> &[Arc<Request>] {
        &self.entries[(seq as usize).min(self.entries.len())..]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<Request>> {
        self.entries.iter()
    }

    /// Owned copies of every entry, in order.
    pub fn requests(&self) -> Vec<Request> {
        self.entries.iter().map(|r| (**r).clone()).collect()
    }

    pub fn ops(&self) -> impl Iterator<Item = &ServiceOp> {
        self.entries.iter().map(|r| &r.payload)
    }

    /// Classifies and appends one request, returning the stored entry.
    pub fn append(
        &mut self,
        req: ClientRequest,
        classifier: &Classifier,
    ) -> Result<Arc<Request>, ServiceError> {
        let class_id = classifier.class_of(&req.op)?;
        let entry = Arc::new(Request {
            global_seq: self.entries.len() as u64,
            client_id: req.client_id,
            client_seq: req.client_seq,
            class_id,
            payload: req.op,
        });
        self.entries.push(Arc::clone(&entry));
        Ok(entry)
    }
}

/// Orders a batch in the given order and appends it to `log`.
pub fn sequence(
    log: &mut BroadcastLog,
    batch: &[ClientRequest],
    classifier: &Classifier,
) -> Result<Vec<Arc<Request>>, ServiceError> {
    batch.iter().map(|r| log.append(*r, classifier)).collect()
}
