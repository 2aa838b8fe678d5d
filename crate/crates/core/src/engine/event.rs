use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::domain::{PatientRecord, ResourceId, Tick};

use super::message::ProtocolMessage;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    PatientArrival {
        patient: PatientRecord,
        resource: ResourceId,
    },
    ServiceComplete {
        resource: ResourceId,
    },
    MessageDelivery(ProtocolMessage),
}

impl EventKind {
    pub fn label(&self) -> &'static str {
        match self {
            EventKind::PatientArrival { .. } => "PatientArrival",
            EventKind::ServiceComplete { .. } => "ServiceComplete",
            EventKind::MessageDelivery(_) => "MessageDelivery",
        }
    }
}

/// Scheduled event. Ordered by `(at, seq)` only.
#[derive(Debug, Clone)]
pub struct SimEvent {
    pub at: Tick,
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialEq for SimEvent {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl Eq for SimEvent {}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// Min-queue of events with a monotone sequence counter for tie-breaks.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<SimEvent>>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn schedule(&mut self, at: Tick, kind: EventKind) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(SimEvent { at, seq, kind }));
        seq
    }

    pub fn pop(&mut self) -> Option<SimEvent> {
        self.heap.pop().map(|Reverse(e)| e)
    }

    pub fn peek_time(&self) -> Option<Tick> {
        self.heap.peek().map(|Reverse(e)| e.at)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SimEvent> {
        self.heap.iter().map(|Reverse(e)| e)
    }
}
