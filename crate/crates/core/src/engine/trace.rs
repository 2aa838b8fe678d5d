use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::domain::{CompletedTask, PatientId, PatientRecord, ResourceId, Tick, Weight};
use crate::policies::PolicyLabel;

use super::message::MessageKind;

/// One dispatched event, as written to the trace dump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub at: Tick,
    pub seq: u64,
    pub kind: &'static str,
    pub details: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientOutcome {
    pub id: PatientId,
    pub weight: Weight,
    pub hospital_arrival: Tick,
    pub due_time: Tick,
    pub completed: Vec<CompletedTask>,
    pub pending_tasks: usize,
}

impl PatientOutcome {
    pub fn from_record(p: &PatientRecord) -> Self {
        PatientOutcome {
            id: p.id,
            weight: p.weight,
            hospital_arrival: p.hospital_arrival,
            due_time: p.due_time(),
            completed: p.completed_tasks().to_vec(),
            pending_tasks: p.pending_tasks().len(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ResourceSummary {
    pub id: ResourceId,
    pub ring_index: usize,
    pub fixed_capacity: u32,
    pub busy_ticks: Tick,
    pub completions: u64,
    pub activated_at: Option<Tick>,
}

/// A group that reached its destination, with the number of protocol
/// messages delivered in the negotiation cycle that produced it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferRecord {
    pub at: Tick,
    pub source: ResourceId,
    pub destination: ResourceId,
    pub cycle: u64,
    pub group_size: usize,
    pub admitted: usize,
    pub messages: u64,
}

/// Acceptor occupancy right after a group landed. `admitted` is zero when
/// the whole group was sent back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissionRecord {
    pub at: Tick,
    pub acceptor: ResourceId,
    pub admitted: usize,
    pub occupancy_after: u32,
    pub capacity: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimulationTrace {
    pub policy: PolicyLabel,
    pub scenario_seed: u64,
    pub log: Vec<LogEntry>,
    /// Sorted by patient id.
    pub patients: Vec<PatientOutcome>,
    /// Sorted by ring position.
    pub resources: Vec<ResourceSummary>,
    pub message_counts: BTreeMap<MessageKind, u64>,
    pub transfers: Vec<TransferRecord>,
    pub admissions: Vec<AdmissionRecord>,
    pub bounced_patients: u64,
    /// Number of event boundaries at which patient conservation was verified.
    pub conservation_checks: u64,
    pub end_tick: Tick,
}

impl SimulationTrace {
    pub fn outcome(&self, id: PatientId) -> Option<&PatientOutcome> {
        self.patients
            .binary_search_by_key(&id, |p| p.id)
            .ok()
            .map(|i| &self.patients[i])
    }

    pub fn total_messages(&self) -> u64 {
        self.message_counts.values().sum()
    }

    /// Line-per-event text log: `tick seq kind details`.
    pub fn dump(&self) -> String {
        let mut out = String::with_capacity(self.log.len() * 48);
        for entry in &self.log {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                entry.at, entry.seq, entry.kind, entry.details
            );
        }
        out
    }
}
