//! Core value types shared by the engine, the protocol and the metrics.
//!
//! All times are integer ticks (1 tick = 1 minute). Weights are exact
//! positive rationals so that weighted sums never touch floating point.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::policies::{order_queue, PolicyLabel};

/// Simulation clock unit.
pub type Tick = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("weight must be positive, got {0}")]
    NonPositiveWeight(String),
    #[error("malformed weight `{0}` (expected an integer or `numer/denom`)")]
    MalformedWeight(String),
    #[error("patient {patient}: task `{kind}` has non-positive duration")]
    NonPositiveDuration { patient: PatientId, kind: String },
    #[error("patient {patient}: completion interval [{start}, {end}) overlaps or precedes the previous task")]
    OverlappingTask {
        patient: PatientId,
        start: Tick,
        end: Tick,
    },
    #[error("patient {0} has no pending task")]
    NoPendingTask(PatientId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PatientId(pub u32);

impl fmt::Display for PatientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ResourceId(pub u32);

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.0)
    }
}

/// Label of a checkup task (ECG, X-ray, ...).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskKind(pub String);

impl TaskKind {
    pub fn new(label: impl Into<String>) -> Self {
        TaskKind(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Patient priority. Serialized as a bare integer when whole, else as `"n/d"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Weight(Ratio<u64>);

impl Weight {
    pub const ONE: Weight = Weight(Ratio::new_raw(1, 1));

    pub fn new(numer: u64, denom: u64) -> Result<Self, DomainError> {
        if numer == 0 || denom == 0 {
            return Err(DomainError::NonPositiveWeight(format!("{numer}/{denom}")));
        }
        Ok(Weight(Ratio::new(numer, denom)))
    }

    pub fn integer(value: u64) -> Result<Self, DomainError> {
        Self::new(value, 1)
    }

    pub fn numer(&self) -> u64 {
        *self.0.numer()
    }

    pub fn denom(&self) -> u64 {
        *self.0.denom()
    }

    pub fn as_ratio(&self) -> Ratio<u64> {
        self.0
    }

    /// Exact `weight * ticks` as a signed rational.
    pub fn times(&self, ticks: i64) -> Ratio<i128> {
        Ratio::new(
            i128::from(self.numer()) * i128::from(ticks),
            i128::from(self.denom()),
        )
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl Default for Weight {
    fn default() -> Self {
        Weight::ONE
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl FromStr for Weight {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || DomainError::MalformedWeight(s.to_string());
        let (n, d) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let n: u64 = n.parse().map_err(|_| bad())?;
        let d: u64 = d.parse().map_err(|_| bad())?;
        Weight::new(n, d)
    }
}

impl Serialize for Weight {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.denom() == 1 {
            serializer.serialize_u64(self.numer())
        } else {
            serializer.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for Weight {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        let weight = match Raw::deserialize(deserializer)? {
            Raw::Int(v) => Weight::integer(v),
            Raw::Text(s) => s.parse(),
        };
        weight.map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub kind: TaskKind,
    pub duration: Tick,
}

impl Task {
    pub fn new(kind: impl Into<String>, duration: Tick) -> Self {
        Task {
            kind: TaskKind::new(kind),
            duration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CompletedTask {
    pub kind: TaskKind,
    pub start: Tick,
    pub end: Tick,
}

/// A patient and its checkup plan. Tasks are processed in list order;
/// `completed_tasks` always mirrors a prefix of `tasks`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PatientRecord {
    pub id: PatientId,
    pub weight: Weight,
    pub hospital_arrival: Tick,
    /// Arrival at the queue the patient currently sits in.
    pub queue_arrival: Tick,
    tasks: Vec<Task>,
    completed_tasks: Vec<CompletedTask>,
    /// Service-completion count of the resource that admitted this patient
    /// through a migration. The patient may not be regrouped until that
    /// resource has completed at least one more service.
    pub(crate) migration_stamp: Option<u64>,
}

impl PatientRecord {
    pub fn new(
        id: PatientId,
        weight: Weight,
        hospital_arrival: Tick,
        tasks: Vec<Task>,
    ) -> Result<Self, DomainError> {
        if let Some(task) = tasks.iter().find(|t| t.duration == 0) {
            return Err(DomainError::NonPositiveDuration {
                patient: id,
                kind: task.kind.0.clone(),
            });
        }
        Ok(PatientRecord {
            id,
            weight,
            hospital_arrival,
            queue_arrival: hospital_arrival,
            tasks,
            completed_tasks: Vec::new(),
            migration_stamp: None,
        })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn completed_tasks(&self) -> &[CompletedTask] {
        &self.completed_tasks
    }

    pub fn pending_tasks(&self) -> &[Task] {
        &self.tasks[self.completed_tasks.len()..]
    }

    pub fn next_task(&self) -> Option<&Task> {
        self.tasks.get(self.completed_tasks.len())
    }

    pub fn is_complete(&self) -> bool {
        self.completed_tasks.len() == self.tasks.len()
    }

    /// Hospital arrival plus the total processing time of every task.
    pub fn due_time(&self) -> Tick {
        self.hospital_arrival + self.tasks.iter().map(|t| t.duration).sum::<Tick>()
    }

    pub fn remaining_processing(&self) -> Tick {
        self.pending_tasks().iter().map(|t| t.duration).sum()
    }

    /// End tick of the last finished task, if any.
    pub fn last_end(&self) -> Option<Tick> {
        self.completed_tasks.last().map(|c| c.end)
    }

    /// Marks the next pending task as served over `[start, end)`.
    pub fn complete_next_task(&mut self, start: Tick, end: Tick) -> Result<(), DomainError> {
        let kind = self
            .next_task()
            .ok_or(DomainError::NoPendingTask(self.id))?
            .kind
            .clone();
        let after_previous = self.last_end().is_none_or(|prev| start >= prev);
        if end <= start || !after_previous || start < self.hospital_arrival {
            return Err(DomainError::OverlappingTask {
                patient: self.id,
                start,
                end,
            });
        }
        self.completed_tasks
            .push(CompletedTask { kind, start, end });
        Ok(())
    }

    pub(crate) fn migration_locked(&self, completions_here: u64) -> bool {
        self.migration_stamp
            .is_some_and(|stamp| completions_here <= stamp)
    }
}

/// Task kinds a resource can serve.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub enum Capabilities {
    #[default]
    All,
    Only(BTreeSet<TaskKind>),
}

impl Capabilities {
    pub fn only<I, S>(kinds: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Capabilities::Only(kinds.into_iter().map(|k| TaskKind(k.into())).collect())
    }

    pub fn serves(&self, kind: &TaskKind) -> bool {
        match self {
            Capabilities::All => true,
            Capabilities::Only(set) => set.contains(kind),
        }
    }

    /// True if the patient's next pending task can be served here.
    pub fn serves_next(&self, patient: &PatientRecord) -> bool {
        patient.next_task().is_some_and(|t| self.serves(&t.kind))
    }
}

impl fmt::Display for Capabilities {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capabilities::All => f.write_str("*"),
            Capabilities::Only(set) => {
                let labels: Vec<&str> = set.iter().map(TaskKind::as_str).collect();
                write!(f, "{}", labels.join("|"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InService {
    pub patient: PatientRecord,
    pub started: Tick,
    pub ends: Tick,
}

/// A resource agent's local view of itself. Nothing in here refers to any
/// other resource except the reservation ledger, which is keyed by the ids
/// of sources that were granted slots through messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceState {
    pub id: ResourceId,
    pub ring_index: usize,
    pub fixed_capacity: u32,
    pub capabilities: Capabilities,
    pub waiting_queue: Vec<PatientRecord>,
    pub in_service: Option<InService>,
    pub busy_ticks: Tick,
    /// Number of services finished so far.
    pub completions: u64,
    /// Slots promised to migration sources whose group has not landed yet.
    pub reserved: BTreeMap<ResourceId, u32>,
    /// Tick of the first patient arrival, if any.
    pub activated_at: Option<Tick>,
}

impl ResourceState {
    pub fn new(
        id: ResourceId,
        ring_index: usize,
        fixed_capacity: u32,
        capabilities: Capabilities,
    ) -> Self {
        ResourceState {
            id,
            ring_index,
            fixed_capacity,
            capabilities,
            waiting_queue: Vec::new(),
            in_service: None,
            busy_ticks: 0,
            completions: 0,
            reserved: BTreeMap::new(),
            activated_at: None,
        }
    }

    /// CRA: waiting patients plus the one in service.
    pub fn occupancy(&self) -> u32 {
        let waiting = u32::try_from(self.waiting_queue.len()).unwrap_or(u32::MAX);
        waiting.saturating_add(u32::from(self.in_service.is_some()))
    }

    pub fn reserved_slots(&self) -> u32 {
        self.reserved.values().sum()
    }

    /// Occupancy plus slots already promised to incoming groups.
    pub fn committed(&self) -> u32 {
        self.occupancy().saturating_add(self.reserved_slots())
    }

    pub fn excess(&self) -> u32 {
        self.occupancy().saturating_sub(self.fixed_capacity)
    }

    pub fn is_overloaded(&self) -> bool {
        self.occupancy() > self.fixed_capacity
    }

    pub fn contains(&self, patient: PatientId) -> bool {
        self.in_service
            .as_ref()
            .is_some_and(|s| s.patient.id == patient)
            || self.waiting_queue.iter().any(|p| p.id == patient)
    }

    pub(crate) fn mark_arrival(&mut self, now: Tick) {
        self.activated_at.get_or_insert(now);
    }
}

/// Exceeded waiting patients: the last `CRA - ThRA` entries of the queue as
/// ordered by `policy`. The patient in service is never included.
pub fn exceeded_patients(resource: &ResourceState, policy: PolicyLabel) -> Vec<PatientRecord> {
    let excess = resource.excess() as usize;
    if excess == 0 {
        return Vec::new();
    }
    let ordered = order_queue(policy, &resource.waiting_queue);
    let keep = ordered.len().saturating_sub(excess);
    ordered[keep..].to_vec()
}

pub fn due_time(patient: &PatientRecord) -> Tick {
    patient.due_time()
}

pub fn remaining_processing(patient: &PatientRecord) -> Tick {
    patient.remaining_processing()
}

/// Set of patients moved together from one resource to another.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MigrationGroup {
    pub source: ResourceId,
    pub destination: ResourceId,
    pub patients: Vec<PatientRecord>,
    pub formed_at: Tick,
}

impl MigrationGroup {
    pub fn ids(&self) -> Vec<PatientId> {
        self.patients.iter().map(|p| p.id).collect()
    }

    pub fn len(&self) -> usize {
        self.patients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patients.is_empty()
    }
}

/// Sum of `weight * value` over an iterator, kept exact.
pub fn weighted_sum<I>(items: I) -> Ratio<i128>
where
    I: IntoIterator<Item = (Weight, i64)>,
{
    items
        .into_iter()
        .fold(Ratio::zero(), |acc, (w, v)| acc + w.times(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patient(id: u32, arrival: Tick, durations: &[Tick]) -> PatientRecord {
        let tasks = durations.iter().map(|&d| Task::new("ecg", d)).collect();
        PatientRecord::new(PatientId(id), Weight::ONE, arrival, tasks).unwrap()
    }

    #[test]
    fn due_time_examples() {
        assert_eq!(due_time(&patient(0, 0, &[10])), 10);
        assert_eq!(due_time(&patient(0, 5, &[10, 20])), 35);
        assert_eq!(due_time(&patient(0, 7, &[])), 7);
    }

    #[test]
    fn remaining_processing_examples() {
        let mut p = patient(0, 0, &[10, 20]);
        assert_eq!(remaining_processing(&p), 30);
        p.complete_next_task(0, 10).unwrap();
        assert_eq!(remaining_processing(&p), 20);
        assert_eq!(remaining_processing(&patient(1, 0, &[])), 0);
    }

    #[test]
    fn due_time_survives_progress_and_requeue() {
        let mut p = patient(3, 4, &[6, 9]);
        let due = p.due_time();
        p.complete_next_task(10, 16).unwrap();
        p.queue_arrival = 40;
        assert_eq!(p.due_time(), due);
    }

    #[test]
    fn rejects_zero_duration() {
        let err = PatientRecord::new(PatientId(9), Weight::ONE, 0, vec![Task::new("xray", 0)]);
        assert!(matches!(err, Err(DomainError::NonPositiveDuration { .. })));
    }

    #[test]
    fn completed_tasks_must_be_chronological() {
        let mut p = patient(1, 0, &[5, 5]);
        p.complete_next_task(0, 5).unwrap();
        assert!(p.complete_next_task(3, 8).is_err());
        p.complete_next_task(5, 10).unwrap();
        assert!(p.is_complete());
        assert!(matches!(
            p.complete_next_task(10, 12),
            Err(DomainError::NoPendingTask(_))
        ));
    }

    #[test]
    fn weight_parsing() {
        assert_eq!("3".parse::<Weight>().unwrap(), Weight::integer(3).unwrap());
        assert_eq!("6/4".parse::<Weight>().unwrap(), Weight::new(3, 2).unwrap());
        assert!("0".parse::<Weight>().is_err());
        assert!("x/2".parse::<Weight>().is_err());
        assert_eq!(Weight::new(3, 2).unwrap().to_string(), "3/2");
    }

    fn resource_with(queue: &[(u32, Tick)], in_service: bool, cap: u32) -> ResourceState {
        let mut r = ResourceState::new(ResourceId(0), 0, cap, Capabilities::All);
        r.waiting_queue = queue
            .iter()
            .map(|&(id, arr)| patient(id, arr, &[5]))
            .collect();
        if in_service {
            r.in_service = Some(InService {
                patient: patient(99, 0, &[5]),
                started: 0,
                ends: 5,
            });
        }
        r
    }

    #[test]
    fn exceeded_takes_queue_tail() {
        // a..f arrive at 1..6; FCFS order is a..f
        let queue: Vec<(u32, Tick)> = (0..6).map(|i| (i, Tick::from(i) + 1)).collect();
        let r = resource_with(&queue, true, 5);
        assert_eq!(r.occupancy(), 7);
        let ids: Vec<u32> = exceeded_patients(&r, PolicyLabel::Fcfs)
            .iter()
            .map(|p| p.id.0)
            .collect();
        assert_eq!(ids, vec![4, 5]);
    }

    #[test]
    fn exceeded_empty_at_or_below_capacity() {
        let queue: Vec<(u32, Tick)> = (0..4).map(|i| (i, 0)).collect();
        assert!(exceeded_patients(&resource_with(&queue, true, 5), PolicyLabel::Fcfs).is_empty());
        assert!(exceeded_patients(&resource_with(&[], false, 5), PolicyLabel::Fcfs).is_empty());
    }

    #[test]
    fn exceeded_never_includes_in_service() {
        let r = resource_with(&[(1, 3)], true, 1);
        assert_eq!(r.excess(), 1);
        let ids: Vec<u32> = exceeded_patients(&r, PolicyLabel::Wspt)
            .iter()
            .map(|p| p.id.0)
            .collect();
        assert_eq!(ids, vec![1]);
    }

    #[test]
    fn capabilities_filter() {
        let caps = Capabilities::only(["ecg"]);
        assert!(caps.serves(&TaskKind::new("ecg")));
        assert!(!caps.serves(&TaskKind::new("xray")));
        assert!(Capabilities::All.serves(&TaskKind::new("anything")));
        assert!(!caps.serves_next(&patient(0, 0, &[])));
    }
}
