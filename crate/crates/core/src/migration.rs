//! Overload detection, neighbour negotiation and group transfer.
//!
//! Every decision function here takes the deciding resource's own state and
//! the content of a delivered message, nothing else. A resource never learns
//! another resource's occupancy; it only learns whether a request was
//! accepted and how many slots were granted.

use std::fmt;

use thiserror::Error;

use crate::domain::{
    exceeded_patients, Capabilities, MigrationGroup, PatientId, PatientRecord, ResourceId,
    ResourceState, Tick,
};
use crate::policies::{GroupMode, PolicyLabel};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MigrationError {
    #[error("all {tried} neighbours of ring position {source_index} have been tried")]
    Exhausted { source_index: usize, tried: usize },
    #[error("patient {patient} is not waiting at {resource}")]
    MemberMissing {
        patient: PatientId,
        resource: ResourceId,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MigrationRequest {
    pub exceeded_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reply {
    Accept { granted_slots: u32 },
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpisodeState {
    Idle,
    AwaitingReply,
    Moving,
    Exhausted,
}

impl fmt::Display for EpisodeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EpisodeState::Idle => "idle",
            EpisodeState::AwaitingReply => "awaiting",
            EpisodeState::Moving => "moving",
            EpisodeState::Exhausted => "exhausted",
        };
        f.write_str(s)
    }
}

/// Negotiation state of one overloaded source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MigrationEpisode {
    pub source_id: ResourceId,
    /// Neighbours tried so far in the current episode.
    pub attempt_index: usize,
    pub granted: Option<(ResourceId, u32)>,
    pub state: EpisodeState,
    /// Set by a local arrival or service completion while exhausted.
    pub rearm: bool,
}

impl MigrationEpisode {
    pub fn new(source_id: ResourceId) -> Self {
        MigrationEpisode {
            source_id,
            attempt_index: 0,
            granted: None,
            state: EpisodeState::Idle,
            rearm: false,
        }
    }

    pub fn is_active(&self) -> bool {
        matches!(
            self.state,
            EpisodeState::AwaitingReply | EpisodeState::Moving
        )
    }

    pub(crate) fn begin(&mut self) {
        self.state = EpisodeState::AwaitingReply;
        self.attempt_index = 0;
        self.granted = None;
        self.rearm = false;
    }

    pub(crate) fn reset(&mut self) {
        self.state = EpisodeState::Idle;
        self.attempt_index = 0;
        self.granted = None;
        self.rearm = false;
    }
}

/// Ring position `attempt + 1` steps after `ring_index`.
pub fn next_neighbor(
    ring_index: usize,
    ring_size: usize,
    attempt: usize,
) -> Result<usize, MigrationError> {
    if ring_size < 2 || attempt + 1 >= ring_size {
        return Err(MigrationError::Exhausted {
            source_index: ring_index,
            tried: attempt,
        });
    }
    Ok((ring_index + attempt + 1) % ring_size)
}

/// Exceeded patients that may currently be moved (not in migration cooldown).
pub fn movable_exceeded(resource: &ResourceState, policy: PolicyLabel) -> Vec<PatientRecord> {
    let mut exceeded = exceeded_patients(resource, policy);
    exceeded.retain(|p| !p.migration_locked(resource.completions));
    exceeded
}

/// Emits a request for the first ring neighbour when the resource holds more
/// patients than its fixed capacity. Returns the target ring position.
pub fn detect_overload(
    resource: &ResourceState,
    policy: PolicyLabel,
    ring_size: usize,
) -> Option<(usize, MigrationRequest)> {
    if !resource.is_overloaded() {
        return None;
    }
    let movable = u32::try_from(movable_exceeded(resource, policy).len()).ok()?;
    if movable == 0 {
        return None;
    }
    let target = next_neighbor(resource.ring_index, ring_size, 0).ok()?;
    Some((
        target,
        MigrationRequest {
            exceeded_count: movable,
        },
    ))
}

/// Accepts when the acceptor has strict headroom, granting no more slots
/// than requested. Slots already promised to other sources count as taken.
pub fn evaluate_request(acceptor: &ResourceState, request: &MigrationRequest) -> Reply {
    let committed = acceptor.committed();
    if request.exceeded_count == 0 || committed >= acceptor.fixed_capacity {
        return Reply::Reject;
    }
    let headroom = acceptor.fixed_capacity - committed;
    Reply::Accept {
        granted_slots: headroom.min(request.exceeded_count),
    }
}

/// Picks the migration group: patients whose next task the destination can
/// serve, highest weight first, then earliest queue arrival, then id.
pub fn form_group(
    exceeded: &[PatientRecord],
    granted_slots: u32,
    destination: &Capabilities,
) -> Vec<PatientRecord> {
    let mut eligible: Vec<PatientRecord> = exceeded
        .iter()
        .filter(|p| destination.serves_next(p))
        .cloned()
        .collect();
    eligible.sort_by(|a, b| {
        b.weight
            .cmp(&a.weight)
            .then(a.queue_arrival.cmp(&b.queue_arrival))
            .then(a.id.cmp(&b.id))
    });
    eligible.truncate(granted_slots as usize);
    eligible
}

/// Slot count actually used for one accepted request.
pub fn group_size(mode: GroupMode, granted_slots: u32) -> u32 {
    match mode {
        GroupMode::Single => granted_slots.min(1),
        GroupMode::Grouped => granted_slots,
    }
}

pub fn dops_mode(granted_slots: u32) -> u32 {
    group_size(GroupMode::Single, granted_slots)
}

pub fn dopsg_mode(granted_slots: u32) -> u32 {
    group_size(GroupMode::Grouped, granted_slots)
}

/// Removes the listed patients from the source queue. Either every member is
/// removed or the source is left untouched.
pub fn detach_group(
    source: &mut ResourceState,
    members: &[PatientId],
) -> Result<Vec<PatientRecord>, MigrationError> {
    if let Some(&missing) = members
        .iter()
        .find(|id| !source.waiting_queue.iter().any(|p| p.id == **id))
    {
        return Err(MigrationError::MemberMissing {
            patient: missing,
            resource: source.id,
        });
    }
    let mut moved = Vec::with_capacity(members.len());
    for id in members {
        let at = source
            .waiting_queue
            .iter()
            .position(|p| p.id == *id)
            .expect("presence checked above");
        moved.push(source.waiting_queue.remove(at));
    }
    Ok(moved)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Admission {
    pub admitted: Vec<PatientId>,
    /// Members that no longer fit because other patients arrived while the
    /// group was in transit. They go back to the source.
    pub bounced: Vec<PatientRecord>,
}

/// Lands a group at its destination. Releases the source's reservation and
/// admits members in group order while `occupancy + other reservations` stays
/// within the fixed capacity.
pub fn admit_group(
    destination: &mut ResourceState,
    source: ResourceId,
    patients: Vec<PatientRecord>,
    now: Tick,
) -> Admission {
    destination.reserved.remove(&source);
    let budget = destination
        .fixed_capacity
        .saturating_sub(destination.committed()) as usize;
    let mut admitted = Vec::new();
    let mut bounced = Vec::new();
    for mut patient in patients {
        if admitted.len() < budget {
            patient.queue_arrival = now;
            patient.migration_stamp = Some(destination.completions);
            admitted.push(patient.id);
            destination.waiting_queue.push(patient);
        } else {
            bounced.push(patient);
        }
    }
    if !admitted.is_empty() {
        destination.mark_arrival(now);
    }
    Admission { admitted, bounced }
}

/// Detach from `source` and land at `destination` in one step.
pub fn apply_move(
    source: &mut ResourceState,
    destination: &mut ResourceState,
    group: &MigrationGroup,
    now: Tick,
) -> Result<Admission, MigrationError> {
    let moved = detach_group(source, &group.ids())?;
    Ok(admit_group(destination, source.id, moved, now))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{InService, Task, Weight};

    fn patient(id: u32, weight: u64, arrival: Tick, kind: &str) -> PatientRecord {
        let mut p = PatientRecord::new(
            PatientId(id),
            Weight::integer(weight).unwrap(),
            0,
            vec![Task::new(kind, 10)],
        )
        .unwrap();
        p.queue_arrival = arrival;
        p
    }

    /// Resource holding `occupancy` patients (one in service when non-zero).
    fn resource(id: u32, occupancy: u32, cap: u32) -> ResourceState {
        let mut r = ResourceState::new(ResourceId(id), id as usize, cap, Capabilities::All);
        for i in 0..occupancy {
            let p = patient(id * 100 + i, 1, Tick::from(i), "ecg");
            if i == 0 {
                r.in_service = Some(InService {
                    patient: p,
                    started: 0,
                    ends: 10,
                });
            } else {
                r.waiting_queue.push(p);
            }
        }
        r
    }

    #[test]
    fn detect_overload_examples() {
        let (target, req) = detect_overload(&resource(0, 7, 5), PolicyLabel::Dopsg, 3).unwrap();
        assert_eq!(req.exceeded_count, 2);
        assert_eq!(target, 1);
        assert!(detect_overload(&resource(0, 5, 5), PolicyLabel::Dopsg, 3).is_none());
        assert!(detect_overload(&resource(0, 3, 5), PolicyLabel::Dopsg, 3).is_none());
    }

    #[test]
    fn detect_overload_needs_a_neighbour() {
        assert!(detect_overload(&resource(0, 7, 5), PolicyLabel::Dopsg, 1).is_none());
    }

    #[test]
    fn detect_overload_skips_patients_in_cooldown() {
        let mut r = resource(0, 7, 5);
        for p in r.waiting_queue.iter_mut() {
            p.migration_stamp = Some(r.completions);
        }
        assert!(detect_overload(&r, PolicyLabel::Dopsg, 3).is_none());
        r.completions += 1;
        assert!(detect_overload(&r, PolicyLabel::Dopsg, 3).is_some());
    }

    #[test]
    fn evaluate_request_examples() {
        let req = |n| MigrationRequest { exceeded_count: n };
        assert_eq!(
            evaluate_request(&resource(1, 4, 5), &req(3)),
            Reply::Accept { granted_slots: 1 }
        );
        assert_eq!(evaluate_request(&resource(1, 5, 5), &req(3)), Reply::Reject);
        assert_eq!(
            evaluate_request(&resource(1, 0, 5), &req(2)),
            Reply::Accept { granted_slots: 2 }
        );
    }

    #[test]
    fn evaluate_request_counts_reservations() {
        let mut r = resource(1, 3, 5);
        r.reserved.insert(ResourceId(7), 2);
        assert_eq!(
            evaluate_request(&r, &MigrationRequest { exceeded_count: 1 }),
            Reply::Reject
        );
        r.reserved.insert(ResourceId(7), 1);
        assert_eq!(
            evaluate_request(&r, &MigrationRequest { exceeded_count: 4 }),
            Reply::Accept { granted_slots: 1 }
        );
    }

    #[test]
    fn form_group_orders_by_weight_then_arrival() {
        let exceeded = vec![
            patient(1, 3, 10, "ecg"),
            patient(2, 1, 5, "ecg"),
            patient(3, 3, 12, "xray"),
        ];
        let ids: Vec<u32> = form_group(&exceeded, 2, &Capabilities::All)
            .iter()
            .map(|p| p.id.0)
            .collect();
        assert_eq!(ids, vec![1, 3]);
    }

    #[test]
    fn form_group_capped_by_availability() {
        let exceeded = vec![patient(2, 1, 5, "ecg")];
        assert_eq!(form_group(&exceeded, 5, &Capabilities::All).len(), 1);
    }

    #[test]
    fn form_group_filters_capabilities() {
        let exceeded = vec![patient(3, 3, 12, "xray")];
        assert!(form_group(&exceeded, 2, &Capabilities::only(["ecg"])).is_empty());
    }

    #[test]
    fn next_neighbor_walks_the_ring() {
        assert_eq!(next_neighbor(1, 3, 0).unwrap(), 2);
        assert_eq!(next_neighbor(1, 3, 1).unwrap(), 0);
        assert!(matches!(
            next_neighbor(1, 3, 2),
            Err(MigrationError::Exhausted { .. })
        ));
        assert!(next_neighbor(0, 1, 0).is_err());
        for m in 2..7 {
            for i in 0..m {
                for a in 0..m - 1 {
                    assert_ne!(next_neighbor(i, m, a).unwrap(), i);
                }
            }
        }
    }

    #[test]
    fn group_modes() {
        assert_eq!(dopsg_mode(3), 3);
        assert_eq!(dops_mode(3), 1);
        assert_eq!(dops_mode(1), dopsg_mode(1));
    }

    fn group_of(source: &ResourceState, dest: ResourceId, n: usize) -> MigrationGroup {
        MigrationGroup {
            source: source.id,
            destination: dest,
            patients: source.waiting_queue[source.waiting_queue.len() - n..].to_vec(),
            formed_at: 20,
        }
    }

    #[test]
    fn apply_move_fills_destination() {
        let mut src = resource(0, 7, 5);
        let mut dst = resource(1, 3, 5);
        dst.reserved.insert(src.id, 2);
        let group = group_of(&src, dst.id, 2);
        let outcome = apply_move(&mut src, &mut dst, &group, 21).unwrap();
        assert_eq!(outcome.admitted.len(), 2);
        assert!(outcome.bounced.is_empty());
        assert_eq!(dst.occupancy(), 5);
        assert_eq!(src.occupancy(), 5);
        assert!(dst.reserved.is_empty());
        assert!(dst
            .waiting_queue
            .iter()
            .rev()
            .take(2)
            .all(|p| p.queue_arrival == 21));
    }

    #[test]
    fn apply_move_is_atomic_on_missing_member() {
        let mut src = resource(0, 7, 5);
        let mut dst = resource(1, 3, 5);
        let mut group = group_of(&src, dst.id, 2);
        group.patients.push(patient(999, 1, 0, "ecg"));
        let before = (src.clone(), dst.clone());
        let err = apply_move(&mut src, &mut dst, &group, 21).unwrap_err();
        assert_eq!(
            err,
            MigrationError::MemberMissing {
                patient: PatientId(999),
                resource: src.id
            }
        );
        assert_eq!((src, dst), before);
    }

    #[test]
    fn admission_bounces_what_no_longer_fits() {
        let mut src = resource(0, 7, 5);
        let mut dst = resource(1, 4, 5); // an arrival landed while the group travelled
        let group = group_of(&src, dst.id, 2);
        let outcome = apply_move(&mut src, &mut dst, &group, 21).unwrap();
        assert_eq!(outcome.admitted.len(), 1);
        assert_eq!(outcome.bounced.len(), 1);
        assert_eq!(dst.occupancy(), 5);
    }
}
