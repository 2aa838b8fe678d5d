//! Resource agents.
//!
//! An agent owns exactly one [`ResourceState`] and a copy of the static ring
//! directory (which resource id sits at which ring position). Its handlers
//! receive the current tick and either a local event or a delivered message,
//! and answer with [`Effect`]s for the engine to carry out. There is no
//! handle to the engine or to any other agent anywhere in this module.
//!
//! The engine keeps its agents private, so code outside it cannot hand one
//! agent another agent's state:
//!
//! ```compile_fail
//! use dopsim::engine::Simulation;
//! use dopsim::policies::PolicyLabel;
//! use dopsim::scenario::ScenarioSpec;
//!
//! fn peek(sim: &Simulation) -> usize {
//!     sim.agents.len()
//! }
//! ```
//!
//! and an agent's own state is only reachable read-only from the outside:
//!
//! ```compile_fail
//! use dopsim::engine::ResourceAgent;
//!
//! fn tamper(agent: &mut ResourceAgent) {
//!     agent.state.fixed_capacity = 0;
//! }
//! ```

use std::sync::Arc;

use crate::domain::{PatientRecord, ResourceId, ResourceState, Tick};
use crate::migration::{
    admit_group, detach_group, evaluate_request, form_group, group_size, movable_exceeded,
    next_neighbor, EpisodeState, MigrationEpisode, MigrationRequest, Reply,
};
use crate::policies::{select_next, PolicyLabel};

use super::message::{Payload, ProtocolMessage};
use crate::domain::MigrationGroup;

/// What an agent asks the engine to do.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Send {
        to: ResourceId,
        cycle: u64,
        payload: Payload,
    },
    /// A patient entered service; completion is due at `ends`.
    ServiceStarted { ends: Tick },
    /// Patient finished its last task.
    Finished(PatientRecord),
    /// Patient needs a task this resource cannot serve.
    Reroute(PatientRecord),
    /// Group members that did not fit, sent back to where they came from.
    Return {
        to: ResourceId,
        patients: Vec<PatientRecord>,
    },
    /// A group landed here.
    Admitted {
        from: ResourceId,
        admitted: usize,
        bounced: usize,
        occupancy_after: u32,
        capacity: u32,
    },
}

#[derive(Debug, Clone)]
pub struct ResourceAgent {
    state: ResourceState,
    episode: MigrationEpisode,
    policy: PolicyLabel,
    ring: Arc<[ResourceId]>,
    /// Id of the current negotiation cycle opened by this agent.
    cycle: u64,
    /// Ring position of the neighbour currently being asked.
    target: Option<usize>,
}

impl ResourceAgent {
    pub fn new(state: ResourceState, policy: PolicyLabel, ring: Arc<[ResourceId]>) -> Self {
        let episode = MigrationEpisode::new(state.id);
        ResourceAgent {
            state,
            episode,
            policy,
            ring,
            cycle: 0,
            target: None,
        }
    }

    pub fn id(&self) -> ResourceId {
        self.state.id
    }

    pub fn state(&self) -> &ResourceState {
        &self.state
    }

    pub fn episode(&self) -> &MigrationEpisode {
        &self.episode
    }

    fn ring_size(&self) -> usize {
        self.ring.len()
    }

    fn note_local_activity(&mut self) {
        if self.episode.state == EpisodeState::Exhausted {
            self.episode.rearm = true;
        }
    }

    /// A patient joins this resource's queue.
    pub fn on_arrival(&mut self, mut patient: PatientRecord, now: Tick) {
        patient.queue_arrival = now;
        self.state.waiting_queue.push(patient);
        self.state.mark_arrival(now);
        self.note_local_activity();
    }

    /// The patient in service finished its current task.
    pub fn on_service_complete(&mut self, now: Tick) -> Vec<Effect> {
        let Some(slot) = self.state.in_service.take() else {
            return Vec::new();
        };
        let mut patient = slot.patient;
        patient
            .complete_next_task(slot.started, now)
            .expect("service intervals are produced in order");
        self.state.busy_ticks += now - slot.started;
        self.state.completions += 1;
        self.note_local_activity();

        if patient.is_complete() {
            vec![Effect::Finished(patient)]
        } else if self.state.capabilities.serves_next(&patient) {
            patient.queue_arrival = now;
            self.state.waiting_queue.push(patient);
            Vec::new()
        } else {
            vec![Effect::Reroute(patient)]
        }
    }

    /// End-of-tick housekeeping: keep the service slot busy, then check for
    /// overload and open a negotiation if needed.
    pub fn settle(&mut self, now: Tick) -> Vec<Effect> {
        let mut effects = Vec::new();
        if self.state.in_service.is_none() {
            if let Some(patient) = select_next(self.policy, &mut self.state, now) {
                let duration = patient.next_task().map_or(0, |t| t.duration);
                let ends = now + duration;
                self.state.in_service = Some(crate::domain::InService {
                    patient,
                    started: now,
                    ends,
                });
                effects.push(Effect::ServiceStarted { ends });
            }
        }
        if !self.policy.migrates() {
            return effects;
        }
        match self.episode.state {
            EpisodeState::Moving => self.episode.reset(),
            EpisodeState::Exhausted if self.episode.rearm => self.episode.reset(),
            _ => {}
        }
        if self.episode.state == EpisodeState::Idle {
            if let Some((target, request)) =
                crate::migration::detect_overload(&self.state, self.policy, self.ring_size())
            {
                self.episode.begin();
                effects.push(self.open_cycle(target, request, now));
            }
        }
        effects
    }

    fn open_cycle(&mut self, target: usize, request: MigrationRequest, _now: Tick) -> Effect {
        self.cycle += 1;
        self.target = Some(target);
        Effect::Send {
            to: self.ring[target],
            cycle: self.cycle,
            payload: Payload::MigrationRequest {
                exceeded_count: request.exceeded_count,
            },
        }
    }

    /// Moves on to the next ring neighbour, or gives up until local activity.
    fn try_next_neighbor(&mut self, now: Tick) -> Vec<Effect> {
        self.episode.attempt_index += 1;
        self.target = None;
        let movable = movable_exceeded(&self.state, self.policy).len() as u32;
        if movable == 0 {
            self.episode.reset();
            return Vec::new();
        }
        match next_neighbor(
            self.state.ring_index,
            self.ring_size(),
            self.episode.attempt_index,
        ) {
            Ok(target) => {
                let request = MigrationRequest {
                    exceeded_count: movable,
                };
                vec![self.open_cycle(target, request, now)]
            }
            Err(_) => {
                self.episode.state = EpisodeState::Exhausted;
                self.episode.rearm = false;
                Vec::new()
            }
        }
    }

    fn is_current_reply(&self, msg: &ProtocolMessage) -> bool {
        self.episode.state == EpisodeState::AwaitingReply
            && msg.cycle == self.cycle
            && self.target.map(|t| self.ring[t]) == Some(msg.from)
    }

    pub fn on_message(&mut self, msg: &ProtocolMessage, now: Tick) -> Vec<Effect> {
        match &msg.payload {
            Payload::MigrationRequest { exceeded_count } => {
                let request = MigrationRequest {
                    exceeded_count: *exceeded_count,
                };
                let payload = match evaluate_request(&self.state, &request) {
                    Reply::Accept { granted_slots } => {
                        *self.state.reserved.entry(msg.from).or_insert(0) += granted_slots;
                        Payload::Accept {
                            granted_slots,
                            capabilities: self.state.capabilities.clone(),
                        }
                    }
                    Reply::Reject => Payload::Reject,
                };
                vec![Effect::Send {
                    to: msg.from,
                    cycle: msg.cycle,
                    payload,
                }]
            }
            Payload::Accept {
                granted_slots,
                capabilities,
            } => {
                let release = Effect::Send {
                    to: msg.from,
                    cycle: msg.cycle,
                    payload: Payload::Release,
                };
                if !self.is_current_reply(msg) {
                    return vec![release];
                }
                let Some(mode) = self.policy.group_mode() else {
                    return vec![release];
                };
                let movable = movable_exceeded(&self.state, self.policy);
                if movable.is_empty() {
                    // overload drained while the request was in flight
                    self.episode.reset();
                    self.target = None;
                    return vec![release];
                }
                let slots = group_size(mode, *granted_slots);
                let chosen = form_group(&movable, slots, capabilities);
                if chosen.is_empty() {
                    let mut effects = vec![release];
                    effects.extend(self.try_next_neighbor(now));
                    return effects;
                }
                let ids: Vec<_> = chosen.iter().map(|p| p.id).collect();
                let patients = detach_group(&mut self.state, &ids)
                    .expect("group members are drawn from the local queue");
                self.episode.state = EpisodeState::Moving;
                self.episode.granted = Some((msg.from, *granted_slots));
                self.target = None;
                let group = MigrationGroup {
                    source: self.state.id,
                    destination: msg.from,
                    patients,
                    formed_at: now,
                };
                vec![Effect::Send {
                    to: msg.from,
                    cycle: msg.cycle,
                    payload: Payload::GroupMove(group),
                }]
            }
            Payload::Reject => {
                if !self.is_current_reply(msg) {
                    return Vec::new();
                }
                self.try_next_neighbor(now)
            }
            Payload::Release => {
                self.state.reserved.remove(&msg.from);
                Vec::new()
            }
            Payload::GroupMove(group) => {
                let outcome = admit_group(&mut self.state, msg.from, group.patients.clone(), now);
                let mut effects = vec![Effect::Admitted {
                    from: msg.from,
                    admitted: outcome.admitted.len(),
                    bounced: outcome.bounced.len(),
                    occupancy_after: self.state.occupancy(),
                    capacity: self.state.fixed_capacity,
                }];
                if !outcome.bounced.is_empty() {
                    effects.push(Effect::Return {
                        to: msg.from,
                        patients: outcome.bounced,
                    });
                }
                effects
            }
        }
    }
}
