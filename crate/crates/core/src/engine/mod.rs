//! Deterministic discrete-event core.
//!
//! Events are processed in `(tick, seq)` order. After the last event of a
//! tick has been dispatched every resource agent settles in ring order: an
//! idle station takes its next patient and an overloaded one may open a
//! migration negotiation. Messages emitted during a tick are delivered
//! `message_latency` ticks later.
//!
//! The engine is the only place that sees every agent. It routes messages
//! and patients between them but never passes one agent's state to another.

mod agent;
mod event;
mod message;
mod trace;

pub use agent::{Effect, ResourceAgent};
pub use event::{EventKind, EventQueue, SimEvent};
pub use message::{MessageKind, Payload, ProtocolMessage};
pub use trace::{
    AdmissionRecord, LogEntry, PatientOutcome, ResourceSummary, SimulationTrace, TransferRecord,
};

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::domain::{
    Capabilities, PatientId, PatientRecord, ResourceId, ResourceState, TaskKind, Tick,
};
use crate::policies::PolicyLabel;
use crate::scenario::{ScenarioSpec, ValidationError};

/// Upper bound on dispatched events before a run is declared stuck.
const STEP_BUDGET: u64 = 20_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StallReport {
    pub tick: Tick,
    pub reason: String,
    pub unfinished: Vec<PatientId>,
    /// One line per resource: id, queue, service slot, episode state.
    pub resources: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(#[from] ValidationError),
    #[error("patient {patient}: no resource serves task `{kind}`")]
    NoCompatibleResource { patient: PatientId, kind: TaskKind },
    #[error("simulation stalled at tick {}: {} ({} unfinished)", .0.tick, .0.reason, .0.unfinished.len())]
    Stall(Box<StallReport>),
    #[error("patient conservation violated at tick {tick}: {detail}")]
    Conservation { tick: Tick, detail: String },
}

/// A patient handed to a resource by the admission agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientArrival {
    pub patient: PatientRecord,
    pub resource: ResourceId,
    pub at: Tick,
}

/// Admission agent: places patients on capable resources round-robin.
#[derive(Debug, Clone)]
struct Admission {
    /// `(id, capabilities)` in ring order.
    stations: Vec<(ResourceId, Capabilities)>,
    /// Position of each patient in the scenario document.
    rank: HashMap<PatientId, usize>,
}

impl Admission {
    fn new(spec: &ScenarioSpec) -> Self {
        let stations = spec
            .ring_order()
            .into_iter()
            .map(|r| (r.id, r.capabilities()))
            .collect();
        let rank = spec
            .patients
            .iter()
            .enumerate()
            .map(|(k, p)| (p.id, k))
            .collect();
        Admission { stations, rank }
    }

    /// Patient `k` with `t` finished tasks goes to capable station
    /// `(k + t) mod |capable|`, stations taken in ring order.
    fn route(&self, patient: &PatientRecord) -> Result<ResourceId, EngineError> {
        let Some(task) = patient.next_task() else {
            return Err(EngineError::NoCompatibleResource {
                patient: patient.id,
                kind: TaskKind::new("<none>"),
            });
        };
        let capable: Vec<ResourceId> = self
            .stations
            .iter()
            .filter(|(_, caps)| caps.serves(&task.kind))
            .map(|(id, _)| *id)
            .collect();
        if capable.is_empty() {
            return Err(EngineError::NoCompatibleResource {
                patient: patient.id,
                kind: task.kind.clone(),
            });
        }
        let k = self.rank.get(&patient.id).copied().unwrap_or(0);
        let t = patient.completed_tasks().len();
        Ok(capable[(k + t) % capable.len()])
    }
}

/// Initial placement of every patient, in scenario order.
pub fn initial_assignment(spec: &ScenarioSpec) -> Result<Vec<PatientArrival>, EngineError> {
    let admission = Admission::new(spec);
    spec.patient_records()
        .into_iter()
        .map(|patient| {
            let resource = admission.route(&patient)?;
            let at = patient.hospital_arrival;
            Ok(PatientArrival {
                patient,
                resource,
                at,
            })
        })
        .collect()
}

pub struct Simulation {
    policy: PolicyLabel,
    latency: Tick,
    scenario_seed: u64,
    queue: EventQueue,
    agents: Vec<ResourceAgent>,
    slot_of: BTreeMap<ResourceId, usize>,
    admission: Admission,
    roster: Vec<PatientId>,
    finished: Vec<PatientRecord>,
    now: Tick,
    steps: u64,
    log: Vec<LogEntry>,
    message_counts: BTreeMap<MessageKind, u64>,
    cycle_tally: HashMap<(ResourceId, u64), u64>,
    transfers: Vec<TransferRecord>,
    admissions: Vec<AdmissionRecord>,
    bounced: u64,
    conservation_checks: u64,
}

impl Simulation {
    pub fn new(spec: &ScenarioSpec, policy: PolicyLabel) -> Result<Self, EngineError> {
        spec.validate()?;
        let ring: Arc<[ResourceId]> = spec
            .ring_order()
            .iter()
            .map(|r| r.id)
            .collect::<Vec<_>>()
            .into();
        let agents: Vec<ResourceAgent> = spec
            .ring_order()
            .into_iter()
            .map(|r| {
                let state =
                    ResourceState::new(r.id, r.ring_index, r.fixed_capacity, r.capabilities());
                ResourceAgent::new(state, policy, Arc::clone(&ring))
            })
            .collect();
        let slot_of = agents
            .iter()
            .enumerate()
            .map(|(i, a)| (a.id(), i))
            .collect();

        let mut queue = EventQueue::new();
        for arrival in initial_assignment(spec)? {
            queue.schedule(
                arrival.at,
                EventKind::PatientArrival {
                    patient: arrival.patient,
                    resource: arrival.resource,
                },
            );
        }
        let mut roster: Vec<PatientId> = spec.patients.iter().map(|p| p.id).collect();
        roster.sort_unstable();

        Ok(Simulation {
            policy,
            latency: spec.message_latency,
            scenario_seed: spec.rng_seed,
            queue,
            agents,
            slot_of,
            admission: Admission::new(spec),
            roster,
            finished: Vec::new(),
            now: 0,
            steps: 0,
            log: Vec::new(),
            message_counts: BTreeMap::new(),
            cycle_tally: HashMap::new(),
            transfers: Vec::new(),
            admissions: Vec::new(),
            bounced: 0,
            conservation_checks: 0,
        })
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn policy(&self) -> PolicyLabel {
        self.policy
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    pub fn next_event_time(&self) -> Option<Tick> {
        self.queue.peek_time()
    }

    /// Read-only view of a resource, for observers outside the agents.
    pub fn resource(&self, id: ResourceId) -> Option<&ResourceState> {
        self.slot_of.get(&id).map(|&i| self.agents[i].state())
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn finished_count(&self) -> usize {
        self.finished.len()
    }

    /// Dispatches the next event. Returns `false` when no events remain.
    pub fn step(&mut self) -> Result<bool, EngineError> {
        let Some(event) = self.queue.pop() else {
            return Ok(false);
        };
        debug_assert!(event.at >= self.now, "clock went backwards");
        self.now = event.at;
        self.steps += 1;
        if self.steps > STEP_BUDGET {
            return Err(self.stall("event budget exhausted"));
        }
        let (kind, seq) = (event.kind.label(), event.seq);
        let details = self.dispatch(event.kind)?;
        self.log.push(LogEntry {
            at: self.now,
            seq,
            kind,
            details,
        });
        if self.queue.peek_time() != Some(self.now) {
            self.settle_all()?;
        }
        self.check_conservation()?;
        Ok(true)
    }

    pub fn run_to_end(mut self) -> Result<SimulationTrace, EngineError> {
        while self.step()? {}
        self.finish()
    }

    fn agent_mut(&mut self, id: ResourceId) -> &mut ResourceAgent {
        let slot = self.slot_of[&id];
        &mut self.agents[slot]
    }

    fn dispatch(&mut self, kind: EventKind) -> Result<String, EngineError> {
        let now = self.now;
        match kind {
            EventKind::PatientArrival { patient, resource } => {
                let details = format!("patient={} resource={}", patient.id, resource);
                self.agent_mut(resource).on_arrival(patient, now);
                Ok(details)
            }
            EventKind::ServiceComplete { resource } => {
                let agent = self.agent_mut(resource);
                let slot = agent.state().in_service.clone();
                let effects = agent.on_service_complete(now);
                let outcome = match effects.first() {
                    Some(Effect::Finished(_)) => "finished",
                    Some(Effect::Reroute(_)) => "reroute",
                    _ => "requeue",
                };
                let details = match slot {
                    Some(s) => format!(
                        "resource={} patient={} task={} start={} end={} outcome={}",
                        resource,
                        s.patient.id,
                        s.patient.next_task().map_or("-", |t| t.kind.as_str()),
                        s.started,
                        now,
                        outcome
                    ),
                    None => format!("resource={resource} idle"),
                };
                self.apply(resource, effects)?;
                Ok(details)
            }
            EventKind::MessageDelivery(msg) => {
                *self.message_counts.entry(msg.kind()).or_insert(0) += 1;
                let tally = self
                    .cycle_tally
                    .entry((msg.initiator(), msg.cycle))
                    .or_insert(0);
                *tally += 1;
                let cycle_messages = *tally;

                let mut details = format!(
                    "from={} to={} cycle={} sent={} {}",
                    msg.from,
                    msg.to,
                    msg.cycle,
                    msg.sent_at,
                    msg.kind()
                );
                match &msg.payload {
                    Payload::MigrationRequest { exceeded_count } => {
                        let _ = write!(details, " exceeded={exceeded_count}");
                    }
                    Payload::Accept {
                        granted_slots,
                        capabilities,
                    } => {
                        let _ = write!(details, " granted={granted_slots} caps={capabilities}");
                    }
                    Payload::Reject | Payload::Release => {}
                    Payload::GroupMove(group) => {
                        let ids: Vec<String> =
                            group.patients.iter().map(|p| p.id.to_string()).collect();
                        let _ = write!(details, " patients={}", ids.join(","));
                    }
                }

                let effects = self.agent_mut(msg.to).on_message(&msg, now);
                if let Payload::GroupMove(group) = &msg.payload {
                    let admitted = effects
                        .iter()
                        .find_map(|e| match e {
                            Effect::Admitted { admitted, .. } => Some(*admitted),
                            _ => None,
                        })
                        .unwrap_or(0);
                    let _ = write!(
                        details,
                        " admitted={} bounced={}",
                        admitted,
                        group.len() - admitted
                    );
                    self.transfers.push(TransferRecord {
                        at: now,
                        source: msg.from,
                        destination: msg.to,
                        cycle: msg.cycle,
                        group_size: group.len(),
                        admitted,
                        messages: cycle_messages,
                    });
                }
                self.apply(msg.to, effects)?;
                Ok(details)
            }
        }
    }

    fn apply(&mut self, origin: ResourceId, effects: Vec<Effect>) -> Result<(), EngineError> {
        let now = self.now;
        for effect in effects {
            match effect {
                Effect::Send { to, cycle, payload } => {
                    let msg = ProtocolMessage {
                        from: origin,
                        to,
                        sent_at: now,
                        cycle,
                        payload,
                    };
                    self.queue
                        .schedule(now + self.latency, EventKind::MessageDelivery(msg));
                }
                Effect::ServiceStarted { ends } => {
                    self.queue
                        .schedule(ends, EventKind::ServiceComplete { resource: origin });
                }
                Effect::Finished(patient) => self.finished.push(patient),
                Effect::Reroute(patient) => {
                    let resource = self.admission.route(&patient)?;
                    self.queue
                        .schedule(now, EventKind::PatientArrival { patient, resource });
                }
                Effect::Return { to, patients } => {
                    self.bounced += patients.len() as u64;
                    for patient in patients {
                        self.queue.schedule(
                            now,
                            EventKind::PatientArrival {
                                patient,
                                resource: to,
                            },
                        );
                    }
                }
                Effect::Admitted {
                    admitted,
                    occupancy_after,
                    capacity,
                    ..
                } => {
                    self.admissions.push(AdmissionRecord {
                        at: now,
                        acceptor: origin,
                        admitted,
                        occupancy_after,
                        capacity,
                    });
                }
            }
        }
        Ok(())
    }

    fn settle_all(&mut self) -> Result<(), EngineError> {
        for slot in 0..self.agents.len() {
            let id = self.agents[slot].id();
            let effects = self.agents[slot].settle(self.now);
            self.apply(id, effects)?;
        }
        Ok(())
    }

    /// Every patient is in exactly one place: a pending arrival, a queue or
    /// service slot, an in-flight group, or the finished list.
    fn check_conservation(&mut self) -> Result<(), EngineError> {
        let mut seen: Vec<PatientId> = Vec::with_capacity(self.roster.len());
        for agent in &self.agents {
            let state = agent.state();
            seen.extend(state.in_service.iter().map(|s| s.patient.id));
            seen.extend(state.waiting_queue.iter().map(|p| p.id));
        }
        for event in self.queue.iter() {
            match &event.kind {
                EventKind::PatientArrival { patient, .. } => seen.push(patient.id),
                EventKind::MessageDelivery(ProtocolMessage {
                    payload: Payload::GroupMove(g),
                    ..
                }) => {
                    seen.extend(g.patients.iter().map(|p| p.id));
                }
                _ => {}
            }
        }
        seen.extend(self.finished.iter().map(|p| p.id));
        seen.sort_unstable();
        self.conservation_checks += 1;
        if seen == self.roster {
            return Ok(());
        }
        let mut counts: BTreeMap<PatientId, i64> = self.roster.iter().map(|&id| (id, -1)).collect();
        for id in &seen {
            *counts.entry(*id).or_insert(-1) += 1;
        }
        let detail = counts
            .iter()
            .filter(|(_, c)| **c != 0)
            .map(|(id, c)| {
                if *c < 0 {
                    format!("patient {id} missing")
                } else {
                    format!("patient {id} seen {} times", c + 1)
                }
            })
            .collect::<Vec<_>>()
            .join(", ");
        Err(EngineError::Conservation {
            tick: self.now,
            detail,
        })
    }

    fn stall(&self, reason: &str) -> EngineError {
        let done: std::collections::HashSet<PatientId> =
            self.finished.iter().map(|p| p.id).collect();
        let unfinished = self
            .roster
            .iter()
            .copied()
            .filter(|id| !done.contains(id))
            .collect();
        let resources = self
            .agents
            .iter()
            .map(|a| {
                let s = a.state();
                format!(
                    "{} waiting={} in_service={} reserved={} episode={}",
                    s.id,
                    s.waiting_queue.len(),
                    s.in_service
                        .as_ref()
                        .map_or("-".to_string(), |x| x.patient.id.to_string()),
                    s.reserved_slots(),
                    a.episode().state
                )
            })
            .collect();
        EngineError::Stall(Box::new(StallReport {
            tick: self.now,
            reason: reason.to_string(),
            unfinished,
            resources,
        }))
    }

    fn finish(self) -> Result<SimulationTrace, EngineError> {
        if self.finished.len() != self.roster.len() {
            return Err(self.stall("event queue empty with unfinished patients"));
        }
        let mut patients: Vec<PatientOutcome> = self
            .finished
            .iter()
            .map(PatientOutcome::from_record)
            .collect();
        patients.sort_by_key(|p| p.id);
        let resources = self
            .agents
            .iter()
            .map(|a| {
                let s = a.state();
                ResourceSummary {
                    id: s.id,
                    ring_index: s.ring_index,
                    fixed_capacity: s.fixed_capacity,
                    busy_ticks: s.busy_ticks,
                    completions: s.completions,
                    activated_at: s.activated_at,
                }
            })
            .collect();
        Ok(SimulationTrace {
            policy: self.policy,
            scenario_seed: self.scenario_seed,
            log: self.log,
            patients,
            resources,
            message_counts: self.message_counts,
            transfers: self.transfers,
            admissions: self.admissions,
            bounced_patients: self.bounced,
            conservation_checks: self.conservation_checks,
            end_tick: self.now,
        })
    }
}

/// Simulates `spec` under `policy` until every patient has finished.
pub fn run(spec: &ScenarioSpec, policy: PolicyLabel) -> Result<SimulationTrace, EngineError> {
    Simulation::new(spec, policy)?.run_to_end()
}
