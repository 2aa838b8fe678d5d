//! Scenario documents: parsing, validation, rendering and generation.
//!
//! A scenario is a JSON document (conventionally `*.scn.json`). All times
//! are integer ticks, one tick standing for one minute:
//!
//! ```json
//! {
//!   "resources": [
//!     { "id": 0, "ring_index": 0, "fixed_capacity": 2 },
//!     { "id": 1, "ring_index": 1, "fixed_capacity": 2, "capabilities": ["ecg"] }
//!   ],
//!   "patients": [
//!     { "id": 0, "weight": 2, "hospital_arrival": 0,
//!       "tasks": [ { "kind": "ecg", "duration": 10 } ] }
//!   ],
//!   "message_latency": 1,
//!   "assignment_policy": "round_robin",
//!   "rng_seed": 42
//! }
//! ```
//!
//! `capabilities` may be omitted, meaning the resource serves every task
//! kind. `weight` defaults to 1 and may be an integer or a `"n/d"` string.
//! `message_latency` defaults to 1 and `assignment_policy` to `round_robin`.
//! Unknown fields are rejected.

mod generate;
mod report;

pub use generate::{generate_scenario, GeneratorParams, DEFAULT_TASK_KINDS};
pub use report::{
    render_decimal, write_report, write_report_to, ReportRow, TardinessMode, REPORT_HEADER,
};

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Capabilities, PatientId, PatientRecord, ResourceId, Task, TaskKind, Tick, Weight,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation error: {0}")]
    Validation(#[from] ValidationError),
    #[error("range error: {0}")]
    Range(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValidationError {
    #[error("scenario has no resources")]
    NoResources,
    #[error("duplicate resource id {0}")]
    DuplicateResource(ResourceId),
    #[error("duplicate patient id {0}")]
    DuplicatePatient(PatientId),
    #[error("ring_index values must be exactly 0..{expected}; resource {resource} has {found}")]
    RingIndex {
        resource: ResourceId,
        found: usize,
        expected: usize,
    },
    #[error("resource {0}: fixed_capacity must be positive")]
    NonPositiveCapacity(ResourceId),
    #[error("patient {patient}: no resource serves task kind `{kind}`")]
    OrphanTaskKind { patient: PatientId, kind: TaskKind },
    #[error("patient {patient}: task `{kind}` has non-positive duration")]
    NonPositiveDuration { patient: PatientId, kind: TaskKind },
    #[error("patient {0}: task list is empty")]
    NoTasks(PatientId),
    #[error("unsupported assignment_policy `{0}` (only `round_robin`)")]
    AssignmentPolicy(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceSpec {
    pub id: ResourceId,
    pub ring_index: usize,
    pub fixed_capacity: u32,
    /// `None` serves every task kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capabilities: Option<BTreeSet<TaskKind>>,
}

impl ResourceSpec {
    pub fn capabilities(&self) -> Capabilities {
        match &self.capabilities {
            None => Capabilities::All,
            Some(set) => Capabilities::Only(set.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientSpec {
    pub id: PatientId,
    #[serde(default)]
    pub weight: Weight,
    pub hospital_arrival: Tick,
    pub tasks: Vec<Task>,
}

fn default_latency() -> Tick {
    1
}

fn default_assignment() -> String {
    "round_robin".to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub resources: Vec<ResourceSpec>,
    pub patients: Vec<PatientSpec>,
    #[serde(default = "default_latency")]
    pub message_latency: Tick,
    #[serde(default = "default_assignment")]
    pub assignment_policy: String,
    #[serde(default)]
    pub rng_seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.resources.is_empty() {
            return Err(ValidationError::NoResources);
        }
        if self.assignment_policy != "round_robin" {
            return Err(ValidationError::AssignmentPolicy(
                self.assignment_policy.clone(),
            ));
        }
        let m = self.resources.len();
        let mut ids = HashSet::new();
        let mut rings = HashSet::new();
        for r in &self.resources {
            if !ids.insert(r.id) {
                return Err(ValidationError::DuplicateResource(r.id));
            }
            if r.ring_index >= m || !rings.insert(r.ring_index) {
                return Err(ValidationError::RingIndex {
                    resource: r.id,
                    found: r.ring_index,
                    expected: m,
                });
            }
            if r.fixed_capacity == 0 {
                return Err(ValidationError::NonPositiveCapacity(r.id));
            }
        }
        let caps: Vec<Capabilities> = self
            .resources
            .iter()
            .map(ResourceSpec::capabilities)
            .collect();
        let mut patients = HashSet::new();
        for p in &self.patients {
            if !patients.insert(p.id) {
                return Err(ValidationError::DuplicatePatient(p.id));
            }
            if p.tasks.is_empty() {
                return Err(ValidationError::NoTasks(p.id));
            }
            for task in &p.tasks {
                if task.duration == 0 {
                    return Err(ValidationError::NonPositiveDuration {
                        patient: p.id,
                        kind: task.kind.clone(),
                    });
                }
                if !caps.iter().any(|c| c.serves(&task.kind)) {
                    return Err(ValidationError::OrphanTaskKind {
                        patient: p.id,
                        kind: task.kind.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Patient records in document order.
    pub fn patient_records(&self) -> Vec<PatientRecord> {
        self.patients
            .iter()
            .map(|p| {
                PatientRecord::new(p.id, p.weight, p.hospital_arrival, p.tasks.clone())
                    .expect("validated scenario has positive durations")
            })
            .collect()
    }

    /// Resources sorted by ring position.
    pub fn ring_order(&self) -> Vec<&ResourceSpec> {
        let mut ring: Vec<&ResourceSpec> = self.resources.iter().collect();
        ring.sort_by_key(|r| r.ring_index);
        ring
    }

    pub fn render(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("scenario serializes");
        text.push('\n');
        text
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        parse_scenario(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        let path = path.as_ref();
        std::fs::write(path, self.render()).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, ScenarioError> {
    let spec: ScenarioSpec =
        serde_json::from_str(text).map_err(|e| ScenarioError::Schema(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

pub fn render_scenario(spec: &ScenarioSpec) -> String {
    spec.render()
}
