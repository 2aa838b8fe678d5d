use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PatientSpec, ResourceSpec, ScenarioError, ScenarioSpec};
use crate::domain::{PatientId, ResourceId, Task, TaskKind, Tick, Weight};

/// Checkup stations of a master health checkup.
pub const DEFAULT_TASK_KINDS: [&str; 8] = [
    "blood_test",
    "urine_test",
    "ecg",
    "ultrasound",
    "xray",
    "thyroid",
    "dental",
    "eye",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorParams {
    pub resources: usize,
    pub patients: usize,
    pub durations: RangeInclusive<Tick>,
    pub weights: RangeInclusive<u64>,
    pub arrivals: RangeInclusive<Tick>,
    pub tasks_per_patient: RangeInclusive<usize>,
    pub task_kinds: Vec<String>,
    /// Fixed capacity of every resource; `None` means `ceil(n / 2m)`.
    pub capacity: Option<u32>,
    pub message_latency: Tick,
}

impl GeneratorParams {
    pub fn new(resources: usize, patients: usize) -> Self {
        GeneratorParams {
            resources,
            patients,
            durations: 5..=30,
            weights: 1..=5,
            arrivals: 0..=120,
            tasks_per_patient: 1..=1,
            task_kinds: DEFAULT_TASK_KINDS.iter().map(|s| s.to_string()).collect(),
            capacity: None,
            message_latency: 1,
        }
    }

    /// `ceil(n / 2m)`, at least 1.
    pub fn effective_capacity(&self) -> u32 {
        self.capacity.unwrap_or_else(|| {
            let m = self.resources.max(1);
            let cap = self.patients.div_ceil(2 * m).max(1);
            u32::try_from(cap).unwrap_or(u32::MAX)
        })
    }

    fn check(&self) -> Result<(), ScenarioError> {
        fn range<T: PartialOrd + std::fmt::Debug>(
            name: &str,
            r: &RangeInclusive<T>,
        ) -> Result<(), ScenarioError> {
            if r.start() > r.end() {
                return Err(ScenarioError::Range(format!(
                    "{name} range {r:?} is inverted"
                )));
            }
            Ok(())
        }
        if self.resources == 0 {
            return Err(ScenarioError::Range(
                "resource count must be at least 1".into(),
            ));
        }
        range("duration", &self.durations)?;
        range("weight", &self.weights)?;
        range("arrival", &self.arrivals)?;
        range("tasks-per-patient", &self.tasks_per_patient)?;
        if *self.durations.start() == 0 {
            return Err(ScenarioError::Range("durations must be positive".into()));
        }
        if *self.weights.start() == 0 {
            return Err(ScenarioError::Range("weights must be positive".into()));
        }
        if *self.tasks_per_patient.start() == 0 {
            return Err(ScenarioError::Range(
                "patients need at least one task".into(),
            ));
        }
        if self.task_kinds.is_empty() || *self.tasks_per_patient.end() > self.task_kinds.len() {
            return Err(ScenarioError::Range(format!(
                "tasks-per-patient upper bound {} exceeds the {} available task kinds",
                self.tasks_per_patient.end(),
                self.task_kinds.len()
            )));
        }
        if self.capacity == Some(0) {
            return Err(ScenarioError::Range("capacity must be positive".into()));
        }
        Ok(())
    }
}

/// Builds a scenario from `params`; the same `(params, seed)` always yields
/// the same document.
pub fn generate_scenario(
    params: &GeneratorParams,
    seed: u64,
) -> Result<ScenarioSpec, ScenarioError> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let capacity = params.effective_capacity();

    let resources = (0..params.resources)
        .map(|i| ResourceSpec {
            id: ResourceId(i as u32),
            ring_index: i,
            fixed_capacity: capacity,
            capabilities: None,
        })
        .collect();

    let kinds: Vec<TaskKind> = params.task_kinds.iter().map(TaskKind::new).collect();
    let patients = (0..params.patients)
        .map(|i| {
            let weight =
                Weight::integer(rng.gen_range(params.weights.clone())).expect("positive by check");
            let hospital_arrival = rng.gen_range(params.arrivals.clone());
            let count = rng.gen_range(params.tasks_per_patient.clone());
            let tasks = kinds
                .choose_multiple(&mut rng, count)
                .map(|kind| Task {
                    kind: kind.clone(),
                    duration: rng.gen_range(params.durations.clone()),
                })
                .collect::<Vec<_>>();
            PatientSpec {
                id: PatientId(i as u32),
                weight,
                hospital_arrival,
                tasks,
            }
        })
        .collect();

    let spec = ScenarioSpec {
        resources,
        patients,
        message_latency: params.message_latency,
        assignment_policy: "round_robin".to_string(),
        rng_seed: seed,
    };
    spec.validate()?;
    Ok(spec)
}
