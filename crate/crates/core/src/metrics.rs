//! Schedule quality metrics computed from a finished trace.
//!
//! Completion is the absolute tick at which a patient's last task ends.
//! Due time is hospital arrival plus total processing time, and tardiness is
//! completion minus due time, kept signed. Clamped variants floor each
//! patient's tardiness at zero before aggregating.

use std::collections::BTreeMap;

use num_rational::Ratio;
use num_traits::Zero;
use thiserror::Error;

use crate::domain::{PatientId, Tick, Weight};
use crate::engine::{MessageKind, PatientOutcome, SimulationTrace};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("patient {patient} still has {pending} pending task(s)")]
    Incomplete { patient: PatientId, pending: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClampedTardiness {
    pub tmax: i64,
    pub sum_tardiness: i64,
    pub sum_weighted_tardiness: Ratio<i128>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricsReport {
    pub patients: usize,
    pub cmax: Tick,
    pub tmax: i64,
    pub sum_completion: u64,
    pub sum_tardiness: i64,
    pub sum_weighted_completion: Ratio<i128>,
    pub sum_weighted_tardiness: Ratio<i128>,
    pub message_count: u64,
    pub messages_by_kind: BTreeMap<MessageKind, u64>,
    pub idle_ticks: u64,
    pub clamped: ClampedTardiness,
}

impl MetricsReport {
    /// All-zero report for a run without patients.
    pub fn empty() -> Self {
        MetricsReport {
            patients: 0,
            cmax: 0,
            tmax: 0,
            sum_completion: 0,
            sum_tardiness: 0,
            sum_weighted_completion: Ratio::zero(),
            sum_weighted_tardiness: Ratio::zero(),
            message_count: 0,
            messages_by_kind: BTreeMap::new(),
            idle_ticks: 0,
            clamped: ClampedTardiness {
                tmax: 0,
                sum_tardiness: 0,
                sum_weighted_tardiness: Ratio::zero(),
            },
        }
    }
}

/// Absolute end tick of the patient's final task.
pub fn completion_time(patient: &PatientOutcome) -> Result<Tick, MetricsError> {
    if patient.pending_tasks > 0 || patient.completed.is_empty() {
        return Err(MetricsError::Incomplete {
            patient: patient.id,
            pending: patient.pending_tasks,
        });
    }
    Ok(patient.completed.iter().map(|t| t.end).max().unwrap_or(0))
}

/// Completion minus due time; negative when the patient finished early.
pub fn tardiness(completion: Tick, due: Tick) -> i64 {
    to_i64(completion) - to_i64(due)
}

pub fn clamped_tardiness(completion: Tick, due: Tick) -> i64 {
    tardiness(completion, due).max(0)
}

fn to_i64(t: Tick) -> i64 {
    i64::try_from(t).expect("tick fits in i64")
}

pub fn aggregate(trace: &SimulationTrace) -> Result<MetricsReport, MetricsError> {
    let mut report = MetricsReport::empty();
    report.patients = trace.patients.len();
    report.message_count = trace.message_counts.values().sum();
    report.messages_by_kind = trace.message_counts.clone();

    let mut tmax: Option<i64> = None;
    for patient in &trace.patients {
        let completion = completion_time(patient)?;
        let late = tardiness(completion, patient.due_time);
        let weight: Weight = patient.weight;

        report.cmax = report.cmax.max(completion);
        tmax = Some(tmax.map_or(late, |t| t.max(late)));
        report.sum_completion += completion;
        report.sum_tardiness += late;
        report.sum_weighted_completion += weight.times(to_i64(completion));
        report.sum_weighted_tardiness += weight.times(late);

        let floored = late.max(0);
        report.clamped.sum_tardiness += floored;
        report.clamped.sum_weighted_tardiness += weight.times(floored);
    }
    report.tmax = tmax.unwrap_or(0);
    report.clamped.tmax = report.tmax.max(0);

    report.idle_ticks = trace
        .resources
        .iter()
        .filter_map(|r| {
            r.activated_at
                .map(|a| report.cmax.saturating_sub(a).saturating_sub(r.busy_ticks))
        })
        .sum();
    Ok(report)
}
