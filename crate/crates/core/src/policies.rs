//! Queue-ordering disciplines.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{PatientRecord, ResourceState, Tick};

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum PolicyLabel {
    #[default]
    #[serde(rename = "FCFS")]
    Fcfs,
    #[serde(rename = "WSPT")]
    Wspt,
    #[serde(rename = "DOPS")]
    Dops,
    #[serde(rename = "DOPSG")]
    Dopsg,
}

/// How many patients a migration source may move per accepted request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupMode {
    /// One patient per request/accept/move cycle.
    Single,
    /// Up to the granted slot count per cycle.
    Grouped,
}

impl PolicyLabel {
    /// Report order.
    pub const ALL: [PolicyLabel; 4] = [
        PolicyLabel::Fcfs,
        PolicyLabel::Wspt,
        PolicyLabel::Dops,
        PolicyLabel::Dopsg,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyLabel::Fcfs => "FCFS",
            PolicyLabel::Wspt => "WSPT",
            PolicyLabel::Dops => "DOPS",
            PolicyLabel::Dopsg => "DOPSG",
        }
    }

    /// `None` when the policy never migrates.
    pub fn group_mode(&self) -> Option<GroupMode> {
        match self {
            PolicyLabel::Fcfs | PolicyLabel::Wspt => None,
            PolicyLabel::Dops => Some(GroupMode::Single),
            PolicyLabel::Dopsg => Some(GroupMode::Grouped),
        }
    }

    pub fn migrates(&self) -> bool {
        self.group_mode().is_some()
    }
}

impl fmt::Display for PolicyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown policy `{0}` (expected fcfs, wspt, dops or dopsg)")]
pub struct UnknownPolicy(pub String);

impl FromStr for PolicyLabel {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fcfs" => Ok(PolicyLabel::Fcfs),
            "wspt" => Ok(PolicyLabel::Wspt),
            "dops" => Ok(PolicyLabel::Dops),
            "dopsg" => Ok(PolicyLabel::Dopsg),
            _ => Err(UnknownPolicy(s.to_string())),
        }
    }
}

fn fcfs_key(a: &PatientRecord, b: &PatientRecord) -> Ordering {
    a.queue_arrival.cmp(&b.queue_arrival).then(a.id.cmp(&b.id))
}

/// Compares `w_a / p_a` against `w_b / p_b` by cross-multiplication.
/// A patient with nothing left to do ranks below everyone.
fn ratio_cmp(a: &PatientRecord, b: &PatientRecord) -> Ordering {
    match (a.next_task(), b.next_task()) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(ta), Some(tb)) => {
            let lhs = u128::from(a.weight.numer())
                * u128::from(b.weight.denom())
                * u128::from(tb.duration);
            let rhs = u128::from(b.weight.numer())
                * u128::from(a.weight.denom())
                * u128::from(ta.duration);
            lhs.cmp(&rhs)
        }
    }
}

/// Total order used to rank waiting patients; `Less` means served first.
pub fn compare(label: PolicyLabel, a: &PatientRecord, b: &PatientRecord) -> Ordering {
    match label {
        PolicyLabel::Fcfs => fcfs_key(a, b),
        PolicyLabel::Wspt | PolicyLabel::Dops | PolicyLabel::Dopsg => {
            ratio_cmp(b, a).then_with(|| fcfs_key(a, b))
        }
    }
}

pub fn order_queue(label: PolicyLabel, queue: &[PatientRecord]) -> Vec<PatientRecord> {
    let mut ordered = queue.to_vec();
    ordered.sort_by(|a, b| compare(label, a, b));
    ordered
}

/// Removes and returns the best-ranked waiting patient the resource can serve.
pub fn select_next(
    label: PolicyLabel,
    resource: &mut ResourceState,
    _now: Tick,
) -> Option<PatientRecord> {
    let caps = &resource.capabilities;
    let best = resource
        .waiting_queue
        .iter()
        .enumerate()
        .filter(|(_, p)| caps.serves_next(p))
        .min_by(|(_, a), (_, b)| compare(label, a, b))
        .map(|(i, _)| i)?;
    Some(resource.waiting_queue.remove(best))
}
