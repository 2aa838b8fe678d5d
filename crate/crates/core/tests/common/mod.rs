//! Helpers shared by the integration suites: an independent metric
//! recomputation that works from the text trace dump and the scenario, and
//! a brute-force single-machine optimum.

#![allow(dead_code)]

use std::collections::BTreeMap;

use num_rational::Ratio;

use dopsim::domain::{PatientId, ResourceId, Task, Weight};
use dopsim::scenario::{PatientSpec, ResourceSpec, ScenarioSpec};

pub type Q = Ratio<i128>;

/// Metrics recomputed line by line from a dump.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Recomputed {
    pub cmax: i128,
    pub tmax: i128,
    pub sum_c: i128,
    pub sum_t: i128,
    pub sum_wc: Q,
    pub sum_wt: Q,
    pub tmax0: i128,
    pub sum_t0: i128,
    pub sum_wt0: Q,
    pub messages: u64,
    pub idle: i128,
}

fn field<'a>(details: &'a str, key: &str) -> Option<&'a str> {
    details
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
}

fn num(details: &str, key: &str) -> i128 {
    field(details, key)
        .unwrap_or_else(|| panic!("no `{key}` in `{details}`"))
        .parse()
        .unwrap()
}

fn weight(w: Weight) -> Q {
    Ratio::new(w.numer() as i128, w.denom() as i128)
}

/// Parses `tick seq kind details` lines and recomputes every metric from
/// scratch using only the scenario's weights, arrivals and durations.
pub fn recompute(spec: &ScenarioSpec, dump: &str) -> Recomputed {
    let mut finished: BTreeMap<u32, i128> = BTreeMap::new();
    let mut activation: BTreeMap<String, i128> = BTreeMap::new();
    let mut busy: BTreeMap<String, i128> = BTreeMap::new();
    let mut messages = 0u64;
    for line in dump.lines() {
        let mut parts = line.splitn(4, ' ');
        let tick: i128 = parts.next().unwrap().parse().unwrap();
        let _seq = parts.next().unwrap();
        let kind = parts.next().unwrap();
        let details = parts.next().unwrap_or("");
        match kind {
            "PatientArrival" => {
                let r = field(details, "resource").unwrap().to_string();
                activation.entry(r).or_insert(tick);
            }
            "ServiceComplete" => {
                let r = field(details, "resource").unwrap().to_string();
                *busy.entry(r).or_insert(0) += num(details, "end") - num(details, "start");
                if field(details, "outcome") == Some("finished") {
                    let p: u32 = num(details, "patient") as u32;
                    assert!(
                        finished.insert(p, num(details, "end")).is_none(),
                        "patient {p} finished twice"
                    );
                }
            }
            "MessageDelivery" => {
                messages += 1;
                if details.contains(" GroupMove ") && num(details, "admitted") > 0 {
                    let r = field(details, "to").unwrap().to_string();
                    activation.entry(r).or_insert(tick);
                }
            }
            other => panic!("unknown event kind {other}"),
        }
    }

    let mut out = Recomputed {
        messages,
        ..Recomputed::default()
    };
    let mut tmax: Option<i128> = None;
    for p in &spec.patients {
        let c = *finished
            .get(&p.id.0)
            .unwrap_or_else(|| panic!("patient {} never finished", p.id));
        let due =
            p.hospital_arrival as i128 + p.tasks.iter().map(|t| t.duration as i128).sum::<i128>();
        let t = c - due;
        let w = weight(p.weight);
        out.cmax = out.cmax.max(c);
        tmax = Some(tmax.map_or(t, |m: i128| m.max(t)));
        out.sum_c += c;
        out.sum_t += t;
        out.sum_wc += w * c;
        out.sum_wt += w * t;
        out.sum_t0 += t.max(0);
        out.sum_wt0 += w * t.max(0);
    }
    out.tmax = tmax.unwrap_or(0);
    out.tmax0 = out.tmax.max(0);
    out.idle = activation
        .iter()
        .map(|(r, a)| out.cmax - a - busy.get(r).copied().unwrap_or(0))
        .sum();
    out
}

/// Same fields, taken from the library's own report.
pub fn from_report(r: &dopsim::metrics::MetricsReport) -> Recomputed {
    Recomputed {
        cmax: r.cmax as i128,
        tmax: r.tmax as i128,
        sum_c: r.sum_completion as i128,
        sum_t: r.sum_tardiness as i128,
        sum_wc: r.sum_weighted_completion,
        sum_wt: r.sum_weighted_tardiness,
        tmax0: r.clamped.tmax as i128,
        sum_t0: r.clamped.sum_tardiness as i128,
        sum_wt0: r.clamped.sum_weighted_tardiness,
        messages: r.message_count,
        idle: r.idle_ticks as i128,
    }
}

/// Minimum of Σ w_j C_j over all orders of `(weight, duration)` jobs that
/// are all available at time zero.
pub fn brute_force_min_wc(jobs: &[(u64, u64)]) -> u64 {
    fn go(jobs: &[(u64, u64)], used: &mut Vec<bool>, t: u64, acc: u64, best: &mut u64) {
        if used.iter().all(|&u| u) {
            *best = (*best).min(acc);
            return;
        }
        for i in 0..jobs.len() {
            if !used[i] {
                used[i] = true;
                let end = t + jobs[i].1;
                go(jobs, used, end, acc + jobs[i].0 * end, best);
                used[i] = false;
            }
        }
    }
    let mut best = u64::MAX;
    go(jobs, &mut vec![false; jobs.len()], 0, 0, &mut best);
    if jobs.is_empty() {
        0
    } else {
        best
    }
}

pub fn resource(id: u32, cap: u32) -> ResourceSpec {
    ResourceSpec {
        id: ResourceId(id),
        ring_index: id as usize,
        fixed_capacity: cap,
        capabilities: None,
    }
}

pub fn patient(id: u32, weight: Weight, arrival: u64, tasks: Vec<Task>) -> PatientSpec {
    PatientSpec {
        id: PatientId(id),
        weight,
        hospital_arrival: arrival,
        tasks,
    }
}

pub fn scenario(resources: Vec<ResourceSpec>, patients: Vec<PatientSpec>) -> ScenarioSpec {
    ScenarioSpec {
        resources,
        patients,
        message_latency: 1,
        assignment_policy: "round_robin".into(),
        rng_seed: 0,
    }
}
