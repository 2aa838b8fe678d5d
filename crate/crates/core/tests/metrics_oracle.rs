mod common;

use common::{from_report, patient, recompute, resource, scenario};
use dopsim::domain::{Task, Weight};
use dopsim::engine::run;
use dopsim::metrics::aggregate;
use dopsim::policies::PolicyLabel;
use dopsim::scenario::{generate_scenario, GeneratorParams};
use proptest::prelude::*;

fn arb_policy() -> impl Strategy<Value = PolicyLabel> {
    prop::sample::select(PolicyLabel::ALL.to_vec())
}

#[test]
fn hand_computed_single_station() {
    // A(w 1, 5) and B(w 2, 3) at tick 0; FCFS serves A first.
    let spec = scenario(
        vec![resource(0, 2)],
        vec![
            patient(0, Weight::integer(1).unwrap(), 0, vec![Task::new("ecg", 5)]),
            patient(1, Weight::integer(2).unwrap(), 0, vec![Task::new("ecg", 3)]),
        ],
    );
    let trace = run(&spec, PolicyLabel::Fcfs).unwrap();
    let r = aggregate(&trace).unwrap();
    assert_eq!((r.cmax, r.sum_completion), (8, 13));
    // due times 5 and 3, so tardiness 0 and 5
    assert_eq!((r.tmax, r.sum_tardiness), (5, 5));
    assert_eq!(
        r.sum_weighted_tardiness,
        num_rational::Ratio::from_integer(10)
    );
    assert_eq!(from_report(&r), recompute(&spec, &trace.dump()));
}

#[test]
fn rational_weights_stay_exact() {
    let spec = scenario(
        vec![resource(0, 3)],
        vec![
            patient(0, Weight::new(1, 3).unwrap(), 0, vec![Task::new("ecg", 4)]),
            patient(1, Weight::new(5, 7).unwrap(), 1, vec![Task::new("ecg", 2)]),
        ],
    );
    let trace = run(&spec, PolicyLabel::Wspt).unwrap();
    let r = aggregate(&trace).unwrap();
    assert_eq!(from_report(&r), recompute(&spec, &trace.dump()));
    assert_eq!(*r.sum_weighted_completion.denom(), 21);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn aggregate_matches_recomputation(
        seed in any::<u64>(),
        m in 1usize..5,
        n in 0usize..25,
        tasks in 1usize..4,
        policy in arb_policy(),
        denom in 1u64..5,
    ) {
        let mut params = GeneratorParams::new(m, n);
        params.tasks_per_patient = 1..=tasks;
        params.arrivals = 0..=40;
        let mut spec = generate_scenario(&params, seed).unwrap();
        for p in &mut spec.patients {
            p.weight = Weight::new(p.weight.numer(), denom).unwrap();
        }
        let trace = run(&spec, policy).unwrap();
        let report = aggregate(&trace).unwrap();
        prop_assert_eq!(from_report(&report), recompute(&spec, &trace.dump()));
    }

    #[test]
    fn clamped_never_exceeds_literal_bounds(seed in any::<u64>(), policy in arb_policy()) {
        let spec = generate_scenario(&GeneratorParams::new(3, 20), seed).unwrap();
        let r = aggregate(&run(&spec, policy).unwrap()).unwrap();
        prop_assert!(r.clamped.sum_tardiness >= r.sum_tardiness);
        prop_assert!(r.clamped.sum_tardiness >= 0);
        prop_assert_eq!(r.clamped.tmax, r.tmax.max(0));
        // tasks run back to back at best, so no patient beats its due time
        let latest_due = spec.patients.iter().map(|p| p.hospital_arrival + p.tasks.iter().map(|t| t.duration).sum::<u64>()).max().unwrap_or(0);
        prop_assert!(r.cmax >= latest_due);
    }
}
