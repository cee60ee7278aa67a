mod common;

use common::*;
use ipr_core::evaluate::{event_oracle, status_quo_plan};
use ipr_core::lp::{solve_lp, Tolerances};
use ipr_core::ofp::*;
use ipr_core::scenario::{Scenario, ScenarioDoc};
use proptest::prelude::*;

fn with_capacity(doc: &ScenarioDoc, f: impl Fn(f64) -> f64) -> Scenario {
    let mut doc = doc.clone();
    for r in doc.runs.iter_mut() {
        r.capacity = f(r.capacity);
    }
    Scenario::from_document(doc).unwrap()
}

#[test]
fn toy1_model_shape() {
    let s = fixture("toy-1.json");
    let m = build_optimal_flow(&s);
    let intervals = (s.grid.t_max - s.grid.t_min + 1) as usize;
    assert_eq!(m.index.q.len(), intervals);
    assert_eq!(m.index.z.len(), 2);
    assert_eq!(m.index.capacity_rows.len(), 2);
    assert_eq!(m.index.origin_rows.len(), intervals);
    assert!(m.index.transfer_rows.is_empty());
    assert_eq!(m.index.demand_rows.len(), intervals);
    m.model.validate().unwrap();
}

#[test]
fn toy1_optimum_and_travel_times() {
    let s = fixture("toy-1.json");
    let sol = solve_optimal_flow(&s).unwrap();
    // two board at t=1 (2.5 + 5 each); one waits a full interval, boards at t=2 (5 + 2.5 + 5)
    assert!((sol.objective - 27.5).abs() < 1e-9);
    assert!((sol.waiting - 12.5).abs() < 1e-9);
    assert!((sol.in_vehicle - 15.0).abs() < 1e-9);
    let tr = sol.travel[&(0, 1)];
    assert_eq!(tr.status, CohortStatus::Served);
    assert_eq!(tr.arrival, Some(3));
    assert_eq!(tr.minutes, 10.0);
    assert_eq!(sol.travel[&(0, 2)].status, CohortStatus::Empty);
    assert_eq!(sol.travel[&(0, 2)].minutes, 0.0);
    let oracle = event_oracle(&s, &[0, 0, 0]).unwrap();
    assert_eq!(oracle.total, sol.objective);
    let delayed = oracle.per_passenger.iter().filter(|&&m| m > 7.5).count();
    assert_eq!(delayed, 1);
}

#[test]
fn zero_demand_costs_nothing() {
    let mut doc = fixture("toy-1.json").to_document();
    doc.passengers.clear();
    doc.demand.clear();
    let s = Scenario::from_document(doc).unwrap();
    let sol = solve_optimal_flow(&s).unwrap();
    assert_eq!(sol.objective, 0.0);
    assert!(sol.z.values().all(|&v| v == 0.0));
}

#[test]
fn zero_capacity_everywhere() {
    let doc = fixture("toy-1.json").to_document();
    let s = with_capacity(&doc, |_| 0.0);
    let sol = solve_optimal_flow(&s).unwrap();
    // three passengers wait every counted interval from t=1 to T
    let expected = 3.0 * s.grid.tau * s.grid.counted_from(1);
    assert!((sol.objective - expected).abs() < 1e-9);
    assert!(sol.z.values().all(|&v| v == 0.0));
    assert_eq!(sol.travel[&(0, 1)].status, CohortStatus::Unfinished);
    let oracle = event_oracle(&s, &[0, 0, 0]).unwrap();
    assert_eq!(oracle.unfinished.len(), 3);
    assert!((oracle.total - expected).abs() < 1e-9);
}

#[test]
fn decomposition_matches_lp_objective() {
    for name in [
        "toy-1.json",
        "toy-2.json",
        "seeded.json",
        "bottleneck.json",
        "incident.json",
    ] {
        let s = fixture(name);
        let m = build_optimal_flow(&s);
        let out = solve_lp(&m.model, &Tolerances::default()).unwrap();
        let sol = solve_optimal_flow(&s).unwrap();
        assert!(rel_close(sol.waiting + sol.in_vehicle, out.objective, 1e-6), "{name}");
        assert!(sol.max_violation(&s) <= 1e-7, "{name}");
        let wt: f64 = sol.station_waits.values().sum();
        assert!(rel_close(wt, sol.waiting, 1e-9));
    }
}

#[test]
fn incident_rerouting_beats_waiting() {
    let s = fixture("incident.json");
    let best = solve_optimal_flow(&s).unwrap();
    let wait_only = solve_with_fixed_flows(&s, &status_quo_plan(&s).unwrap()).unwrap();
    assert!(best.objective < wait_only.objective);
    let oracle = event_oracle(&s, &vec![1; s.passengers.len()]).unwrap();
    assert!(best.objective <= oracle.total + 1e-9);
}

#[test]
fn refixing_the_optimum() {
    for name in ["toy-1.json", "toy-2.json", "incident.json", "bottleneck.json"] {
        let s = fixture(name);
        let best = solve_optimal_flow(&s).unwrap();
        let q: FixedFlows = best.q.iter().filter(|(_, &v)| v > 0.0).map(|(&k, &v)| (k, v)).collect();
        let again = solve_with_fixed_flows(&s, &q).unwrap();
        assert!(rel_close(again.objective, best.objective, 1e-9), "{name}");
        let sq = solve_with_fixed_flows(&s, &status_quo_plan(&s).unwrap()).unwrap();
        assert!(sq.objective >= best.objective - 1e-9, "{name}");
    }
}

#[test]
fn forced_onto_capacity_one_path() {
    let s = fixture("toy-2.json");
    let sol = solve_with_fixed_flows(&s, &flows_from_choices(&s, &[0, 0])).unwrap();
    let oracle = event_oracle(&s, &[0, 0]).unwrap();
    assert_eq!(sol.objective, oracle.total);
    // one rides at t=1, the other waits for the next run at t=3
    assert!((sol.objective - 25.0).abs() < 1e-9);
}

#[test]
fn fixed_flows_must_match_headcount() {
    let s = fixture("toy-2.json");
    let mut q = flows_from_choices(&s, &[0, 0]);
    q.insert((0, 1), 3.0);
    assert!(matches!(
        solve_with_fixed_flows(&s, &q),
        Err(FlowError::BadFixedFlows(_))
    ));
    let mut q = FixedFlows::new();
    q.insert((0, 1), -1.0);
    q.insert((1, 1), 3.0);
    assert!(matches!(
        solve_with_fixed_flows(&s, &q),
        Err(FlowError::BadFixedFlows(_))
    ));
}

#[test]
fn seed_without_supply_is_infeasible() {
    let s = fixture("seeded.json");
    let via_q = s.path_index("viaQ").unwrap();
    let mut q = FixedFlows::new();
    q.insert((via_q, 1), 3.0);
    match solve_with_fixed_flows(&s, &q) {
        Err(FlowError::Infeasible { ray, rows }) => {
            assert!(!ray.is_empty());
            assert!(rows.iter().any(|r| r.starts_with("seed[")), "{rows:?}");
        }
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn loads_respect_capacity() {
    for name in ["toy-2.json", "bottleneck.json", "incident.json"] {
        let s = fixture(name);
        let sol = solve_optimal_flow(&s).unwrap();
        for row in sol.loads(&s) {
            assert!(row.load <= row.capacity + 1e-7);
        }
    }
}

#[test]
fn ample_capacity_waits_half_an_interval_per_leg() {
    let doc = random_single_path(11);
    let mut doc = doc;
    doc.runs.clear();
    for dep in 0..=10 {
        for (line, ride) in [("L0", 2), ("L1", 1), ("L2", 1)] {
            let offsets = if line == "L0" { vec![0, 1, ride] } else { vec![0, ride] };
            doc.runs.push(ipr_core::scenario::RunDoc {
                line: line.into(),
                departure: dep,
                capacity: 1000.0,
                offsets,
            });
        }
    }
    let s = Scenario::from_document(doc).unwrap();
    let sol = solve_optimal_flow(&s).unwrap();
    let boardings: f64 = sol.z.values().sum();
    assert!((sol.waiting - boardings * s.grid.tau / 2.0).abs() < 1e-9);
    let oracle = event_oracle(&s, &vec![0; s.passengers.len()]).unwrap();
    assert!((oracle.waiting - sol.waiting).abs() < 1e-9);
    assert!((oracle.total - sol.objective).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn more_capacity_never_hurts(seed in 0u64..10_000) {
        let doc = random_instance(seed, Shape::default());
        let base = solve_optimal_flow(&Scenario::from_document(doc.clone()).unwrap()).unwrap();
        let doubled = solve_optimal_flow(&with_capacity(&doc, |k| 2.0 * k)).unwrap();
        prop_assert!(doubled.objective <= base.objective + 1e-7);
    }

    #[test]
    fn relaxation_dominates_fixed_flows(seed in 0u64..10_000, pick in 0usize..100) {
        let s = Scenario::from_document(random_instance(seed, Shape::default())).unwrap();
        let best = solve_optimal_flow(&s).unwrap();
        let choices: Vec<usize> = s.passengers.iter().enumerate().map(|(i, p)| (pick + i) % p.paths.len()).collect();
        let fixed = solve_with_fixed_flows(&s, &flows_from_choices(&s, &choices)).unwrap();
        prop_assert!(best.objective <= fixed.objective + 1e-7);
        prop_assert!(fixed.max_violation(&s) <= 1e-7);
        prop_assert!(rel_close(fixed.waiting + fixed.in_vehicle, fixed.objective, 1e-9));
    }

    #[test]
    fn single_path_lp_equals_oracle(seed in 0u64..10_000) {
        let s = Scenario::from_document(random_single_path(seed)).unwrap();
        let lp = solve_optimal_flow(&s).unwrap();
        let oracle = event_oracle(&s, &vec![0; s.passengers.len()]).unwrap();
        prop_assert!(rel_close(lp.objective, oracle.total, 1e-9), "lp {} oracle {}", lp.objective, oracle.total);
    }

    #[test]
    fn cumulative_boarding_never_exceeds_supply(seed in 0u64..10_000) {
        let s = Scenario::from_document(random_instance(seed, Shape::default())).unwrap();
        let sol = solve_optimal_flow(&s).unwrap();
        for (r, path) in s.paths.iter().enumerate() {
            for t in s.grid.intervals() {
                let supply: f64 = (s.grid.t_min..=t).map(|u| sol.q(r, u) + s.background_flow(r, u)).sum();
                let boarded: f64 = sol
                    .z
                    .iter()
                    .filter(|(lr, _)| lr.path == r && lr.leg == 0 && s.leg_timing(**lr).board_time <= t)
                    .map(|(_, v)| v)
                    .sum();
                prop_assert!(boarded <= supply + 1e-7);
                for i in 1..path.legs.len() {
                    let on: f64 = sol.z.iter()
                        .filter(|(lr, _)| lr.path == r && lr.leg == i && s.leg_timing(**lr).board_time <= t)
                        .map(|(_, v)| v).sum();
                    let off: f64 = sol.z.iter()
                        .filter(|(lr, _)| lr.path == r && lr.leg == i - 1 && s.leg_timing(**lr).alight_time <= t)
                        .map(|(_, v)| v).sum();
                    prop_assert!(on <= off + 1e-7);
                }
            }
        }
    }
}
