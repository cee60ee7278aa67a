mod common;

use common::*;
use ipr_core::scenario::*;
use proptest::prelude::*;

fn toy1_doc() -> ScenarioDoc {
    fixture("toy-1.json").to_document()
}

#[test]
fn toy1_entity_counts() {
    let s = fixture("toy-1.json");
    assert_eq!(s.paths.len(), 1);
    assert_eq!(s.passengers.len(), 3);
    assert_eq!(s.runs.len(), 2);
    assert_eq!(s.lines.len(), 1);
    assert_eq!(s.ods.len(), 1);
    assert_eq!(s.demand(0, 1), 3.0);
    assert_eq!(s.headcount(0, 1), 3.0);
}

#[test]
fn broken_leg_order_names_rule() {
    let err = Scenario::load(fixture_path("broken-leg-order.json")).unwrap_err();
    assert_eq!(err.rule(), Some("leg_ordering"));
}

#[test]
fn unknown_keys_are_rejected() {
    let mut v: serde_json::Value = serde_json::from_str(&fixture("toy-1.json").to_json()).unwrap();
    v["runs"][0]["colour"] = serde_json::json!("red");
    let err = Scenario::from_json(&v.to_string()).unwrap_err();
    assert!(matches!(err, ScenarioError::Schema(_)), "{err}");
}

#[test]
fn missing_file_is_io_error() {
    let err = Scenario::load("/nonexistent/scenario.json").unwrap_err();
    assert!(matches!(err, ScenarioError::Io(_)));
}

#[test]
fn time_grid_order_enforced() {
    let mut doc = toy1_doc();
    doc.time_grid.t_min = 1;
    assert_eq!(Scenario::from_document(doc).unwrap_err().rule(), Some("time_grid"));
    let mut doc = toy1_doc();
    doc.time_grid.tau = 0.0;
    assert_eq!(Scenario::from_document(doc).unwrap_err().rule(), Some("time_grid"));
    let mut doc = toy1_doc();
    doc.time_grid.horizon_end = doc.time_grid.t_max;
    assert_eq!(Scenario::from_document(doc).unwrap_err().rule(), Some("time_grid"));
}

#[test]
fn run_past_period_end_rejected() {
    let mut doc = toy1_doc();
    doc.runs[1].departure = 4;
    assert_eq!(Scenario::from_document(doc).unwrap_err().rule(), Some("run_offsets"));
}

#[test]
fn decreasing_offsets_rejected() {
    let mut doc = toy1_doc();
    doc.runs[0].offsets = vec![1, 0];
    assert_eq!(Scenario::from_document(doc).unwrap_err().rule(), Some("run_offsets"));
}

#[test]
fn zero_capacity_is_legal() {
    let mut doc = toy1_doc();
    doc.runs[0].capacity = 0.0;
    assert!(Scenario::from_document(doc).is_ok());
}

#[test]
fn dangling_line_reference() {
    let mut doc = toy1_doc();
    doc.runs[0].line = "nope".into();
    assert_eq!(
        Scenario::from_document(doc).unwrap_err().rule(),
        Some("dangling_reference")
    );
}

#[test]
fn demand_split_mismatch() {
    let mut doc = toy1_doc();
    doc.demand[0].total = 4.0;
    assert_eq!(Scenario::from_document(doc).unwrap_err().rule(), Some("demand_split"));
}

#[test]
fn duplicate_passenger() {
    let mut doc = toy1_doc();
    doc.passengers[1].id = doc.passengers[0].id.clone();
    assert_eq!(Scenario::from_document(doc).unwrap_err().rule(), Some("unique_ids"));
}

#[test]
fn departure_outside_horizon() {
    let mut doc = toy1_doc();
    doc.passengers[0].departure = 3;
    doc.demand.push(DemandDoc {
        origin: "A".into(),
        destination: "B".into(),
        t: 3,
        total: 1.0,
    });
    doc.demand[0].total = 2.0;
    assert_eq!(
        Scenario::from_document(doc).unwrap_err().rule(),
        Some("passenger_departure")
    );
}

#[test]
fn bad_probability_rows() {
    let mut doc = fixture("toy-2.json").to_document();
    doc.passengers[0].choice_probabilities = Some(vec![vec![0.7, 0.2], vec![0.2, 0.8]]);
    assert_eq!(
        Scenario::from_document(doc).unwrap_err().rule(),
        Some("choice_probabilities")
    );
}

#[test]
fn status_quo_must_be_feasible() {
    let mut doc = fixture("toy-2.json").to_document();
    doc.passengers[0].status_quo = Some("elsewhere".into());
    assert!(Scenario::from_document(doc).is_err());
}

/// Line A-B-C with a run departing at -2 and offsets [0, 1, 5]; a seed on the B→C leg boards at
/// -1 and alights at 3.
fn seeded_doc(seed_departure: TimeIndex) -> ScenarioDoc {
    let text = format!(
        r#"{{
        "time_grid": {{ "t_min": -3, "t_max": 8, "horizon_end": 2, "incident_end": 1, "tau": 5 }},
        "stations": ["A", "B", "C"],
        "lines": [ {{ "id": "L", "stops": ["A", "B", "C"] }} ],
        "runs": [
            {{ "line": "L", "departure": -2, "capacity": 5, "offsets": [0, 1, 5] }},
            {{ "line": "L", "departure": 1, "capacity": 5, "offsets": [0, 1, 5] }}
        ],
        "paths": [ {{ "id": "bc", "origin": "B", "destination": "C", "legs": [ {{ "line": "L", "board": "B", "alight": "C" }} ] }} ],
        "demand": [ {{ "origin": "B", "destination": "C", "t": 1, "total": 1 }} ],
        "onboard_seed": [ {{ "path": "bc", "leg": 1, "departure": {seed_departure}, "flow": 2 }} ],
        "passengers": [ {{ "id": "p", "origin": "B", "destination": "C", "departure": 1, "paths": ["bc"], "utilities": [0] }} ]
    }}"#
    );
    serde_json::from_str(&text).unwrap()
}

#[test]
fn seed_inside_onboard_window_accepted() {
    let s = Scenario::from_document(seeded_doc(-2)).unwrap();
    let (lr, v) = s.seeds().next().unwrap();
    assert_eq!(v, 2.0);
    let tm = s.leg_timing(lr);
    assert_eq!((tm.delta_board, tm.delta_alight), (1, 5));
    assert!(tm.board_time <= 1 && 1 <= tm.alight_time);
}

#[test]
fn seed_outside_onboard_window_rejected() {
    let err = Scenario::from_document(seeded_doc(1)).unwrap_err();
    assert_eq!(err.rule(), Some("onboard_seed"));
}

#[test]
fn leg_timing_reads_offsets() {
    let s = fixture("toy-1.json");
    let tm = leg_timing(&s.runs[0], &s.paths[0].legs[0]).unwrap();
    assert_eq!((tm.delta_board, tm.delta_alight), (0, 1));
    assert_eq!(tm.ivt_minutes(s.grid.tau), 5.0);

    let run = Run {
        line: 0,
        departure: 1,
        capacity: 1.0,
        offsets: vec![0, 2, 3],
    };
    let leg = Leg {
        line: 0,
        board: 0,
        alight: 2,
        board_pos: 0,
        alight_pos: 2,
    };
    let tm = leg_timing(&run, &leg).unwrap();
    assert_eq!((tm.delta_board, tm.delta_alight), (0, 3));
    assert_eq!(tm.ivt_minutes(5.0), 15.0);

    let other = Leg { line: 1, ..leg };
    assert_eq!(leg_timing(&run, &other).unwrap_err().rule(), Some("leg_on_line"));
}

#[test]
fn round_trip_is_stable() {
    for name in [
        "toy-1.json",
        "toy-2.json",
        "seeded.json",
        "bottleneck.json",
        "incident.json",
    ] {
        let s = fixture(name);
        let text = s.to_json();
        let again = Scenario::from_json(&text).unwrap();
        assert_eq!(again.to_json(), text, "{name}");
        assert_eq!(again.to_document(), s.to_document());
    }
}

fn json<T: serde::Serialize>(v: &[T]) -> Vec<String> {
    let mut out: Vec<String> = v.iter().map(|x| serde_json::to_string(x).unwrap()).collect();
    out.sort();
    out
}

#[test]
fn round_trip_preserves_entity_sets() {
    let original: ScenarioDoc =
        serde_json::from_str(&std::fs::read_to_string(fixture_path("incident.json")).unwrap()).unwrap();
    let back = Scenario::from_document(original.clone()).unwrap().to_document();
    assert_eq!(json(&original.runs), json(&back.runs));
    assert_eq!(json(&original.paths), json(&back.paths));
    assert_eq!(json(&original.demand), json(&back.demand));
    assert_eq!(json(&original.background_flows), json(&back.background_flows));
    assert_eq!(json(&original.passengers), json(&back.passengers));
}

#[test]
fn transfer_and_boarding_sets() {
    let s = Scenario::from_document(random_single_path(3)).unwrap();
    let e = s.stations.iter().position(|x| x == "E").unwrap();
    let cd = s.path_index("cd").unwrap();
    assert_eq!(s.transfers_at(e), vec![(cd, 1)]);
    assert_eq!(s.boardings_at(e), vec![(cd, 1)]);
    let a = s.stations.iter().position(|x| x == "A").unwrap();
    assert!(s.transfers_at(a).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn onboard_matches_enumeration(seed in 0u64..10_000) {
        let s = Scenario::from_document(random_instance(seed, Shape::default())).unwrap();
        for (run_idx, run) in s.runs.iter().enumerate().take(5) {
            for tp in s.grid.t_min..=s.grid.t_max {
                let mut expected = Vec::new();
                for (p, path) in s.paths.iter().enumerate() {
                    for (i, leg) in path.legs.iter().enumerate() {
                        if leg.line != run.line {
                            continue;
                        }
                        let b = run.departure + run.offsets[leg.board_pos];
                        let a = run.departure + run.offsets[leg.alight_pos];
                        if b <= tp && tp <= a {
                            expected.push(LegRun { path: p, leg: i, run: run_idx });
                        }
                    }
                }
                prop_assert_eq!(s.onboard(run_idx, tp), expected);
            }
        }
    }

    #[test]
    fn demand_is_split_exactly(seed in 0u64..10_000) {
        let s = Scenario::from_document(random_instance(seed, Shape::default())).unwrap();
        for ((od, t), members) in s.cohorts() {
            let f: f64 = s.od_paths[od].iter().map(|&r| s.background_flow(r, t)).sum();
            prop_assert!((f + members.len() as f64 - s.demand(od, t)).abs() < 1e-9);
        }
    }

    #[test]
    fn counted_from_matches_count(t_max in 2i32..20, from in -5i32..25) {
        let g = TimeGrid { t_min: 0, t_max, horizon_end: 1, incident_end: 1, tau: 1.0 };
        let n = (1..=t_max).filter(|&t| t >= from).count() as f64;
        prop_assert_eq!(g.counted_from(from), n);
    }
}
