mod common;

use common::*;
use ipr_core::benders::BendersOptions;
use ipr_core::choice::ChoiceModel;
use ipr_core::evaluate::*;
use ipr_core::ipr::{solve_ipr_direct, IprParams};
use ipr_core::ofp::{flows_from_choices, solve_with_fixed_flows};
use ipr_core::report::{read_plan, write_plan, Header};
use ipr_core::scenario::{PassengerDoc, Scenario};
use proptest::prelude::*;

/// toy-2 with `n` passengers and first-run capacities `fast` and `slow`.
fn toy2_with(n: usize, fast: f64, slow: f64) -> Scenario {
    let mut doc = fixture("toy-2.json").to_document();
    let template = doc.passengers[0].clone();
    doc.passengers = (0..n)
        .map(|i| PassengerDoc {
            id: format!("q{i}"),
            ..template.clone()
        })
        .collect();
    doc.demand[0].total = n as f64;
    for r in doc.runs.iter_mut().filter(|r| r.departure == 1) {
        r.capacity = if r.line == "FAST" { fast } else { slow };
    }
    Scenario::from_document(doc).unwrap()
}

fn count_on(s: &Scenario, a: &[usize], path: &str) -> usize {
    let r = s.path_index(path).unwrap();
    s.passengers.iter().zip(a).filter(|(p, &k)| p.paths[k] == r).count()
}

#[test]
fn mean_std_uses_sample_variance() {
    let m = mean_std(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m.mean, 2.5);
    assert!((m.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    assert_eq!(mean_std(&[7.0]).std, 0.0);
    assert!(mean_std(&[]).mean.is_nan());
}

#[test]
fn largest_remainder_splits() {
    assert_eq!(largest_remainder(4, &[2.0, 2.0]), vec![2, 2]);
    assert_eq!(largest_remainder(4, &[3.0, 1.0]), vec![3, 1]);
    assert_eq!(largest_remainder(3, &[1.0, 1.0]), vec![2, 1]);
    assert_eq!(largest_remainder(5, &[0.0, 1.0]), vec![0, 5]);
    assert_eq!(largest_remainder(2, &[0.0, 0.0]), vec![0, 0]);
    assert_eq!(largest_remainder(7, &[1.0, 2.0, 4.0]), vec![1, 2, 4]);
}

#[test]
fn capacity_plan_follows_capacity() {
    let s = toy2_with(4, 2.0, 2.0);
    let a = capacity_based_plan(&s).unwrap();
    assert_eq!((count_on(&s, &a, "direct"), count_on(&s, &a, "local")), (2, 2));
    let s = toy2_with(4, 3.0, 1.0);
    let a = capacity_based_plan(&s).unwrap();
    assert_eq!((count_on(&s, &a, "direct"), count_on(&s, &a, "local")), (3, 1));
    // a suspended path carries no weight
    let s = toy2_with(4, 0.0, 1.0);
    let a = capacity_based_plan(&s).unwrap();
    assert_eq!(count_on(&s, &a, "local"), 4);
    assert_eq!(path_capacity(&s, s.path_index("direct").unwrap(), 1), 0.0);
}

#[test]
fn identity_choice_has_no_spread() {
    let s = fixture("bottleneck.json");
    let c = ChoiceModel::identity(&s);
    let a = capacity_based_plan(&s).unwrap();
    let rep = monte_carlo_eval(&s, &c, &a, 25, 3).unwrap();
    let exact = solve_with_fixed_flows(&s, &flows_from_choices(&s, &a)).unwrap();
    assert_eq!(rep.stt.std, 0.0);
    assert!(rel_close(rep.stt.mean, exact.objective, 1e-12));
    assert_eq!(rep.failed, 0);
    assert_eq!(rep.replications.len(), 25);
}

#[test]
fn toy2_monte_carlo_matches_enumeration() {
    let s = fixture("toy-2.json");
    let c = ChoiceModel::from_scenario(&s);
    for a in all_assignments(&s) {
        let mut expected = 0.0;
        for o in all_assignments(&s) {
            let prob: f64 = (0..2).map(|p| c.prob(p, a[p], o[p])).product();
            let v = solve_with_fixed_flows(&s, &flows_from_choices(&s, &o))
                .unwrap()
                .objective;
            expected += prob * v;
        }
        let rep = monte_carlo_eval(&s, &c, &a, 10_000, 99).unwrap();
        let se = rep.stt_standard_error();
        assert!(
            (rep.stt.mean - expected).abs() <= 3.0 * se,
            "{a:?}: {} vs {expected} (se {se})",
            rep.stt.mean
        );
    }
}

#[test]
fn evaluation_is_reproducible() {
    let s = fixture("incident.json");
    let c = ChoiceModel::from_scenario(&s);
    let a = status_quo_assignment(&s).unwrap();
    let one = monte_carlo_eval(&s, &c, &a, 50, 5).unwrap();
    let two = monte_carlo_eval(&s, &c, &a, 50, 5).unwrap();
    assert_eq!(one, two);
    assert!(matches!(
        monte_carlo_eval(&s, &c, &a, 0, 5),
        Err(EvalError::NoReplications)
    ));
}

#[test]
fn infeasible_replications_are_excluded() {
    let s = fixture("seeded.json");
    let c = ChoiceModel::identity(&s);
    let via_q: Vec<usize> = s
        .passengers
        .iter()
        .map(|p| p.paths.iter().position(|&r| s.paths[r].id == "viaQ").unwrap())
        .collect();
    let rep = monte_carlo_eval(&s, &c, &via_q, 4, 1).unwrap();
    assert_eq!(rep.failed, 4);
    assert!(rep.replications.iter().all(|r| r.stats.is_none()));
}

#[test]
fn preference_metrics_by_hand() {
    let s = fixture("toy-2.json");
    let m = preference_metrics(&s, &[1, 0]);
    assert!((m.total_utility - 0.8).abs() < 1e-12);
    assert!((m.max_total_utility - 1.6).abs() < 1e-12);
    assert!((m.utility_ratio - 0.5).abs() < 1e-12);
    assert_eq!(m.preferred, 1);
    assert_eq!(m.preferred_ratio, 0.5);
}

#[test]
fn incident_status_quo_matches_oracle() {
    let s = fixture("incident.json");
    let (sol, stats) = evaluate_status_quo(&s).unwrap();
    let oracle = event_oracle(&s, &status_quo_assignment(&s).unwrap()).unwrap();
    assert!(
        rel_close(sol.objective, oracle.total, 1e-9),
        "{} vs {}",
        sol.objective,
        oracle.total
    );
    assert_eq!(stats.stt, sol.objective);
    assert!(stats.avg_all > 0.0);
}

#[test]
fn oracle_rejects_seeds() {
    let s = fixture("seeded.json");
    assert!(matches!(event_oracle(&s, &[0, 0, 0]), Err(EvalError::SeedsUnsupported)));
}

#[test]
fn status_quo_required() {
    let s = Scenario::from_document(random_single_path(4)).unwrap();
    if s.passengers.iter().any(|p| p.status_quo.is_none()) {
        assert!(matches!(status_quo_plan(&s), Err(EvalError::MissingStatusQuo(_))));
    }
}

#[test]
fn sweep_rows_sorted_and_consistent() {
    let s = fixture("toy-2.json");
    let c = ChoiceModel::from_scenario(&s);
    let cfg = SweepConfig {
        epsilon: 0.05,
        gamma: 0.3,
        method: Method::Direct,
        replications: 20,
        seed: 4,
        benders: BendersOptions::default(),
    };
    let rows = psi_sweep(&s, &c, &[1.0, 0.0, 1.0, 10.0], &cfg);
    let psis: Vec<f64> = rows.iter().map(|r| r.psi).collect();
    assert_eq!(psis, vec![0.0, 1.0, 10.0]);
    let (plan, _) = solve_ipr_direct(&s, &c, &IprParams::default()).unwrap();
    let first = rows[0].outcome.as_ref().unwrap();
    assert!(rel_close(first.travel_time, plan.travel_time, 1e-12));
    assert_eq!(
        first.report,
        monte_carlo_eval(&s, &c, &first.assignment, 20, 4).unwrap()
    );
    let benders = SweepConfig {
        method: Method::Benders,
        ..cfg
    };
    let again = psi_sweep(&s, &c, &[0.0, 1.0, 10.0], &benders);
    for (x, y) in rows.iter().zip(&again) {
        let psi = x.psi;
        let (x, y) = (x.outcome.as_ref().unwrap(), y.outcome.as_ref().unwrap());
        let ox = x.travel_time - psi * x.metrics.total_utility;
        let oy = y.travel_time - psi * y.metrics.total_utility;
        assert!(rel_close(ox, oy, 1e-6), "psi {psi}: {ox} vs {oy}");
    }
}

#[test]
fn plan_file_round_trip() {
    let s = fixture("incident.json");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.csv");
    let a = capacity_based_plan(&s).unwrap();
    write_plan(&path, &Header::new(Some(1)), &s, &a).unwrap();
    assert_eq!(read_plan(&path, &s).unwrap(), a);
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.pop();
    std::fs::write(&path, lines.join("\n")).unwrap();
    assert!(read_plan(&path, &s).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn capacity_plan_is_feasible(seed in 0u64..10_000) {
        let s = Scenario::from_document(random_instance(seed, Shape::default())).unwrap();
        if let Ok(a) = capacity_based_plan(&s) {
            prop_assert_eq!(a.len(), s.passengers.len());
            for (p, &k) in s.passengers.iter().zip(&a) {
                prop_assert!(k < p.paths.len());
            }
        }
    }

    #[test]
    fn mean_lies_within_extremes(seed in 0u64..10_000, reps in 1usize..30) {
        let s = Scenario::from_document(random_instance(seed, Shape { max_passengers: 4, ..Shape::default() })).unwrap();
        let c = ChoiceModel::from_scenario(&s);
        let a = vec![0; s.passengers.len()];
        let rep = monte_carlo_eval(&s, &c, &a, reps, seed).unwrap();
        let vals: Vec<f64> = rep.replications.iter().filter_map(|r| r.stats.map(|x| x.stt)).collect();
        prop_assume!(!vals.is_empty());
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(rep.stt.mean >= lo - 1e-9 && rep.stt.mean <= hi + 1e-9);
        prop_assert!(rep.stt.std >= 0.0);
    }
}
