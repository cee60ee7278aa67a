#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use ipr_core::choice::{flow_moments, ChoiceModel};
use ipr_core::ipr::IprParams;
use ipr_core::lp::{self, LinearModel, Relation, SolveStatus, Tolerances};
use ipr_core::ofp::build_optimal_flow;
use ipr_core::scenario::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> Scenario {
    Scenario::load(fixture_path(name)).unwrap()
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn leg(line: &str, board: &str, alight: &str) -> LegDoc {
    LegDoc {
        line: line.into(),
        board: board.into(),
        alight: alight.into(),
    }
}

fn run(line: &str, departure: TimeIndex, capacity: f64, offsets: Vec<TimeIndex>) -> RunDoc {
    RunDoc {
        line: line.into(),
        departure,
        capacity,
        offsets,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_passengers: usize,
    pub max_paths: usize,
    pub max_intervals: TimeIndex,
    /// Smallest gap between a passenger's best and second-best prior utility.
    pub utility_gap: f64,
    pub tau: f64,
}

impl Default for Shape {
    fn default() -> Self {
        Shape {
            max_passengers: 10,
            max_paths: 3,
            max_intervals: 12,
            utility_gap: 0.0,
            tau: 5.0,
        }
    }
}

/// Random single-OD instance A→C with up to three paths: a direct line, a slower local line,
/// and a two-leg path transferring at B. Capacities are tight so recommendations matter.
pub fn random_instance(seed: u64, shape: Shape) -> ScenarioDoc {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_max: TimeIndex = rng.gen_range(8..=shape.max_intervals);
    let horizon_end: TimeIndex = rng.gen_range(2..=3);
    let grid = TimeGrid {
        t_min: 0,
        t_max,
        horizon_end,
        incident_end: 1,
        tau: shape.tau,
    };
    let n_paths = rng.gen_range(2..=shape.max_paths.max(2));
    let mut lines = vec![LineDoc {
        id: "X".into(),
        stops: vec!["A".into(), "C".into()],
    }];
    let mut paths = vec![PathDoc {
        id: "r0".into(),
        origin: "A".into(),
        destination: "C".into(),
        legs: vec![leg("X", "A", "C")],
        wait_for_recovery: false,
    }];
    let mut runs = Vec::new();
    let x_ride = rng.gen_range(1..=2);
    let x_head = rng.gen_range(2..=3);
    let mut dep = rng.gen_range(0..=1);
    while dep + x_ride <= t_max {
        let cap = rng.gen_range(0..=3) as f64;
        runs.push(run("X", dep, cap, vec![0, x_ride]));
        dep += x_head;
    }
    if n_paths >= 2 {
        lines.push(LineDoc {
            id: "Y".into(),
            stops: vec!["A".into(), "B".into(), "C".into()],
        });
        paths.push(PathDoc {
            id: "r1".into(),
            origin: "A".into(),
            destination: "C".into(),
            legs: vec![leg("Y", "A", "C")],
            wait_for_recovery: false,
        });
        let ride = rng.gen_range(2..=4);
        for dep in 1..=t_max - ride {
            if rng.gen_bool(0.6) {
                let cap = rng.gen_range(1..=4) as f64;
                runs.push(run("Y", dep, cap, vec![0, 1, ride]));
            }
        }
    }
    if n_paths >= 3 {
        lines.push(LineDoc {
            id: "U".into(),
            stops: vec!["A".into(), "B".into()],
        });
        lines.push(LineDoc {
            id: "V".into(),
            stops: vec!["B".into(), "C".into()],
        });
        paths.push(PathDoc {
            id: "r2".into(),
            origin: "A".into(),
            destination: "C".into(),
            legs: vec![leg("U", "A", "B"), leg("V", "B", "C")],
            wait_for_recovery: false,
        });
        for dep in 1..t_max {
            if rng.gen_bool(0.5) {
                runs.push(run("U", dep, rng.gen_range(1..=3) as f64, vec![0, 1]));
            }
            if rng.gen_bool(0.5) {
                runs.push(run("V", dep, rng.gen_range(1..=3) as f64, vec![0, 1]));
            }
        }
    }
    let n_pax = rng.gen_range(2..=shape.max_passengers);
    let path_ids: Vec<String> = paths.iter().map(|p| p.id.clone()).collect();
    let mut passengers = Vec::new();
    let mut count: BTreeMap<TimeIndex, f64> = BTreeMap::new();
    for i in 0..n_pax {
        let t = rng.gen_range(1..=horizon_end);
        *count.entry(t).or_insert(0.0) += 1.0;
        let mut own: Vec<String> = path_ids.iter().filter(|_| rng.gen_bool(0.8)).cloned().collect();
        if own.is_empty() {
            own.push(path_ids[rng.gen_range(0..path_ids.len())].clone());
        }
        let n = own.len();
        let mut utilities: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        if shape.utility_gap > 0.0 && n > 1 {
            let best = rng.gen_range(0..n);
            let top = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            utilities[best] = top + shape.utility_gap;
        }
        let impacts = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| if a == b { rng.gen_range(0.0..3.0) } else { 0.0 })
                    .collect()
            })
            .collect();
        let sq = own[rng.gen_range(0..n)].clone();
        passengers.push(PassengerDoc {
            id: format!("p{i:02}"),
            origin: "A".into(),
            destination: "C".into(),
            departure: t,
            paths: own,
            utilities,
            impacts: Some(impacts),
            choice_probabilities: None,
            status_quo: Some(sq),
        });
    }
    let mut background = Vec::new();
    for p in &path_ids {
        for t in 1..=horizon_end {
            if rng.gen_bool(0.3) {
                let f = rng.gen_range(1..=2) as f64;
                *count.entry(t).or_insert(0.0) += f;
                background.push(BackgroundFlowDoc {
                    path: p.clone(),
                    t,
                    flow: f,
                });
            }
        }
    }
    let demand = count
        .into_iter()
        .map(|(t, total)| DemandDoc {
            origin: "A".into(),
            destination: "C".into(),
            t,
            total,
        })
        .collect();
    ScenarioDoc {
        time_grid: grid,
        stations: vec!["A".into(), "B".into(), "C".into()],
        lines,
        runs,
        paths,
        demand,
        background_flows: background,
        onboard_seed: Vec::new(),
        passengers,
    }
}

/// Random instance where every OD has exactly one path, each line has a single boarding
/// station and all runs of a line share their offsets. A late high-capacity run on every line
/// lets everyone finish before the end of the period.
pub fn random_single_path(seed: u64) -> ScenarioDoc {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_max: TimeIndex = 12;
    let sweep = [("L0", 8), ("L1", 6), ("L2", 9)];
    let grid = TimeGrid {
        t_min: 0,
        t_max,
        horizon_end: 3,
        incident_end: 1,
        tau: 5.0,
    };
    let lines = vec![
        LineDoc {
            id: "L0".into(),
            stops: vec!["A".into(), "F".into(), "B".into()],
        },
        LineDoc {
            id: "L1".into(),
            stops: vec!["C".into(), "E".into()],
        },
        LineDoc {
            id: "L2".into(),
            stops: vec!["E".into(), "D".into()],
        },
    ];
    let paths = vec![
        PathDoc {
            id: "ab".into(),
            origin: "A".into(),
            destination: "B".into(),
            legs: vec![leg("L0", "A", "B")],
            wait_for_recovery: false,
        },
        PathDoc {
            id: "cd".into(),
            origin: "C".into(),
            destination: "D".into(),
            legs: vec![leg("L1", "C", "E"), leg("L2", "E", "D")],
            wait_for_recovery: false,
        },
    ];
    let mut runs = Vec::new();
    let (r0, r1, r2) = (rng.gen_range(1..=3), rng.gen_range(1..=2), rng.gen_range(1..=2));
    for dep in 0..=t_max {
        let free = |line: &str| !sweep.contains(&(line, dep));
        if dep + r0 <= t_max && free("L0") && rng.gen_bool(0.5) {
            runs.push(run("L0", dep, rng.gen_range(0..=3) as f64, vec![0, 1.min(r0), r0]));
        }
        if dep + r1 <= t_max && free("L1") && rng.gen_bool(0.5) {
            runs.push(run("L1", dep, rng.gen_range(0..=3) as f64, vec![0, r1]));
        }
        if dep + r2 <= t_max && free("L2") && rng.gen_bool(0.5) {
            runs.push(run("L2", dep, rng.gen_range(0..=3) as f64, vec![0, r2]));
        }
    }
    runs.push(run("L0", 8, 20.0, vec![0, 1.min(r0), r0]));
    runs.push(run("L1", 6, 20.0, vec![0, r1]));
    runs.push(run("L2", 9, 20.0, vec![0, r2]));
    let mut passengers = Vec::new();
    let mut demand: BTreeMap<(String, String, TimeIndex), f64> = BTreeMap::new();
    let n = rng.gen_range(1..=8);
    for i in 0..n {
        let (o, d, path) = if rng.gen_bool(0.5) {
            ("A", "B", "ab")
        } else {
            ("C", "D", "cd")
        };
        let t = rng.gen_range(1..=3);
        *demand.entry((o.into(), d.into(), t)).or_insert(0.0) += 1.0;
        passengers.push(PassengerDoc {
            id: format!("p{i}"),
            origin: o.into(),
            destination: d.into(),
            departure: t,
            paths: vec![path.into()],
            utilities: vec![0.0],
            impacts: None,
            choice_probabilities: None,
            status_quo: Some(path.into()),
        });
    }
    let mut background = Vec::new();
    for (o, d, path) in [("A", "B", "ab"), ("C", "D", "cd")] {
        for t in 1..=4 {
            if rng.gen_bool(0.3) {
                let f = rng.gen_range(1..=3) as f64 * 0.5;
                *demand.entry((o.into(), d.into(), t)).or_insert(0.0) += f;
                background.push(BackgroundFlowDoc {
                    path: path.into(),
                    t,
                    flow: f,
                });
            }
        }
    }
    ScenarioDoc {
        time_grid: grid,
        stations: ["A", "B", "C", "D", "E", "F"].iter().map(|s| s.to_string()).collect(),
        lines,
        runs,
        paths,
        demand: demand
            .into_iter()
            .map(|((origin, destination, t), total)| DemandDoc {
                origin,
                destination,
                t,
                total,
            })
            .collect(),
        background_flows: background,
        onboard_seed: Vec::new(),
        passengers,
    }
}

/// All assignments in lexicographic order.
pub fn all_assignments(s: &Scenario) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for p in &s.passengers {
        let mut next = Vec::new();
        for prefix in &out {
            for k in 0..p.paths.len() {
                let mut a = prefix.clone();
                a.push(k);
                next.push(a);
            }
        }
        out = next;
    }
    out
}

pub fn combinations(s: &Scenario) -> usize {
    s.passengers.iter().map(|p| p.paths.len()).product()
}

/// Scores one fixed recommendation from scratch: the flow LP with the mean band built from the
/// choice moments, minus the preference reward. `None` when a variance cap or the band is
/// violated.
pub fn score_assignment(s: &Scenario, choice: &ChoiceModel, params: &IprParams, a: &[usize]) -> Option<f64> {
    let m = flow_moments(s, choice, a).unwrap();
    for (&(r, t), &var) in &m.variance {
        let cap = (params.gamma * s.demand(s.paths[r].od, t)).powi(2);
        if var > cap + 1e-9 {
            return None;
        }
    }
    let built = build_optimal_flow(s);
    let mut model: LinearModel = built.model;
    for (&(r, t), &mu) in &m.mean {
        let q = built.index.q[&(r, t)];
        model.add_row(
            format!("lo[{r},{t}]"),
            [(q, 1.0)],
            Relation::Ge,
            (1.0 - params.epsilon) * mu,
        );
        model.add_row(
            format!("hi[{r},{t}]"),
            [(q, 1.0)],
            Relation::Le,
            (1.0 + params.epsilon) * mu,
        );
    }
    let out = lp::solve_lp(&model, &Tolerances::default()).unwrap();
    match out.status {
        SolveStatus::Optimal => {
            let tu: f64 = s.passengers.iter().zip(a).map(|(p, &k)| p.utilities[k]).sum();
            Some(out.objective - params.psi * tu)
        }
        _ => None,
    }
}
