//! Time-expanded optimal-flow LP: model rows, solving, and the waiting/in-vehicle decomposition.
//!
//! Waiting accounting: a passenger who has arrived at a station by interval `t` and not yet
//! boarded accrues `tau` for that interval; a passenger boarding at `t` accrues `tau / 2`.
//! Only intervals `1..=T` are counted.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::lp::{self, LinearModel, LpError, Relation, RowId, SolveOutcome, SolveStatus, Tolerances, VarId};
use crate::scenario::{LegRun, Scenario, TimeIndex};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("flow problem infeasible (rows in certificate: {})", rows.join(", "))]
    Infeasible { ray: Vec<f64>, rows: Vec<String> },
    #[error("solver stopped at a limit")]
    Limit,
    #[error("fixed flows rejected: {0}")]
    BadFixedFlows(String),
    #[error(transparent)]
    Solver(#[from] LpError),
}

/// Variables and rows of the flow part of a model.
#[derive(Debug, Clone, Default)]
pub struct FlowIndex {
    pub q: BTreeMap<(usize, TimeIndex), VarId>,
    pub z: BTreeMap<LegRun, VarId>,
    /// (run, t', row)
    pub capacity_rows: Vec<(usize, TimeIndex, RowId)>,
    /// (path, t, row)
    pub origin_rows: Vec<(usize, TimeIndex, RowId)>,
    /// (path, leg, t, row)
    pub transfer_rows: Vec<(usize, usize, TimeIndex, RowId)>,
    /// (od, t, row)
    pub demand_rows: Vec<(usize, TimeIndex, RowId)>,
    pub seed_rows: Vec<(LegRun, RowId)>,
}

impl FlowIndex {
    /// Adds the flow variables and rows to `model`, returning the index maps.
    pub fn build(scenario: &Scenario, model: &mut LinearModel) -> FlowIndex {
        let g = &scenario.grid;
        let tau = g.tau;
        let mut idx = FlowIndex::default();

        for (r, path) in scenario.paths.iter().enumerate() {
            for t in g.intervals() {
                let cost = tau * g.counted_from(t);
                let v = model.add_var(format!("q[{},{}]", path.id, t), 0.0, f64::INFINITY, cost);
                idx.q.insert((r, t), v);
            }
        }

        model.add_objective_constant(background_constant(scenario));

        for lr in scenario.active_leg_runs() {
            let tm = scenario.leg_timing(lr);
            let path = &scenario.paths[lr.path];
            let mut cost = -tau * g.counted_from(tm.board_time) + tm.ivt_minutes(tau);
            if tm.board_time >= 1 && tm.board_time <= g.t_max {
                cost += tau / 2.0;
            }
            if lr.leg + 1 < path.legs.len() {
                cost += tau * g.counted_from(tm.alight_time);
            }
            let run = &scenario.runs[lr.run];
            let name = format!(
                "z[{},{},{}@{}]",
                path.id,
                lr.leg + 1,
                scenario.lines[run.line].id,
                run.departure
            );
            idx.z.insert(lr, model.add_var(name, 0.0, f64::INFINITY, cost));
        }

        // capacity
        let mut by_run: BTreeMap<usize, Vec<(LegRun, VarId)>> = BTreeMap::new();
        for (&lr, &v) in &idx.z {
            by_run.entry(lr.run).or_default().push((lr, v));
        }
        for (run_i, run) in scenario.runs.iter().enumerate() {
            let Some(members) = by_run.get(&run_i) else { continue };
            let timings: Vec<_> = members.iter().map(|(lr, v)| (scenario.leg_timing(*lr), *v)).collect();
            let mut previous: Option<Vec<VarId>> = None;
            for tp in run.departure..=run.last_arrival() {
                let coefs: Vec<VarId> = timings
                    .iter()
                    .filter(|(tm, _)| tm.board_time <= tp && tp <= tm.alight_time)
                    .map(|(_, v)| *v)
                    .collect();
                if coefs.is_empty() || previous.as_ref() == Some(&coefs) {
                    if coefs.is_empty() {
                        previous = None;
                    }
                    continue;
                }
                let name = format!("cap[{}@{},{}]", scenario.lines[run.line].id, run.departure, tp);
                let row = model.add_row(name, coefs.iter().map(|&v| (v, 1.0)), Relation::Le, run.capacity);
                idx.capacity_rows.push((run_i, tp, row));
                previous = Some(coefs);
            }
        }

        // origin conservation: cumulative first-leg boardings <= cumulative arrivals
        for (r, path) in scenario.paths.iter().enumerate() {
            let first: Vec<(TimeIndex, VarId)> = idx
                .z
                .iter()
                .filter(|(lr, _)| lr.path == r && lr.leg == 0)
                .map(|(lr, &v)| (scenario.leg_timing(*lr).board_time, v))
                .collect();
            let mut cum_f = 0.0;
            for t in g.intervals() {
                cum_f += scenario.background_flow(r, t);
                let mut coefs: Vec<(VarId, f64)> =
                    first.iter().filter(|(b, _)| *b <= t).map(|&(_, v)| (v, 1.0)).collect();
                coefs.extend((g.t_min..=t).map(|s| (idx.q[&(r, s)], -1.0)));
                let row = model.add_row(format!("orig[{},{}]", path.id, t), coefs, Relation::Le, cum_f);
                idx.origin_rows.push((r, t, row));
            }
        }

        // transfer conservation: cumulative boardings of leg i <= cumulative alightings of leg i-1
        for (r, path) in scenario.paths.iter().enumerate() {
            for i in 1..path.legs.len() {
                let board: Vec<(TimeIndex, VarId)> = idx
                    .z
                    .iter()
                    .filter(|(lr, _)| lr.path == r && lr.leg == i)
                    .map(|(lr, &v)| (scenario.leg_timing(*lr).board_time, v))
                    .collect();
                let alight: Vec<(TimeIndex, VarId)> = idx
                    .z
                    .iter()
                    .filter(|(lr, _)| lr.path == r && lr.leg == i - 1)
                    .map(|(lr, &v)| (scenario.leg_timing(*lr).alight_time, v))
                    .collect();
                for t in g.intervals() {
                    let mut coefs: Vec<(VarId, f64)> =
                        board.iter().filter(|(b, _)| *b <= t).map(|&(_, v)| (v, 1.0)).collect();
                    if coefs.is_empty() {
                        continue;
                    }
                    coefs.extend(alight.iter().filter(|(a, _)| *a <= t).map(|&(_, v)| (v, -1.0)));
                    let row = model.add_row(format!("xfer[{},{},{}]", path.id, i + 1, t), coefs, Relation::Le, 0.0);
                    idx.transfer_rows.push((r, i, t, row));
                }
            }
        }

        // demand split: recommended flow across the OD's paths equals the headcount
        for (od, paths) in scenario.od_paths.iter().enumerate() {
            let (o, d) = scenario.od_label(od);
            for t in g.intervals() {
                let coefs: Vec<(VarId, f64)> = paths.iter().map(|&r| (idx.q[&(r, t)], 1.0)).collect();
                let row = model.add_row(
                    format!("dem[{o},{d},{t}]"),
                    coefs,
                    Relation::Eq,
                    scenario.headcount(od, t),
                );
                idx.demand_rows.push((od, t, row));
            }
        }

        for (lr, flow) in scenario.seeds() {
            let v = idx.z[&lr];
            let name = format!("seed[{}]", model.var(v).name);
            let row = model.add_row(name, [(v, 1.0)], Relation::Eq, flow);
            idx.seed_rows.push((lr, row));
        }
        idx
    }

    pub fn q_value(&self, x: &[f64], path: usize, t: TimeIndex) -> f64 {
        self.q.get(&(path, t)).map(|v| x[v.index()]).unwrap_or(0.0)
    }

    pub fn extract(&self, x: &[f64]) -> (BTreeMap<(usize, TimeIndex), f64>, BTreeMap<LegRun, f64>) {
        let q = self.q.iter().map(|(&k, v)| (k, clean(x[v.index()]))).collect();
        let z = self.z.iter().map(|(&k, v)| (k, clean(x[v.index()]))).collect();
        (q, z)
    }
}

/// Waiting of background passengers that does not depend on any variable: each accrues `tau`
/// for every counted interval from its arrival on (boarding terms are carried by z).
pub fn background_constant(scenario: &Scenario) -> f64 {
    let g = &scenario.grid;
    scenario
        .background_flows()
        .map(|(_, t, f)| g.tau * g.counted_from(t) * f)
        .sum()
}

fn clean(v: f64) -> f64 {
    if v.abs() < 1e-11 {
        0.0
    } else {
        v
    }
}

pub struct OptimalFlowModel {
    pub model: LinearModel,
    pub index: FlowIndex,
}

pub fn build_optimal_flow(scenario: &Scenario) -> OptimalFlowModel {
    let mut model = LinearModel::new();
    let index = FlowIndex::build(scenario, &mut model);
    OptimalFlowModel { model, index }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CohortStatus {
    Served,
    Empty,
    Unfinished,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohortTravel {
    /// Arrival interval at the destination, when the cohort is served within the period.
    pub arrival: Option<TimeIndex>,
    /// Travel time in minutes; zero for empty cohorts, truncated at `T` for unfinished ones.
    pub minutes: f64,
    pub status: CohortStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadRow {
    pub run: usize,
    pub t_prime: TimeIndex,
    pub load: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone)]
pub struct FlowSolution {
    pub q: BTreeMap<(usize, TimeIndex), f64>,
    pub z: BTreeMap<LegRun, f64>,
    pub objective: f64,
    pub waiting: f64,
    pub in_vehicle: f64,
    /// WT per (station, t) for t in 1..=T.
    pub station_waits: BTreeMap<(usize, TimeIndex), f64>,
    /// Per (path, t).
    pub travel: BTreeMap<(usize, TimeIndex), CohortTravel>,
}

impl FlowSolution {
    pub fn from_values(scenario: &Scenario, q: BTreeMap<(usize, TimeIndex), f64>, z: BTreeMap<LegRun, f64>) -> Self {
        let (station_waits, waiting, in_vehicle) = decompose(scenario, &q, &z);
        let travel = path_travel_times(scenario, &q, &z);
        FlowSolution {
            q,
            z,
            objective: waiting + in_vehicle,
            waiting,
            in_vehicle,
            station_waits,
            travel,
        }
    }

    pub fn q(&self, path: usize, t: TimeIndex) -> f64 {
        self.q.get(&(path, t)).copied().unwrap_or(0.0)
    }

    pub fn z(&self, lr: LegRun) -> f64 {
        self.z.get(&lr).copied().unwrap_or(0.0)
    }

    /// On-board load of every run at every interval of its trip.
    pub fn loads(&self, scenario: &Scenario) -> Vec<LoadRow> {
        let mut out = Vec::new();
        for (i, run) in scenario.runs.iter().enumerate() {
            for tp in run.departure..=run.last_arrival() {
                let load = self
                    .z
                    .iter()
                    .filter(|(lr, _)| lr.run == i)
                    .filter(|(lr, _)| {
                        let tm = scenario.leg_timing(**lr);
                        tm.board_time <= tp && tp <= tm.alight_time
                    })
                    .map(|(_, v)| v)
                    .sum();
                out.push(LoadRow {
                    run: i,
                    t_prime: tp,
                    load,
                    capacity: run.capacity,
                });
            }
        }
        out
    }

    /// Largest violation of the flow rows, recomputed from the stored values.
    pub fn max_violation(&self, scenario: &Scenario) -> f64 {
        let mut model = LinearModel::new();
        let idx = FlowIndex::build(scenario, &mut model);
        let mut x = vec![0.0; model.num_vars()];
        for (k, v) in &idx.q {
            x[v.index()] = self.q(k.0, k.1);
        }
        for (k, v) in &idx.z {
            x[v.index()] = self.z(*k);
        }
        model.max_violation(&x)
    }
}

/// Waiting per station and interval, total waiting and total in-vehicle time.
fn decompose(
    scenario: &Scenario,
    q: &BTreeMap<(usize, TimeIndex), f64>,
    z: &BTreeMap<LegRun, f64>,
) -> (BTreeMap<(usize, TimeIndex), f64>, f64, f64) {
    let g = &scenario.grid;
    let tau = g.tau;
    let n_st = scenario.stations.len();
    let horizon = (g.t_max - g.t_min + 1) as usize;
    let slot = |t: TimeIndex| (t - g.t_min) as usize;
    // per-interval increments, cumulated below
    let mut arrive = vec![vec![0.0; horizon]; n_st];
    let mut board = vec![vec![0.0; horizon]; n_st];
    for (&(r, t), &v) in q {
        arrive[scenario.paths[r].legs[0].board][slot(t)] += v;
    }
    for (r, t, f) in scenario.background_flows() {
        arrive[scenario.paths[r].legs[0].board][slot(t)] += f;
    }
    let mut ivt = 0.0;
    for (&lr, &v) in z {
        let tm = scenario.leg_timing(lr);
        let path = &scenario.paths[lr.path];
        ivt += v * tm.ivt_minutes(tau);
        board[path.legs[lr.leg].board][slot(tm.board_time)] += v;
        if lr.leg + 1 < path.legs.len() {
            arrive[path.legs[lr.leg + 1].board][slot(tm.alight_time)] += v;
        }
    }
    let mut waits = BTreeMap::new();
    let mut total = 0.0;
    for s in 0..n_st {
        let (mut cum_a, mut cum_b) = (0.0, 0.0);
        for t in g.intervals() {
            cum_a += arrive[s][slot(t)];
            cum_b += board[s][slot(t)];
            if t >= 1 {
                let w = tau * (cum_a - cum_b) + tau / 2.0 * board[s][slot(t)];
                total += w;
                waits.insert((s, t), w);
            }
        }
    }
    (waits, total, ivt)
}

/// Cohort arrival and travel times from cumulative origin demand and destination arrivals.
pub fn path_travel_times(
    scenario: &Scenario,
    q: &BTreeMap<(usize, TimeIndex), f64>,
    z: &BTreeMap<LegRun, f64>,
) -> BTreeMap<(usize, TimeIndex), CohortTravel> {
    let g = &scenario.grid;
    let mut out = BTreeMap::new();
    for (r, path) in scenario.paths.iter().enumerate() {
        let last = path.legs.len() - 1;
        let mut arrivals: BTreeMap<TimeIndex, f64> = BTreeMap::new();
        for (&lr, &v) in z.range(
            LegRun {
                path: r,
                leg: last,
                run: 0,
            }..=LegRun {
                path: r,
                leg: last,
                run: usize::MAX,
            },
        ) {
            *arrivals.entry(scenario.leg_timing(lr).alight_time).or_insert(0.0) += v;
        }
        let mut cum_arr = Vec::with_capacity((g.t_max - g.t_min + 1) as usize);
        let mut acc = 0.0;
        for t in g.intervals() {
            acc += arrivals.get(&t).copied().unwrap_or(0.0);
            cum_arr.push(acc);
        }
        let mut cum_demand = 0.0;
        for t in g.intervals() {
            let cohort = q.get(&(r, t)).copied().unwrap_or(0.0) + scenario.background_flow(r, t);
            cum_demand += cohort;
            let travel = if cohort <= 1e-12 {
                CohortTravel {
                    arrival: None,
                    minutes: 0.0,
                    status: CohortStatus::Empty,
                }
            } else {
                let tol = 1e-9 * cum_demand.max(1.0);
                let hit = (t..=g.t_max).find(|&tt| cum_demand <= cum_arr[(tt - g.t_min) as usize] + tol);
                match hit {
                    Some(at) => CohortTravel {
                        arrival: Some(at),
                        minutes: (at - t) as f64 * g.tau,
                        status: CohortStatus::Served,
                    },
                    None => CohortTravel {
                        arrival: None,
                        minutes: (g.t_max - t) as f64 * g.tau,
                        status: CohortStatus::Unfinished,
                    },
                }
            };
            out.insert((r, t), travel);
        }
    }
    out
}

fn ray_rows(model: &LinearModel, ray: &[f64]) -> Vec<String> {
    ray.iter()
        .enumerate()
        .filter(|(_, y)| y.abs() > 1e-9)
        .map(|(i, _)| model.rows()[i].name.clone())
        .collect()
}

pub(crate) fn interpret(model: &LinearModel, out: &SolveOutcome) -> Result<(), FlowError> {
    match out.status {
        SolveStatus::Optimal => Ok(()),
        SolveStatus::Infeasible => {
            let ray = out.farkas_ray.clone().unwrap_or_default();
            let rows = ray_rows(model, &ray);
            Err(FlowError::Infeasible { ray, rows })
        }
        SolveStatus::Limit => Err(FlowError::Limit),
        SolveStatus::Unbounded => Err(FlowError::Solver(LpError::Numerical(
            "flow problem reported unbounded".into(),
        ))),
    }
}

pub fn solve_optimal_flow(scenario: &Scenario) -> Result<FlowSolution, FlowError> {
    solve_optimal_flow_with(scenario, &Tolerances::default())
}

pub fn solve_optimal_flow_with(scenario: &Scenario, tol: &Tolerances) -> Result<FlowSolution, FlowError> {
    let OptimalFlowModel { model, index } = build_optimal_flow(scenario);
    let out = lp::solve_lp(&model, tol)?;
    interpret(&model, &out)?;
    let (q, z) = index.extract(&out.primal);
    Ok(FlowSolution::from_values(scenario, q, z))
}

/// Recommended flow per (path, t); missing keys mean zero.
pub type FixedFlows = BTreeMap<(usize, TimeIndex), f64>;

pub fn check_fixed_flows(scenario: &Scenario, fixed: &FixedFlows) -> Result<(), FlowError> {
    let mut per_od: HashMap<(usize, TimeIndex), f64> = HashMap::new();
    for (&(r, t), &v) in fixed {
        if r >= scenario.paths.len() || !scenario.grid.contains(t) {
            return Err(FlowError::BadFixedFlows(format!("unknown flow key ({r}, {t})")));
        }
        if !(v.is_finite() && v >= 0.0) {
            return Err(FlowError::BadFixedFlows(format!(
                "negative or non-finite flow on path {}",
                scenario.paths[r].id
            )));
        }
        *per_od.entry((scenario.paths[r].od, t)).or_insert(0.0) += v;
    }
    for od in 0..scenario.ods.len() {
        for t in scenario.grid.intervals() {
            let got = per_od.get(&(od, t)).copied().unwrap_or(0.0);
            let want = scenario.headcount(od, t);
            if (got - want).abs() > 1e-9 {
                let (o, d) = scenario.od_label(od);
                return Err(FlowError::BadFixedFlows(format!(
                    "flows for {o}->{d} at t={t} sum to {got}, headcount is {want}"
                )));
            }
        }
    }
    Ok(())
}

/// Optimal flow with recommended-passenger path flows pinned to `fixed`.
pub fn solve_with_fixed_flows(scenario: &Scenario, fixed: &FixedFlows) -> Result<FlowSolution, FlowError> {
    check_fixed_flows(scenario, fixed)?;
    let OptimalFlowModel { mut model, index } = build_optimal_flow(scenario);
    for (&(r, t), &v) in &index.q {
        let value = fixed.get(&(r, t)).copied().unwrap_or(0.0);
        model.add_row(
            format!("fix[{}]", model.var(v).name.clone()),
            [(v, 1.0)],
            Relation::Eq,
            value,
        );
    }
    let out = lp::solve_lp(&model, &Tolerances::default())?;
    interpret(&model, &out)?;
    let (q, z) = index.extract(&out.primal);
    Ok(FlowSolution::from_values(scenario, q, z))
}

/// Recommended-passenger flows implied by a choice of local path per passenger.
pub fn flows_from_choices(scenario: &Scenario, choices: &[usize]) -> FixedFlows {
    let mut out = FixedFlows::new();
    for (pax, &k) in scenario.passengers.iter().zip(choices) {
        *out.entry((pax.paths[k], pax.departure)).or_insert(0.0) += 1.0;
    }
    out
}
