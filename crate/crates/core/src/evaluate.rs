//! Plan evaluation: Monte-Carlo compliance sampling, benchmark strategies, preference metrics,
//! Ψ sweeps, and a discrete-event loading oracle for tiny instances.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use thiserror::Error;

use crate::benders::{run_benders, BendersOptions};
use crate::choice::{check_assignment, sample_realization, ChoiceError, ChoiceModel};
use crate::ipr::{is_preferred, solve_ipr_direct, IprError, IprParams, RecommendationPlan};
use crate::ofp::{solve_with_fixed_flows, CohortStatus, FixedFlows, FlowError, FlowSolution};
use crate::scenario::{LegRun, Scenario, TimeIndex};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("at least one replication is required")]
    NoReplications,
    #[error("passenger `{0}` has no status-quo path")]
    MissingStatusQuo(String),
    #[error("no path of passenger `{0}` has capacity and none waits for recovery")]
    NoCapacity(String),
    #[error("the event oracle does not model onboard seeds")]
    SeedsUnsupported,
    #[error(transparent)]
    Choice(#[from] ChoiceError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Ipr(#[from] IprError),
}

/// Travel statistics of one flow solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowStats {
    /// System travel time in minutes (waiting plus in-vehicle).
    pub stt: f64,
    /// Flow-weighted mean cohort travel time over everyone departing at t >= 1.
    pub avg_all: f64,
    /// Same, restricted to recommended passengers.
    pub avg_recommended: f64,
    /// Cohorts with positive flow not served by the end of the period.
    pub unfinished: usize,
}

pub fn flow_stats(scenario: &Scenario, sol: &FlowSolution) -> FlowStats {
    let (mut all_w, mut all_t, mut rec_w, mut rec_t) = (0.0, 0.0, 0.0, 0.0);
    let mut unfinished = 0;
    for (&(r, t), tr) in &sol.travel {
        if t < 1 || tr.status == CohortStatus::Empty {
            continue;
        }
        if tr.status == CohortStatus::Unfinished {
            unfinished += 1;
        }
        let q = sol.q(r, t);
        let f = scenario.background_flow(r, t);
        all_w += q + f;
        all_t += (q + f) * tr.minutes;
        rec_w += q;
        rec_t += q * tr.minutes;
    }
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    FlowStats {
        stt: sol.objective,
        avg_all: ratio(all_t, all_w),
        avg_recommended: ratio(rec_t, rec_w),
        unfinished,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub index: u64,
    /// `None` when the realized flows could not be loaded.
    pub stats: Option<FlowStats>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Sample mean and (R−1) standard deviation; std is 0 for a single value.
pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len();
    if n == 0 {
        return MeanStd {
            mean: f64::NAN,
            std: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    MeanStd { mean, std }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub replications: Vec<Replication>,
    pub seed: u64,
    pub stt: MeanStd,
    pub avg_all: MeanStd,
    pub avg_recommended: MeanStd,
    pub failed: usize,
}

impl EvaluationReport {
    fn from_replications(replications: Vec<Replication>, seed: u64) -> Self {
        let ok: Vec<FlowStats> = replications.iter().filter_map(|r| r.stats).collect();
        let pick = |f: fn(&FlowStats) -> f64| mean_std(&ok.iter().map(f).collect::<Vec<_>>());
        EvaluationReport {
            failed: replications.len() - ok.len(),
            stt: pick(|s| s.stt),
            avg_all: pick(|s| s.avg_all),
            avg_recommended: pick(|s| s.avg_recommended),
            replications,
            seed,
        }
    }

    /// Standard error of the mean system travel time.
    pub fn stt_standard_error(&self) -> f64 {
        let n = self.replications.len() - self.failed;
        self.stt.std / (n as f64).sqrt()
    }
}

fn flow_key(flows: &FixedFlows) -> Vec<(usize, TimeIndex, u64)> {
    flows.iter().map(|(&(r, t), &v)| (r, t, v.round() as u64)).collect()
}

/// Monte-Carlo evaluation of a recommendation under the choice model. Replications run in
/// parallel; identical realized flow vectors are loaded once.
pub fn monte_carlo_eval(
    scenario: &Scenario,
    choice: &ChoiceModel,
    assignment: &[usize],
    replications: usize,
    seed: u64,
) -> Result<EvaluationReport, EvalError> {
    if replications == 0 {
        return Err(EvalError::NoReplications);
    }
    check_assignment(scenario, assignment)?;
    let draws: Vec<FixedFlows> = (0..replications as u64)
        .into_par_iter()
        .map(|k| sample_realization(scenario, choice, assignment, seed, k).map(|r| r.flows))
        .collect::<Result<_, _>>()?;
    let mut distinct: BTreeMap<Vec<(usize, TimeIndex, u64)>, usize> = BTreeMap::new();
    let mut unique: Vec<&FixedFlows> = Vec::new();
    let slots: Vec<usize> = draws
        .iter()
        .map(|d| {
            *distinct.entry(flow_key(d)).or_insert_with(|| {
                unique.push(d);
                unique.len() - 1
            })
        })
        .collect();
    let solved: Vec<Option<FlowStats>> = unique
        .par_iter()
        .map(|flows| match solve_with_fixed_flows(scenario, flows) {
            Ok(sol) => Some(flow_stats(scenario, &sol)),
            Err(e) => {
                log::warn!("replication flows could not be loaded: {e}");
                None
            }
        })
        .collect();
    let reps = slots
        .iter()
        .enumerate()
        .map(|(k, &s)| Replication {
            index: k as u64,
            stats: solved[s],
        })
        .collect();
    Ok(EvaluationReport::from_replications(reps, seed))
}

/// Recommended-passenger flows when everyone takes their status-quo path.
pub fn status_quo_plan(scenario: &Scenario) -> Result<FixedFlows, EvalError> {
    let mut out = FixedFlows::new();
    for p in &scenario.passengers {
        let k = p.status_quo.ok_or_else(|| EvalError::MissingStatusQuo(p.id.clone()))?;
        *out.entry((p.paths[k], p.departure)).or_insert(0.0) += 1.0;
    }
    Ok(out)
}

pub fn status_quo_assignment(scenario: &Scenario) -> Result<Vec<usize>, EvalError> {
    scenario
        .passengers
        .iter()
        .map(|p| p.status_quo.ok_or_else(|| EvalError::MissingStatusQuo(p.id.clone())))
        .collect()
}

/// Deterministic evaluation of the status quo (no behavior uncertainty).
pub fn evaluate_status_quo(scenario: &Scenario) -> Result<(FlowSolution, FlowStats), EvalError> {
    let flows = status_quo_plan(scenario)?;
    let sol = solve_with_fixed_flows(scenario, &flows)?;
    let stats = flow_stats(scenario, &sol);
    Ok((sol, stats))
}

/// Capacity of a path for departures at `t`: total capacity of runs reaching the first
/// boarding station in interval `t`.
pub fn path_capacity(scenario: &Scenario, path: usize, t: TimeIndex) -> f64 {
    scenario
        .leg_runs(path, 0)
        .iter()
        .map(|&run| (run, scenario.leg_timing(LegRun { path, leg: 0, run })))
        .filter(|(_, tm)| tm.board_time == t)
        .map(|(run, _)| scenario.runs[run].capacity)
        .sum()
}

/// Largest-remainder split of `n` items proportionally to `weights`; ties go to the lower index.
pub fn largest_remainder(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if left == 0 {
            break;
        }
        if weights[i] > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    counts
}

/// Benchmark that splits each cohort across its paths in proportion to path capacity.
pub fn capacity_based_plan(scenario: &Scenario) -> Result<Vec<usize>, EvalError> {
    let mut assignment = vec![0usize; scenario.passengers.len()];
    for ((od, t), members) in scenario.cohorts() {
        let paths = &scenario.od_paths[od];
        let caps: Vec<f64> = paths.iter().map(|&r| path_capacity(scenario, r, t)).collect();
        if caps.iter().all(|&c| c <= 0.0) {
            for &p in members {
                let pax = &scenario.passengers[p];
                let k = pax
                    .paths
                    .iter()
                    .position(|&r| scenario.paths[r].wait_for_recovery)
                    .ok_or_else(|| EvalError::NoCapacity(pax.id.clone()))?;
                assignment[p] = k;
            }
            continue;
        }
        let mut quota = largest_remainder(members.len(), &caps);
        for &p in members {
            let pax = &scenario.passengers[p];
            let slot = (0..paths.len()).find(|&i| quota[i] > 0 && pax.local_path(paths[i]).is_some());
            let k = match slot {
                Some(i) => {
                    quota[i] -= 1;
                    pax.local_path(paths[i]).unwrap()
                }
                None => {
                    // quota exhausted among this passenger's paths: take its roomiest path
                    let best = pax
                        .paths
                        .iter()
                        .enumerate()
                        .max_by(|a, b| {
                            let ca = path_capacity(scenario, *a.1, t);
                            let cb = path_capacity(scenario, *b.1, t);
                            ca.partial_cmp(&cb).unwrap().then(b.0.cmp(&a.0))
                        })
                        .map(|(k, _)| k)
                        .unwrap_or(0);
                    best
                }
            };
            assignment[p] = k;
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreferenceMetrics {
    pub total_utility: f64,
    pub max_total_utility: f64,
    pub utility_ratio: f64,
    pub preferred: usize,
    pub preferred_ratio: f64,
}

pub fn preference_metrics(scenario: &Scenario, assignment: &[usize]) -> PreferenceMetrics {
    let mut tu = 0.0;
    let mut tu_max = 0.0;
    let mut np = 0;
    for (p, &a) in scenario.passengers.iter().zip(assignment) {
        tu += p.utilities[a];
        tu_max += p.utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if is_preferred(&p.utilities, a) {
            np += 1;
        }
    }
    let n = scenario.passengers.len();
    PreferenceMetrics {
        total_utility: tu,
        max_total_utility: tu_max,
        utility_ratio: if tu_max != 0.0 { tu / tu_max } else { 1.0 },
        preferred: np,
        preferred_ratio: if n > 0 { np as f64 / n as f64 } else { 1.0 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Benders,
    Direct,
}

pub fn solve_ipr(
    scenario: &Scenario,
    choice: &ChoiceModel,
    params: &IprParams,
    method: Method,
    options: &BendersOptions,
) -> Result<(RecommendationPlan, FlowSolution), IprError> {
    match method {
        Method::Direct => solve_ipr_direct(scenario, choice, params),
        Method::Benders => {
            let out = run_benders(scenario, choice, params, options)?;
            if !out.state.converged {
                return Err(IprError::Limit {
                    gap: Some(out.state.gap()),
                });
            }
            Ok((out.plan, out.flows))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub psi: f64,
    pub outcome: Result<SweepValues, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepValues {
    pub assignment: Vec<usize>,
    /// Model travel-time part of the objective.
    pub travel_time: f64,
    pub report: EvaluationReport,
    pub metrics: PreferenceMetrics,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepConfig {
    pub epsilon: f64,
    pub gamma: f64,
    pub method: Method,
    pub replications: usize,
    pub seed: u64,
    pub benders: BendersOptions,
}

/// One solve and one Monte-Carlo evaluation per Ψ, in parallel; rows sorted by Ψ.
pub fn psi_sweep(scenario: &Scenario, choice: &ChoiceModel, grid: &[f64], cfg: &SweepConfig) -> Vec<SweepRow> {
    let mut psis = grid.to_vec();
    psis.sort_by(|a, b| a.partial_cmp(b).unwrap());
    psis.dedup();
    psis.par_iter()
        .map(|&psi| {
            let params = IprParams {
                psi,
                epsilon: cfg.epsilon,
                gamma: cfg.gamma,
            };
            let outcome = solve_ipr(scenario, choice, &params, cfg.method, &cfg.benders)
                .map_err(EvalError::from)
                .and_then(|(plan, _)| {
                    let report = monte_carlo_eval(scenario, choice, &plan.assignment, cfg.replications, cfg.seed)?;
                    Ok(SweepValues {
                        metrics: preference_metrics(scenario, &plan.assignment),
                        travel_time: plan.travel_time,
                        assignment: plan.assignment,
                        report,
                    })
                })
                .map_err(|e| e.to_string());
            SweepRow { psi, outcome }
        })
        .collect()
}

// ---------------------------------------------------------------------------------------------
// event oracle

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub total: f64,
    pub waiting: f64,
    pub in_vehicle: f64,
    /// Minutes per recommended passenger (waiting plus in-vehicle).
    pub per_passenger: Vec<f64>,
    /// Passengers (ids) not at their destination by the end of the period.
    pub unfinished: Vec<String>,
    /// Unserved background flow at the end of the period.
    pub unfinished_background: f64,
}

#[derive(Debug, Clone)]
struct Parcel {
    size: f64,
    path: usize,
    leg: usize,
    ready: TimeIndex,
    seq: usize,
    owner: Option<usize>,
    wait: f64,
    ivt: f64,
}

/// First-come-first-served loading of fluid parcels: background flows per (path, t) and one unit
/// per recommended passenger on its chosen path. At each interval a run picks up waiting parcels
/// in arrival order, limited by its peak load over the parcel's ride. Left-behind parcels wait
/// `tau` per interval, boarders `tau / 2`; intervals before 1 are not counted.
pub fn event_oracle(scenario: &Scenario, choices: &[usize]) -> Result<OracleResult, EvalError> {
    if scenario.seeds().next().is_some() {
        return Err(EvalError::SeedsUnsupported);
    }
    check_assignment(scenario, choices)?;
    let g = &scenario.grid;
    let tau = g.tau;
    let counted = |from: TimeIndex, to: TimeIndex| -> f64 {
        let lo = from.max(1);
        if to < lo {
            0.0
        } else {
            (to - lo + 1) as f64
        }
    };

    let mut waiting: Vec<Parcel> = Vec::new();
    let mut seq = 0;
    for (r, t, f) in scenario.background_flows() {
        if f > 0.0 {
            waiting.push(Parcel {
                size: f,
                path: r,
                leg: 0,
                ready: t,
                seq,
                owner: None,
                wait: 0.0,
                ivt: 0.0,
            });
            seq += 1;
        }
    }
    for (p, pax) in scenario.passengers.iter().enumerate() {
        waiting.push(Parcel {
            size: 1.0,
            path: pax.paths[choices[p]],
            leg: 0,
            ready: pax.departure,
            seq,
            owner: Some(p),
            wait: 0.0,
            ivt: 0.0,
        });
        seq += 1;
    }

    let mut loads: Vec<HashMap<TimeIndex, f64>> = vec![HashMap::new(); scenario.runs.len()];
    let mut done: Vec<Parcel> = Vec::new();

    for t in g.t_min..=g.t_max {
        loop {
            let mut changed = false;
            for (ri, run) in scenario.runs.iter().enumerate() {
                for (pos, &station) in scenario.lines[run.line].stops.iter().enumerate() {
                    if run.departure + run.offsets[pos] != t {
                        continue;
                    }
                    let mut order: Vec<usize> = (0..waiting.len())
                        .filter(|&i| {
                            let w = &waiting[i];
                            let leg = &scenario.paths[w.path].legs[w.leg];
                            w.ready <= t && leg.line == run.line && leg.board == station && leg.board_pos == pos
                        })
                        .collect();
                    order.sort_by_key(|&i| (waiting[i].ready, waiting[i].seq));
                    let mut boarded: Vec<(usize, f64)> = Vec::new();
                    for i in order {
                        let w = &waiting[i];
                        let leg = &scenario.paths[w.path].legs[w.leg];
                        let alight_t = run.departure + run.offsets[leg.alight_pos];
                        let peak = (t..=alight_t)
                            .map(|s| loads[ri].get(&s).copied().unwrap_or(0.0))
                            .fold(0.0, f64::max);
                        let room = run.capacity - peak;
                        if room <= 1e-12 {
                            continue;
                        }
                        let take = w.size.min(room);
                        for s in t..=alight_t {
                            *loads[ri].entry(s).or_insert(0.0) += take;
                        }
                        boarded.push((i, take));
                    }
                    if boarded.is_empty() {
                        continue;
                    }
                    changed = true;
                    let mut remove = Vec::new();
                    for (i, take) in boarded {
                        let w = waiting[i].clone();
                        let leg = &scenario.paths[w.path].legs[w.leg];
                        let alight_t = run.departure + run.offsets[leg.alight_pos];
                        let mut moved = w.clone();
                        moved.size = take;
                        moved.wait += tau * counted(w.ready, t - 1) + if t >= 1 { tau / 2.0 } else { 0.0 };
                        moved.ivt += tau * (run.offsets[leg.alight_pos] - run.offsets[pos]) as f64;
                        if take >= w.size - 1e-12 {
                            remove.push(i);
                        } else {
                            waiting[i].size -= take;
                        }
                        if w.leg + 1 < scenario.paths[w.path].legs.len() {
                            moved.leg += 1;
                            moved.ready = alight_t;
                            moved.seq = seq;
                            seq += 1;
                            waiting.push(moved);
                        } else {
                            done.push(moved);
                        }
                    }
                    remove.sort_unstable();
                    for i in remove.into_iter().rev() {
                        waiting.remove(i);
                    }
                }
            }
            if !changed {
                break;
            }
        }
    }

    let mut result = OracleResult {
        total: 0.0,
        waiting: 0.0,
        in_vehicle: 0.0,
        per_passenger: vec![0.0; scenario.passengers.len()],
        unfinished: Vec::new(),
        unfinished_background: 0.0,
    };
    let mut unfinished_owner = vec![false; scenario.passengers.len()];
    for mut w in waiting {
        w.wait += tau * counted(w.ready, g.t_max);
        match w.owner {
            Some(p) => unfinished_owner[p] = true,
            None => result.unfinished_background += w.size,
        }
        done.push(w);
    }
    for w in &done {
        result.waiting += w.size * w.wait;
        result.in_vehicle += w.size * w.ivt;
        if let Some(p) = w.owner {
            result.per_passenger[p] += w.size * (w.wait + w.ivt);
        }
    }
    result.total = result.waiting + result.in_vehicle;
    result.unfinished = scenario
        .passengers
        .iter()
        .zip(&unfinished_owner)
        .filter(|(_, &u)| u)
        .map(|(p, _)| p.id.clone())
        .collect();
    Ok(result)
}
