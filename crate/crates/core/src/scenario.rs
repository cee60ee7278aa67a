//! Scenario data model: time grid, lines, runs, paths, demand, seeded onboard flows and the
//! roster of passengers who receive recommendations.
//!
//! A [`ScenarioDoc`] is the serde mirror of the JSON file. [`Scenario::from_document`] validates
//! it and materializes the index sets used by the model builders.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type TimeIndex = i32;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("rule `{rule}` violated by {entity}: {detail}")]
    Invalid {
        rule: &'static str,
        entity: String,
        detail: String,
    },
}

impl ScenarioError {
    pub fn rule(&self) -> Option<&'static str> {
        match self {
            ScenarioError::Invalid { rule, .. } => Some(rule),
            _ => None,
        }
    }
}

fn invalid(rule: &'static str, entity: impl fmt::Display, detail: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        rule,
        entity: entity.to_string(),
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------------------------
// document schema

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_min: TimeIndex,
    /// Last interval of the analysis period.
    pub t_max: TimeIndex,
    /// Last interval in which recommended passengers depart.
    pub horizon_end: TimeIndex,
    pub incident_end: TimeIndex,
    /// Minutes per interval.
    pub tau: f64,
}

impl TimeGrid {
    pub fn intervals(&self) -> impl Iterator<Item = TimeIndex> {
        self.t_min..=self.t_max
    }

    pub fn contains(&self, t: TimeIndex) -> bool {
        t >= self.t_min && t <= self.t_max
    }

    /// Number of intervals `t` in `[1, T]` with `t >= from`.
    pub fn counted_from(&self, from: TimeIndex) -> f64 {
        let lo = from.max(1);
        if lo > self.t_max {
            0.0
        } else {
            (self.t_max - lo + 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineDoc {
    pub id: String,
    pub stops: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunDoc {
    pub line: String,
    pub departure: TimeIndex,
    pub capacity: f64,
    pub offsets: Vec<TimeIndex>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegDoc {
    pub line: String,
    pub board: String,
    pub alight: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathDoc {
    pub id: String,
    pub origin: String,
    pub destination: String,
    pub legs: Vec<LegDoc>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub wait_for_recovery: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandDoc {
    pub origin: String,
    pub destination: String,
    pub t: TimeIndex,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundFlowDoc {
    pub path: String,
    pub t: TimeIndex,
    pub flow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedDoc {
    pub path: String,
    /// 1-based leg number along the path.
    pub leg: usize,
    /// Terminal departure of the run carrying the flow.
    pub departure: TimeIndex,
    pub flow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassengerDoc {
    pub id: String,
    pub origin: String,
    pub destination: String,
    pub departure: TimeIndex,
    pub paths: Vec<String>,
    pub utilities: Vec<f64>,
    /// `impacts[a][b]`: utility change of path `b` when path `a` is recommended.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impacts: Option<Vec<Vec<f64>>>,
    /// `choice_probabilities[a][b]`: probability of taking `b` when `a` is recommended.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choice_probabilities: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status_quo: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub time_grid: TimeGrid,
    pub stations: Vec<String>,
    pub lines: Vec<LineDoc>,
    pub runs: Vec<RunDoc>,
    pub paths: Vec<PathDoc>,
    pub demand: Vec<DemandDoc>,
    #[serde(default)]
    pub background_flows: Vec<BackgroundFlowDoc>,
    #[serde(default)]
    pub onboard_seed: Vec<SeedDoc>,
    pub passengers: Vec<PassengerDoc>,
}

// ---------------------------------------------------------------------------------------------
// validated model

#[derive(Debug, Clone)]
pub struct Line {
    pub id: String,
    pub stops: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Run {
    pub line: usize,
    pub departure: TimeIndex,
    pub capacity: f64,
    pub offsets: Vec<TimeIndex>,
}

impl Run {
    /// Arrival index at the last stop.
    pub fn last_arrival(&self) -> TimeIndex {
        self.departure + *self.offsets.last().unwrap_or(&0)
    }
}

#[derive(Debug, Clone)]
pub struct Leg {
    pub line: usize,
    pub board: usize,
    pub alight: usize,
    /// Positions in the line's stop list.
    pub board_pos: usize,
    pub alight_pos: usize,
}

#[derive(Debug, Clone)]
pub struct Path {
    pub id: String,
    pub od: usize,
    pub legs: Vec<Leg>,
    pub wait_for_recovery: bool,
}

/// A path leg served by a particular run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LegRun {
    pub path: usize,
    pub leg: usize,
    pub run: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LegTiming {
    /// Offset of the boarding stop.
    pub delta_board: TimeIndex,
    /// Offset of the alighting stop.
    pub delta_alight: TimeIndex,
    pub board_time: TimeIndex,
    pub alight_time: TimeIndex,
}

impl LegTiming {
    pub fn ivt_minutes(&self, tau: f64) -> f64 {
        (self.delta_alight - self.delta_board) as f64 * tau
    }
}

#[derive(Debug, Clone)]
pub struct Passenger {
    pub id: String,
    pub od: usize,
    pub departure: TimeIndex,
    /// Global path indices, in the order given by the document.
    pub paths: Vec<usize>,
    pub utilities: Vec<f64>,
    pub impacts: Vec<Vec<f64>>,
    pub choice_probabilities: Option<Vec<Vec<f64>>>,
    /// Position in `paths`.
    pub status_quo: Option<usize>,
}

impl Passenger {
    pub fn local_path(&self, path: usize) -> Option<usize> {
        self.paths.iter().position(|&p| p == path)
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub grid: TimeGrid,
    pub stations: Vec<String>,
    pub lines: Vec<Line>,
    pub runs: Vec<Run>,
    pub paths: Vec<Path>,
    /// (origin, destination) station pairs, sorted by station id.
    pub ods: Vec<(usize, usize)>,
    pub od_paths: Vec<Vec<usize>>,
    pub passengers: Vec<Passenger>,
    demand: BTreeMap<(usize, TimeIndex), f64>,
    background: BTreeMap<(usize, TimeIndex), f64>,
    seeds: BTreeMap<LegRun, f64>,
    cohorts: BTreeMap<(usize, TimeIndex), Vec<usize>>,
    leg_runs: Vec<Vec<Vec<usize>>>,
}

fn unique_index<'a>(
    rule: &'static str,
    kind: &str,
    ids: impl Iterator<Item = &'a String>,
) -> Result<HashMap<String, usize>, ScenarioError> {
    let mut map = HashMap::new();
    for (i, id) in ids.enumerate() {
        if map.insert(id.clone(), i).is_some() {
            return Err(invalid(rule, format!("{kind} `{id}`"), "duplicate id"));
        }
    }
    Ok(map)
}

fn finite_nonneg(rule: &'static str, entity: impl fmt::Display, v: f64) -> Result<(), ScenarioError> {
    if !v.is_finite() || v < 0.0 {
        return Err(invalid(
            rule,
            entity,
            format!("value {v} must be finite and nonnegative"),
        ));
    }
    Ok(())
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let doc: ScenarioDoc = serde_json::from_str(text).map_err(|e| ScenarioError::Schema(e.to_string()))?;
        Self::from_document(doc)
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_document(doc: ScenarioDoc) -> Result<Self, ScenarioError> {
        let g = doc.time_grid.clone();
        if !(g.t_min < 1 && 1 <= g.incident_end && g.incident_end < g.horizon_end && g.horizon_end < g.t_max) {
            return Err(invalid(
                "time_grid",
                "time_grid",
                format!(
                    "need t_min < 1 <= incident_end < horizon_end < t_max, got {} / {} / {} / {}",
                    g.t_min, g.incident_end, g.horizon_end, g.t_max
                ),
            ));
        }
        if !(g.tau.is_finite() && g.tau > 0.0) {
            return Err(invalid("time_grid", "time_grid", "tau must be positive"));
        }

        let mut station_ids = doc.stations.clone();
        station_ids.sort();
        let station_of = unique_index("unique_ids", "station", station_ids.iter())?;

        let mut line_docs = doc.lines.clone();
        line_docs.sort_by(|a, b| a.id.cmp(&b.id));
        let line_of = unique_index("unique_ids", "line", line_docs.iter().map(|l| &l.id))?;
        let mut lines = Vec::with_capacity(line_docs.len());
        for l in &line_docs {
            let entity = format!("line `{}`", l.id);
            if l.stops.len() < 2 {
                return Err(invalid("line_stops", &entity, "a line needs at least two stops"));
            }
            let mut stops = Vec::with_capacity(l.stops.len());
            for s in &l.stops {
                let &idx = station_of
                    .get(s)
                    .ok_or_else(|| invalid("dangling_reference", &entity, format!("unknown station `{s}`")))?;
                if stops.last() == Some(&idx) {
                    return Err(invalid(
                        "line_stops",
                        &entity,
                        format!("stop `{s}` repeated consecutively"),
                    ));
                }
                stops.push(idx);
            }
            lines.push(Line {
                id: l.id.clone(),
                stops,
            });
        }

        let mut runs = Vec::with_capacity(doc.runs.len());
        for r in &doc.runs {
            let entity = format!("run {}@{}", r.line, r.departure);
            let &line = line_of
                .get(&r.line)
                .ok_or_else(|| invalid("dangling_reference", &entity, format!("unknown line `{}`", r.line)))?;
            finite_nonneg("run_capacity", &entity, r.capacity)?;
            if r.offsets.len() != lines[line].stops.len() {
                return Err(invalid("run_offsets", &entity, "one offset per stop is required"));
            }
            if r.offsets[0] < 0 || r.offsets.windows(2).any(|w| w[1] < w[0]) {
                return Err(invalid(
                    "run_offsets",
                    &entity,
                    "offsets must start at >= 0 and be nondecreasing",
                ));
            }
            let run = Run {
                line,
                departure: r.departure,
                capacity: r.capacity,
                offsets: r.offsets.clone(),
            };
            if run.last_arrival() > g.t_max {
                return Err(invalid("run_offsets", &entity, "run reaches its last stop after t_max"));
            }
            runs.push(run);
        }
        runs.sort_by_key(|r| (r.line, r.departure));
        if let Some(w) = runs
            .windows(2)
            .find(|w| w[0].line == w[1].line && w[0].departure == w[1].departure)
        {
            return Err(invalid(
                "unique_ids",
                format!("run {}@{}", lines[w[0].line].id, w[0].departure),
                "duplicate run",
            ));
        }

        let mut path_docs = doc.paths.clone();
        path_docs.sort_by(|a, b| a.id.cmp(&b.id));
        let path_of = unique_index("unique_ids", "path", path_docs.iter().map(|p| &p.id))?;
        let mut od_set = BTreeSet::new();
        for p in &path_docs {
            for s in [&p.origin, &p.destination] {
                if !station_of.contains_key(s) {
                    return Err(invalid(
                        "dangling_reference",
                        format!("path `{}`", p.id),
                        format!("unknown station `{s}`"),
                    ));
                }
            }
            od_set.insert((p.origin.clone(), p.destination.clone()));
        }
        let od_names: Vec<(String, String)> = od_set.into_iter().collect();
        let ods: Vec<(usize, usize)> = od_names.iter().map(|(o, d)| (station_of[o], station_of[d])).collect();
        let od_of: HashMap<(String, String), usize> =
            od_names.iter().cloned().enumerate().map(|(i, k)| (k, i)).collect();

        let mut paths = Vec::with_capacity(path_docs.len());
        let mut od_paths = vec![Vec::new(); ods.len()];
        for (pi, p) in path_docs.iter().enumerate() {
            let entity = format!("path `{}`", p.id);
            if p.origin == p.destination {
                return Err(invalid("path_connectivity", &entity, "origin equals destination"));
            }
            if p.legs.is_empty() {
                return Err(invalid("path_connectivity", &entity, "a path needs at least one leg"));
            }
            let mut legs = Vec::with_capacity(p.legs.len());
            for (li, leg) in p.legs.iter().enumerate() {
                let leg_entity = format!("{entity} leg {}", li + 1);
                let &line = line_of.get(&leg.line).ok_or_else(|| {
                    invalid(
                        "dangling_reference",
                        &leg_entity,
                        format!("unknown line `{}`", leg.line),
                    )
                })?;
                let stops = &lines[line].stops;
                let board = *station_of.get(&leg.board).ok_or_else(|| {
                    invalid(
                        "dangling_reference",
                        &leg_entity,
                        format!("unknown station `{}`", leg.board),
                    )
                })?;
                let alight = *station_of.get(&leg.alight).ok_or_else(|| {
                    invalid(
                        "dangling_reference",
                        &leg_entity,
                        format!("unknown station `{}`", leg.alight),
                    )
                })?;
                let board_pos = stops.iter().position(|&s| s == board).ok_or_else(|| {
                    invalid(
                        "leg_on_line",
                        &leg_entity,
                        format!("`{}` is not served by line `{}`", leg.board, leg.line),
                    )
                })?;
                let alight_pos = match stops.iter().skip(board_pos + 1).position(|&s| s == alight) {
                    Some(k) => board_pos + 1 + k,
                    None if stops.contains(&alight) => {
                        return Err(invalid(
                            "leg_ordering",
                            &leg_entity,
                            format!(
                                "`{}` does not precede `{}` on line `{}`",
                                leg.board, leg.alight, leg.line
                            ),
                        ))
                    }
                    None => {
                        return Err(invalid(
                            "leg_on_line",
                            &leg_entity,
                            format!("`{}` is not served by line `{}`", leg.alight, leg.line),
                        ))
                    }
                };
                legs.push(Leg {
                    line,
                    board,
                    alight,
                    board_pos,
                    alight_pos,
                });
            }
            if p.legs[0].board != p.origin || p.legs.last().map(|l| &l.alight) != Some(&p.destination) {
                return Err(invalid(
                    "path_connectivity",
                    &entity,
                    "legs must start at the origin and end at the destination",
                ));
            }
            if p.legs.windows(2).any(|w| w[0].alight != w[1].board) {
                return Err(invalid(
                    "path_connectivity",
                    &entity,
                    "consecutive legs must share the transfer station",
                ));
            }
            let od = od_of[&(p.origin.clone(), p.destination.clone())];
            od_paths[od].push(pi);
            paths.push(Path {
                id: p.id.clone(),
                od,
                legs,
                wait_for_recovery: p.wait_for_recovery,
            });
        }

        let od_key = |o: &String, d: &String, entity: &str| -> Result<usize, ScenarioError> {
            od_of
                .get(&(o.clone(), d.clone()))
                .copied()
                .ok_or_else(|| invalid("dangling_reference", entity, format!("no path serves {o} -> {d}")))
        };

        let mut demand = BTreeMap::new();
        for d in &doc.demand {
            let entity = format!("demand {}->{}@{}", d.origin, d.destination, d.t);
            let od = od_key(&d.origin, &d.destination, &entity)?;
            finite_nonneg("demand", &entity, d.total)?;
            if !g.contains(d.t) {
                return Err(invalid("demand", &entity, "t outside the analysis period"));
            }
            if demand.insert((od, d.t), d.total).is_some() {
                return Err(invalid("unique_ids", &entity, "duplicate demand entry"));
            }
        }

        let mut background = BTreeMap::new();
        for f in &doc.background_flows {
            let entity = format!("background flow {}@{}", f.path, f.t);
            let &path = path_of
                .get(&f.path)
                .ok_or_else(|| invalid("dangling_reference", &entity, format!("unknown path `{}`", f.path)))?;
            finite_nonneg("background_flow", &entity, f.flow)?;
            if !g.contains(f.t) {
                return Err(invalid("background_flow", &entity, "t outside the analysis period"));
            }
            if background.insert((path, f.t), f.flow).is_some() {
                return Err(invalid("unique_ids", &entity, "duplicate background flow"));
            }
        }

        let mut seeds = BTreeMap::new();
        for s in &doc.onboard_seed {
            let entity = format!("onboard seed {} leg {}@{}", s.path, s.leg, s.departure);
            let &path = path_of
                .get(&s.path)
                .ok_or_else(|| invalid("dangling_reference", &entity, format!("unknown path `{}`", s.path)))?;
            if s.leg == 0 || s.leg > paths[path].legs.len() {
                return Err(invalid("dangling_reference", &entity, "leg number out of range"));
            }
            finite_nonneg("onboard_seed", &entity, s.flow)?;
            let leg = &paths[path].legs[s.leg - 1];
            let run = runs
                .iter()
                .position(|r| r.line == leg.line && r.departure == s.departure)
                .ok_or_else(|| {
                    invalid(
                        "dangling_reference",
                        &entity,
                        "no run with this departure on the leg's line",
                    )
                })?;
            let tm = timing(&runs[run], leg);
            if !(tm.board_time <= 1 && 1 <= tm.alight_time) {
                return Err(invalid(
                    "onboard_seed",
                    &entity,
                    format!(
                        "needs boarding <= 1 <= alighting, got {} and {}",
                        tm.board_time, tm.alight_time
                    ),
                ));
            }
            if tm.board_time < g.t_min {
                return Err(invalid("onboard_seed", &entity, "boarding before t_min"));
            }
            let key = LegRun {
                path,
                leg: s.leg - 1,
                run,
            };
            if seeds.insert(key, s.flow).is_some() {
                return Err(invalid("unique_ids", &entity, "duplicate seed"));
            }
        }

        let mut pax_docs = doc.passengers.clone();
        pax_docs.sort_by(|a, b| a.id.cmp(&b.id));
        unique_index("unique_ids", "passenger", pax_docs.iter().map(|p| &p.id))?;
        let mut passengers = Vec::with_capacity(pax_docs.len());
        let mut cohorts: BTreeMap<(usize, TimeIndex), Vec<usize>> = BTreeMap::new();
        for (pi, p) in pax_docs.iter().enumerate() {
            let entity = format!("passenger `{}`", p.id);
            let od = od_key(&p.origin, &p.destination, &entity)?;
            if p.departure < 1 || p.departure > g.horizon_end {
                return Err(invalid(
                    "passenger_departure",
                    &entity,
                    "departure must lie in [1, horizon_end]",
                ));
            }
            if p.paths.is_empty() {
                return Err(invalid(
                    "passenger_paths",
                    &entity,
                    "at least one feasible path is required",
                ));
            }
            let mut local = Vec::with_capacity(p.paths.len());
            for id in &p.paths {
                let &path = path_of
                    .get(id)
                    .ok_or_else(|| invalid("dangling_reference", &entity, format!("unknown path `{id}`")))?;
                if paths[path].od != od {
                    return Err(invalid(
                        "passenger_paths",
                        &entity,
                        format!("path `{id}` serves a different OD pair"),
                    ));
                }
                if local.contains(&path) {
                    return Err(invalid("passenger_paths", &entity, format!("path `{id}` listed twice")));
                }
                local.push(path);
            }
            let n = local.len();
            if p.utilities.len() != n || p.utilities.iter().any(|v| !v.is_finite()) {
                return Err(invalid(
                    "passenger_utilities",
                    &entity,
                    "one finite utility per path is required",
                ));
            }
            let impacts = match &p.impacts {
                Some(m) => {
                    if m.len() != n || m.iter().any(|row| row.len() != n || row.iter().any(|v| !v.is_finite())) {
                        return Err(invalid(
                            "passenger_impacts",
                            &entity,
                            "impacts must be a finite square matrix over the paths",
                        ));
                    }
                    m.clone()
                }
                None => vec![vec![0.0; n]; n],
            };
            if let Some(m) = &p.choice_probabilities {
                let bad = m.len() != n
                    || m.iter().any(|row| {
                        row.len() != n
                            || row.iter().any(|v| !(0.0..=1.0).contains(v))
                            || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9
                    });
                if bad {
                    return Err(invalid(
                        "choice_probabilities",
                        &entity,
                        "rows must be probability vectors over the paths",
                    ));
                }
            }
            let status_quo = match &p.status_quo {
                Some(id) => Some(p.paths.iter().position(|x| x == id).ok_or_else(|| {
                    invalid(
                        "status_quo",
                        &entity,
                        format!("`{id}` is not among the passenger's paths"),
                    )
                })?),
                None => None,
            };
            cohorts.entry((od, p.departure)).or_default().push(pi);
            passengers.push(Passenger {
                id: p.id.clone(),
                od,
                departure: p.departure,
                paths: local,
                utilities: p.utilities.clone(),
                impacts,
                choice_probabilities: p.choice_probabilities.clone(),
                status_quo,
            });
        }

        let leg_runs = paths
            .iter()
            .map(|p| {
                p.legs
                    .iter()
                    .map(|leg| {
                        runs.iter()
                            .enumerate()
                            .filter(|(_, r)| r.line == leg.line)
                            .map(|(i, _)| i)
                            .collect()
                    })
                    .collect()
            })
            .collect();

        let scenario = Scenario {
            grid: g,
            stations: station_ids,
            lines,
            runs,
            paths,
            ods,
            od_paths,
            passengers,
            demand,
            background,
            seeds,
            cohorts,
            leg_runs,
        };
        scenario.check_demand_split()?;
        Ok(scenario)
    }

    fn check_demand_split(&self) -> Result<(), ScenarioError> {
        let mut keys: BTreeSet<(usize, TimeIndex)> = self.demand.keys().copied().collect();
        keys.extend(self.background.keys().map(|&(p, t)| (self.paths[p].od, t)));
        keys.extend(self.cohorts.keys().copied());
        for (od, t) in keys {
            let d = self.demand(od, t);
            let f: f64 = self.od_paths[od].iter().map(|&r| self.background_flow(r, t)).sum();
            let n = self.cohort(od, t).len() as f64;
            if (f + n - d).abs() > 1e-9 * d.max(1.0) {
                let (o, dst) = self.ods[od];
                return Err(invalid(
                    "demand_split",
                    format!("OD {}->{} at t={t}", self.stations[o], self.stations[dst]),
                    format!("background {f} + recommended {n} != demand {d}"),
                ));
            }
        }
        Ok(())
    }

    pub fn demand(&self, od: usize, t: TimeIndex) -> f64 {
        self.demand.get(&(od, t)).copied().unwrap_or(0.0)
    }

    pub fn background_flow(&self, path: usize, t: TimeIndex) -> f64 {
        self.background.get(&(path, t)).copied().unwrap_or(0.0)
    }

    pub fn background_flows(&self) -> impl Iterator<Item = (usize, TimeIndex, f64)> + '_ {
        self.background.iter().map(|(&(p, t), &f)| (p, t, f))
    }

    pub fn seeds(&self) -> impl Iterator<Item = (LegRun, f64)> + '_ {
        self.seeds.iter().map(|(&k, &v)| (k, v))
    }

    pub fn seed(&self, lr: LegRun) -> Option<f64> {
        self.seeds.get(&lr).copied()
    }

    /// Passengers (indices) of an OD pair departing at `t`.
    pub fn cohort(&self, od: usize, t: TimeIndex) -> &[usize] {
        self.cohorts.get(&(od, t)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Nonempty cohorts, ordered by (OD, t).
    pub fn cohorts(&self) -> impl Iterator<Item = ((usize, TimeIndex), &[usize])> + '_ {
        self.cohorts.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    /// Runs of the leg's line, ordered by departure.
    pub fn leg_runs(&self, path: usize, leg: usize) -> &[usize] {
        &self.leg_runs[path][leg]
    }

    pub fn leg_timing(&self, lr: LegRun) -> LegTiming {
        timing(&self.runs[lr.run], &self.paths[lr.path].legs[lr.leg])
    }

    /// Leg-runs that can carry flow: boarding inside the analysis period, or explicitly seeded.
    pub fn active_leg_runs(&self) -> Vec<LegRun> {
        let mut out = Vec::new();
        for (p, path) in self.paths.iter().enumerate() {
            for leg in 0..path.legs.len() {
                for &run in self.leg_runs(p, leg) {
                    let lr = LegRun { path: p, leg, run };
                    let tm = self.leg_timing(lr);
                    if self.grid.contains(tm.board_time) || self.seeds.contains_key(&lr) {
                        out.push(lr);
                    }
                }
            }
        }
        out
    }

    /// Leg-runs aboard run `run` at interval `t_prime` (boarding <= t' <= alighting).
    pub fn onboard(&self, run: usize, t_prime: TimeIndex) -> Vec<LegRun> {
        let line = self.runs[run].line;
        let mut out = Vec::new();
        for (p, path) in self.paths.iter().enumerate() {
            for (i, leg) in path.legs.iter().enumerate() {
                if leg.line != line {
                    continue;
                }
                let lr = LegRun { path: p, leg: i, run };
                let tm = self.leg_timing(lr);
                if tm.board_time <= t_prime && t_prime <= tm.alight_time {
                    out.push(lr);
                }
            }
        }
        out
    }

    /// Legs (path, leg index >= 1) whose boarding station `s` is a transfer.
    pub fn transfers_at(&self, station: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (p, path) in self.paths.iter().enumerate() {
            for (i, leg) in path.legs.iter().enumerate().skip(1) {
                if leg.board == station {
                    out.push((p, i));
                }
            }
        }
        out
    }

    /// Legs boarding at station `s`.
    pub fn boardings_at(&self, station: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (p, path) in self.paths.iter().enumerate() {
            for (i, leg) in path.legs.iter().enumerate() {
                if leg.board == station {
                    out.push((p, i));
                }
            }
        }
        out
    }

    pub fn od_label(&self, od: usize) -> (&str, &str) {
        let (o, d) = self.ods[od];
        (&self.stations[o], &self.stations[d])
    }

    pub fn path_index(&self, id: &str) -> Option<usize> {
        self.paths.iter().position(|p| p.id == id)
    }

    pub fn passenger_index(&self, id: &str) -> Option<usize> {
        self.passengers.iter().position(|p| p.id == id)
    }

    /// Recommended passengers per (OD, t), summed over the OD's paths.
    pub fn headcount(&self, od: usize, t: TimeIndex) -> f64 {
        self.cohort(od, t).len() as f64
    }

    /// Canonical document; entities appear in the validated (sorted) order.
    pub fn to_document(&self) -> ScenarioDoc {
        let st = |s: usize| self.stations[s].clone();
        let path_id = |p: usize| self.paths[p].id.clone();
        ScenarioDoc {
            time_grid: self.grid.clone(),
            stations: self.stations.clone(),
            lines: self
                .lines
                .iter()
                .map(|l| LineDoc {
                    id: l.id.clone(),
                    stops: l.stops.iter().map(|&s| st(s)).collect(),
                })
                .collect(),
            runs: self
                .runs
                .iter()
                .map(|r| RunDoc {
                    line: self.lines[r.line].id.clone(),
                    departure: r.departure,
                    capacity: r.capacity,
                    offsets: r.offsets.clone(),
                })
                .collect(),
            paths: self
                .paths
                .iter()
                .map(|p| {
                    let (o, d) = self.ods[p.od];
                    PathDoc {
                        id: p.id.clone(),
                        origin: st(o),
                        destination: st(d),
                        legs: p
                            .legs
                            .iter()
                            .map(|l| LegDoc {
                                line: self.lines[l.line].id.clone(),
                                board: st(l.board),
                                alight: st(l.alight),
                            })
                            .collect(),
                        wait_for_recovery: p.wait_for_recovery,
                    }
                })
                .collect(),
            demand: self
                .demand
                .iter()
                .map(|(&(od, t), &total)| {
                    let (o, d) = self.ods[od];
                    DemandDoc {
                        origin: st(o),
                        destination: st(d),
                        t,
                        total,
                    }
                })
                .collect(),
            background_flows: self
                .background
                .iter()
                .map(|(&(p, t), &flow)| BackgroundFlowDoc {
                    path: path_id(p),
                    t,
                    flow,
                })
                .collect(),
            onboard_seed: self
                .seeds
                .iter()
                .map(|(lr, &flow)| SeedDoc {
                    path: path_id(lr.path),
                    leg: lr.leg + 1,
                    departure: self.runs[lr.run].departure,
                    flow,
                })
                .collect(),
            passengers: self
                .passengers
                .iter()
                .map(|p| {
                    let (o, d) = self.ods[p.od];
                    let has_impacts = p.impacts.iter().flatten().any(|&v| v != 0.0);
                    PassengerDoc {
                        id: p.id.clone(),
                        origin: st(o),
                        destination: st(d),
                        departure: p.departure,
                        paths: p.paths.iter().map(|&r| path_id(r)).collect(),
                        utilities: p.utilities.clone(),
                        impacts: has_impacts.then(|| p.impacts.clone()),
                        choice_probabilities: p.choice_probabilities.clone(),
                        status_quo: p.status_quo.map(|k| path_id(p.paths[k])),
                    }
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("scenario document serializes")
    }
}

/// Offsets of a leg on a run. Fails when the run belongs to another line.
pub fn leg_timing(run: &Run, leg: &Leg) -> Result<LegTiming, ScenarioError> {
    if run.line != leg.line {
        return Err(invalid(
            "leg_on_line",
            "leg timing",
            "run and leg belong to different lines",
        ));
    }
    Ok(timing(run, leg))
}

fn timing(run: &Run, leg: &Leg) -> LegTiming {
    let db = run.offsets[leg.board_pos];
    let da = run.offsets[leg.alight_pos];
    LegTiming {
        delta_board: db,
        delta_alight: da,
        board_time: run.departure + db,
        alight_time: run.departure + da,
    }
}
