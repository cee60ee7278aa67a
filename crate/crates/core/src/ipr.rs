//! Individual path recommendation MILP: flow rows plus the mean band, variance cap and
//! one-path-per-passenger assignment, with an optional preference reward.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::choice::{check_assignment, flow_moments, ChoiceError, ChoiceModel};
use crate::lp::{self, LinearModel, LpError, Relation, RowId, SolveStatus, Tolerances, VarId};
use crate::ofp::{FlowError, FlowIndex, FlowSolution};
use crate::scenario::{Scenario, TimeIndex};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IprParams {
    /// Weight of the preference reward.
    pub psi: f64,
    /// Relative half-width of the band around the expected flow.
    pub epsilon: f64,
    /// Relative standard-deviation cap; `f64::INFINITY` drops the variance rows.
    pub gamma: f64,
}

impl Default for IprParams {
    fn default() -> Self {
        IprParams {
            psi: 0.0,
            epsilon: 0.05,
            gamma: 0.3,
        }
    }
}

impl IprParams {
    pub fn validate(&self) -> Result<(), IprError> {
        let ok = self.psi.is_finite()
            && self.psi >= 0.0
            && self.epsilon.is_finite()
            && self.epsilon >= 0.0
            && self.gamma >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(IprError::InvalidParams(format!(
                "need psi >= 0, epsilon >= 0, gamma >= 0 (got {}, {}, {})",
                self.psi, self.epsilon, self.gamma
            )))
        }
    }
}

#[derive(Debug, Error)]
pub enum IprError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no feasible recommendation exists (binding rows: {})", rows.join(", "))]
    Infeasible { rows: Vec<String> },
    #[error("solver stopped at a limit (gap {gap:?})")]
    Limit { gap: Option<f64> },
    #[error(transparent)]
    Choice(#[from] ChoiceError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Solver(#[from] LpError),
}

/// Coefficients `(passenger, local recommended path, weight)` of an affine form in x.
pub type XTerms = Vec<(usize, usize, f64)>;

/// Per (path, t) of a nonempty cohort: the `Σ x·π` terms of the expected flow.
pub fn mean_terms(scenario: &Scenario, choice: &ChoiceModel) -> BTreeMap<(usize, TimeIndex), XTerms> {
    let mut out = BTreeMap::new();
    for ((od, t), members) in scenario.cohorts() {
        for &r in &scenario.od_paths[od] {
            let mut terms = Vec::new();
            for &p in members {
                let pax = &scenario.passengers[p];
                if let Some(k) = pax.local_path(r) {
                    for a in 0..pax.paths.len() {
                        let pi = choice.prob(p, a, k);
                        if pi != 0.0 {
                            terms.push((p, a, pi));
                        }
                    }
                }
            }
            out.insert((r, t), terms);
        }
    }
    out
}

/// One variance cap `Σ x·π(1−π) <= (Γ d)²`, with the (path, t) keys it stands for.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaRow {
    pub keys: Vec<(usize, TimeIndex)>,
    pub terms: XTerms,
    pub rhs: f64,
}

/// Variance caps of nonempty cohorts. Rows with identical terms within a cohort are merged;
/// rows without terms are dropped.
pub fn gamma_rows(scenario: &Scenario, choice: &ChoiceModel, gamma: f64) -> Vec<GammaRow> {
    if gamma.is_infinite() {
        return Vec::new();
    }
    let mut out: Vec<GammaRow> = Vec::new();
    for ((od, t), members) in scenario.cohorts() {
        let rhs = (gamma * scenario.demand(od, t)).powi(2);
        let first = out.len();
        for &r in &scenario.od_paths[od] {
            let mut terms = Vec::new();
            for &p in members {
                let pax = &scenario.passengers[p];
                if let Some(k) = pax.local_path(r) {
                    for a in 0..pax.paths.len() {
                        let pi = choice.prob(p, a, k);
                        let w = pi * (1.0 - pi);
                        if w > 0.0 {
                            terms.push((p, a, w));
                        }
                    }
                }
            }
            if terms.is_empty() {
                continue;
            }
            match out[first..].iter_mut().find(|g| same_terms(&g.terms, &terms)) {
                Some(g) => g.keys.push((r, t)),
                None => out.push(GammaRow {
                    keys: vec![(r, t)],
                    terms,
                    rhs,
                }),
            }
        }
    }
    out
}

fn same_terms(a: &XTerms, b: &XTerms) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.0 == y.0 && x.1 == y.1 && (x.2 - y.2).abs() <= 1e-12 * x.2.abs().max(1.0))
}

pub fn gamma_row_name(scenario: &Scenario, row: &GammaRow) -> String {
    let (r, t) = row.keys[0];
    let keys: Vec<&str> = row.keys.iter().map(|&(p, _)| scenario.paths[p].id.as_str()).collect();
    let (o, d) = scenario.od_label(scenario.paths[r].od);
    format!("var[{o},{d},{},{t}]", keys.join("|"))
}

/// Binary recommendation variables, one per passenger and feasible path.
pub fn add_assignment(scenario: &Scenario, model: &mut LinearModel, psi: f64) -> Vec<Vec<VarId>> {
    let mut x = Vec::with_capacity(scenario.passengers.len());
    for pax in &scenario.passengers {
        let vars: Vec<VarId> = pax
            .paths
            .iter()
            .zip(&pax.utilities)
            .map(|(&r, &v)| model.add_binary(format!("x[{},{}]", pax.id, scenario.paths[r].id), -psi * v))
            .collect();
        model.add_row(
            format!("assign[{}]", pax.id),
            vars.iter().map(|&v| (v, 1.0)),
            Relation::Eq,
            1.0,
        );
        x.push(vars);
    }
    x
}

pub fn add_gamma_rows(scenario: &Scenario, model: &mut LinearModel, x: &[Vec<VarId>], rows: &[GammaRow]) -> Vec<RowId> {
    rows.iter()
        .map(|g| {
            let coefs = g.terms.iter().map(|&(p, a, w)| (x[p][a], w));
            model.add_row(gamma_row_name(scenario, g), coefs, Relation::Le, g.rhs)
        })
        .collect()
}

pub struct IprModel {
    pub model: LinearModel,
    pub flow: FlowIndex,
    pub x: Vec<Vec<VarId>>,
    /// (path, t, lower-band row, upper-band row)
    pub band_rows: Vec<(usize, TimeIndex, RowId, RowId)>,
    pub gamma_rows: Vec<(GammaRow, RowId)>,
}

pub fn build_ipr(scenario: &Scenario, choice: &ChoiceModel, params: &IprParams) -> Result<IprModel, IprError> {
    params.validate()?;
    choice.validate(scenario)?;
    let mut model = LinearModel::new();
    let flow = FlowIndex::build(scenario, &mut model);
    let x = add_assignment(scenario, &mut model, params.psi);
    let eps = params.epsilon;
    let mut band_rows = Vec::new();
    for ((r, t), terms) in mean_terms(scenario, choice) {
        let q = flow.q[&(r, t)];
        let id = &scenario.paths[r].id;
        let lower = model.add_row(
            format!("band_lo[{id},{t}]"),
            std::iter::once((q, 1.0)).chain(terms.iter().map(|&(p, a, pi)| (x[p][a], -(1.0 - eps) * pi))),
            Relation::Ge,
            0.0,
        );
        let upper = model.add_row(
            format!("band_hi[{id},{t}]"),
            std::iter::once((q, 1.0)).chain(terms.iter().map(|&(p, a, pi)| (x[p][a], -(1.0 + eps) * pi))),
            Relation::Le,
            0.0,
        );
        band_rows.push((r, t, lower, upper));
    }
    let grows = gamma_rows(scenario, choice, params.gamma);
    let ids = add_gamma_rows(scenario, &mut model, &x, &grows);
    Ok(IprModel {
        model,
        flow,
        x,
        band_rows,
        gamma_rows: grows.into_iter().zip(ids).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecommendationPlan {
    /// Local path index recommended to each passenger.
    pub assignment: Vec<usize>,
    pub params: IprParams,
    /// Travel part plus the preference term.
    pub objective: f64,
    /// Waiting plus in-vehicle minutes of the model flows.
    pub travel_time: f64,
    pub total_utility: f64,
    pub preferred: usize,
}

impl RecommendationPlan {
    pub fn new(scenario: &Scenario, assignment: Vec<usize>, params: IprParams, travel_time: f64) -> Self {
        let total_utility = total_utility(scenario, &assignment);
        let preferred = preferred_count(scenario, &assignment);
        RecommendationPlan {
            objective: travel_time - params.psi * total_utility,
            assignment,
            params,
            travel_time,
            total_utility,
            preferred,
        }
    }
}

pub fn total_utility(scenario: &Scenario, assignment: &[usize]) -> f64 {
    scenario
        .passengers
        .iter()
        .zip(assignment)
        .map(|(p, &a)| p.utilities[a])
        .sum()
}

/// True when the recommended path has the passenger's highest prior utility (ties count).
pub fn is_preferred(utilities: &[f64], k: usize) -> bool {
    let best = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    utilities[k] >= best
}

pub fn preferred_count(scenario: &Scenario, assignment: &[usize]) -> usize {
    scenario
        .passengers
        .iter()
        .zip(assignment)
        .filter(|(p, &a)| is_preferred(&p.utilities, a))
        .count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateViolation {
    pub rule: &'static str,
    pub path: usize,
    pub t: TimeIndex,
    pub excess: f64,
}

/// Re-checks the mean band and variance caps of a plan and its flows from first principles.
pub fn certify_plan(
    scenario: &Scenario,
    choice: &ChoiceModel,
    assignment: &[usize],
    params: &IprParams,
    q: &BTreeMap<(usize, TimeIndex), f64>,
    tol: f64,
) -> Result<Vec<CertificateViolation>, ChoiceError> {
    check_assignment(scenario, assignment)?;
    let moments = flow_moments(scenario, choice, assignment)?;
    let mut bad = Vec::new();
    for (&(r, t), &mu) in &moments.mean {
        let qv = q.get(&(r, t)).copied().unwrap_or(0.0);
        let lo = (1.0 - params.epsilon) * mu - qv;
        let hi = qv - (1.0 + params.epsilon) * mu;
        for (rule, excess) in [("band_lower", lo), ("band_upper", hi)] {
            if excess > tol {
                bad.push(CertificateViolation {
                    rule,
                    path: r,
                    t,
                    excess,
                });
            }
        }
        if params.gamma.is_finite() {
            let cap = (params.gamma * scenario.demand(scenario.paths[r].od, t)).powi(2);
            let excess = moments.variance(r, t) - cap;
            if excess > tol {
                bad.push(CertificateViolation {
                    rule: "variance_cap",
                    path: r,
                    t,
                    excess,
                });
            }
        }
    }
    Ok(bad)
}

/// Variance caps that no assignment can meet, judged row by row.
pub fn unattainable_gamma_rows(scenario: &Scenario, rows: &[GammaRow]) -> Vec<String> {
    let mut out = Vec::new();
    for g in rows {
        let mut best: BTreeMap<usize, f64> = BTreeMap::new();
        for &(p, _, _) in &g.terms {
            best.entry(p).or_insert(f64::INFINITY);
        }
        for (&p, v) in best.iter_mut() {
            let n = scenario.passengers[p].paths.len();
            *v = (0..n)
                .map(|a| {
                    g.terms
                        .iter()
                        .filter(|t| t.0 == p && t.1 == a)
                        .map(|t| t.2)
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
        }
        let floor: f64 = best.values().sum();
        if floor > g.rhs + 1e-9 {
            out.push(gamma_row_name(scenario, g));
        }
    }
    out
}

pub fn solve_ipr_direct(
    scenario: &Scenario,
    choice: &ChoiceModel,
    params: &IprParams,
) -> Result<(RecommendationPlan, FlowSolution), IprError> {
    solve_ipr_direct_with(scenario, choice, params, &Tolerances::default())
}

pub fn solve_ipr_direct_with(
    scenario: &Scenario,
    choice: &ChoiceModel,
    params: &IprParams,
    tol: &Tolerances,
) -> Result<(RecommendationPlan, FlowSolution), IprError> {
    let built = build_ipr(scenario, choice, params)?;
    let out = lp::solve_mip(&built.model, tol)?;
    match out.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            let rows: Vec<GammaRow> = built.gamma_rows.iter().map(|(g, _)| g.clone()).collect();
            let mut names = unattainable_gamma_rows(scenario, &rows);
            if names.is_empty() {
                names = rows.iter().map(|g| gamma_row_name(scenario, g)).collect();
            }
            return Err(IprError::Infeasible { rows: names });
        }
        SolveStatus::Limit => return Err(IprError::Limit { gap: out.gap() }),
        SolveStatus::Unbounded => return Err(IprError::Solver(LpError::Numerical("IPR reported unbounded".into()))),
    }
    let assignment = decode_assignment(&built.x, &out.primal);
    let (q, z) = built.flow.extract(&out.primal);
    let flows = FlowSolution::from_values(scenario, q, z);
    let plan = RecommendationPlan::new(scenario, assignment, *params, flows.objective);
    Ok((plan, flows))
}

pub fn decode_assignment(x: &[Vec<VarId>], values: &[f64]) -> Vec<usize> {
    x.iter()
        .map(|vars| {
            vars.iter()
                .enumerate()
                .max_by(|a, b| {
                    values[a.1.index()]
                        .partial_cmp(&values[b.1.index()])
                        .unwrap()
                        .then(b.0.cmp(&a.0))
                })
                .map(|(k, _)| k)
                .unwrap_or(0)
        })
        .collect()
}
