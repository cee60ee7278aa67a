//! Benders decomposition of the recommendation MILP.
//!
//! The subproblem is the flow LP with the mean band, whose right-hand sides depend on the
//! recommendation x. Row duals follow the `∂objective/∂rhs` convention of [`crate::lp`], so a
//! `<=` row has a nonpositive dual and a `>=` row a nonnegative one. A dual solution therefore
//! yields the affine cut `Z >= Σ y_i b_i(x) + c0`, and a Farkas ray the cut `Σ y_i b_i(x) <= 0`.

use std::collections::BTreeMap;

use log::{debug, info};

use crate::choice::{check_assignment, flow_moments, ChoiceModel};
use crate::ipr::{
    add_assignment, add_gamma_rows, decode_assignment, gamma_row_name, gamma_rows, mean_terms, unattainable_gamma_rows,
    IprError, IprParams, RecommendationPlan, XTerms,
};
use crate::lp::{self, Basis, LinearModel, LpError, Relation, RowId, SolveStatus, Tolerances, VarId};
use crate::ofp::{background_constant, FlowIndex, FlowSolution};
use crate::scenario::{LegRun, Scenario, TimeIndex};

/// Row multipliers of the subproblem, grouped by row family.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DualPack {
    /// Capacity rows: (run, t', α).
    pub alpha: Vec<(usize, TimeIndex, f64)>,
    /// Origin conservation: (path, t, β).
    pub beta: Vec<(usize, TimeIndex, f64)>,
    /// Seeded onboard flows.
    pub gamma: Vec<(LegRun, f64)>,
    /// Demand split: (od, t, ι).
    pub iota: Vec<(usize, TimeIndex, f64)>,
    /// Lower mean band: (path, t, κ).
    pub kappa: Vec<(usize, TimeIndex, f64)>,
    /// Upper mean band: (path, t, ρ).
    pub rho: Vec<(usize, TimeIndex, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutKind {
    Optimality,
    Feasibility,
}

impl CutKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CutKind::Optimality => "optimality",
            CutKind::Feasibility => "feasibility",
        }
    }
}

/// Affine function of x: `constant + Σ coef · x[p][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub kind: CutKind,
    pub constant: f64,
    pub coefs: XTerms,
}

impl Cut {
    pub fn evaluate(&self, assignment: &[usize]) -> f64 {
        self.constant
            + self
                .coefs
                .iter()
                .filter(|&&(p, a, _)| assignment[p] == a)
                .map(|&(_, _, c)| c)
                .sum::<f64>()
    }
}

/// Cumulative background flow on `path` up to `t`.
fn cumulative_background(scenario: &Scenario, path: usize, t: TimeIndex) -> f64 {
    (scenario.grid.t_min..=t)
        .map(|s| scenario.background_flow(path, s))
        .sum()
}

/// The x-independent part of the dual objective: `ΣKα + Σ(cum f)β + Σẑγ + Σ(d − Σf)ι`.
fn fixed_part(scenario: &Scenario, pack: &DualPack) -> f64 {
    let mut total = 0.0;
    for &(run, _, a) in &pack.alpha {
        total += scenario.runs[run].capacity * a;
    }
    for &(r, t, b) in &pack.beta {
        total += cumulative_background(scenario, r, t) * b;
    }
    for &(lr, g) in &pack.gamma {
        total += scenario.seed(lr).unwrap_or(0.0) * g;
    }
    for &(od, t, i) in &pack.iota {
        let f: f64 = scenario.od_paths[od]
            .iter()
            .map(|&r| scenario.background_flow(r, t))
            .sum();
        total += (scenario.demand(od, t) - f) * i;
    }
    total
}

/// Closed-form dual objective at `assignment`. With `with_constant` the background waiting
/// constant of the travel-time objective is included (optimality side).
pub fn dual_value(
    scenario: &Scenario,
    choice: &ChoiceModel,
    epsilon: f64,
    pack: &DualPack,
    assignment: &[usize],
    with_constant: bool,
) -> f64 {
    let moments = flow_moments(scenario, choice, assignment).expect("valid assignment");
    let mut total = fixed_part(scenario, pack);
    for &(r, t, k) in &pack.kappa {
        total += k * (1.0 - epsilon) * moments.mean(r, t);
    }
    for &(r, t, k) in &pack.rho {
        total += k * (1.0 + epsilon) * moments.mean(r, t);
    }
    if with_constant {
        total += background_constant(scenario);
    }
    total
}

pub fn make_cut(scenario: &Scenario, choice: &ChoiceModel, epsilon: f64, pack: &DualPack, kind: CutKind) -> Cut {
    let mut constant = fixed_part(scenario, pack);
    if kind == CutKind::Optimality {
        constant += background_constant(scenario);
    }
    let terms = mean_terms(scenario, choice);
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let bands = pack
        .kappa
        .iter()
        .map(|&(r, t, k)| (r, t, k * (1.0 - epsilon)))
        .chain(pack.rho.iter().map(|&(r, t, k)| (r, t, k * (1.0 + epsilon))));
    for (r, t, w) in bands {
        if w == 0.0 {
            continue;
        }
        if let Some(list) = terms.get(&(r, t)) {
            for &(p, a, pi) in list {
                *acc.entry((p, a)).or_insert(0.0) += w * pi;
            }
        }
    }
    Cut {
        kind,
        constant,
        coefs: acc
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|((p, a), c)| (p, a, c))
            .collect(),
    }
}

#[derive(Debug, Clone)]
pub enum SubproblemResult {
    Optimal {
        value: f64,
        flows: FlowSolution,
        duals: DualPack,
    },
    Infeasible {
        ray: DualPack,
    },
}

/// Flow LP with the mean band; rebuilt right-hand sides per x, warm-started from the last basis.
pub struct Subproblem<'a> {
    scenario: &'a Scenario,
    epsilon: f64,
    model: LinearModel,
    flow: FlowIndex,
    bands: Vec<(usize, TimeIndex, RowId, RowId, XTerms)>,
    basis: Option<Basis>,
    tol: Tolerances,
}

impl<'a> Subproblem<'a> {
    pub fn new(scenario: &'a Scenario, choice: &ChoiceModel, epsilon: f64, tol: Tolerances) -> Self {
        let mut model = LinearModel::new();
        let flow = FlowIndex::build(scenario, &mut model);
        let mut bands = Vec::new();
        for ((r, t), terms) in mean_terms(scenario, choice) {
            let q = flow.q[&(r, t)];
            let id = &scenario.paths[r].id;
            let lo = model.add_row(format!("band_lo[{id},{t}]"), [(q, 1.0)], Relation::Ge, 0.0);
            let hi = model.add_row(format!("band_hi[{id},{t}]"), [(q, 1.0)], Relation::Le, 0.0);
            bands.push((r, t, lo, hi, terms));
        }
        Subproblem {
            scenario,
            epsilon,
            model,
            flow,
            bands,
            basis: None,
            tol,
        }
    }

    pub fn model(&self) -> &LinearModel {
        &self.model
    }

    fn set_assignment(&mut self, assignment: &[usize]) {
        for (_, _, lo, hi, terms) in &self.bands {
            let mu: f64 = terms
                .iter()
                .filter(|&&(p, a, _)| assignment[p] == a)
                .map(|&(_, _, pi)| pi)
                .sum();
            self.model.set_rhs(*lo, (1.0 - self.epsilon) * mu);
            self.model.set_rhs(*hi, (1.0 + self.epsilon) * mu);
        }
    }

    fn pack(&self, y: &[f64]) -> DualPack {
        let f = &self.flow;
        DualPack {
            alpha: f
                .capacity_rows
                .iter()
                .map(|&(run, tp, row)| (run, tp, y[row.index()]))
                .collect(),
            beta: f
                .origin_rows
                .iter()
                .map(|&(r, t, row)| (r, t, y[row.index()]))
                .collect(),
            gamma: f.seed_rows.iter().map(|&(lr, row)| (lr, y[row.index()])).collect(),
            iota: f
                .demand_rows
                .iter()
                .map(|&(od, t, row)| (od, t, y[row.index()]))
                .collect(),
            kappa: self
                .bands
                .iter()
                .map(|(r, t, lo, _, _)| (*r, *t, y[lo.index()]))
                .collect(),
            rho: self
                .bands
                .iter()
                .map(|(r, t, _, hi, _)| (*r, *t, y[hi.index()]))
                .collect(),
        }
    }

    pub fn solve(&mut self, assignment: &[usize]) -> Result<SubproblemResult, IprError> {
        check_assignment(self.scenario, assignment)?;
        self.set_assignment(assignment);
        let out = lp::solve_lp_warm(&self.model, &self.tol, self.basis.as_ref())?;
        match out.status {
            SolveStatus::Optimal => {
                self.basis = out.basis.clone();
                let y = out.duals.as_ref().expect("optimal LP carries duals");
                let (q, z) = self.flow.extract(&out.primal);
                Ok(SubproblemResult::Optimal {
                    value: out.objective,
                    flows: FlowSolution::from_values(self.scenario, q, z),
                    duals: self.pack(y),
                })
            }
            SolveStatus::Infeasible => {
                let ray = out.farkas_ray.as_ref().expect("infeasible LP carries a ray");
                Ok(SubproblemResult::Infeasible { ray: self.pack(ray) })
            }
            SolveStatus::Limit => Err(IprError::Limit { gap: None }),
            SolveStatus::Unbounded => Err(IprError::Solver(LpError::Numerical(
                "subproblem reported unbounded".into(),
            ))),
        }
    }
}

/// Convenience wrapper: a fresh subproblem solved at `assignment`.
pub fn solve_subproblem(
    scenario: &Scenario,
    choice: &ChoiceModel,
    assignment: &[usize],
    epsilon: f64,
) -> Result<SubproblemResult, IprError> {
    Subproblem::new(scenario, choice, epsilon, Tolerances::default()).solve(assignment)
}

/// Master MIP over x and the travel-time estimate Z.
pub struct Master {
    model: LinearModel,
    x: Vec<Vec<VarId>>,
    z: VarId,
    cuts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterSolution {
    pub assignment: Vec<usize>,
    pub z: f64,
    pub objective: f64,
    /// Proven lower bound on the master optimum.
    pub bound: f64,
}

impl Master {
    pub fn new(scenario: &Scenario, choice: &ChoiceModel, psi: f64, gamma: f64) -> Self {
        let mut model = LinearModel::new();
        let x = add_assignment(scenario, &mut model, psi);
        let z = model.add_var("Z", 0.0, f64::INFINITY, 1.0);
        let rows = gamma_rows(scenario, choice, gamma);
        add_gamma_rows(scenario, &mut model, &x, &rows);
        Master { model, x, z, cuts: 0 }
    }

    pub fn add_cut(&mut self, cut: &Cut) {
        self.cuts += 1;
        let name = format!("{}_cut[{}]", cut.kind.as_str(), self.cuts);
        let xs = cut.coefs.iter().map(|&(p, a, c)| (self.x[p][a], c));
        match cut.kind {
            // Z - Σ c x >= constant
            CutKind::Optimality => {
                let coefs: Vec<(VarId, f64)> = std::iter::once((self.z, 1.0)).chain(xs.map(|(v, c)| (v, -c))).collect();
                self.model.add_row(name, coefs, Relation::Ge, cut.constant);
            }
            // Σ c x <= -constant
            CutKind::Feasibility => {
                let coefs: Vec<(VarId, f64)> = xs.collect();
                self.model.add_row(name, coefs, Relation::Le, -cut.constant);
            }
        }
    }

    pub fn model(&self) -> &LinearModel {
        &self.model
    }

    /// `Ok(None)` when the master is infeasible.
    pub fn solve(&self, tol: &Tolerances) -> Result<Option<MasterSolution>, IprError> {
        let out = lp::solve_mip(&self.model, tol)?;
        match out.status {
            SolveStatus::Optimal => Ok(Some(MasterSolution {
                assignment: decode_assignment(&self.x, &out.primal),
                z: out.primal[self.z.index()],
                objective: out.objective,
                bound: out.best_bound.unwrap_or(out.objective),
            })),
            SolveStatus::Infeasible => Ok(None),
            SolveStatus::Limit => Err(IprError::Limit { gap: out.gap() }),
            SolveStatus::Unbounded => Err(IprError::Solver(LpError::Numerical("master reported unbounded".into()))),
        }
    }
}

/// Master optimum for a fixed cut pool.
pub fn solve_master(
    scenario: &Scenario,
    choice: &ChoiceModel,
    cuts: &[Cut],
    psi: f64,
    gamma: f64,
) -> Result<Option<MasterSolution>, IprError> {
    let mut m = Master::new(scenario, choice, psi, gamma);
    for c in cuts {
        m.add_cut(c);
    }
    m.solve(&Tolerances::default())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BendersOptions {
    pub gap: f64,
    pub max_iterations: usize,
}

impl Default for BendersOptions {
    fn default() -> Self {
        BendersOptions {
            gap: 1e-8,
            max_iterations: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub upper: f64,
    pub lower: f64,
    pub gap: f64,
    pub cut: CutKind,
    pub subproblem: &'static str,
}

#[derive(Debug, Clone, Default)]
pub struct BendersState {
    pub optimality_cuts: Vec<Cut>,
    pub feasibility_cuts: Vec<Cut>,
    pub trace: Vec<IterationRecord>,
    pub upper: f64,
    pub lower: f64,
    pub converged: bool,
}

impl BendersState {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn gap(&self) -> f64 {
        relative_gap(self.upper, self.lower)
    }
}

/// `(UB − LB) / |LB|`, with an absolute fallback when LB is zero.
pub fn relative_gap(upper: f64, lower: f64) -> f64 {
    if !upper.is_finite() || !lower.is_finite() {
        return f64::INFINITY;
    }
    let diff = (upper - lower).max(0.0);
    if lower.abs() > 0.0 {
        diff / lower.abs()
    } else {
        diff
    }
}

#[derive(Debug, Clone)]
pub struct BendersOutcome {
    pub plan: RecommendationPlan,
    pub flows: FlowSolution,
    pub state: BendersState,
}

pub fn run_benders(
    scenario: &Scenario,
    choice: &ChoiceModel,
    params: &IprParams,
    options: &BendersOptions,
) -> Result<BendersOutcome, IprError> {
    params.validate()?;
    choice.validate(scenario)?;
    if options.gap.is_nan() || options.gap <= 0.0 {
        return Err(IprError::InvalidParams("gap threshold must be positive".into()));
    }
    let tol = Tolerances::default();
    let mut master_tol = tol.clone();
    master_tol.mip_gap = (options.gap * 1e-2).min(tol.mip_gap);

    let mut master = Master::new(scenario, choice, params.psi, params.gamma);
    let mut sub = Subproblem::new(scenario, choice, params.epsilon, tol);
    let mut state = BendersState {
        upper: f64::INFINITY,
        lower: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut best: Option<(Vec<usize>, FlowSolution, f64)> = None;

    for k in 1..=options.max_iterations {
        let Some(m) = master.solve(&master_tol)? else {
            let rows = gamma_rows(scenario, choice, params.gamma);
            let mut names = unattainable_gamma_rows(scenario, &rows);
            if names.is_empty() {
                names = rows.iter().map(|g| gamma_row_name(scenario, g)).collect();
            }
            return Err(IprError::Infeasible { rows: names });
        };
        state.lower = state.lower.max(m.bound);
        let reward = params.psi * crate::ipr::total_utility(scenario, &m.assignment);
        let (kind, status) = match sub.solve(&m.assignment)? {
            SubproblemResult::Optimal { value, flows, duals } => {
                let ub = value - reward;
                if ub < state.upper {
                    state.upper = ub;
                    best = Some((m.assignment.clone(), flows, value));
                }
                let cut = make_cut(scenario, choice, params.epsilon, &duals, CutKind::Optimality);
                master.add_cut(&cut);
                state.optimality_cuts.push(cut);
                (CutKind::Optimality, "optimal")
            }
            SubproblemResult::Infeasible { ray } => {
                let cut = make_cut(scenario, choice, params.epsilon, &ray, CutKind::Feasibility);
                master.add_cut(&cut);
                state.feasibility_cuts.push(cut);
                (CutKind::Feasibility, "infeasible")
            }
        };
        let gap = relative_gap(state.upper, state.lower);
        debug!("benders k={k} UB={} LB={} gap={gap:e}", state.upper, state.lower);
        state.trace.push(IterationRecord {
            k,
            upper: state.upper,
            lower: state.lower,
            gap,
            cut: kind,
            subproblem: status,
        });
        if state.upper.is_finite() && state.upper - state.lower <= options.gap * state.lower.abs() + 1e-9 {
            state.converged = true;
            break;
        }
    }
    info!(
        "benders finished after {} iterations, converged={}, gap={:e}",
        state.iterations(),
        state.converged,
        state.gap()
    );
    let Some((assignment, flows, travel)) = best else {
        return Err(IprError::Limit { gap: None });
    };
    let plan = RecommendationPlan::new(scenario, assignment, *params, travel);
    Ok(BendersOutcome { plan, flows, state })
}
