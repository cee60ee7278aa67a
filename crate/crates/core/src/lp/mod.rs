//! Linear / mixed-integer model container and the solver contract used by the model builders.
//!
//! Sign convention for row duals: `dual[i] = d(objective) / d(rhs[i])` for a minimisation. A `<=` row
//! therefore has a dual `<= 0`, a `>=` row a dual `>= 0`, and an equality row a free dual. The same
//! convention applies to Farkas rays: a ray `y` certifies infeasibility when
//! `y·b > max { y·(A x + s) : x within its bounds, s within the slack box of each row }`, which for
//! nonnegative columns reduces to `Aᵀy <= 0, y·b > 0`.

mod format;
mod mip;
mod simplex;

use std::collections::HashSet;
use std::time::Duration;

use thiserror::Error;

pub use mip::branch_and_bound;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub(crate) usize);

impl RowId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    /// Bounds of the slack `s` in `a·x + s = b`.
    pub(crate) fn slack_bounds(self) -> (f64, f64) {
        match self {
            Relation::Le => (0.0, f64::INFINITY),
            Relation::Ge => (f64::NEG_INFINITY, 0.0),
            Relation::Eq => (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub name: String,
    pub coefs: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coefs.iter().map(|&(v, a)| a * x[v.0]).sum()
    }

    /// Amount by which `x` violates this row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.relation {
            Relation::Le => (act - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - act).max(0.0),
            Relation::Eq => (act - self.rhs).abs(),
        }
    }
}

/// A minimisation model `min cᵀx + c0` subject to linear rows and variable bounds.
#[derive(Debug, Clone, Default)]
pub struct LinearModel {
    vars: Vec<Variable>,
    rows: Vec<Row>,
    objective_constant: f64,
}

impl LinearModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            integer: false,
            cost,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_binary(&mut self, name: impl Into<String>, cost: f64) -> VarId {
        let id = self.add_var(name, 0.0, 1.0, cost);
        self.vars[id.0].integer = true;
        id
    }

    pub fn add_integer(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> VarId {
        let id = self.add_var(name, lower, upper, cost);
        self.vars[id.0].integer = true;
        id
    }

    /// Adds a row; duplicate variable entries are summed and exact zeros dropped.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        coefs: impl IntoIterator<Item = (VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> RowId {
        let mut coefs: Vec<(VarId, f64)> = coefs.into_iter().collect();
        coefs.sort_by_key(|&(v, _)| v);
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(coefs.len());
        for (v, a) in coefs {
            match merged.last_mut() {
                Some((last, acc)) if *last == v => *acc += a,
                _ => merged.push((v, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.rows.push(Row {
            name: name.into(),
            coefs: merged,
            relation,
            rhs,
        });
        RowId(self.rows.len() - 1)
    }

    pub fn set_rhs(&mut self, row: RowId, rhs: f64) {
        self.rows[row.0].rhs = rhs;
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        self.vars[var.0].lower = lower;
        self.vars[var.0].upper = upper;
    }

    pub fn set_cost(&mut self, var: VarId, cost: f64) {
        self.vars[var.0].cost = cost;
    }

    pub fn add_objective_constant(&mut self, c: f64) {
        self.objective_constant += c;
    }

    pub fn objective_constant(&self) -> f64 {
        self.objective_constant
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn row(&self, id: RowId) -> &Row {
        &self.rows[id.0]
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn is_mip(&self) -> bool {
        self.vars.iter().any(|v| v.integer)
    }

    pub fn validate(&self) -> Result<(), LpError> {
        for v in &self.vars {
            if v.lower.is_nan() || v.upper.is_nan() || !v.cost.is_finite() {
                return Err(LpError::Malformed(format!(
                    "variable {} has NaN bound or non-finite cost",
                    v.name
                )));
            }
            if v.lower > v.upper {
                return Err(LpError::Malformed(format!(
                    "variable {} has lower bound {} above upper bound {}",
                    v.name, v.lower, v.upper
                )));
            }
            if v.integer && !(v.lower.is_finite() && v.upper.is_finite()) {
                return Err(LpError::Malformed(format!(
                    "integer variable {} must be bounded",
                    v.name
                )));
            }
        }
        let mut names = HashSet::with_capacity(self.rows.len());
        for r in &self.rows {
            if !names.insert(r.name.as_str()) {
                return Err(LpError::Malformed(format!("duplicate row id {}", r.name)));
            }
            if !r.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {} has non-finite rhs", r.name)));
            }
            for &(v, a) in &r.coefs {
                if v.0 >= self.vars.len() {
                    return Err(LpError::Malformed(format!(
                        "row {} references unknown variable",
                        r.name
                    )));
                }
                if !a.is_finite() {
                    return Err(LpError::Malformed(format!("row {} has non-finite coefficient", r.name)));
                }
            }
        }
        if !self.objective_constant.is_finite() {
            return Err(LpError::Malformed("non-finite objective constant".into()));
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_constant + self.vars.iter().zip(x).map(|(v, xi)| v.cost * xi).sum::<f64>()
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let bounds = self
            .vars
            .iter()
            .zip(x)
            .map(|(v, &xi)| (v.lower - xi).max(xi - v.upper).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Lagrangian dual bound for row multipliers `y`:
    /// `yᵀb + c0 + Σ_j min over the bounds of (c_j − yᵀA_j) x_j`. Equals the primal optimum at an
    /// optimal dual solution; `-inf` when `y` is not dual feasible.
    pub fn dual_objective(&self, y: &[f64]) -> f64 {
        let reduced = self.reduced_costs(y);
        let mut total = self.objective_constant;
        for (r, &yi) in self.rows.iter().zip(y) {
            total += yi * r.rhs;
            let (slo, shi) = r.relation.slack_bounds();
            // slack cost is 0, reduced cost −y_i
            total += box_min(-yi, slo, shi);
        }
        for (v, &d) in self.vars.iter().zip(&reduced) {
            total += box_min(d, v.lower, v.upper);
        }
        total
    }

    /// `c_j − yᵀA_j` for every variable.
    pub fn reduced_costs(&self, y: &[f64]) -> Vec<f64> {
        let mut d: Vec<f64> = self.vars.iter().map(|v| v.cost).collect();
        for (r, &yi) in self.rows.iter().zip(y) {
            if yi != 0.0 {
                for &(v, a) in &r.coefs {
                    d[v.0] -= yi * a;
                }
            }
        }
        d
    }

    /// `y·b − max { y·(Ax + s) }` over variable bounds and slack boxes. A positive value
    /// certifies that the rows are infeasible.
    pub fn farkas_margin(&self, y: &[f64]) -> f64 {
        let mut g = vec![0.0; self.vars.len()];
        let mut yb = 0.0;
        let mut max_lhs = 0.0;
        for (r, &yi) in self.rows.iter().zip(y) {
            yb += yi * r.rhs;
            let (slo, shi) = r.relation.slack_bounds();
            max_lhs -= box_min(-yi, slo, shi);
            for &(v, a) in &r.coefs {
                g[v.0] += yi * a;
            }
        }
        for (v, &gj) in self.vars.iter().zip(&g) {
            max_lhs -= box_min(-gj, v.lower, v.upper);
        }
        yb - max_lhs
    }

    pub fn write_lp<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        format::write_lp(self, w)
    }
}

/// `min { c·x : lo <= x <= hi }`, treating tiny coefficients as zero.
fn box_min(c: f64, lo: f64, hi: f64) -> f64 {
    const ZERO: f64 = 1e-9;
    if c > ZERO {
        if lo.is_finite() {
            c * lo
        } else {
            f64::NEG_INFINITY
        }
    } else if c < -ZERO {
        if hi.is_finite() {
            c * hi
        } else {
            f64::NEG_INFINITY
        }
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct Tolerances {
    pub feas_tol: f64,
    pub opt_tol: f64,
    pub int_tol: f64,
    pub mip_gap: f64,
    pub max_iterations: usize,
    pub max_nodes: usize,
    pub time_limit: Option<Duration>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            opt_tol: 1e-7,
            int_tol: 1e-6,
            mip_gap: 1e-8,
            max_iterations: 200_000,
            max_nodes: 200_000,
            time_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Limit,
}

/// Status of a column (structural variable or row slack) in a simplex basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnState {
    Basic,
    AtLower,
    AtUpper,
    Free,
}

/// A simplex basis over `num_vars + num_rows` columns (structural columns first, then one slack
/// per row). Usable as a warm start for any model with the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    pub basic: Vec<usize>,
    pub state: Vec<ColumnState>,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    /// Row duals (LP only, when optimal).
    pub duals: Option<Vec<f64>>,
    /// Infeasibility certificate (LP only, when infeasible).
    pub farkas_ray: Option<Vec<f64>>,
    pub objective: f64,
    /// Best proven lower bound (MIP).
    pub best_bound: Option<f64>,
    pub iterations: usize,
    pub nodes: usize,
    pub basis: Option<Basis>,
}

impl SolveOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.primal[v.0]
    }

    pub fn dual(&self, r: RowId) -> Option<f64> {
        self.duals.as_ref().map(|d| d[r.0])
    }

    /// Relative MIP gap between incumbent and best bound.
    pub fn gap(&self) -> Option<f64> {
        self.best_bound
            .map(|b| (self.objective - b).max(0.0) / self.objective.abs().max(1.0))
    }
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Solving capability the model builders depend on.
pub trait LpBackend: Sync {
    fn solve_lp(
        &self,
        model: &LinearModel,
        tol: &Tolerances,
        warm_start: Option<&Basis>,
    ) -> Result<SolveOutcome, LpError>;

    fn solve_mip(&self, model: &LinearModel, tol: &Tolerances) -> Result<SolveOutcome, LpError>
    where
        Self: Sized,
    {
        branch_and_bound(self, model, tol)
    }
}

/// Built-in dense revised simplex (two-phase primal for cold starts, dual simplex for warm starts).
#[derive(Debug, Clone, Copy, Default)]
pub struct SimplexBackend;

impl LpBackend for SimplexBackend {
    fn solve_lp(
        &self,
        model: &LinearModel,
        tol: &Tolerances,
        warm_start: Option<&Basis>,
    ) -> Result<SolveOutcome, LpError> {
        model.validate()?;
        simplex::solve(model, tol, warm_start)
    }
}

/// Solves the continuous relaxation of `model` with the built-in backend.
pub fn solve_lp(model: &LinearModel, tol: &Tolerances) -> Result<SolveOutcome, LpError> {
    SimplexBackend.solve_lp(model, tol, None)
}

pub fn solve_lp_warm(model: &LinearModel, tol: &Tolerances, warm: Option<&Basis>) -> Result<SolveOutcome, LpError> {
    SimplexBackend.solve_lp(model, tol, warm)
}

pub fn solve_mip(model: &LinearModel, tol: &Tolerances) -> Result<SolveOutcome, LpError> {
    SimplexBackend.solve_mip(model, tol)
}
