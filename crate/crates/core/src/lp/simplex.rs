//! Dense revised simplex with an explicit basis inverse.
//!
//! Every row gets a slack column (`a·x + s = b`, slack box from the row relation), so a basis
//! always has an identity to fall back on. Cold starts run a two-phase primal simplex with
//! artificials that are pivoted out before phase 2; warm starts run a bounded dual simplex from a
//! dual-feasible basis and finish with primal phase 2.

use std::time::Instant;

use log::trace;

use super::{Basis, ColumnState, LinearModel, LpError, SolveOutcome, SolveStatus, Tolerances};

const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 40;
const DEGENERATE_SWITCH: usize = 60;

enum PhaseEnd {
    Optimal,
    Unbounded,
    Limit,
}

enum DualEnd {
    Optimal,
    Infeasible(Vec<f64>),
    Limit,
    Failed,
}

struct Engine<'a> {
    model: &'a LinearModel,
    tol: &'a Tolerances,
    m: usize,
    n: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    b: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<ColumnState>,
    x: Vec<f64>,
    binv: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
    degenerate_run: usize,
    started: Instant,
}

pub(crate) fn solve(model: &LinearModel, tol: &Tolerances, warm: Option<&Basis>) -> Result<SolveOutcome, LpError> {
    let mut engine = Engine::new(model, tol);
    if engine.m == 0 {
        return Ok(engine.solve_without_rows());
    }
    if let Some(basis) = warm {
        if let Ok(Some(outcome)) = engine.try_warm(basis) {
            return Ok(outcome);
        }
        engine = Engine::new(model, tol);
    }
    engine.cold()
}

impl<'a> Engine<'a> {
    fn new(model: &'a LinearModel, tol: &'a Tolerances) -> Self {
        let n = model.num_vars();
        let m = model.num_rows();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + m];
        let mut b = Vec::with_capacity(m);
        for (i, row) in model.rows().iter().enumerate() {
            for &(v, a) in &row.coefs {
                cols[v.0].push((i, a));
            }
            cols[n + i].push((i, 1.0));
            b.push(row.rhs);
        }
        let mut lo = Vec::with_capacity(n + m);
        let mut hi = Vec::with_capacity(n + m);
        let mut cost = Vec::with_capacity(n + m);
        for v in model.vars() {
            lo.push(v.lower);
            hi.push(v.upper);
            cost.push(v.cost);
        }
        for row in model.rows() {
            let (l, h) = row.relation.slack_bounds();
            lo.push(l);
            hi.push(h);
            cost.push(0.0);
        }
        Engine {
            model,
            tol,
            m,
            n,
            cols,
            lo,
            hi,
            cost,
            b,
            basis: Vec::new(),
            state: Vec::new(),
            x: vec![0.0; n + m],
            binv: Vec::new(),
            iterations: 0,
            since_refactor: 0,
            degenerate_run: 0,
            started: Instant::now(),
        }
    }

    fn ncols(&self) -> usize {
        self.cols.len()
    }

    fn out_of_budget(&self) -> bool {
        self.iterations >= self.tol.max_iterations
            || self.tol.time_limit.is_some_and(|lim| self.started.elapsed() > lim)
    }

    fn solve_without_rows(&self) -> SolveOutcome {
        let mut x = vec![0.0; self.n];
        for (j, xj) in x.iter_mut().enumerate() {
            let c = self.cost[j];
            let (l, h) = (self.lo[j], self.hi[j]);
            let v = if c > 0.0 {
                l
            } else if c < 0.0 {
                h
            } else if l.is_finite() {
                l
            } else if h.is_finite() {
                h
            } else {
                0.0
            };
            if !v.is_finite() {
                return self.outcome(SolveStatus::Unbounded, vec![0.0; self.n], None, None);
            }
            *xj = v;
        }
        let obj = self.model.objective_value(&x);
        let mut out = self.outcome(SolveStatus::Optimal, x, Some(Vec::new()), None);
        out.objective = obj;
        out
    }

    fn outcome(
        &self,
        status: SolveStatus,
        primal: Vec<f64>,
        duals: Option<Vec<f64>>,
        ray: Option<Vec<f64>>,
    ) -> SolveOutcome {
        let objective = match status {
            SolveStatus::Optimal | SolveStatus::Limit => self.model.objective_value(&primal),
            SolveStatus::Infeasible => f64::INFINITY,
            SolveStatus::Unbounded => f64::NEG_INFINITY,
        };
        SolveOutcome {
            status,
            primal,
            duals,
            farkas_ray: ray,
            objective,
            best_bound: None,
            iterations: self.iterations,
            nodes: 0,
            basis: None,
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            ColumnState::AtLower => self.lo[j],
            ColumnState::AtUpper => self.hi[j],
            ColumnState::Free => 0.0,
            ColumnState::Basic => self.x[j],
        }
    }

    fn resting_state(lo: f64, hi: f64) -> ColumnState {
        if lo.is_finite() {
            ColumnState::AtLower
        } else if hi.is_finite() {
            ColumnState::AtUpper
        } else {
            ColumnState::Free
        }
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination with partial pivoting.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            for &(r, v) in &self.cols[j] {
                a[r * m + k] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let mut piv = c;
            let mut best = a[c * m + c].abs();
            for r in c + 1..m {
                let v = a[r * m + c].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-11 {
                return Err(LpError::Numerical("singular basis".into()));
            }
            if piv != c {
                for k in 0..m {
                    a.swap(c * m + k, piv * m + k);
                    inv.swap(c * m + k, piv * m + k);
                }
            }
            let p = a[c * m + c];
            for k in 0..m {
                a[c * m + k] /= p;
                inv[c * m + k] /= p;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = a[r * m + c];
                if f != 0.0 {
                    for k in 0..m {
                        a[r * m + k] -= f * a[c * m + k];
                        inv[r * m + k] -= f * inv[c * m + k];
                    }
                }
            }
        }
        // rows of `inv` correspond to basis positions
        self.binv = inv;
        self.since_refactor = 0;
        Ok(())
    }

    fn recompute_x(&mut self) {
        let m = self.m;
        let mut rhs = self.b.clone();
        for j in 0..self.ncols() {
            if self.state[j] != ColumnState::Basic {
                let v = self.nonbasic_value(j);
                self.x[j] = v;
                if v != 0.0 {
                    for &(r, a) in &self.cols[j] {
                        rhs[r] -= a * v;
                    }
                }
            }
        }
        for k in 0..m {
            let row = &self.binv[k * m..(k + 1) * m];
            let v: f64 = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
            self.x[self.basis[k]] = v;
        }
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (k, &j) in self.basis.iter().enumerate() {
            let c = cost[j];
            if c != 0.0 {
                let row = &self.binv[k * m..(k + 1) * m];
                for (yi, a) in y.iter_mut().zip(row) {
                    *yi += c * a;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64], cost: &[f64]) -> f64 {
        cost[j] - self.cols[j].iter().map(|&(r, a)| y[r] * a).sum::<f64>()
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for &(r, a) in &self.cols[j] {
            for (k, al) in alpha.iter_mut().enumerate() {
                *al += self.binv[k * m + r] * a;
            }
        }
        alpha
    }

    fn row_alpha(&self, k: usize, j: usize) -> f64 {
        let m = self.m;
        self.cols[j].iter().map(|&(r, a)| self.binv[k * m + r] * a).sum()
    }

    fn pivot(&mut self, k: usize, entering: usize, alpha: &[f64]) -> Result<(), LpError> {
        let m = self.m;
        let p = alpha[k];
        for c in 0..m {
            self.binv[k * m + c] /= p;
        }
        for i in 0..m {
            if i == k || alpha[i] == 0.0 {
                continue;
            }
            let f = alpha[i];
            for c in 0..m {
                self.binv[i * m + c] -= f * self.binv[k * m + c];
            }
        }
        self.basis[k] = entering;
        self.state[entering] = ColumnState::Basic;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
            self.recompute_x();
        }
        Ok(())
    }

    /// Primal simplex on `cost`; requires basic values within bounds (up to tolerance).
    fn primal(&mut self, cost: &[f64]) -> Result<PhaseEnd, LpError> {
        self.degenerate_run = 0;
        loop {
            if self.out_of_budget() {
                return Ok(PhaseEnd::Limit);
            }
            let y = self.duals(cost);
            let bland = self.degenerate_run > DEGENERATE_SWITCH;
            let mut entering: Option<(usize, f64, f64)> = None; // (col, dir, |d|)
            for j in 0..self.ncols() {
                let st = self.state[j];
                if st == ColumnState::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let d = self.reduced_cost(j, &y, cost);
                let dir = match st {
                    ColumnState::AtLower if d < -self.tol.opt_tol => 1.0,
                    ColumnState::AtUpper if d > self.tol.opt_tol => -1.0,
                    ColumnState::Free if d.abs() > self.tol.opt_tol => -d.signum(),
                    _ => continue,
                };
                let score = d.abs();
                if bland {
                    entering = Some((j, dir, score));
                    break;
                }
                if entering.is_none_or(|(_, _, s)| score > s) {
                    entering = Some((j, dir, score));
                }
            }
            let Some((j, dir, _)) = entering else {
                return Ok(PhaseEnd::Optimal);
            };
            let alpha = self.ftran(j);
            let feas = self.tol.feas_tol;

            // Harris pass 1
            let mut theta_max = f64::INFINITY;
            for k in 0..self.m {
                let rate = -dir * alpha[k];
                if rate.abs() <= PIVOT_TOL {
                    continue;
                }
                let bk = self.basis[k];
                let lim = if rate < 0.0 {
                    if !self.lo[bk].is_finite() {
                        continue;
                    }
                    (self.x[bk] - self.lo[bk] + feas) / -rate
                } else {
                    if !self.hi[bk].is_finite() {
                        continue;
                    }
                    (self.hi[bk] - self.x[bk] + feas) / rate
                };
                theta_max = theta_max.min(lim);
            }
            let flip = self.hi[j] - self.lo[j];
            // pass 2
            let mut leave: Option<(usize, f64, f64)> = None; // (pos, theta, |rate|)
            for k in 0..self.m {
                let rate = -dir * alpha[k];
                if rate.abs() <= PIVOT_TOL {
                    continue;
                }
                let bk = self.basis[k];
                let dist = if rate < 0.0 {
                    if !self.lo[bk].is_finite() {
                        continue;
                    }
                    self.x[bk] - self.lo[bk]
                } else {
                    if !self.hi[bk].is_finite() {
                        continue;
                    }
                    self.hi[bk] - self.x[bk]
                };
                let theta = (dist / rate.abs()).max(0.0);
                if bland {
                    let better = match leave {
                        None => true,
                        Some((pk, pt, _)) => theta < pt - 1e-12 || (theta <= pt + 1e-12 && bk < self.basis[pk]),
                    };
                    if better {
                        leave = Some((k, theta, rate.abs()));
                    }
                } else if theta <= theta_max && leave.is_none_or(|(_, _, r)| rate.abs() > r) {
                    leave = Some((k, theta, rate.abs()));
                }
            }
            let step_to_leave = leave.map(|(_, t, _)| t);
            if flip.is_finite() && step_to_leave.is_none_or(|t| flip <= t) {
                // bound flip, basis unchanged
                for k in 0..self.m {
                    let bk = self.basis[k];
                    self.x[bk] += -dir * alpha[k] * flip;
                }
                self.state[j] = if dir > 0.0 {
                    ColumnState::AtUpper
                } else {
                    ColumnState::AtLower
                };
                self.x[j] = self.nonbasic_value(j);
                self.iterations += 1;
                self.degenerate_run = 0;
                continue;
            }
            let Some((k, theta, _)) = leave else {
                return Ok(PhaseEnd::Unbounded);
            };
            if theta <= 1e-12 {
                self.degenerate_run += 1;
            } else {
                self.degenerate_run = 0;
            }
            for kk in 0..self.m {
                let bk = self.basis[kk];
                self.x[bk] += -dir * alpha[kk] * theta;
            }
            self.x[j] += dir * theta;
            let leaving = self.basis[k];
            let rate = -dir * alpha[k];
            self.state[leaving] = if rate < 0.0 {
                ColumnState::AtLower
            } else {
                ColumnState::AtUpper
            };
            self.x[leaving] = self.nonbasic_value(leaving);
            self.iterations += 1;
            self.pivot(k, j, &alpha)?;
        }
    }

    /// Bounded dual simplex on the phase-2 costs from a dual-feasible basis.
    fn dual(&mut self) -> Result<DualEnd, LpError> {
        let cost = self.cost.clone();
        self.degenerate_run = 0;
        loop {
            if self.out_of_budget() {
                return Ok(DualEnd::Limit);
            }
            let feas = self.tol.feas_tol;
            let mut leave: Option<(usize, f64)> = None;
            for k in 0..self.m {
                let bk = self.basis[k];
                let v = if self.x[bk] < self.lo[bk] - feas {
                    self.lo[bk] - self.x[bk]
                } else if self.x[bk] > self.hi[bk] + feas {
                    self.x[bk] - self.hi[bk]
                } else {
                    continue;
                };
                if leave.is_none_or(|(_, best)| v > best) {
                    leave = Some((k, v));
                }
            }
            let Some((k, _)) = leave else {
                return Ok(DualEnd::Optimal);
            };
            let bk = self.basis[k];
            let below = self.x[bk] < self.lo[bk];
            let target = if below { self.lo[bk] } else { self.hi[bk] };
            let y = self.duals(&cost);

            let mut cands: Vec<(usize, f64, f64)> = Vec::new(); // (col, alpha_kj, d_j)
            for j in 0..self.ncols() {
                let st = self.state[j];
                if st == ColumnState::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let a = self.row_alpha(k, j);
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                // x_bk moves by −alpha_kj per unit increase of x_j
                let ok = match (st, below) {
                    (ColumnState::AtLower, true) => a < 0.0,
                    (ColumnState::AtUpper, true) => a > 0.0,
                    (ColumnState::AtLower, false) => a > 0.0,
                    (ColumnState::AtUpper, false) => a < 0.0,
                    (ColumnState::Free, _) => true,
                    (ColumnState::Basic, _) => false,
                };
                if ok {
                    let d = self.reduced_cost(j, &y, &cost);
                    cands.push((j, a, d));
                }
            }
            if cands.is_empty() {
                let m = self.m;
                let rho = self.binv[k * m..(k + 1) * m].to_vec();
                let ray: Vec<f64> = if below { rho.iter().map(|v| -v).collect() } else { rho };
                return Ok(DualEnd::Infeasible(ray));
            }
            let opt = self.tol.opt_tol;
            let bland = self.degenerate_run > DEGENERATE_SWITCH;
            let (j, _) = if bland {
                let mut best: Option<(usize, f64)> = None;
                for &(j, a, d) in &cands {
                    let r = d.abs() / a.abs();
                    if best.is_none_or(|(bj, br)| r < br - 1e-12 || (r <= br + 1e-12 && j < bj)) {
                        best = Some((j, r));
                    }
                }
                best.unwrap()
            } else {
                let theta_max = cands
                    .iter()
                    .map(|&(_, a, d)| (d.abs() + opt) / a.abs())
                    .fold(f64::INFINITY, f64::min);
                let mut best: Option<(usize, f64)> = None;
                for &(j, a, d) in &cands {
                    if d.abs() / a.abs() <= theta_max && best.is_none_or(|(_, ba)| a.abs() > ba) {
                        best = Some((j, a.abs()));
                    }
                }
                best.unwrap()
            };
            let step = cands
                .iter()
                .find(|c| c.0 == j)
                .map(|c| c.2.abs() / c.1.abs())
                .unwrap_or(0.0);
            if step <= 1e-12 {
                self.degenerate_run += 1;
            } else {
                self.degenerate_run = 0;
            }
            let alpha = self.ftran(j);
            if alpha[k].abs() <= PIVOT_TOL {
                return Ok(DualEnd::Failed);
            }
            // move x_j so that x_bk lands on target
            let delta = (self.x[bk] - target) / alpha[k];
            for kk in 0..self.m {
                let b = self.basis[kk];
                self.x[b] -= alpha[kk] * delta;
            }
            self.x[j] += delta;
            self.state[bk] = if below {
                ColumnState::AtLower
            } else {
                ColumnState::AtUpper
            };
            self.x[bk] = target;
            self.iterations += 1;
            self.pivot(k, j, &alpha)?;
        }
    }

    fn primal_feasible(&self) -> bool {
        let feas = self.tol.feas_tol;
        self.basis
            .iter()
            .all(|&b| self.x[b] >= self.lo[b] - feas && self.x[b] <= self.hi[b] + feas)
    }

    fn dual_feasible(&self) -> bool {
        let y = self.duals(&self.cost);
        let opt = self.tol.opt_tol;
        (0..self.ncols()).all(|j| {
            if self.lo[j] == self.hi[j] {
                return true;
            }
            let d = self.reduced_cost(j, &y, &self.cost);
            match self.state[j] {
                ColumnState::Basic => true,
                ColumnState::AtLower => d >= -opt,
                ColumnState::AtUpper => d <= opt,
                ColumnState::Free => d.abs() <= opt,
            }
        })
    }

    fn try_warm(&mut self, warm: &Basis) -> Result<Option<SolveOutcome>, LpError> {
        let total = self.n + self.m;
        if warm.state.len() != total || warm.basic.len() != self.m {
            return Ok(None);
        }
        self.basis = warm.basic.clone();
        self.state = warm.state.clone();
        // reconcile states with current bounds
        for j in 0..total {
            if self.state[j] == ColumnState::Basic {
                continue;
            }
            let st = match self.state[j] {
                ColumnState::AtLower if self.lo[j].is_finite() => ColumnState::AtLower,
                ColumnState::AtUpper if self.hi[j].is_finite() => ColumnState::AtUpper,
                _ => Self::resting_state(self.lo[j], self.hi[j]),
            };
            self.state[j] = st;
        }
        if self
            .basis
            .iter()
            .any(|&j| j >= total || self.state[j] != ColumnState::Basic)
        {
            return Ok(None);
        }
        if self.refactor().is_err() {
            return Ok(None);
        }
        self.recompute_x();
        if !self.dual_feasible() {
            if self.primal_feasible() {
                return self.finish_phase2().map(Some);
            }
            return Ok(None);
        }
        match self.dual()? {
            DualEnd::Optimal => self.finish_phase2().map(Some),
            DualEnd::Infeasible(ray) => {
                let ray = self.orient_ray(ray);
                match ray {
                    Some(r) => Ok(Some(self.outcome(
                        SolveStatus::Infeasible,
                        vec![0.0; self.n],
                        None,
                        Some(r),
                    ))),
                    None => Ok(None),
                }
            }
            DualEnd::Limit => {
                let x = self.x[..self.n].to_vec();
                Ok(Some(self.outcome(SolveStatus::Limit, x, None, None)))
            }
            DualEnd::Failed => Ok(None),
        }
    }

    fn orient_ray(&self, ray: Vec<f64>) -> Option<Vec<f64>> {
        let margin = self.model.farkas_margin(&ray);
        if margin > self.tol.feas_tol {
            return Some(ray);
        }
        let flipped: Vec<f64> = ray.iter().map(|v| -v).collect();
        if self.model.farkas_margin(&flipped) > self.tol.feas_tol {
            return Some(flipped);
        }
        None
    }

    fn cold(mut self) -> Result<SolveOutcome, LpError> {
        let n = self.n;
        let m = self.m;
        self.state = (0..n + m)
            .map(|j| Self::resting_state(self.lo[j], self.hi[j]))
            .collect();
        for j in 0..n + m {
            self.x[j] = self.nonbasic_value(j);
        }
        let mut resid = self.b.clone();
        for j in 0..n {
            let v = self.x[j];
            if v != 0.0 {
                for &(r, a) in &self.cols[j] {
                    resid[r] -= a * v;
                }
            }
        }
        self.basis = vec![0; m];
        let mut phase1_cost = vec![0.0; n + m];
        let mut inv_diag = vec![1.0; m];
        for i in 0..m {
            let s = n + i;
            let r = resid[i];
            if r >= self.lo[s] && r <= self.hi[s] {
                self.basis[i] = s;
                self.state[s] = ColumnState::Basic;
                self.x[s] = r;
            } else {
                let sv = r.clamp(self.lo[s], self.hi[s]);
                self.state[s] = if sv == self.lo[s] {
                    ColumnState::AtLower
                } else {
                    ColumnState::AtUpper
                };
                self.x[s] = sv;
                let gap = r - sv;
                let sign = if gap >= 0.0 { 1.0 } else { -1.0 };
                let a = self.cols.len();
                self.cols.push(vec![(i, sign)]);
                self.lo.push(0.0);
                self.hi.push(f64::INFINITY);
                self.cost.push(0.0);
                self.state.push(ColumnState::Basic);
                self.x.push(gap.abs());
                phase1_cost.push(1.0);
                self.basis[i] = a;
                inv_diag[i] = sign;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = inv_diag[i];
        }
        self.binv = inv;
        self.since_refactor = 0;

        if self.cols.len() > n + m {
            match self.primal(&phase1_cost)? {
                PhaseEnd::Limit => {
                    let x = self.x[..n].to_vec();
                    return Ok(self.outcome(SolveStatus::Limit, x, None, None));
                }
                PhaseEnd::Unbounded => return Err(LpError::Numerical("phase 1 reported unbounded".into())),
                PhaseEnd::Optimal => {}
            }
            let infeas: f64 = (n + m..self.cols.len()).map(|j| self.x[j]).sum();
            let scale = 1.0 + self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if infeas > self.tol.feas_tol * scale {
                let y = self.duals(&phase1_cost);
                let ray = self.orient_ray(y);
                trace!("phase 1 infeasibility {infeas}");
                return Ok(self.outcome(SolveStatus::Infeasible, vec![0.0; n], None, ray));
            }
            self.drop_artificials()?;
        }
        self.finish_phase2()
    }

    /// Pivots zero-level artificials out of the basis and removes their columns.
    fn drop_artificials(&mut self) -> Result<(), LpError> {
        let first_art = self.n + self.m;
        for k in 0..self.m {
            if self.basis[k] < first_art {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..first_art {
                if self.state[j] == ColumnState::Basic {
                    continue;
                }
                let a = self.row_alpha(k, j).abs();
                if a > 1e-9 && best.is_none_or(|(_, ba)| a > ba) {
                    best = Some((j, a));
                }
            }
            let Some((j, _)) = best else {
                return Err(LpError::Numerical("cannot remove artificial from basis".into()));
            };
            let alpha = self.ftran(j);
            let art = self.basis[k];
            self.state[art] = ColumnState::AtLower;
            self.pivot(k, j, &alpha)?;
        }
        self.cols.truncate(first_art);
        self.lo.truncate(first_art);
        self.hi.truncate(first_art);
        self.cost.truncate(first_art);
        self.state.truncate(first_art);
        self.x.truncate(first_art);
        self.refactor()?;
        self.recompute_x();
        Ok(())
    }

    fn finish_phase2(&mut self) -> Result<SolveOutcome, LpError> {
        let cost = self.cost.clone();
        let end = self.primal(&cost)?;
        let x = self.x[..self.n].to_vec();
        match end {
            PhaseEnd::Limit => Ok(self.outcome(SolveStatus::Limit, x, None, None)),
            PhaseEnd::Unbounded => Ok(self.outcome(SolveStatus::Unbounded, x, None, None)),
            PhaseEnd::Optimal => {
                // clean refactorisation before reporting
                self.refactor()?;
                self.recompute_x();
                let x = self.x[..self.n].to_vec();
                let y = self.duals(&cost);
                let mut out = self.outcome(SolveStatus::Optimal, x, Some(y), None);
                out.basis = Some(Basis {
                    basic: self.basis.clone(),
                    state: self.state.clone(),
                });
                Ok(out)
            }
        }
    }
}
