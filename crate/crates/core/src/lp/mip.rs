//! LP-based branch and bound.
//!
//! Depth-first until the first incumbent, best-bound afterwards. Children inherit the parent's
//! optimal basis, so each node is a short dual simplex run.

use std::time::Instant;

use log::debug;

use super::{Basis, LinearModel, LpBackend, LpError, SolveOutcome, SolveStatus, Tolerances};

struct Node {
    id: usize,
    depth: usize,
    bound: f64,
    /// (lower, upper) for each integer variable, aligned with `int_vars`.
    bounds: Vec<(f64, f64)>,
    basis: Option<Basis>,
}

pub fn branch_and_bound<B: LpBackend + ?Sized>(
    backend: &B,
    model: &LinearModel,
    tol: &Tolerances,
) -> Result<SolveOutcome, LpError> {
    model.validate()?;
    let started = Instant::now();
    let int_vars: Vec<usize> = model
        .vars()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.integer)
        .map(|(j, _)| j)
        .collect();
    let mut work = model.clone();
    let root_bounds: Vec<(f64, f64)> = int_vars
        .iter()
        .map(|&j| (model.vars()[j].lower.ceil(), model.vars()[j].upper.floor()))
        .collect();
    if root_bounds.iter().any(|&(l, h)| l > h) {
        return Ok(infeasible(0, 0));
    }

    let mut open = vec![Node {
        id: 0,
        depth: 0,
        bound: f64::NEG_INFINITY,
        bounds: root_bounds,
        basis: None,
    }];
    let mut next_id = 1;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut nodes = 0usize;
    let mut iterations = 0usize;
    let mut hit_limit = false;
    let mut lp_tol = tol.clone();
    lp_tol.time_limit = None;

    let prune_level = |inc: &Option<(f64, Vec<f64>)>| -> f64 {
        match inc {
            Some((obj, _)) => obj - tol.mip_gap * obj.abs().max(1.0),
            None => f64::INFINITY,
        }
    };

    while !open.is_empty() {
        if nodes >= tol.max_nodes || tol.time_limit.is_some_and(|lim| started.elapsed() > lim) {
            hit_limit = true;
            break;
        }
        let pick = select(&open, incumbent.is_some());
        let node = open.swap_remove(pick);
        if node.bound >= prune_level(&incumbent) {
            continue;
        }
        nodes += 1;
        for (&j, &(l, h)) in int_vars.iter().zip(&node.bounds) {
            work.set_bounds(super::VarId(j), l, h);
        }
        let out = backend.solve_lp(&work, &lp_tol, node.basis.as_ref())?;
        iterations += out.iterations;
        match out.status {
            SolveStatus::Infeasible => continue,
            SolveStatus::Unbounded => {
                if incumbent.is_none() && node.depth == 0 {
                    let mut o = out;
                    o.nodes = nodes;
                    return Ok(o);
                }
                return Err(LpError::Numerical("unbounded relaxation below the root".into()));
            }
            SolveStatus::Limit => {
                hit_limit = true;
                continue;
            }
            SolveStatus::Optimal => {}
        }
        if out.objective >= prune_level(&incumbent) {
            continue;
        }
        // most fractional integer variable
        let mut branch: Option<(usize, f64)> = None;
        for (pos, &j) in int_vars.iter().enumerate() {
            let v = out.primal[j];
            let frac = (v - v.floor()).min(v.ceil() - v);
            if frac > tol.int_tol && branch.is_none_or(|(_, f)| frac > f + 1e-12) {
                branch = Some((pos, frac));
            }
        }
        match branch {
            None => {
                let mut x = out.primal.clone();
                for &j in &int_vars {
                    x[j] = x[j].round();
                }
                debug!("incumbent {} at node {}", out.objective, node.id);
                incumbent = Some((out.objective, x));
            }
            Some((pos, _)) => {
                let v = out.primal[int_vars[pos]];
                let mut down = node.bounds.clone();
                down[pos].1 = v.floor();
                let mut up = node.bounds;
                up[pos].0 = v.ceil();
                // the up child is pushed last so depth-first picks it first
                for bounds in [down, up] {
                    open.push(Node {
                        id: next_id,
                        depth: node.depth + 1,
                        bound: out.objective,
                        bounds,
                        basis: out.basis.clone(),
                    });
                    next_id += 1;
                }
            }
        }
    }

    let open_bound = open.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    match incumbent {
        Some((obj, x)) => {
            let best_bound = if hit_limit { open_bound.min(obj) } else { obj };
            Ok(SolveOutcome {
                status: if hit_limit && best_bound < prune_level(&Some((obj, Vec::new()))) {
                    SolveStatus::Limit
                } else {
                    SolveStatus::Optimal
                },
                primal: x,
                duals: None,
                farkas_ray: None,
                objective: obj,
                best_bound: Some(best_bound),
                iterations,
                nodes,
                basis: None,
            })
        }
        None if hit_limit => Ok(SolveOutcome {
            status: SolveStatus::Limit,
            primal: vec![0.0; model.num_vars()],
            duals: None,
            farkas_ray: None,
            objective: f64::INFINITY,
            best_bound: Some(open_bound),
            iterations,
            nodes,
            basis: None,
        }),
        None => Ok(infeasible(iterations, nodes)),
    }
}

fn infeasible(iterations: usize, nodes: usize) -> SolveOutcome {
    SolveOutcome {
        status: SolveStatus::Infeasible,
        primal: Vec::new(),
        duals: None,
        farkas_ray: None,
        objective: f64::INFINITY,
        best_bound: None,
        iterations,
        nodes,
        basis: None,
    }
}

fn select(open: &[Node], have_incumbent: bool) -> usize {
    let mut best = 0;
    for (i, n) in open.iter().enumerate().skip(1) {
        let b = &open[best];
        let better = if have_incumbent {
            n.bound < b.bound || (n.bound == b.bound && (n.depth > b.depth || (n.depth == b.depth && n.id > b.id)))
        } else {
            n.depth > b.depth || (n.depth == b.depth && n.id > b.id)
        };
        if better {
            best = i;
        }
    }
    best
}
