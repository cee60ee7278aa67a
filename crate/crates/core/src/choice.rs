//! Passenger behavior: conditional choice probabilities, flow moments and compliance sampling.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scenario::{Scenario, TimeIndex};

#[derive(Debug, Error, PartialEq)]
pub enum ChoiceError {
    #[error("assignment covers {got} passengers, scenario has {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("passenger `{0}` is recommended a path outside its feasible set")]
    BadPath(String),
    #[error("passenger `{0}` has no status-quo path")]
    MissingStatusQuo(String),
    #[error("passenger `{passenger}`: {detail}")]
    BadRow { passenger: String, detail: String },
}

/// Softmax of `V + I[r']` for every recommended path `r'`, with max-shift normalization.
pub fn mnl_probabilities(utilities: &[f64], impacts: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = utilities.len();
    (0..n)
        .map(|rec| {
            let u: Vec<f64> = (0..n)
                .map(|r| utilities[r] + impacts.get(rec).and_then(|row| row.get(r)).copied().unwrap_or(0.0))
                .collect();
            let top = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = u.iter().map(|v| (v - top).exp()).collect();
            let z: f64 = e.iter().sum();
            e.into_iter().map(|v| v / z).collect()
        })
        .collect()
}

/// `rows[p][r'][r]`: probability that passenger `p` takes local path `r` when recommended `r'`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceModel {
    rows: Vec<Vec<Vec<f64>>>,
}

impl ChoiceModel {
    /// Uses supplied probability matrices where present, otherwise the logit model over V and I.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let rows = scenario
            .passengers
            .iter()
            .map(|p| match &p.choice_probabilities {
                Some(m) => m.clone(),
                None => mnl_probabilities(&p.utilities, &p.impacts),
            })
            .collect();
        ChoiceModel { rows }
    }

    /// Full compliance: everyone takes the recommended path.
    pub fn identity(scenario: &Scenario) -> Self {
        let rows = scenario
            .passengers
            .iter()
            .map(|p| {
                let n = p.paths.len();
                (0..n)
                    .map(|a| (0..n).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
                    .collect()
            })
            .collect();
        ChoiceModel { rows }
    }

    pub fn from_rows(scenario: &Scenario, rows: Vec<Vec<Vec<f64>>>) -> Result<Self, ChoiceError> {
        let m = ChoiceModel { rows };
        m.validate(scenario)?;
        Ok(m)
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<(), ChoiceError> {
        if self.rows.len() != scenario.passengers.len() {
            return Err(ChoiceError::WrongLength {
                expected: scenario.passengers.len(),
                got: self.rows.len(),
            });
        }
        for (p, m) in scenario.passengers.iter().zip(&self.rows) {
            let n = p.paths.len();
            let bad = |detail: &str| ChoiceError::BadRow {
                passenger: p.id.clone(),
                detail: detail.to_string(),
            };
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return Err(bad("matrix shape does not match the feasible path set"));
            }
            for row in m {
                if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(bad("entry outside [0, 1]"));
                }
                if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(bad("row does not sum to 1"));
                }
            }
        }
        Ok(())
    }

    pub fn rows(&self, passenger: usize) -> &[Vec<f64>] {
        &self.rows[passenger]
    }

    pub fn prob(&self, passenger: usize, recommended: usize, chosen: usize) -> f64 {
        self.rows[passenger][recommended][chosen]
    }
}

/// Checks that `assignment[p]` is a valid local path index for every passenger.
pub fn check_assignment(scenario: &Scenario, assignment: &[usize]) -> Result<(), ChoiceError> {
    if assignment.len() != scenario.passengers.len() {
        return Err(ChoiceError::WrongLength {
            expected: scenario.passengers.len(),
            got: assignment.len(),
        });
    }
    for (p, &a) in scenario.passengers.iter().zip(assignment) {
        if a >= p.paths.len() {
            return Err(ChoiceError::BadPath(p.id.clone()));
        }
    }
    Ok(())
}

/// Mean and variance of realized path flows, keyed by (global path, t). Only nonempty cohorts appear.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowMoments {
    pub mean: BTreeMap<(usize, TimeIndex), f64>,
    pub variance: BTreeMap<(usize, TimeIndex), f64>,
}

impl FlowMoments {
    pub fn mean(&self, path: usize, t: TimeIndex) -> f64 {
        self.mean.get(&(path, t)).copied().unwrap_or(0.0)
    }

    pub fn variance(&self, path: usize, t: TimeIndex) -> f64 {
        self.variance.get(&(path, t)).copied().unwrap_or(0.0)
    }
}

pub fn flow_moments(
    scenario: &Scenario,
    model: &ChoiceModel,
    assignment: &[usize],
) -> Result<FlowMoments, ChoiceError> {
    check_assignment(scenario, assignment)?;
    let mut out = FlowMoments::default();
    for ((od, t), members) in scenario.cohorts() {
        for &r in &scenario.od_paths[od] {
            out.mean.insert((r, t), 0.0);
            out.variance.insert((r, t), 0.0);
        }
        for &p in members {
            let pax = &scenario.passengers[p];
            for (k, &r) in pax.paths.iter().enumerate() {
                let pi = model.prob(p, assignment[p], k);
                *out.mean.get_mut(&(r, t)).unwrap() += pi;
                *out.variance.get_mut(&(r, t)).unwrap() += pi * (1.0 - pi);
            }
        }
    }
    Ok(out)
}

/// One sampled set of path choices.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    /// Local path index actually taken, per passenger.
    pub chosen: Vec<usize>,
    /// Realized recommended-passenger flow per (global path, t).
    pub flows: BTreeMap<(usize, TimeIndex), f64>,
}

/// Generator for passenger `ordinal` in replication `replication`.
pub fn passenger_rng(seed: u64, replication: u64, ordinal: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replication.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(ordinal as u64);
    rng
}

/// Inverse-CDF draw from a probability row.
pub fn draw_index(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &p) in row.iter().enumerate() {
        if p > 0.0 {
            last_positive = k;
        }
        acc += p;
        if u < acc {
            return k;
        }
    }
    last_positive
}

pub fn sample_realization(
    scenario: &Scenario,
    model: &ChoiceModel,
    assignment: &[usize],
    seed: u64,
    replication: u64,
) -> Result<Realization, ChoiceError> {
    check_assignment(scenario, assignment)?;
    let mut chosen = Vec::with_capacity(assignment.len());
    let mut flows = BTreeMap::new();
    for (p, pax) in scenario.passengers.iter().enumerate() {
        let mut rng = passenger_rng(seed, replication, p);
        let u: f64 = rng.gen();
        let k = draw_index(&model.rows(p)[assignment[p]], u);
        chosen.push(k);
        *flows.entry((pax.paths[k], pax.departure)).or_insert(0.0) += 1.0;
    }
    Ok(Realization { chosen, flows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preferences {
    pub utilities: Vec<f64>,
    pub impacts: Vec<Vec<f64>>,
}

/// Synthetic preferences: `V = 1 + U[0,1]` on the status-quo path and `U[0,1]` elsewhere;
/// recommending a path adds `U[0,5]` to its own utility only.
pub fn synthesize_case_preferences(scenario: &Scenario, seed: u64) -> Result<Vec<Preferences>, ChoiceError> {
    let mut out = Vec::with_capacity(scenario.passengers.len());
    for (p, pax) in scenario.passengers.iter().enumerate() {
        let sq = pax
            .status_quo
            .ok_or_else(|| ChoiceError::MissingStatusQuo(pax.id.clone()))?;
        let mut rng = passenger_rng(seed, u64::MAX, p);
        let n = pax.paths.len();
        let utilities: Vec<f64> = (0..n)
            .map(|r| {
                let v: f64 = rng.gen_range(0.0..1.0);
                if r == sq {
                    1.0 + v
                } else {
                    v
                }
            })
            .collect();
        let impacts = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| if a == b { rng.gen_range(0.0..=5.0) } else { 0.0 })
                    .collect()
            })
            .collect();
        out.push(Preferences { utilities, impacts });
    }
    Ok(out)
}

/// Replaces utilities and impacts in a scenario document with synthetic ones, dropping any
/// supplied probability matrices.
pub fn apply_preferences(doc: &mut crate::scenario::ScenarioDoc, scenario: &Scenario, prefs: &[Preferences]) {
    for pd in doc.passengers.iter_mut() {
        if let Some(i) = scenario.passenger_index(&pd.id) {
            pd.utilities = prefs[i].utilities.clone();
            pd.impacts = Some(prefs[i].impacts.clone());
            pd.choice_probabilities = None;
        }
    }
}
