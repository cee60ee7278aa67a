//! CSV artifacts. Every file opens with a `#` line echoing the tool version, seed and
//! parameters, followed by a header row.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path as FsPath;

use thiserror::Error;

use crate::benders::IterationRecord;
use crate::evaluate::{EvaluationReport, SweepRow};
use crate::ipr::is_preferred;
use crate::ofp::{CohortStatus, FlowSolution};
use crate::scenario::Scenario;

pub const TOOL: &str = "ipr";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("plan file: {0}")]
    Plan(String),
}

/// Provenance line written at the top of every artifact.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Header {
    pub seed: Option<u64>,
    pub params: Vec<(String, String)>,
}

impl Header {
    pub fn new(seed: Option<u64>) -> Self {
        Header {
            seed,
            params: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn line(&self) -> String {
        let mut s = format!("# tool={TOOL} version={VERSION}");
        match self.seed {
            Some(seed) => s.push_str(&format!(" seed={seed}")),
            None => s.push_str(" seed=none"),
        }
        for (k, v) in &self.params {
            s.push_str(&format!(" {k}={v}"));
        }
        s
    }
}

/// Fixed-precision rendering so artifacts are stable across runs.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        let s = format!("{v:.9}");
        if s == "-0.000000000" {
            "0.000000000".to_string()
        } else {
            s
        }
    } else {
        v.to_string()
    }
}

fn writer(path: &FsPath, header: &Header) -> Result<csv::Writer<BufWriter<File>>, ReportError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", header.line())?;
    Ok(csv::Writer::from_writer(out))
}

fn status_label(s: CohortStatus) -> &'static str {
    match s {
        CohortStatus::Served => "served",
        CohortStatus::Empty => "empty",
        CohortStatus::Unfinished => "unfinished",
    }
}

pub fn write_flows(path: &FsPath, header: &Header, scenario: &Scenario, sol: &FlowSolution) -> Result<(), ReportError> {
    let mut w = writer(path, header)?;
    w.write_record([
        "origin",
        "destination",
        "path",
        "t",
        "q",
        "f",
        "travel_time_min",
        "status",
    ])?;
    for (&(r, t), tr) in &sol.travel {
        let p = &scenario.paths[r];
        let (u, v) = scenario.od_label(p.od);
        w.write_record([
            u,
            v,
            &p.id,
            &t.to_string(),
            &num(sol.q(r, t)),
            &num(scenario.background_flow(r, t)),
            &num(tr.minutes),
            status_label(tr.status),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_loads(path: &FsPath, header: &Header, scenario: &Scenario, sol: &FlowSolution) -> Result<(), ReportError> {
    let mut w = writer(path, header)?;
    w.write_record(["line", "departure", "t_prime", "load", "capacity"])?;
    for row in sol.loads(scenario) {
        let run = &scenario.runs[row.run];
        w.write_record([
            &scenario.lines[run.line].id,
            &run.departure.to_string(),
            &row.t_prime.to_string(),
            &num(row.load),
            &num(row.capacity),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_waits(path: &FsPath, header: &Header, scenario: &Scenario, sol: &FlowSolution) -> Result<(), ReportError> {
    let mut w = writer(path, header)?;
    w.write_record(["station", "t", "wait_min"])?;
    for (&(s, t), &v) in &sol.station_waits {
        w.write_record([&scenario.stations[s], &t.to_string(), &num(v)])?;
    }
    w.flush()?;
    Ok(())
}

/// One line per passenger with the recommended path, its prior utility and whether it is the
/// passenger's preferred path.
pub fn write_plan(
    path: &FsPath,
    header: &Header,
    scenario: &Scenario,
    assignment: &[usize],
) -> Result<(), ReportError> {
    let mut w = writer(path, header)?;
    w.write_record(["passenger", "path", "utility", "preferred"])?;
    for (p, &a) in scenario.passengers.iter().zip(assignment) {
        w.write_record([
            p.id.as_str(),
            scenario.paths[p.paths[a]].id.as_str(),
            &num(p.utilities[a]),
            if is_preferred(&p.utilities, a) { "1" } else { "0" },
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a plan file back into local path indices. Passengers missing from the file are an error.
pub fn read_plan(path: &FsPath, scenario: &Scenario) -> Result<Vec<usize>, ReportError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ReportError::Plan(format!("missing column `{name}`")))
    };
    let (pc, rc) = (col("passenger")?, col("path")?);
    let mut out: Vec<Option<usize>> = vec![None; scenario.passengers.len()];
    for rec in rdr.records() {
        let rec = rec?;
        let pid = &rec[pc];
        let rid = &rec[rc];
        let p = scenario
            .passenger_index(pid)
            .ok_or_else(|| ReportError::Plan(format!("unknown passenger `{pid}`")))?;
        let k = scenario
            .path_index(rid)
            .and_then(|r| scenario.passengers[p].local_path(r))
            .ok_or_else(|| ReportError::Plan(format!("path `{rid}` is not feasible for `{pid}`")))?;
        if out[p].replace(k).is_some() {
            return Err(ReportError::Plan(format!("passenger `{pid}` listed twice")));
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(p, k)| k.ok_or_else(|| ReportError::Plan(format!("no entry for `{}`", scenario.passengers[p].id))))
        .collect()
}

pub fn write_trace(path: &FsPath, header: &Header, trace: &[IterationRecord]) -> Result<(), ReportError> {
    let mut w = writer(path, header)?;
    w.write_record(["k", "upper", "lower", "gap", "cut", "subproblem"])?;
    for r in trace {
        w.write_record([
            &r.k.to_string(),
            &num(r.upper),
            &num(r.lower),
            &num(r.gap),
            r.cut.as_str(),
            r.subproblem,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_evaluation(path: &FsPath, header: &Header, report: &EvaluationReport) -> Result<(), ReportError> {
    let mut w = writer(path, header)?;
    w.write_record([
        "replication",
        "stt_min",
        "avg_tt_all_min",
        "avg_tt_recommended_min",
        "status",
    ])?;
    for r in &report.replications {
        match r.stats {
            Some(s) => w.write_record([
                &r.index.to_string(),
                &num(s.stt),
                &num(s.avg_all),
                &num(s.avg_recommended),
                "ok",
            ])?,
            None => w.write_record([&r.index.to_string(), "", "", "", "infeasible"])?,
        }
    }
    w.flush()?;
    Ok(())
}

/// One comparison row of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub all_mean: f64,
    pub all_std: f64,
    pub recommended_mean: f64,
    pub recommended_std: f64,
}

/// Strategy comparison; percentages are relative to the row named `status-quo` when present.
pub fn write_summary(path: &FsPath, header: &Header, rows: &[SummaryRow]) -> Result<(), ReportError> {
    let base = rows.iter().find(|r| r.strategy == "status-quo");
    let pct = |v: f64, b: Option<f64>| match b {
        Some(b) if b != 0.0 => num(100.0 * (v - b) / b),
        _ => String::new(),
    };
    let mut w = writer(path, header)?;
    w.write_record([
        "strategy",
        "all_mean_min",
        "all_std_min",
        "all_pct_vs_status_quo",
        "recommended_mean_min",
        "recommended_std_min",
        "recommended_pct_vs_status_quo",
    ])?;
    for r in rows {
        w.write_record([
            &r.strategy,
            &num(r.all_mean),
            &num(r.all_std),
            &pct(r.all_mean, base.map(|b| b.all_mean)),
            &num(r.recommended_mean),
            &num(r.recommended_std),
            &pct(r.recommended_mean, base.map(|b| b.recommended_mean)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep(path: &FsPath, header: &Header, rows: &[SweepRow]) -> Result<(), ReportError> {
    let mut w = writer(path, header)?;
    w.write_record([
        "psi",
        "avg_tt_all_min",
        "avg_tt_recommended_min",
        "stt_min",
        "model_travel_time_min",
        "total_utility",
        "utility_ratio",
        "preferred",
        "preferred_ratio",
        "status",
    ])?;
    for r in rows {
        match &r.outcome {
            Ok(v) => w.write_record([
                &num(r.psi),
                &num(v.report.avg_all.mean),
                &num(v.report.avg_recommended.mean),
                &num(v.report.stt.mean),
                &num(v.travel_time),
                &num(v.metrics.total_utility),
                &num(v.metrics.utility_ratio),
                &v.metrics.preferred.to_string(),
                &num(v.metrics.preferred_ratio),
                "ok",
            ])?,
            Err(e) => {
                let mut rec = vec![num(r.psi)];
                rec.extend(std::iter::repeat_n(String::new(), 8));
                rec.push(format!("failed: {e}"));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Scalar results as `metric,value` rows.
pub fn write_metrics(path: &FsPath, header: &Header, rows: &[(&str, String)]) -> Result<(), ReportError> {
    let mut w = writer(path, header)?;
    w.write_record(["metric", "value"])?;
    for (k, v) in rows {
        w.write_record([*k, v.as_str()])?;
    }
    w.flush()?;
    Ok(())
}
