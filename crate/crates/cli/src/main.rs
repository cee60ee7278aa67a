use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ipr_core::benders::{run_benders, BendersOptions};
use ipr_core::choice::{ChoiceError, ChoiceModel};
use ipr_core::evaluate::{
    capacity_based_plan, monte_carlo_eval, preference_metrics, psi_sweep, status_quo_assignment, EvalError,
    EvaluationReport, Method, SweepConfig,
};
use ipr_core::ipr::{solve_ipr_direct, IprError, IprParams};
use ipr_core::lp::LpError;
use ipr_core::ofp::{solve_optimal_flow, FlowError, FlowSolution};
use ipr_core::report::{self, num, Header, ReportError, SummaryRow};
use ipr_core::scenario::{Scenario, ScenarioError};

#[derive(Parser)]
#[command(name = "ipr", version, about = "Path recommendation for disrupted transit networks")]
struct Cli {
    /// Directory for CSV artifacts.
    #[arg(long, global = true, env = "IPR_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file against the schema and consistency rules.
    Validate { scenario: PathBuf },
    /// System-optimal flows without recommendations.
    SolveOf { scenario: PathBuf },
    /// Solve the recommendation problem.
    SolveIpr {
        scenario: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0.0)]
        psi: f64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Monte-Carlo evaluation of a plan file.
    Evaluate {
        scenario: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Evaluate a benchmark strategy.
    Benchmark {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        strategy: Strategy,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Solve and evaluate over a grid of preference weights.
    PsiSweep {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
}

#[derive(Args, Clone, Copy)]
struct ModelArgs {
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    /// Variance cap; `inf` disables it.
    #[arg(long, default_value_t = 0.3)]
    gamma: f64,
}

#[derive(Args, Clone, Copy)]
struct SolverArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Benders)]
    method: MethodArg,
    #[arg(long, default_value_t = 1e-8)]
    gap: f64,
    #[arg(long, default_value_t = 100)]
    max_iterations: usize,
}

impl SolverArgs {
    fn method(&self) -> Method {
        match self.method {
            MethodArg::Benders => Method::Benders,
            MethodArg::Direct => Method::Direct,
        }
    }

    fn options(&self) -> BendersOptions {
        BendersOptions {
            gap: self.gap,
            max_iterations: self.max_iterations,
        }
    }
}

#[derive(Args, Clone, Copy)]
struct EvalArgs {
    #[arg(long, default_value_t = 10)]
    replications: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum MethodArg {
    Benders,
    Direct,
}

impl MethodArg {
    fn name(self) -> &'static str {
        match self {
            MethodArg::Benders => "benders",
            MethodArg::Direct => "direct",
        }
    }
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum Strategy {
    StatusQuo,
    Capacity,
}

impl Strategy {
    fn name(self) -> &'static str {
        match self {
            Strategy::StatusQuo => "status-quo",
            Strategy::Capacity => "capacity",
        }
    }
}

struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
    extra: Value,
}

impl Failure {
    fn new(code: u8, kind: &'static str, message: impl ToString) -> Self {
        Failure {
            code,
            kind,
            message: message.to_string(),
            extra: Value::Null,
        }
    }

    fn with(mut self, extra: Value) -> Self {
        self.extra = extra;
        self
    }

    fn emit(&self) -> ExitCode {
        let mut v = json!({ "error": self.kind, "exit_code": self.code, "message": self.message });
        if let (Value::Object(out), Value::Object(more)) = (&mut v, &self.extra) {
            out.extend(more.clone());
        }
        eprintln!("{v}");
        ExitCode::from(self.code)
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match &e {
            ScenarioError::Io(_) => Failure::new(1, "io", &e),
            _ => {
                let rule = e.rule();
                Failure::new(2, "validation", &e).with(json!({ "rule": rule }))
            }
        }
    }
}

impl From<LpError> for Failure {
    fn from(e: LpError) -> Self {
        Failure::new(5, "solver", e)
    }
}

impl From<FlowError> for Failure {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::Infeasible { ref rows, .. } => {
                let rows = rows.clone();
                Failure::new(3, "infeasible", e).with(json!({ "rows": rows }))
            }
            FlowError::Limit => Failure::new(5, "limit", e),
            FlowError::BadFixedFlows(_) => Failure::new(1, "input", e),
            FlowError::Solver(e) => e.into(),
        }
    }
}

impl From<ChoiceError> for Failure {
    fn from(e: ChoiceError) -> Self {
        Failure::new(1, "input", e)
    }
}

impl From<IprError> for Failure {
    fn from(e: IprError) -> Self {
        match e {
            IprError::InvalidParams(_) => Failure::new(1, "usage", e),
            IprError::Infeasible { ref rows } => {
                let rows = rows.clone();
                Failure::new(3, "infeasible", e).with(json!({ "rows": rows }))
            }
            IprError::Limit { gap } => Failure::new(5, "limit", e).with(json!({ "gap": gap })),
            IprError::Choice(e) => e.into(),
            IprError::Flow(e) => e.into(),
            IprError::Solver(e) => e.into(),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::NoReplications => Failure::new(1, "usage", e),
            EvalError::MissingStatusQuo(_) | EvalError::NoCapacity(_) | EvalError::SeedsUnsupported => {
                Failure::new(2, "validation", e)
            }
            EvalError::Choice(e) => e.into(),
            EvalError::Flow(e) => e.into(),
            EvalError::Ipr(e) => e.into(),
        }
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Plan(_) => Failure::new(1, "input", e),
            _ => Failure::new(1, "io", e),
        }
    }
}

type Outcome = Result<Value, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return Failure::new(1, "usage", e.render()).emit(),
    };
    match run(&cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(f) => f.emit(),
    }
}

fn run(cli: &Cli) -> Outcome {
    let out = Out::new(&cli.out_dir)?;
    match &cli.command {
        Command::Validate { scenario } => validate(scenario),
        Command::SolveOf { scenario } => solve_of(&out, scenario),
        Command::SolveIpr {
            scenario,
            model,
            psi,
            solver,
        } => solve_ipr(&out, scenario, *model, *psi, *solver),
        Command::Evaluate { scenario, plan, eval } => evaluate(&out, scenario, plan, *eval),
        Command::Benchmark {
            scenario,
            strategy,
            eval,
        } => benchmark(&out, scenario, *strategy, *eval),
        Command::PsiSweep {
            scenario,
            grid,
            model,
            solver,
            eval,
        } => sweep(&out, scenario, grid, *model, *solver, *eval),
    }
}

/// Output directory plus the list of files written so far.
struct Out {
    dir: PathBuf,
    written: std::cell::RefCell<Vec<String>>,
}

impl Out {
    fn new(dir: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(dir).map_err(|e| Failure::new(1, "io", format!("{}: {e}", dir.display())))?;
        Ok(Out {
            dir: dir.to_path_buf(),
            written: Default::default(),
        })
    }

    fn file(&self, name: &str) -> PathBuf {
        self.written.borrow_mut().push(name.to_string());
        self.dir.join(name)
    }

    fn list(&self) -> Value {
        json!(*self.written.borrow())
    }
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    Ok(Scenario::load(path)?)
}

fn header(command: &str, scenario: &Path, seed: Option<u64>) -> Header {
    let name = scenario
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Header::new(seed).with("command", command).with("scenario", name)
}

fn validate(path: &Path) -> Outcome {
    let s = load(path)?;
    Ok(json!({
        "status": "ok",
        "stations": s.stations.len(),
        "lines": s.lines.len(),
        "runs": s.runs.len(),
        "paths": s.paths.len(),
        "passengers": s.passengers.len(),
        "onboard_seeds": s.seeds().count(),
    }))
}

fn write_flow_files(out: &Out, prefix: &str, h: &Header, s: &Scenario, sol: &FlowSolution) -> Result<(), Failure> {
    report::write_flows(&out.file(&format!("{prefix}_flows.csv")), h, s, sol)?;
    report::write_loads(&out.file(&format!("{prefix}_loads.csv")), h, s, sol)?;
    report::write_waits(&out.file(&format!("{prefix}_waits.csv")), h, s, sol)?;
    Ok(())
}

fn solve_of(out: &Out, path: &Path) -> Outcome {
    let s = load(path)?;
    let sol = solve_optimal_flow(&s)?;
    let h = header("solve-of", path, None);
    write_flow_files(out, "of", &h, &s, &sol)?;
    report::write_metrics(
        &out.file("of_objective.csv"),
        &h,
        &[
            ("objective_min", num(sol.objective)),
            ("waiting_min", num(sol.waiting)),
            ("in_vehicle_min", num(sol.in_vehicle)),
        ],
    )?;
    Ok(json!({ "objective": sol.objective, "artifacts": out.list() }))
}

fn solve_ipr(out: &Out, path: &Path, model: ModelArgs, psi: f64, solver: SolverArgs) -> Outcome {
    let s = load(path)?;
    let choice = ChoiceModel::from_scenario(&s);
    let params = IprParams {
        psi,
        epsilon: model.epsilon,
        gamma: model.gamma,
    };
    let method = solver.method.name();
    let mut h = header("solve-ipr", path, None)
        .with("method", method)
        .with("psi", psi)
        .with("epsilon", model.epsilon)
        .with("gamma", model.gamma);
    let prefix = format!("ipr_{method}");
    let (plan, flows, state) = match solver.method {
        MethodArg::Direct => {
            let (plan, flows) = solve_ipr_direct(&s, &choice, &params)?;
            (plan, flows, None)
        }
        MethodArg::Benders => {
            h = h.with("gap", solver.gap).with("max_iterations", solver.max_iterations);
            let o = run_benders(&s, &choice, &params, &solver.options())?;
            report::write_trace(&out.file(&format!("{prefix}_trace.csv")), &h, &o.state.trace)?;
            (o.plan, o.flows, Some(o.state))
        }
    };
    write_flow_files(out, &prefix, &h, &s, &flows)?;
    report::write_plan(&out.file(&format!("{prefix}_plan.csv")), &h, &s, &plan.assignment)?;
    let mut metrics = vec![
        ("objective", num(plan.objective)),
        ("travel_time_min", num(plan.travel_time)),
        ("total_utility", num(plan.total_utility)),
        ("preferred", plan.preferred.to_string()),
    ];
    if let Some(st) = &state {
        metrics.push(("iterations", st.iterations().to_string()));
        metrics.push(("gap", num(st.gap())));
        metrics.push(("converged", st.converged.to_string()));
    }
    report::write_metrics(&out.file(&format!("{prefix}_objective.csv")), &h, &metrics)?;
    let summary = json!({
        "objective": plan.objective,
        "travel_time": plan.travel_time,
        "total_utility": plan.total_utility,
        "preferred": plan.preferred,
        "artifacts": out.list(),
    });
    match state {
        Some(st) if !st.converged => Err(Failure::new(
            4,
            "nonconverged",
            format!("no convergence after {} iterations", st.iterations()),
        )
        .with(json!({ "gap": st.gap(), "upper": st.upper, "lower": st.lower, "artifacts": out.list() }))),
        _ => Ok(summary),
    }
}

fn summary_row(strategy: &str, ev: &EvaluationReport) -> SummaryRow {
    SummaryRow {
        strategy: strategy.to_string(),
        all_mean: ev.avg_all.mean,
        all_std: ev.avg_all.std,
        recommended_mean: ev.avg_recommended.mean,
        recommended_std: ev.avg_recommended.std,
    }
}

fn evaluation_json(ev: &EvaluationReport, out: &Out) -> Value {
    json!({
        "stt_mean": ev.stt.mean,
        "stt_std": ev.stt.std,
        "avg_all_mean": ev.avg_all.mean,
        "avg_recommended_mean": ev.avg_recommended.mean,
        "failed": ev.failed,
        "artifacts": out.list(),
    })
}

fn evaluate(out: &Out, path: &Path, plan: &Path, eval: EvalArgs) -> Outcome {
    let s = load(path)?;
    let choice = ChoiceModel::from_scenario(&s);
    let assignment = report::read_plan(plan, &s)?;
    let ev = monte_carlo_eval(&s, &choice, &assignment, eval.replications, eval.seed)?;
    let h = header("evaluate", path, Some(eval.seed)).with("replications", eval.replications);
    report::write_evaluation(&out.file("evaluation.csv"), &h, &ev)?;
    report::write_summary(&out.file("evaluation_summary.csv"), &h, &[summary_row("plan", &ev)])?;
    Ok(evaluation_json(&ev, out))
}

fn benchmark(out: &Out, path: &Path, strategy: Strategy, eval: EvalArgs) -> Outcome {
    let s = load(path)?;
    // without a recommendation everyone keeps their status-quo path
    let (assignment, choice) = match strategy {
        Strategy::StatusQuo => (status_quo_assignment(&s)?, ChoiceModel::identity(&s)),
        Strategy::Capacity => (capacity_based_plan(&s)?, ChoiceModel::from_scenario(&s)),
    };
    let ev = monte_carlo_eval(&s, &choice, &assignment, eval.replications, eval.seed)?;
    let name = strategy.name();
    let h = header("benchmark", path, Some(eval.seed))
        .with("strategy", name)
        .with("replications", eval.replications);
    let m = preference_metrics(&s, &assignment);
    report::write_plan(&out.file(&format!("benchmark_{name}_plan.csv")), &h, &s, &assignment)?;
    report::write_evaluation(&out.file(&format!("benchmark_{name}_evaluation.csv")), &h, &ev)?;
    report::write_summary(
        &out.file(&format!("benchmark_{name}_summary.csv")),
        &h,
        &[summary_row(name, &ev)],
    )?;
    let mut v = evaluation_json(&ev, out);
    v["total_utility"] = json!(m.total_utility);
    Ok(v)
}

fn sweep(out: &Out, path: &Path, grid: &[f64], model: ModelArgs, solver: SolverArgs, eval: EvalArgs) -> Outcome {
    if grid.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Failure::new(1, "usage", "grid values must be finite and nonnegative"));
    }
    let s = load(path)?;
    let choice = ChoiceModel::from_scenario(&s);
    let cfg = SweepConfig {
        epsilon: model.epsilon,
        gamma: model.gamma,
        method: solver.method(),
        replications: eval.replications,
        seed: eval.seed,
        benders: solver.options(),
    };
    let rows = psi_sweep(&s, &choice, grid, &cfg);
    let h = header("psi-sweep", path, Some(eval.seed))
        .with("method", solver.method.name())
        .with("epsilon", model.epsilon)
        .with("gamma", model.gamma)
        .with("replications", eval.replications);
    report::write_sweep(&out.file("psi_sweep.csv"), &h, &rows)?;
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    Ok(json!({ "rows": rows.len(), "failed": failed, "artifacts": out.list() }))
}
