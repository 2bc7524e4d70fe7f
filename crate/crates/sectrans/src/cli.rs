//! Command-line front end.
//!
//! Every subcommand writes its results as files into `--out` and prints a
//! one-line summary. Exit codes: 0 for success (valid, schedulable, feasible,
//! miss-free), 1 for a negative verdict (rejected, infeasible, deadline
//! misses), 2 for usage and input errors.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use sectrans_core::demand::Status;
use sectrans_core::edf_sim::{check_transaction_timing, simulate_system};
use sectrans_core::milp::{
    encode_with, problem_from_system, render_lp, synthesize_decomposed, DecomposeOptions, EncodeStats, Limits,
    Strategy, SynthesisStatus, Tolerances, VarKind,
};
use sectrans_core::model::{t_max, QocCurve, SystemModel};
use sectrans_core::opportunistic::{run_opportunistic, OpportunisticError, SporadicTrafficModel};
use sectrans_core::qoc_sim::{
    estimate_qoc_bound, minimal_block_length, simulate_closed_loop, AttackStrategy, QocError,
};
use sectrans_core::time::{Resolution, Tick};
use sectrans_core::workload_gen::{case_study, generate, CaseStudyOptions, GenSpec};
use sectrans_core::model::AuthPolicy;

use crate::report::{analysis_report, SimulationReport};
use crate::schema::{
    self, CurvesDoc, OpportunisticConfigDoc, PlantsDoc, SolutionDoc, SystemDoc, SCHEMA_VERSION,
};
use crate::solution;
use crate::trace_io::{trace_csv, trajectory_csv};

#[derive(Debug, Parser)]
#[command(name = "sectrans", version, about = "Scheduling analysis and synthesis for authenticated control transactions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Directory for every output file; created when missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Ticks per time unit for time-valued flags such as `--horizon`.
    /// Defaults to the resolution of the loaded system.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub resolution: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    NetworkFirst,
    EcuFirst,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::NetworkFirst => Strategy::NetworkFirst,
            StrategyArg::EcuFirst => Strategy::EcuFirst,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structural and parameter checks of a system file.
    Validate {
        #[arg(long)]
        system: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Demand-based verdicts for every ECU and the bus.
    Analyze {
        #[arg(long)]
        system: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Chooses offsets, deadlines and authentication offsets.
    Synthesize {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, value_enum, default_value = "network-first")]
        strategy: StrategyArg,
        #[arg(long)]
        max_nodes: Option<u64>,
        #[arg(long)]
        max_oracle_calls: Option<u64>,
        /// Record the wall time in the solution; the output then differs between runs.
        #[arg(long)]
        record_time: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Writes the synthesis problem as a big-M MILP in LP format.
    ExportLp {
        #[arg(long)]
        system: PathBuf,
        /// Apply the pruning rules before encoding.
        #[arg(long)]
        pruned: bool,
        /// Integrality tolerance of the target solver.
        #[arg(long, default_value_t = 1e-5)]
        integrality: f64,
        /// Constraint feasibility tolerance of the target solver.
        #[arg(long, default_value_t = 1e-6)]
        feasibility: f64,
        #[command(flatten)]
        common: Common,
    },
    /// EDF simulation of every resource plus the transaction timing check.
    Simulate {
        #[arg(long)]
        system: PathBuf,
        /// A solution file to apply and re-verify first.
        #[arg(long, conflicts_with = "values")]
        solution: Option<PathBuf>,
        /// An external solver's `name value` file to apply and re-verify first.
        #[arg(long)]
        values: Option<PathBuf>,
        /// Simulated span in time units (default: the analysis horizon).
        #[arg(long)]
        horizon: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Runtime insertion of extra authentications into slack.
    Opportunistic {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        curves: Option<PathBuf>,
        /// Weights, minimum gain and sporadic traffic.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Simulated span in time units (default: 20 of the longest transaction period).
        #[arg(long)]
        horizon: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Random benchmark systems, or the case-study shape.
    Generate {
        #[arg(long, default_value_t = 10)]
        transactions: usize,
        #[arg(long, default_value_t = 4)]
        ecus: usize,
        #[arg(long, default_value_t = 0.5)]
        ecu_utilization: f64,
        #[arg(long, default_value_t = 0.5)]
        bus_utilization: f64,
        /// Fixed bus rate in bit/s.
        #[arg(long)]
        bus_rate: Option<u64>,
        /// Three-plant case-study system instead of a random one.
        #[arg(long)]
        case_study: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Empirical lower estimate of the attack-induced estimation error.
    QocEstimate {
        #[arg(long)]
        plants: PathBuf,
        /// Only this plant.
        #[arg(long)]
        plant: Option<String>,
        #[arg(long)]
        l: u32,
        #[arg(long)]
        f: u32,
        #[arg(long, default_value_t = 16)]
        samples: usize,
        /// Number of simulated control steps.
        #[arg(long, default_value_t = 200)]
        horizon: usize,
        #[command(flatten)]
        common: Common,
    },
}

/// Result of a subcommand that ran to completion.
struct Outcome {
    code: i32,
    summary: String,
}

impl Outcome {
    fn new(ok: bool, summary: String) -> Self {
        Outcome { code: if ok { 0 } else { 1 }, summary }
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli.command) {
        Ok(o) => {
            println!("{}", o.summary);
            o.code
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

fn load_system(path: &Path) -> anyhow::Result<SystemModel> {
    let doc: SystemDoc = schema::load(path)?;
    let report = doc.system.validate();
    if !report.is_valid() {
        let issues: Vec<String> = report.issues.iter().map(ToString::to_string).collect();
        bail!("{}: invalid system: {}", path.display(), issues.join("; "));
    }
    Ok(doc.system)
}

fn load_curves(path: &Path) -> anyhow::Result<Vec<QocCurve>> {
    let doc: CurvesDoc = schema::load(path)?;
    doc.to_curves().with_context(|| format!("{}: invalid curve", path.display()))
}

fn out_dir(common: &Common) -> anyhow::Result<&Path> {
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    Ok(&common.out)
}

fn write(dir: &Path, name: &str, text: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    write(dir, name, &schema::to_json(value))
}

fn horizon_ticks(units: f64, common: &Common, system: &SystemModel) -> anyhow::Result<Tick> {
    let res = match common.resolution {
        Some(r) => Resolution::new(r).expect("positive by parser"),
        None => system.resolution,
    };
    if !(units.is_finite() && units > 0.0) {
        bail!("--horizon must be positive");
    }
    Ok(res.to_ticks_ceil(units))
}

fn run(cmd: &Command) -> anyhow::Result<Outcome> {
    match cmd {
        Command::Validate { system, common } => validate(system, common),
        Command::Analyze { system, common } => analyze(system, common),
        Command::Synthesize { system, strategy, max_nodes, max_oracle_calls, record_time, common } => {
            let mut limits = Limits::default();
            if let Some(n) = max_nodes {
                limits.max_nodes = *n;
            }
            if let Some(n) = max_oracle_calls {
                limits.max_oracle_calls = *n;
            }
            let opts = DecomposeOptions { strategy: (*strategy).into(), limits, ..DecomposeOptions::default() };
            synthesize(system, &opts, *record_time, common)
        }
        Command::ExportLp { system, pruned, integrality, feasibility, common } => {
            let tol = Tolerances { integrality: *integrality, feasibility: *feasibility };
            export_lp(system, *pruned, tol, common)
        }
        Command::Simulate { system, solution, values, horizon, common } => {
            simulate(system, solution.as_deref(), values.as_deref(), *horizon, common)
        }
        Command::Opportunistic { system, curves, config, horizon, common } => {
            opportunistic(system, curves.as_deref(), config.as_deref(), *horizon, common)
        }
        Command::Generate { transactions, ecus, ecu_utilization, bus_utilization, bus_rate, case_study, common } => {
            let spec = GenSpec {
                n_transactions: *transactions,
                ecu_count: *ecus,
                target_ecu_utilization: *ecu_utilization,
                target_bus_utilization: *bus_utilization,
                bus_rate: *bus_rate,
                seed: common.seed,
                ..GenSpec::default()
            };
            generate_cmd(&spec, *case_study, common)
        }
        Command::QocEstimate { plants, plant, l, f, samples, horizon, common } => {
            qoc_estimate(plants, plant.as_deref(), *l, *f, *samples, *horizon, common)
        }
    }
}

#[derive(Serialize)]
struct ValidationDoc {
    schema_version: u32,
    valid: bool,
    issues: Vec<String>,
}

fn validate(path: &Path, common: &Common) -> anyhow::Result<Outcome> {
    let doc: SystemDoc = schema::load(path)?;
    let report = doc.system.validate();
    let issues: Vec<String> = report.issues.iter().map(ToString::to_string).collect();
    let dir = out_dir(common)?;
    write_json(dir, "validation.json", &ValidationDoc { schema_version: SCHEMA_VERSION, valid: issues.is_empty(), issues: issues.clone() })?;
    if !issues.is_empty() {
        bail!("{}: {} issue(s): {}", path.display(), issues.len(), issues.join("; "));
    }
    let tasks = doc.system.all_tasks().count();
    Ok(Outcome::new(true, format!("valid: {tasks} tasks, {} transactions", doc.system.transactions.len())))
}

fn analyze(path: &Path, common: &Common) -> anyhow::Result<Outcome> {
    let system = load_system(path)?;
    let report = analysis_report(&system)?;
    write_json(out_dir(common)?, "analysis.json", &report)?;
    let worst = report.resources.iter().find(|v| v.status != Status::Schedulable);
    let summary = match worst {
        None => format!("SCHEDULABLE on {} resource(s)", report.resources.len()),
        Some(v) => {
            let status = serde_json::to_value(v.status)?;
            match &v.witness {
                Some(w) => format!("{} on {}: demand {} > supply {} in [{}, {}]", status.as_str().unwrap_or("?"), v.resource, w.demand, w.supply, w.t1, w.t2),
                None => format!("{} on {}: utilization above 1", status.as_str().unwrap_or("?"), v.resource),
            }
        }
    };
    Ok(Outcome::new(report.schedulable, summary))
}

fn synthesize(path: &Path, opts: &DecomposeOptions, record_time: bool, common: &Common) -> anyhow::Result<Outcome> {
    let system = load_system(path)?;
    let start = std::time::Instant::now();
    let mut result = synthesize_decomposed(&system, opts)?;
    if record_time {
        result.stats.wall_time_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    let dir = out_dir(common)?;
    schema::save(&dir.join("solution.json"), &solution::to_doc(&result))?;
    let feasible = result.status == SynthesisStatus::Feasible;
    if feasible {
        let applied = sectrans_core::milp::apply_solution(&system, &result)?;
        schema::save(&dir.join("system.synthesized.json"), &SystemDoc { schema_version: SCHEMA_VERSION, system: applied })?;
    }
    let status = serde_json::to_value(result.status)?;
    let summary = format!(
        "{} ({} nodes, {} stage(s))",
        status.as_str().unwrap_or("?"),
        result.stats.nodes,
        result.stages.len()
    );
    Ok(Outcome::new(feasible, summary))
}

#[derive(Serialize)]
struct LpSummary {
    schema_version: u32,
    pruned: bool,
    variables: usize,
    binaries: usize,
    integers: usize,
    constraints: usize,
    big_m: f64,
    epsilon: f64,
}

fn export_lp(path: &Path, pruned: bool, tol: Tolerances, common: &Common) -> anyhow::Result<Outcome> {
    let system = load_system(path)?;
    let problem = problem_from_system(&system)?;
    let inst = encode_with(&problem, pruned, tol)
        .context("long horizons need a smaller --integrality (M times it must stay well below 1/2)")?;
    let dir = out_dir(common)?;
    write(dir, "model.lp", &render_lp(&inst))?;
    let stats = EncodeStats::of(&inst);
    let summary = LpSummary {
        schema_version: SCHEMA_VERSION,
        pruned,
        variables: inst.variables.len(),
        binaries: inst.count(VarKind::Binary),
        integers: inst.count(VarKind::Integer),
        constraints: stats.constraints,
        big_m: inst.meta.m,
        epsilon: inst.meta.epsilon,
    };
    write_json(dir, "model.json", &summary)?;
    Ok(Outcome::new(
        true,
        format!("model.lp: {} variables ({} binary), {} constraints", summary.variables, summary.binaries, summary.constraints),
    ))
}

fn simulate(
    path: &Path,
    solution_path: Option<&Path>,
    values_path: Option<&Path>,
    horizon: Option<f64>,
    common: &Common,
) -> anyhow::Result<Outcome> {
    let system = load_system(path)?;
    let horizon = horizon.map(|h| horizon_ticks(h, common, &system)).transpose()?;
    let imported = match (solution_path, values_path) {
        (Some(p), _) => {
            let doc: SolutionDoc = schema::load(p)?;
            if doc.result.status != SynthesisStatus::Feasible {
                bail!("{}: solution status is not FEASIBLE", p.display());
            }
            Some(doc.result)
        }
        (None, Some(p)) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(solution::import_values(&system, &solution::parse_sol(&text)?)?)
        }
        (None, None) => None,
    };

    let dir = out_dir(common)?;
    let report = match imported {
        Some(result) => {
            let (applied, v, traces) = solution::verify(&system, &result, horizon)?;
            schema::save(&dir.join("system.applied.json"), &SystemDoc { schema_version: SCHEMA_VERSION, system: applied.clone() })?;
            write(dir, "trace.csv", &trace_csv(&traces))?;
            write_json(dir, "trace.json", &traces)?;
            let mut r = SimulationReport::new(applied.resolution, v.horizon, &traces, v.timing);
            r.analysis = Some(v.analysis);
            r
        }
        None => {
            let all: Vec<_> = system.all_tasks().cloned().collect();
            let h = match horizon {
                Some(h) => h,
                None => t_max(&all)?,
            };
            let traces = simulate_system(&system, h)?;
            let timing = check_transaction_timing(&system, &traces)?;
            write(dir, "trace.csv", &trace_csv(&traces))?;
            write_json(dir, "trace.json", &traces)?;
            SimulationReport::new(system.resolution, h, &traces, timing)
        }
    };
    write_json(dir, "simulation.json", &report)?;
    let summary = match report.misses.first() {
        None if report.clean() => format!("no deadline misses over [0, {}]", report.horizon),
        None => format!("no deadline misses over [0, {}], but timing or analysis checks failed", report.horizon),
        Some(m) => format!(
            "{} deadline miss(es); first: task {} job {} on {} at tick {}",
            report.misses.len(),
            m.task,
            m.job,
            m.resource,
            m.time
        ),
    };
    Ok(Outcome::new(report.clean(), summary))
}

fn opportunistic(
    path: &Path,
    curves: Option<&Path>,
    config: Option<&Path>,
    horizon: Option<f64>,
    common: &Common,
) -> anyhow::Result<Outcome> {
    let system = load_system(path)?;
    let curves = curves.map(load_curves).transpose()?.unwrap_or_default();
    let config: OpportunisticConfigDoc = match config {
        Some(p) => schema::load(p)?,
        None => OpportunisticConfigDoc { schema_version: SCHEMA_VERSION, weights: vec![], min_gain: 1, sporadic: None },
    };
    let horizon = match horizon {
        Some(h) => horizon_ticks(h, common, &system)?,
        None => 20 * system.transactions.iter().map(|t| t.p).max().unwrap_or(1),
    };
    let sporadic = config.sporadic.unwrap_or_else(SporadicTrafficModel::none);
    let opts = config.options(horizon, common.seed);
    let run = match run_opportunistic(&system, &curves, &sporadic, &opts) {
        Ok(run) => run,
        Err(OpportunisticError::InfeasibleBaseline { resource, misses }) => {
            return Ok(Outcome::new(false, format!("baseline schedule misses {misses} deadline(s) on {resource:?}")));
        }
        Err(e) => return Err(e.into()),
    };
    let dir = out_dir(common)?;
    #[derive(Serialize)]
    struct Doc<'a> {
        schema_version: u32,
        horizon: Tick,
        metrics: &'a sectrans_core::opportunistic::OpportunisticMetrics,
        insertions: &'a [sectrans_core::opportunistic::Insertion],
    }
    write_json(dir, "opportunistic.json", &Doc { schema_version: SCHEMA_VERSION, horizon, metrics: &run.metrics, insertions: &run.insertions })?;
    write(dir, "trace.csv", &trace_csv(&run.traces))?;
    let m = &run.metrics;
    let distances: Vec<String> = m.plants.iter().map(|p| format!("{}={:.3}/{}", p.plant_id, p.mean_distance, p.l)).collect();
    let summary = format!(
        "{} insertion(s), mean distance {}, bus utilization +{:.4}",
        run.insertions.len(),
        if distances.is_empty() { "-".into() } else { distances.join(" ") },
        m.bus_utilization_delta
    );
    Ok(Outcome::new(m.valid && m.periodic_misses == 0, summary))
}

fn generate_cmd(spec: &GenSpec, case: bool, common: &Common) -> anyhow::Result<Outcome> {
    let system = if case {
        case_study(&CaseStudyOptions { seed: common.seed, ..CaseStudyOptions::default() })?
    } else {
        generate(spec)?
    };
    if let Some(r) = common.resolution {
        if r != system.resolution.ticks_per_unit() {
            bail!("generated systems use {} ticks per unit", system.resolution.ticks_per_unit());
        }
    }
    let dir = out_dir(common)?;
    schema::save(&dir.join("system.json"), &SystemDoc { schema_version: SCHEMA_VERSION, system: system.clone() })?;
    Ok(Outcome::new(
        true,
        format!("system.json: {} transactions, {} tasks", system.transactions.len(), system.all_tasks().count()),
    ))
}

#[derive(Serialize)]
struct PlantEstimate {
    plant_id: String,
    estimate: f64,
    attack_free: f64,
    /// `None` when the pair is unobservable.
    minimal_block_length: Option<u32>,
    trajectory: String,
}

#[derive(Serialize)]
struct EstimateDoc {
    schema_version: u32,
    l: u32,
    f: u32,
    samples: usize,
    horizon: usize,
    seed: u64,
    /// Sampled attacks only give a lower estimate of the worst case.
    lower_estimate: bool,
    plants: Vec<PlantEstimate>,
}

fn qoc_estimate(
    path: &Path,
    only: Option<&str>,
    l: u32,
    f: u32,
    samples: usize,
    horizon: usize,
    common: &Common,
) -> anyhow::Result<Outcome> {
    let doc: PlantsDoc = schema::load(path)?;
    let plants: Vec<_> = doc.plants.iter().filter(|p| only.is_none_or(|id| p.plant_id == id)).collect();
    if plants.is_empty() {
        bail!("{}: no matching plant", path.display());
    }
    let dir = out_dir(common)?;
    let policy = AuthPolicy::new(0, f, l);
    let mut out = Vec::new();
    for p in plants {
        let estimate = estimate_qoc_bound(p, l, f, samples, horizon, common.seed)?;
        let clean = simulate_closed_loop(p, Some(&policy), &AttackStrategy::None, horizon, common.seed)?.max_error();
        let greedy = AttackStrategy::Greedy { margin: 1.0 - 1e-6 };
        let traj = simulate_closed_loop(p, Some(&policy), &greedy, horizon, common.seed)?;
        let name = format!("trajectory_{}.csv", file_safe(&p.plant_id));
        write(dir, &name, &trajectory_csv(&traj))?;
        let minimal = match minimal_block_length(p) {
            Ok(n) => Some(n),
            Err(QocError::Unobservable) => None,
            Err(e) => return Err(e.into()),
        };
        out.push(PlantEstimate { plant_id: p.plant_id.clone(), estimate, attack_free: clean, minimal_block_length: minimal, trajectory: name });
    }
    let summary: Vec<String> = out.iter().map(|p| format!("{}={:.4}", p.plant_id, p.estimate)).collect();
    write_json(
        dir,
        "qoc_estimate.json",
        &EstimateDoc { schema_version: SCHEMA_VERSION, l, f, samples, horizon, seed: common.seed, lower_estimate: true, plants: out },
    )?;
    Ok(Outcome::new(true, format!("estimated error (l={l}, f={f}): {}", summary.join(" "))))
}

fn file_safe(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn parser_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(dispatch(["sectrans", "frobnicate"]), 2);
        assert_eq!(dispatch(["sectrans", "analyze"]), 2);
        assert_eq!(dispatch(["sectrans", "analyze", "--system", "/nonexistent/system.json"]), 2);
        assert_eq!(dispatch(["sectrans", "synthesize", "--system", "x", "--strategy", "sideways"]), 2);
    }

    #[test]
    fn file_names_are_sanitized() {
        assert_eq!(file_safe("ACC/v2 b"), "ACC_v2_b");
    }
}
