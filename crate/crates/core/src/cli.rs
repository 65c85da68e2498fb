//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 internal invariant
//! violation (an oracle disagreed with a fast path).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cost::{calibrate, AcquisitionCostModel, CalibrationMode, CostFile, CostLayout, MisclassificationMatrix};
use crate::harness::{parse_targets, run_sweep, summarize, write_summary_csv, write_sweep_csv, CostSource, SweepConfig};
use crate::inference::InferenceContext;
use crate::lattice::{build_voila, enumerate_irreducible_bruteforce, BRUTE_FORCE_LIMIT};
use crate::network::{Assignment, DiscreteNetwork, FeatureSet};
use crate::policy::{evaluate, render, Planner, Strategy, ORACLE_MAX_FEATURES};
use crate::valuation::{best_set, naive_evi, sweep_evi, SweepOptions};

const AFTER_HELP: &str = "\
NETWORK FILE (JSON)
  {\"class\": \"Y\",
   \"variables\": [{\"name\": \"Y\", \"states\": [\"T\", \"F\"], \"parents\": [], \"cpt\": [[0.4, 0.6]]},
                 {\"name\": \"X1\", \"states\": [\"T\", \"F\"], \"parents\": [\"Y\"], \"cpt\": [[0.8, 0.2], [0.3, 0.7]]}]}
  One CPT row per joint parent configuration, row-major over the listed
  parents (last parent varies fastest). Rows must sum to 1.

COST FILE (JSON)
  {\"features\": [{\"name\": \"X1\", \"cost\": 10, \"group\": \"blood\"}],
   \"groups\": [{\"name\": \"blood\", \"overhead\": 20}],
   \"matrix\": [[0, 50], [50, 0]]}
  Instead of \"matrix\", \"calibrate\": {\"target\": 60, \"mode\": \"symmetric\"}
  scales the matrix so the prior expected misclassification cost is the target.
  matrix[i][j] is the cost of predicting class i when the truth is class j.

EXIT CODES
  0 success, 1 usage or validation error, 2 invariant violation";

#[derive(Debug, Parser)]
#[command(name = "voila", version, about = "Value-of-information lattices for cost-sensitive feature acquisition", after_help = AFTER_HELP)]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the lattice of irreducible feature subsets.
    Lattice(LatticeArgs),
    /// EVI and benefit of every lattice node.
    Evi(EviArgs),
    /// Build and evaluate an acquisition policy.
    Policy(PolicyArgs),
    /// Sweep prior expected misclassification costs and report savings.
    Sweep(SweepArgs),
    /// Cross-check fast paths against brute-force oracles.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct NetArgs {
    /// Network file.
    #[arg(long)]
    pub net: PathBuf,
    /// Observed features, e.g. `X1=T,X3=high`.
    #[arg(long, default_value = "")]
    pub evidence: String,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    /// Cost file; features cost nothing when omitted.
    #[arg(long)]
    pub costs: Option<PathBuf>,
    /// Misclassification costs: `sym:C` (constant off-diagonal C),
    /// `emc-sym:T` or `emc-asym:T` (calibrated to prior expected cost T).
    /// Overrides the cost file.
    #[arg(long)]
    pub matrix: Option<String>,
}

#[derive(Debug, Args)]
pub struct LatticeArgs {
    #[command(flatten)]
    pub net: NetArgs,
    /// Also print every node in canonical order.
    #[arg(long)]
    pub list: bool,
}

#[derive(Debug, Args)]
pub struct EviArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    pub cost: CostArgs,
    /// Evaluate every node independently instead of sharing bounds.
    #[arg(long)]
    pub naive: bool,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    pub cost: CostArgs,
    /// none, mb, greedy, set, greedy-la or oracle.
    #[arg(long, default_value = "greedy-la")]
    pub strategy: Strategy,
    /// Write the tree as JSON to this file.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Network file.
    #[arg(long)]
    pub net: PathBuf,
    /// Cost file with fixed feature costs.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub costs: Option<PathBuf>,
    /// Draw feature costs in [1, 100] and group overheads in [100, 200] per seed.
    #[arg(long)]
    pub synthetic: bool,
    /// Groups for synthetic costs when no cost file supplies them (round-robin).
    #[arg(long, default_value_t = 2)]
    pub groups: usize,
    /// sym or asym.
    #[arg(long, default_value = "sym")]
    pub mode: CalibrationMode,
    /// Target prior expected misclassification costs, LO:HI:STEP.
    #[arg(long)]
    pub targets: Option<String>,
    /// Comma-separated seeds for synthetic costs.
    #[arg(long, default_value = "1,2,3", value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Comma-separated strategies.
    #[arg(long, default_value = "none,mb,greedy,set,greedy-la", value_delimiter = ',')]
    pub strategies: Vec<Strategy>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Interval-averaged summary CSV.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Width of summary intervals.
    #[arg(long, default_value_t = 500.0)]
    pub interval: f64,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub net: NetArgs,
    #[command(flatten)]
    pub cost: CostArgs,
    /// Absolute tolerance for comparisons.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Invariant(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violated: {m}"),
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read `{}`: {e}", path.display())))
}

fn load_net(path: &Path) -> Result<DiscreteNetwork, CliError> {
    DiscreteNetwork::from_json(&read(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn load_evidence(net: &DiscreteNetwork, text: &str) -> Result<Assignment, CliError> {
    let e = net.parse_assignment(text).map_err(invalid)?;
    if e.contains(net.class()) {
        return Err(invalid("the class variable cannot be observed"));
    }
    Ok(e)
}

fn load_cost_file(path: &Path) -> Result<CostFile, CliError> {
    CostFile::from_json(&read(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// `sym:C`, `emc-sym:T`, `emc-asym:T`.
pub fn parse_matrix_spec(text: &str, prior: &[f64]) -> Result<MisclassificationMatrix, CliError> {
    let (kind, value) = text
        .split_once(':')
        .ok_or_else(|| invalid(format!("expected KIND:VALUE for --matrix, got `{text}`")))?;
    let v: f64 = value
        .parse()
        .map_err(|_| invalid(format!("`{value}` is not a number")))?;
    match kind {
        "sym" => MisclassificationMatrix::symmetric(prior.len(), v).map_err(invalid),
        "emc-sym" => calibrate(prior, v, CalibrationMode::Symmetric).map_err(invalid),
        "emc-asym" => calibrate(prior, v, CalibrationMode::Asymmetric).map_err(invalid),
        other => Err(invalid(format!("unknown matrix kind `{other}` (expected sym, emc-sym or emc-asym)"))),
    }
}

struct Problem {
    net: DiscreteNetwork,
    evidence: Assignment,
    costs: AcquisitionCostModel,
    matrix: MisclassificationMatrix,
}

fn load_problem(net_args: &NetArgs, cost_args: &CostArgs) -> Result<Problem, CliError> {
    let net = load_net(&net_args.net)?;
    let evidence = load_evidence(&net, &net_args.evidence)?;
    let file = cost_args.costs.as_deref().map(load_cost_file).transpose()?;
    let costs = match &file {
        Some(f) => f.acquisition_model(&net).map_err(invalid)?,
        None => AcquisitionCostModel::free(&net),
    };
    let prior = InferenceContext::new(&net).posterior(net.class()).map_err(invalid)?;
    let matrix = match (&cost_args.matrix, &file) {
        (Some(spec), _) => parse_matrix_spec(spec, &prior)?,
        (None, Some(f)) => match f.misclassification().map_err(invalid)? {
            Some(src) => src.resolve(&prior).map_err(invalid)?,
            None => return Err(invalid("no misclassification costs: pass --matrix or add them to the cost file")),
        },
        (None, None) => return Err(invalid("no misclassification costs: pass --matrix or --costs")),
    };
    if matrix.classes() != net.arity(net.class()) {
        return Err(invalid("misclassification matrix size does not match the class arity"));
    }
    Ok(Problem {
        net,
        evidence,
        costs,
        matrix,
    })
}

fn money(x: f64) -> String {
    // Avoid printing "-0.0000".
    let s = format!("{x:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

fn cmd_lattice(a: &LatticeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let net = load_net(&a.net.net)?;
    let e = load_evidence(&net, &a.net.evidence)?;
    let observed = net.features_of_vars(e.vars());
    let l = build_voila(&net, observed).map_err(invalid)?;
    log::info!(
        "ordering perfect: {}, potentially irreducible sets stored: {}",
        l.ordering_is_perfect(),
        l.potential_sets_stored()
    );
    let mut text = format!("{}\n", l.summary());
    if a.list {
        for &s in l.nodes() {
            text.push_str(&net.format_set(s));
            text.push('\n');
        }
    }
    out.write_all(text.as_bytes()).map_err(invalid)
}

fn cmd_evi(a: &EviArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let p = load_problem(&a.net, &a.cost)?;
    let ctx = InferenceContext::with_evidence(&p.net, &p.evidence).map_err(invalid)?;
    let l = build_voila(&p.net, p.net.features_of_vars(p.evidence.vars())).map_err(invalid)?;
    let report = if a.naive {
        naive_evi(&l, &ctx, &p.matrix)
    } else {
        sweep_evi(&l, &ctx, &p.matrix, SweepOptions::default())
    }
    .map_err(invalid)?;
    let history = Default::default();
    let mut text = String::from("set\tevi\tcost\tbenefit\n");
    for (i, &s) in l.nodes().iter().enumerate() {
        let c = p.costs.cost_given(s, FeatureSet::EMPTY);
        let v = report.value(i);
        text.push_str(&format!("{}\t{}\t{}\t{}\n", p.net.format_set(s), money(v), money(c), money(v - c)));
    }
    let best = best_set(&l, &report, &p.costs, &history).map_err(invalid)?;
    text.push_str(&format!(
        "best: {} benefit {}\nexact evaluations: {} of {}\n",
        p.net.format_set(best.set),
        money(best.benefit),
        report.exact_evaluations,
        l.len()
    ));
    out.write_all(text.as_bytes()).map_err(invalid)
}

fn cmd_policy(a: &PolicyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let p = load_problem(&a.net, &a.cost)?;
    let planner = Planner::new(&p.net).map_err(invalid)?;
    let policy = planner
        .build(a.strategy, &p.evidence, &p.costs, &p.matrix)
        .map_err(invalid)?;
    let ev = evaluate(&policy, &p.net, &p.costs, &p.matrix).map_err(invalid)?;
    if let Some(path) = &a.dump {
        let json = serde_json::to_string_pretty(&policy).map_err(invalid)?;
        fs::write(path, json + "\n")
            .map_err(|e| CliError::Validation(format!("cannot write `{}`: {e}", path.display())))?;
    }
    let mut text = render(&policy, &p.net, &p.costs);
    text.push_str(&format!("ETC: {}\n", money(ev.etc)));
    out.write_all(text.as_bytes()).map_err(invalid)
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let net = load_net(&a.net)?;
    let default_targets = if a.synthetic { "0:4000:100" } else { "0:2000:100" };
    let targets = parse_targets(a.targets.as_deref().unwrap_or(default_targets)).map_err(invalid)?;
    let source = match &a.costs {
        Some(path) => {
            let model = load_cost_file(path)?.acquisition_model(&net).map_err(invalid)?;
            CostSource::Fixed(model)
        }
        None => CostSource::Synthetic(CostLayout::round_robin(&net, a.groups)),
    };
    let config = SweepConfig {
        targets,
        mode: a.mode,
        strategies: a.strategies.clone(),
        seeds: a.seeds.clone(),
        jobs: a.jobs.max(1),
    };
    let rows = run_sweep(&net, &source, &config).map_err(invalid)?;
    let mut csv = Vec::new();
    write_sweep_csv(&rows, &mut csv).map_err(invalid)?;
    match &a.out {
        Some(path) => fs::write(path, &csv)
            .map_err(|e| CliError::Validation(format!("cannot write `{}`: {e}", path.display())))?,
        None => out.write_all(&csv).map_err(invalid)?,
    }
    if let Some(path) = &a.summary {
        if a.interval.is_nan() || a.interval <= 0.0 {
            return Err(invalid("--interval must be positive"));
        }
        let mut buf = Vec::new();
        write_summary_csv(&summarize(&rows, a.interval), &mut buf).map_err(invalid)?;
        fs::write(path, buf).map_err(|e| CliError::Validation(format!("cannot write `{}`: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_oracle(a: &OracleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let p = load_problem(&a.net, &a.cost)?;
    let tol = a.tol;
    let observed = p.net.features_of_vars(p.evidence.vars());
    let free = p.net.all_features().difference(observed).len();
    let mut text = String::new();
    let mut failures = Vec::new();

    let l = build_voila(&p.net, observed).map_err(invalid)?;
    if free <= BRUTE_FORCE_LIMIT {
        let brute = enumerate_irreducible_bruteforce(&p.net, observed).map_err(invalid)?;
        let same = brute == l.nodes();
        text.push_str(&format!(
            "irreducible sets: lattice {} brute force {} {}\n",
            l.len(),
            brute.len(),
            if same { "ok" } else { "MISMATCH" }
        ));
        if !same {
            failures.push("lattice nodes differ from brute-force enumeration");
        }
    } else {
        text.push_str("irreducible sets: skipped (too many features)\n");
    }

    let ctx = InferenceContext::with_evidence(&p.net, &p.evidence).map_err(invalid)?;
    let swept = sweep_evi(&l, &ctx, &p.matrix, SweepOptions::default()).map_err(invalid)?;
    let naive = naive_evi(&l, &ctx, &p.matrix).map_err(invalid)?;
    let dev = (0..l.len())
        .map(|i| (swept.value(i) - naive.value(i)).abs())
        .fold(0.0, f64::max);
    let ok = dev <= tol;
    text.push_str(&format!(
        "evi: max deviation {dev:.3e} over {} nodes, {} exact evaluations {}\n",
        l.len(),
        swept.exact_evaluations,
        if ok { "ok" } else { "MISMATCH" }
    ));
    if !ok {
        failures.push("swept EVI differs from per-node EVI");
    }

    if free <= ORACLE_MAX_FEATURES {
        let planner = Planner::new(&p.net).map_err(invalid)?;
        let etc = |s: Strategy| -> Result<f64, CliError> {
            let pol = planner.build(s, &p.evidence, &p.costs, &p.matrix).map_err(invalid)?;
            Ok(evaluate(&pol, &p.net, &p.costs, &p.matrix).map_err(invalid)?.etc)
        };
        let best = etc(Strategy::Oracle)?;
        text.push_str(&format!("optimal ETC: {}\n", money(best)));
        for s in Strategy::COMPARED {
            let v = etc(s)?;
            let ok = best <= v + tol;
            text.push_str(&format!("  {s}: {} {}\n", money(v), if ok { "ok" } else { "MISMATCH" }));
            if !ok {
                failures.push("a strategy beat the optimal policy");
            }
        }
    } else {
        text.push_str(&format!("optimal ETC: skipped (more than {ORACLE_MAX_FEATURES} unobserved features)\n"));
    }
    out.write_all(text.as_bytes()).map_err(invalid)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(failures.join("; ")))
    }
}

/// Parse `args` (program name first) and run. Results go to `out`,
/// diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let informational = !e.use_stderr();
            let text = e.render().to_string();
            if informational {
                let _ = out.write_all(text.as_bytes());
                return 0;
            }
            let _ = err.write_all(text.as_bytes());
            return 1;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    log::info!("voila {}", env!("CARGO_PKG_VERSION"));
    let result = match &cli.command {
        Command::Lattice(a) => cmd_lattice(a, out),
        Command::Evi(a) => cmd_evi(a, out),
        Command::Policy(a) => cmd_policy(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Oracle(a) => cmd_oracle(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.exit_code()
        }
    }
}
