//! Command-line front end for the capital aggregation library.
//!
//! Every subcommand wraps one library entry point: `aggregate` and
//! `allocate` evaluate the closed forms, `rorac` folds in income
//! statistics, `check` runs the allocation property suite, `simulate`
//! cross-validates against Monte Carlo, `optimize` searches a scenario set
//! under constraints, and `plot` renders the risk-return scatter.
//!
//! Exit codes: 0 on success, 1 on domain failures (unreadable or invalid
//! inputs, infeasible optimization, failed checks, a non-PSD correlation
//! where PSD is required), 2 on usage errors. Reports go to stdout, or to
//! files under `--out DIR`; warnings and progress go to stderr, so runs
//! with identical arguments and input files produce byte-identical
//! reports. Set `SCRALLOC_LOG` (error, warn, info, debug, trace) for
//! library logging.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use scralloc::io::{
    aggregation_csv, allocation_csv, checks_csv, emit_svg_scatter, frontier_csv,
    mc_comparison_csv, optimization_csv, parse_constraints, parse_income, parse_scenarios,
    parse_tree, report_json, rorac_csv,
};
use scralloc::{
    aggregate_tree, allocate_tree, compare_with_closed_form, compute_rorac_for_tree,
    emit_frontier, frontier_from_rorac, optimize, run_property_suite, validate_tree, CheckConfig,
    CheckStatus, ConstraintSet64, FrontierDataset, IncomeStats64, McConfig, McError, PsdRepair,
    RiskTree64, Scenario64,
};

#[derive(Parser)]
#[command(
    name = "scralloc",
    version,
    about = "Hierarchical capital aggregation, Euler allocation, and scenario tools",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate standalone SCRs bottom-up and report every level
    Aggregate(TreeArgs),
    /// Allocate the aggregate SCR back onto macro and micro risks
    Allocate(TreeArgs),
    /// Per-node return on risk-adjusted capital from income statistics
    Rorac(RoracArgs),
    /// Run the allocation property suite and print a pass/fail table
    Check(CheckArgs),
    /// Cross-validate the closed forms against Monte Carlo
    Simulate(SimulateArgs),
    /// Select the best feasible scenario by expected RORAC
    Optimize(OptimizeArgs),
    /// Render the risk-return scatter as SVG plus CSV
    Plot(PlotArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Write the report into this directory instead of stdout
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Report format
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct TreeArgs {
    /// Risk tree document (JSON)
    #[arg(long, value_name = "PATH")]
    tree: PathBuf,
    /// Treat a non-positive-semidefinite correlation as an error
    #[arg(long)]
    strict_psd: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct RoracArgs {
    /// Risk tree document (JSON)
    #[arg(long, value_name = "PATH")]
    tree: PathBuf,
    /// Income statistics document (JSON)
    #[arg(long, value_name = "PATH")]
    income: PathBuf,
    /// Treat a non-positive-semidefinite correlation as an error
    #[arg(long)]
    strict_psd: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CheckArgs {
    /// Risk tree document (JSON)
    #[arg(long, value_name = "PATH")]
    tree: PathBuf,
    /// Income statistics; enables the RORAC compatibility check
    #[arg(long, value_name = "PATH")]
    income: Option<PathBuf>,
    /// Seed for the randomized probes
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Comma-separated exposure growth steps for the RORAC sign test
    #[arg(long, value_name = "H1,H2,...", value_parser = parse_h_grid)]
    h_grid: Option<HGrid>,
    /// Treat a non-positive-semidefinite correlation as an error
    #[arg(long)]
    strict_psd: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Risk tree document (JSON)
    #[arg(long, value_name = "PATH")]
    tree: PathBuf,
    /// Number of Monte Carlo samples
    #[arg(long, value_name = "N", default_value_t = 1_000_000,
          value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    /// Seed for the sample stream
    #[arg(long, value_name = "N", default_value_t = 0)]
    seed: u64,
    /// Repair a non-PSD correlation by clipping negative eigenvalues
    #[arg(long)]
    repair_psd: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct OptimizeArgs {
    /// Scenario suite document (JSON)
    #[arg(long, value_name = "PATH")]
    scenarios: PathBuf,
    /// Constraint document; omitting it means every scenario is feasible
    #[arg(long, value_name = "PATH")]
    constraints: Option<PathBuf>,
    /// Treat a non-positive-semidefinite correlation as an error
    #[arg(long)]
    strict_psd: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct PlotArgs {
    /// Risk tree document; plots the per-line scatter of its RORAC report
    #[arg(long, value_name = "PATH", requires = "income",
          conflicts_with_all = ["scenarios", "constraints"],
          required_unless_present = "scenarios")]
    tree: Option<PathBuf>,
    /// Income statistics document; required with --tree
    #[arg(long, value_name = "PATH", requires = "tree")]
    income: Option<PathBuf>,
    /// Scenario suite; plots the selected scenario of an optimization run
    #[arg(long, value_name = "PATH")]
    scenarios: Option<PathBuf>,
    /// Constraint document; only meaningful with --scenarios
    #[arg(long, value_name = "PATH", requires = "scenarios")]
    constraints: Option<PathBuf>,
    /// Treat a non-positive-semidefinite correlation as an error
    #[arg(long)]
    strict_psd: bool,
    /// Directory `frontier.svg` and `frontier.csv` are written into
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

/// Exposure growth steps from a comma-separated flag value.
#[derive(Clone, Debug)]
struct HGrid(Vec<f64>);

fn parse_h_grid(text: &str) -> Result<HGrid, String> {
    let mut grid = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        let h: f64 = part
            .parse()
            .map_err(|_| format!("{part:?} is not a number"))?;
        if !h.is_finite() || h <= -1.0 || h == 0.0 {
            return Err(format!(
                "growth step {h} must be finite, nonzero, and greater than -1"
            ));
        }
        grid.push(h);
    }
    Ok(HGrid(grid))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter("SCRALLOC_LOG"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Aggregate(args) => {
            let tree = load_tree(&args.tree, args.strict_psd)?;
            let agg = aggregate_tree(&tree)?;
            let content = match args.output.format {
                Format::Csv => aggregation_csv(&agg),
                Format::Json => report_json(&agg),
            };
            deliver(&args.output, "aggregation", &content)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Allocate(args) => {
            let tree = load_tree(&args.tree, args.strict_psd)?;
            let alloc = allocate_tree(&tree)?;
            let content = match args.output.format {
                Format::Csv => allocation_csv(&alloc),
                Format::Json => report_json(&alloc),
            };
            deliver(&args.output, "allocation", &content)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Rorac(args) => {
            let tree = load_tree(&args.tree, args.strict_psd)?;
            let income = load_income(&args.income)?;
            let alloc = allocate_tree(&tree)?;
            let report = compute_rorac_for_tree(&tree, &alloc, &income)?;
            let content = match args.output.format {
                Format::Csv => rorac_csv(&report),
                Format::Json => report_json(&report),
            };
            deliver(&args.output, "rorac", &content)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Check(args) => {
            let tree = load_tree(&args.tree, args.strict_psd)?;
            let income = args.income.as_deref().map(load_income).transpose()?;
            let mut config = CheckConfig::default();
            if let Some(seed) = args.seed {
                config.seed = seed;
            }
            if let Some(grid) = &args.h_grid {
                config.h_grid.clone_from(&grid.0);
            }
            let checks = run_property_suite(&tree, income.as_ref(), &config)?;
            let content = match args.output.format {
                Format::Csv => checks_csv(&checks),
                Format::Json => report_json(&checks),
            };
            deliver(&args.output, "checks", &content)?;
            let failed: Vec<&str> = checks
                .iter()
                .filter(|c| c.status == CheckStatus::Fail)
                .map(|c| c.name)
                .collect();
            if failed.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!(
                    "{} of {} checks failed: {}",
                    failed.len(),
                    checks.len(),
                    failed.join(", ")
                );
                Ok(ExitCode::from(1))
            }
        }
        Command::Simulate(args) => {
            let tree = load_tree(&args.tree, false)?;
            let config = McConfig {
                sample_count: args.samples as usize,
                seed: args.seed,
                psd_repair: if args.repair_psd {
                    PsdRepair::ClipEigenvalues
                } else {
                    PsdRepair::Off
                },
                ..McConfig::default()
            };
            let report = compare_with_closed_form(&tree, &config).map_err(|e| match e {
                McError::NotPsd { .. } => {
                    anyhow!("{e}; pass --repair-psd to clip negative eigenvalues")
                }
                other => anyhow!(other),
            })?;
            if report.any_flagged {
                let n = report.rows.iter().filter(|r| r.flagged).count();
                eprintln!(
                    "warning: {n} node(s) diverge from the closed form beyond 4 standard errors"
                );
            }
            let content = match args.output.format {
                Format::Csv => mc_comparison_csv(&report),
                Format::Json => report_json(&report),
            };
            deliver(&args.output, "mc_comparison", &content)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Optimize(args) => {
            let scenarios = load_scenarios(&args.scenarios, args.strict_psd)?;
            let constraints = match &args.constraints {
                Some(path) => load_constraints(path)?,
                None => ConstraintSet64::default(),
            };
            let report = optimize(&scenarios, &constraints)?;
            let content = match args.output.format {
                Format::Csv => optimization_csv(&report),
                Format::Json => report_json(&report),
            };
            deliver(&args.output, "optimization", &content)?;
            if report.selected.is_some() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("no feasible scenario:");
                for outcome in &report.outcomes {
                    eprintln!("  {}: violates {}", outcome.id, outcome.violated.join(", "));
                }
                Ok(ExitCode::from(1))
            }
        }
        Command::Plot(args) => {
            let dataset = plot_dataset(&args)?;
            write_file(&args.out, "frontier.csv", &frontier_csv(&dataset))?;
            write_file(&args.out, "frontier.svg", &emit_svg_scatter(&dataset))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Builds the scatter dataset from whichever input pair `plot` received.
fn plot_dataset(args: &PlotArgs) -> Result<FrontierDataset<f64>> {
    if let Some(tree_path) = &args.tree {
        let income_path = args.income.as_ref().expect("clap enforces --income");
        let tree = load_tree(tree_path, args.strict_psd)?;
        let income = load_income(income_path)?;
        let alloc = allocate_tree(&tree)?;
        let report = compute_rorac_for_tree(&tree, &alloc, &income)?;
        return Ok(frontier_from_rorac(&report));
    }
    let scenarios_path = args.scenarios.as_ref().expect("clap enforces a source");
    let scenarios = load_scenarios(scenarios_path, args.strict_psd)?;
    let constraints = match &args.constraints {
        Some(path) => load_constraints(path)?,
        None => ConstraintSet64::default(),
    };
    let report = optimize(&scenarios, &constraints)?;
    if report.selected.is_none() {
        eprintln!("warning: no feasible scenario; the plot will carry a note instead of points");
    }
    Ok(emit_frontier(&report))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_tree(path: &Path, strict_psd: bool) -> Result<RiskTree64> {
    let tree = parse_tree(&read_text(path)?)
        .with_context(|| format!("{} is not a valid tree document", path.display()))?;
    surface_warnings(&tree, "", strict_psd)?;
    Ok(tree)
}

fn load_income(path: &Path) -> Result<IncomeStats64> {
    parse_income(&read_text(path)?)
        .with_context(|| format!("{} is not a valid income document", path.display()))
}

fn load_scenarios(path: &Path, strict_psd: bool) -> Result<Vec<Scenario64>> {
    let scenarios = parse_scenarios(&read_text(path)?)
        .with_context(|| format!("{} is not a valid scenario document", path.display()))?;
    for scenario in &scenarios {
        surface_warnings(&scenario.tree, &format!("scenario {}: ", scenario.id), strict_psd)?;
    }
    Ok(scenarios)
}

fn load_constraints(path: &Path) -> Result<ConstraintSet64> {
    parse_constraints(&read_text(path)?)
        .with_context(|| format!("{} is not a valid constraint document", path.display()))
}

/// Prints validation warnings to stderr. Under `strict_psd` a non-PSD
/// correlation stops the run instead of just warning.
fn surface_warnings(tree: &RiskTree64, prefix: &str, strict_psd: bool) -> Result<()> {
    let report = validate_tree(tree);
    for w in report.warnings() {
        eprintln!("warning: {prefix}{} [{}]: {}", w.path, w.rule, w.detail);
    }
    if strict_psd {
        if let Some(w) = report.warnings().find(|w| w.rule == "corr-not-psd") {
            return Err(anyhow!(
                "{prefix}{}: {}; rejected under --strict-psd",
                w.path,
                w.detail
            ));
        }
    }
    Ok(())
}

/// Prints to stdout, or writes `<name>.<ext>` under `--out DIR`.
fn deliver(output: &OutputArgs, name: &str, content: &str) -> Result<()> {
    match &output.out {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(dir) => write_file(dir, &format!("{name}.{}", output.format.extension()), content),
    }
}

fn write_file(dir: &Path, file: &str, content: &str) -> Result<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let path = dir.join(file);
    fs::write(&path, content).with_context(|| format!("cannot write {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}
