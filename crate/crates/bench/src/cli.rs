//! Command-line front end. `run` returns the process exit code: 0 on
//! success, 1 for usage errors, 2 when a scenario or estimator fails.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use augmi::estimators::Method;
use augmi::scenario::Scenario;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::csvio::{emit_csv, write_rows};
use crate::error::{BenchError, Result};
use crate::experiment::{evaluate, parse_method, run_actions_experiment, run_dimension_sweep, ExperimentConfig, ResultRow};
use crate::generator::{generate_scenario, ActionSelection, ScenarioParams};

#[derive(Debug, Parser)]
#[command(name = "augmi", version, about = "Augmented-MI estimators and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a benchmark experiment and write CSV rows.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Scenario utilities.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Single estimates.
    #[command(subcommand)]
    Mi(MiCommand),
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// Every method on every action of one scenario.
    Actions(ActionsArgs),
    /// One action while the state dimension grows.
    Dims(DimsArgs),
}

#[derive(Debug, Subcommand)]
enum ScenarioCommand {
    /// Write a generated SLAM scenario as JSON.
    Generate(GenerateArgs),
}

#[derive(Debug, Subcommand)]
enum MiCommand {
    /// Estimate one action's augmented MI and print a CSV row.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Comma-separated: analytic, naive-kde, invmi-kde, mismc.
    #[arg(long, default_value = "analytic,naive-kde,invmi-kde,mismc")]
    methods: String,
    #[arg(long, default_value_t = 300)]
    particles: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Record wall time per estimate (otherwise elapsed_ns is 0).
    #[arg(long)]
    timing: bool,
}

#[derive(Debug, Args)]
struct ActionsArgs {
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "generate", required_unless_present = "generate")]
    scenario: Option<PathBuf>,
    /// Generate instead, e.g. `D=150,actions=4[,correlation=0.5][,seed=7]`.
    #[arg(long)]
    generate: Option<String>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct DimsArgs {
    #[arg(long, default_value = "10,50,100,150")]
    dims: String,
    #[arg(long, default_value_t = 0.5)]
    correlation: f64,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Selection {
    Spread,
    Nearest,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    actions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    correlation: f64,
    #[arg(long, value_enum, default_value_t = Selection::Spread)]
    selection: Selection,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    action: String,
    #[arg(long)]
    method: String,
    #[arg(long, default_value_t = 300)]
    particles: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    timing: bool,
}

fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for part in s.split(',').filter(|p| !p.trim().is_empty()) {
        let m = parse_method(part)?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(BenchError::Usage("no methods given".into()));
    }
    Ok(out)
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| BenchError::Usage(format!("`{p}` is not a dimension")))
        })
        .collect()
}

fn parse_generate(spec: &str, seed: u64) -> Result<ScenarioParams> {
    let mut params = ScenarioParams::new(0, 4, seed);
    for kv in spec.split(',') {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| BenchError::Usage(format!("expected key=value, got `{kv}`")))?;
        let bad = || BenchError::Usage(format!("bad value for `{k}`: `{v}`"));
        match k.trim() {
            "D" | "dim" => params.target_dim = v.trim().parse().map_err(|_| bad())?,
            "actions" => params.n_actions = v.trim().parse().map_err(|_| bad())?,
            "correlation" => params.correlation_strength = v.trim().parse().map_err(|_| bad())?,
            "seed" => params.seed = v.trim().parse().map_err(|_| bad())?,
            other => return Err(BenchError::Usage(format!("unknown generate key `{other}`"))),
        }
    }
    if params.target_dim == 0 {
        return Err(BenchError::Usage("generate spec needs D=<dim>".into()));
    }
    Ok(params)
}

fn load_scenario(path: &PathBuf) -> Result<Scenario<f64>> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.clone(),
        source,
    })?;
    Scenario::from_json(&text).map_err(|e| BenchError::Scenario(format!("{}: {e}", path.display())))
}

fn experiment_config(run: &RunArgs) -> ExperimentConfig {
    ExperimentConfig {
        timing: run.timing,
        ..ExperimentConfig::new(run.particles, run.trials, run.seed)
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bench(BenchCommand::Actions(a)) => {
            let methods = parse_methods(&a.run.methods)?;
            let scenario = match (&a.scenario, &a.generate) {
                (Some(path), _) => load_scenario(path)?,
                (None, Some(spec)) => generate_scenario(&parse_generate(spec, a.run.seed)?)?.scenario,
                (None, None) => unreachable!("clap enforces one source"),
            };
            let rows = run_actions_experiment(&scenario, &methods, &experiment_config(&a.run))?;
            emit_csv(&rows, &a.run.out)
        }
        Command::Bench(BenchCommand::Dims(d)) => {
            let methods = parse_methods(&d.run.methods)?;
            let dims = parse_list(&d.dims)?;
            let mut params = ScenarioParams::new(0, 1, d.run.seed);
            params.correlation_strength = d.correlation;
            let rows = run_dimension_sweep(&dims, &params, &methods, &experiment_config(&d.run))?;
            emit_csv(&rows, &d.run.out)
        }
        Command::Scenario(ScenarioCommand::Generate(g)) => {
            let mut params = ScenarioParams::new(g.dim, g.actions, g.seed);
            params.correlation_strength = g.correlation;
            params.selection = match g.selection {
                Selection::Spread => ActionSelection::SpreadByValue,
                Selection::Nearest => ActionSelection::Nearest,
            };
            let s = generate_scenario(&params)?;
            s.scenario
                .save(&g.out)
                .map_err(|e| BenchError::Scenario(e.to_string()))
        }
        Command::Mi(MiCommand::Eval(e)) => {
            let method = parse_method(&e.method)?;
            let scenario = load_scenario(&e.scenario)?;
            let action = scenario
                .action(&e.action)
                .ok_or_else(|| BenchError::Usage(format!("no action `{}` in scenario", e.action)))?;
            let dim_involved = augmi::determine_involved(scenario.prior.layout(), action)?.dim();
            let kde = ExperimentConfig::new(e.particles, 1, e.seed).kde;
            let (value, elapsed) = evaluate(&scenario.prior, action, method, e.particles, &kde, e.seed)?;
            let row = ResultRow {
                method: method.as_str().to_string(),
                action_id: e.action.clone(),
                trial: 0,
                dim_full: scenario.prior.dim(),
                dim_involved,
                n_particles: if method == Method::Analytic { 0 } else { e.particles },
                mi_estimate: value,
                elapsed_ns: if e.timing { elapsed.as_nanos() as u64 } else { 0 },
                seed: e.seed,
            };
            let stdout = std::io::stdout();
            write_rows(&[row], stdout.lock()).map_err(|source| BenchError::Csv {
                path: "<stdout>".into(),
                source,
            })
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            match e {
                BenchError::Usage(_) => 1,
                _ => 2,
            }
        }
    }
}
