//! Command-line front end: validate, expand, run, compare, explore.
//!
//! Exit codes: 0 on success, 1 when validation, a scenario or a policy
//! comparison fails, 2 on usage errors (from argument parsing).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use grafcet::analyzer::{analyze, expand_macros, AnalyzedModel};
use grafcet::engine::compare_policies;
use grafcet::explorer::explore;
use grafcet::parser::parse_model;
use grafcet::printer::print_model;
use grafcet::scenario::{parse_scenario, run_scenario, Scenario};
use grafcet::state::{EvolutionPolicy, Policy};

#[derive(Parser)]
#[command(name = "grafcet", version, about = "Deterministic IEC 60848 GRAFCET interpreter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a model; exit 0 iff it has no errors.
    Validate { file: PathBuf },
    /// Print the model with every macro step replaced by its expansion.
    Expand { file: PathBuf },
    /// Run a scenario script against a model.
    Run {
        file: PathBuf,
        /// Scenario script (.gsc) to execute.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = PolicyArg::Preemptive)]
        policy: PolicyArg,
        /// Budget on evolutions within a single run to stability.
        #[arg(long, default_value_t = 100_000)]
        max_evolutions: u64,
        /// Write the full run trace to this JSONL file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a scenario's input events under both forcing policies and
    /// report the first divergence.
    Compare {
        file: PathBuf,
        /// Scenario script (.gsc) whose events drive both runs.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        max_evolutions: u64,
    },
    /// Explore the stable-state graph over boolean input events.
    Explore {
        file: PathBuf,
        /// Number of input events to explore away from the initial state.
        #[arg(long, default_value_t = 5)]
        depth: usize,
        /// Maximum number of inputs changed by a single event (0 means 1).
        #[arg(long, default_value_t = 1)]
        multi: usize,
        #[arg(long, value_enum, default_value_t = PolicyArg::Preemptive)]
        policy: PolicyArg,
        #[arg(long, default_value_t = 100_000)]
        max_evolutions: u64,
        /// Write a Graphviz rendering of the graph to this file.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Preemptive,
    TwoPhase,
}

impl PolicyArg {
    fn to_policy(self, max_evolutions: u64) -> Policy {
        let forcing_evaluation = match self {
            PolicyArg::Preemptive => EvolutionPolicy::Preemptive,
            PolicyArg::TwoPhase => EvolutionPolicy::TwoPhase,
        };
        Policy { forcing_evaluation, max_evolutions }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Validate { file } => validate(&file),
        Command::Expand { file } => expand(&file),
        Command::Run { file, scenario, policy, max_evolutions, trace } => {
            run(&file, &scenario, policy.to_policy(max_evolutions), trace.as_deref())
        }
        Command::Compare { file, scenario, max_evolutions } => {
            compare(&file, &scenario, max_evolutions)
        }
        Command::Explore { file, depth, multi, policy, max_evolutions, dot } => explore_cmd(
            &file,
            depth,
            multi,
            policy.to_policy(max_evolutions),
            dot.as_deref(),
        ),
    }
}

fn read(path: &Path) -> Result<String, ExitCode> {
    fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::FAILURE
    })
}

/// Parses and analyzes a model file, printing every problem on stdout.
fn load(path: &Path) -> Result<AnalyzedModel, ExitCode> {
    let source = read(path)?;
    let name = path.display().to_string();
    let model = match parse_model(&name, &source) {
        Ok(model) => model,
        Err(diags) => {
            for d in diags {
                println!("{d}");
            }
            return Err(ExitCode::FAILURE);
        }
    };
    match analyze(&model) {
        Ok(analyzed) => {
            for w in &analyzed.warnings {
                println!("{w}");
            }
            Ok(analyzed)
        }
        Err(error) => {
            println!("error: {error}");
            Err(ExitCode::FAILURE)
        }
    }
}

fn load_scenario(path: &Path) -> Result<Scenario, ExitCode> {
    let source = read(path)?;
    let name = path.display().to_string();
    parse_scenario(&name, &source).map_err(|d| {
        println!("{d}");
        ExitCode::FAILURE
    })
}

fn validate(file: &Path) -> ExitCode {
    let Ok(model) = load(file) else {
        return ExitCode::FAILURE;
    };
    println!(
        "ok: {} partial Grafcet(s), {} step(s), {} transition(s)",
        model.partials.len(),
        model.steps().count(),
        model.transitions().count()
    );
    ExitCode::SUCCESS
}

fn expand(file: &Path) -> ExitCode {
    let source = match read(file) {
        Ok(source) => source,
        Err(code) => return code,
    };
    let name = file.display().to_string();
    let model = match parse_model(&name, &source) {
        Ok(model) => model,
        Err(diags) => {
            for d in diags {
                println!("{d}");
            }
            return ExitCode::FAILURE;
        }
    };
    match expand_macros(&model) {
        Ok(expanded) => {
            print!("{}", print_model(&expanded));
            ExitCode::SUCCESS
        }
        Err(error) => {
            println!("error: {error}");
            ExitCode::FAILURE
        }
    }
}

fn run(file: &Path, scenario_file: &Path, policy: Policy, trace: Option<&Path>) -> ExitCode {
    let Ok(model) = load(file) else {
        return ExitCode::FAILURE;
    };
    let Ok(scenario) = load_scenario(scenario_file) else {
        return ExitCode::FAILURE;
    };
    let result = run_scenario(&model, &scenario, policy);
    if let Some(path) = trace {
        let mut contents = result.trace.join("\n");
        contents.push('\n');
        if let Err(e) = fs::write(path, contents) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    }
    for failure in &result.failures {
        println!("{failure}");
    }
    if result.passed {
        println!("scenario passed");
        ExitCode::SUCCESS
    } else {
        println!("scenario failed: {} check(s) failed", result.failures.len());
        ExitCode::FAILURE
    }
}

fn compare(file: &Path, scenario_file: &Path, max_evolutions: u64) -> ExitCode {
    let Ok(model) = load(file) else {
        return ExitCode::FAILURE;
    };
    let Ok(scenario) = load_scenario(scenario_file) else {
        return ExitCode::FAILURE;
    };
    let mut offset = 0;
    for events in scenario.event_segments() {
        if let Some(mut divergence) = compare_policies(&model, max_evolutions, &events) {
            divergence.at_event += offset;
            println!("policies diverge {divergence}");
            return ExitCode::FAILURE;
        }
        offset += events.len();
    }
    println!("policies are equivalent");
    ExitCode::SUCCESS
}

fn explore_cmd(
    file: &Path,
    depth: usize,
    multi: usize,
    policy: Policy,
    dot: Option<&Path>,
) -> ExitCode {
    let Ok(model) = load(file) else {
        return ExitCode::FAILURE;
    };
    let graph = explore(&model, policy, depth, multi);
    if let Some(path) = dot {
        if let Err(e) = fs::write(path, graph.to_dot()) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::FAILURE;
        }
    }
    println!("{}", graph.summary_json(&model));
    ExitCode::SUCCESS
}
