//! `mfr` — batch front end for the routing-game toolkit.
//!
//! Subcommands: `solve` (equilibrium + artifacts CSV), `propagate` (density
//! snapshots), `simulate` (finite-population tax and exploitability
//! estimates), `sweep` (entropy/cost table over interaction matrices).
//!
//! Exit codes are stable: 0 success, 2 input or validation error, 3 numeric
//! failure. `MFR_THREADS` caps the worker threads used for replications.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mfr_core::dynamics::propagate;
use mfr_core::export;
use mfr_core::scenario::{self, ScenarioError};
use mfr_core::sim;
use mfr_core::solver::{solve, stationarity_residual, value_function};
use mfr_core::{GameSpec64, PolicyProfile64};

#[derive(Parser)]
#[command(name = "mfr", version, about = "Multi-team routing games under log-population congestion pricing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SpecArgs {
    /// Game spec or grid scenario file (JSON)
    #[arg(long)]
    spec: PathBuf,
    /// Output directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Force the literal cost convention for grid scenarios: keep obstacle
    /// cells and off-board moves as penalty-priced actions
    #[arg(long)]
    literal_costs: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the equilibrium profile and export solver artifacts
    Solve {
        #[command(flatten)]
        common: SpecArgs,
    },
    /// Propagate team densities and write per-snapshot CSVs
    Propagate {
        #[command(flatten)]
        common: SpecArgs,
        /// Use the equilibrium policy from the solver
        #[arg(long, conflicts_with = "policy_file")]
        equilibrium: bool,
        /// Load the policy profile from a JSON file
        #[arg(long)]
        policy_file: Option<PathBuf>,
        /// Comma-separated snapshot times (empty string: first and last);
        /// defaults to 0,15,27,48 clipped to the horizon
        #[arg(long)]
        snapshots: Option<String>,
    },
    /// Estimate finite-population taxes and per-team exploitability
    Simulate {
        #[command(flatten)]
        common: SpecArgs,
        /// Total number of drivers
        #[arg(long)]
        n: u64,
        /// Monte Carlo replications
        #[arg(long, default_value_t = 50)]
        reps: u32,
        /// Root RNG seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Solve once per interaction matrix and tabulate entropy and cost
    Sweep {
        #[command(flatten)]
        common: SpecArgs,
        /// JSON file with an array of interaction matrices
        #[arg(long)]
        interaction_list: PathBuf,
        /// Snapshot times for the entropy columns (same format as propagate)
        #[arg(long)]
        snapshots: Option<String>,
    },
}

enum Failure {
    Input(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<mfr_core::solver::SolverError> for Failure {
    fn from(e: mfr_core::solver::SolverError) -> Self {
        Failure::Numeric(e.to_string())
    }
}

impl From<mfr_core::dynamics::DynamicsError> for Failure {
    fn from(e: mfr_core::dynamics::DynamicsError) -> Self {
        Failure::Numeric(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(format!("io error: {e}"))
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}

fn configure_threads() {
    if let Ok(value) = std::env::var("MFR_THREADS") {
        if let Ok(n) = value.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn load_spec(args: &SpecArgs) -> Result<GameSpec64, Failure> {
    let literal = args.literal_costs.then_some(true);
    scenario::load_spec_auto(&args.spec, literal).map_err(|e| match e {
        // a singular interaction matrix is the solver's failure mode, not a
        // malformed input: report it under the numeric exit code
        ScenarioError::Validation(v)
            if !v.is_empty()
                && v.iter()
                    .all(|x| matches!(x, mfr_core::Violation::InteractionSingular { .. })) =>
        {
            Failure::Numeric(format!(
                "SingularInteraction: {}",
                v.first().map(|x| x.to_string()).unwrap_or_default()
            ))
        }
        other => Failure::Input(other.to_string()),
    })
}

fn out_file(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn parse_snapshots(raw: &Option<String>, horizon: usize) -> Vec<usize> {
    let mut ts: Vec<usize> = match raw {
        None => vec![0, 15, 27, 48],
        Some(s) if s.trim().is_empty() => vec![0, horizon],
        Some(s) => s
            .split(',')
            .filter_map(|part| part.trim().parse::<usize>().ok())
            .collect(),
    };
    ts.retain(|&t| t <= horizon);
    ts.sort_unstable();
    ts.dedup();
    if ts.is_empty() {
        ts = vec![0, horizon];
    }
    ts
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Solve { common } => cmd_solve(&common),
        Command::Propagate {
            common,
            equilibrium,
            policy_file,
            snapshots,
        } => cmd_propagate(&common, equilibrium, policy_file.as_deref(), &snapshots),
        Command::Simulate {
            common,
            n,
            reps,
            seed,
        } => cmd_simulate(&common, n, reps, seed),
        Command::Sweep {
            common,
            interaction_list,
            snapshots,
        } => cmd_sweep(&common, &interaction_list, &snapshots),
    }
}

fn cmd_solve(common: &SpecArgs) -> Result<(), Failure> {
    let spec = load_spec(common)?;
    let artifacts = solve(&spec)?;
    let residual = stationarity_residual(&spec, &artifacts);
    let values = value_function(&artifacts, &spec.initial_density, 0)?;

    let mut w = out_file(&common.out, "artifacts.csv")?;
    export::write_artifacts_csv(&mut w, &spec, &artifacts)?;
    w.flush()?;

    println!("stationarity_residual: {residual}");
    for (l, v) in values.iter().enumerate() {
        println!("value_team_{l}: {v}");
    }
    Ok(())
}

fn cmd_propagate(
    common: &SpecArgs,
    equilibrium: bool,
    policy_file: Option<&Path>,
    snapshots: &Option<String>,
) -> Result<(), Failure> {
    let spec = load_spec(common)?;
    let policy: PolicyProfile64 = match (equilibrium, policy_file) {
        (true, _) => solve(&spec)?.policy,
        (false, Some(path)) => scenario::load_policy(path, &spec)?,
        (false, None) => {
            return Err(Failure::Input(
                "propagate needs either --equilibrium or --policy-file".into(),
            ))
        }
    };
    let trajectory = propagate(&spec, &policy);
    let ts = parse_snapshots(snapshots, spec.horizon);
    for &t in &ts {
        let mut w = out_file(&common.out, &format!("density_t{t}.csv"))?;
        export::write_density_snapshot_csv(&mut w, &spec, &trajectory, t)?;
        w.flush()?;
    }
    println!("wrote {} snapshots: {ts:?}", ts.len());
    Ok(())
}

fn cmd_simulate(common: &SpecArgs, n: u64, reps: u32, seed: u64) -> Result<(), Failure> {
    if n == 0 || reps == 0 {
        return Err(Failure::Input("--n and --reps must be positive".into()));
    }
    let spec = load_spec(common)?;
    let artifacts = solve(&spec)?;
    let mut report = sim::estimate_expected_tax(&spec, &artifacts.policy, n, reps, seed);
    report.epsilon = sim::estimate_epsilon(&spec, n, reps, seed)?;

    let mut w = out_file(&common.out, "tax_cells.csv")?;
    export::write_sim_cells_csv(&mut w, &spec, &report)?;
    w.flush()?;

    let summary = export::sim_summary_text(&report);
    let mut w = out_file(&common.out, "summary.txt")?;
    export::write_provenance(&mut w, &export::spec_hash(&spec), Some(seed))?;
    w.write_all(summary.as_bytes())?;
    w.flush()?;

    print!("{summary}");
    Ok(())
}

fn cmd_sweep(
    common: &SpecArgs,
    interaction_list: &Path,
    snapshots: &Option<String>,
) -> Result<(), Failure> {
    let base = load_spec(common)?;
    let matrices = scenario::load_interaction_list::<f64>(interaction_list)?;
    if matrices.is_empty() {
        return Err(Failure::Input("interaction list is empty".into()));
    }
    let ts = parse_snapshots(snapshots, base.horizon);

    let mut w = out_file(&common.out, "sweep.csv")?;
    export::write_provenance(&mut w, &export::spec_hash(&base), None)?;
    let mut header = String::from("index,interaction,status");
    for l in 0..base.team_count {
        for &t in &ts {
            header.push_str(&format!(",entropy_team{l}_t{t}"));
        }
    }
    for l in 0..base.team_count {
        header.push_str(&format!(",total_cost_team{l}"));
    }
    writeln!(w, "{header}")?;

    for (idx, matrix) in matrices.iter().enumerate() {
        let flat = matrix
            .iter()
            .flatten()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";");
        let mut spec = base.clone();
        spec.interaction = matrix.clone();
        let violations = spec.validate();
        let solved = if violations.is_empty() {
            solve(&spec).ok()
        } else {
            None
        };
        match solved {
            Some(artifacts) => {
                let trajectory = propagate(&spec, &artifacts.policy);
                let values = value_function(&artifacts, &spec.initial_density, 0)?;
                let mut row = format!("{idx},{flat},ok");
                for l in 0..spec.team_count {
                    for &t in &ts {
                        row.push_str(&format!(",{}", trajectory.spatial_entropy(l, t)));
                    }
                }
                for v in &values {
                    row.push_str(&format!(",{v}"));
                }
                writeln!(w, "{row}")?;
            }
            None => {
                let blanks = ",".repeat(base.team_count * ts.len() + base.team_count);
                writeln!(w, "{idx},{flat},failed{blanks}")?;
            }
        }
    }
    w.flush()?;
    println!("wrote sweep table for {} matrices", matrices.len());
    Ok(())
}
