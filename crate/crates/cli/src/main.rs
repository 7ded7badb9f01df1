use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sedlab_cli::{run_experiment, validate_config, with_threads, ExperimentConfig, ExperimentKind, InvalidConfig};

#[derive(Parser)]
#[command(name = "sedlab", version, about = "Zero-point-field ensemble and quantum reference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Empirical field covariance against the closed form.
    Covariance(Common),
    /// Energy relaxation of a displaced ensemble.
    Relax(Common),
    /// Stationary ensemble fields and power balance.
    Stats(Common),
    /// Hydrodynamic residuals of a Schrödinger-evolved coherent state.
    Hydro(Common),
    /// Variational ground state.
    Solve(Common),
    /// Dissipation-diffusion balance and the commutator.
    Balance(Common),
    /// Ensemble statistics against the quantum ground state.
    Compare(Common),
}

#[derive(Args)]
struct Common {
    /// JSON file overriding the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

impl Command {
    fn split(self) -> (ExperimentKind, Common) {
        match self {
            Command::Covariance(c) => (ExperimentKind::Covariance, c),
            Command::Relax(c) => (ExperimentKind::Relax, c),
            Command::Stats(c) => (ExperimentKind::Stats, c),
            Command::Hydro(c) => (ExperimentKind::Hydro, c),
            Command::Solve(c) => (ExperimentKind::Solve, c),
            Command::Balance(c) => (ExperimentKind::Balance, c),
            Command::Compare(c) => (ExperimentKind::Compare, c),
        }
    }
}

fn load(kind: ExperimentKind, args: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::from_json(kind, &std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::defaults(kind),
    };
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    Ok(config)
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().command.split();
    let config = match load(kind, &args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if args.print_config {
        println!("{}", serde_json::to_string_pretty(&config).expect("config serializes"));
        return ExitCode::SUCCESS;
    }
    let violations = validate_config(&config);
    if !violations.is_empty() {
        println!("{}", serde_json::json!({ "violations": violations }));
        return ExitCode::from(2);
    }
    let result = with_threads(args.threads, || run_experiment(&config)).and_then(|r| r);
    match result {
        Ok(manifest) => {
            for c in &manifest.checks {
                let verdict = if c.pass { "PASS" } else { "FAIL" };
                println!("{verdict} {} = {:e} ({} {:e})", c.name, c.value, c.relation, c.limit);
            }
            println!(
                "{} checks, {} in {:.1} s, outputs in {}",
                manifest.checks.len(),
                if manifest.passed { "all passed" } else { "some failed" },
                manifest.wall_time_s,
                config.output_dir.display()
            );
            if manifest.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            if let Some(InvalidConfig(v)) = e.downcast_ref::<InvalidConfig>() {
                println!("{}", serde_json::json!({ "violations": v }));
                return ExitCode::from(2);
            }
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
