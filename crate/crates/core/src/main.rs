use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use efflab::experiments::{run_experiment, ExperimentConfig, CATALOG};
use efflab::lattice::FamilyConfig;

/// Seeded experiments checking strict-local-martingale deflators,
/// short-sale-constrained duality and equilibrium constructions.
///
/// Exit status: 0 if every asserted claim holds, 1 if one fails, 2 on a
/// usage or configuration error.
#[derive(Parser)]
#[command(name = "efflab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Defect of Z^(1) and true-martingale property of Z^(beta).
    Prop51(Common),
    /// Drift of S = 1/Z^(1) under P and under P^(beta).
    Example1(Common),
    /// Log-optimality of holding one share.
    Example2(Common),
    /// Duality equivalences over a family of finite lattices.
    LatticeDuality {
        /// `default`, or a JSON file with the family parameters.
        #[arg(long, default_value = "default")]
        grid: String,
        #[command(flatten)]
        common: Common,
    },
    /// Negishi weights, aggregation round trip and concavity chain.
    Negishi(Common),
    /// Gluing agents' deflators along their holding sets.
    Patching(Common),
    /// Representative utility and optimality of the market portfolio.
    ReprAgent(Common),
    /// Print the experiment catalogue.
    List,
    /// Run the experiment named in a config file.
    Run(Common),
}

/// Flags override values from `--config`.
#[derive(Args, Default)]
struct Common {
    /// JSON config file; its fields are the long flag names.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Observation bins for drift tests and trading.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Output directory for CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Confidence level of intervals.
    #[arg(long)]
    level: Option<f64>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn build_config(name: Option<&str>, c: &Common, grid: Option<&str>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    match name {
        Some(n) => cfg.experiment = n.to_string(),
        None if cfg.experiment.is_empty() => {
            return Err(Failure::Usage("run needs --config naming an experiment".into()));
        }
        None => {}
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.paths {
        cfg.paths = v;
    }
    if let Some(v) = c.steps {
        cfg.steps = v;
    }
    if let Some(v) = c.bins {
        cfg.bins = v;
    }
    if let Some(v) = c.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = c.beta {
        cfg.beta = v;
    }
    if let Some(v) = c.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = c.level {
        cfg.level = v;
    }
    if let Some(v) = &c.out {
        cfg.out = Some(v.display().to_string());
    }
    match grid {
        None | Some("default") => {}
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read grid {path}: {e}")))?;
            let fc: FamilyConfig =
                serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("grid {path}: {e}")))?;
            cfg.grid = Some(fc);
        }
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn execute(cfg: &ExperimentConfig) -> Result<bool, Failure> {
    let out = run_experiment(cfg).map_err(|e| Failure::Runtime(e.to_string()))?;
    let dir = PathBuf::from(cfg.out.as_deref().unwrap_or("."));
    let written = out.write_to(&dir).map_err(|e| Failure::Runtime(e.to_string()))?;
    for c in &out.claims {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(out.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common, grid) = match &cli.command {
        Command::List => {
            for e in CATALOG {
                println!("{:<16} {}", e.name, e.claim);
            }
            return ExitCode::SUCCESS;
        }
        Command::Prop51(c) => (Some("prop51"), c, None),
        Command::Example1(c) => (Some("example1"), c, None),
        Command::Example2(c) => (Some("example2"), c, None),
        Command::LatticeDuality { grid, common } => (Some("lattice-duality"), common, Some(grid.as_str())),
        Command::Negishi(c) => (Some("negishi"), c, None),
        Command::Patching(c) => (Some("patching"), c, None),
        Command::ReprAgent(c) => (Some("repr-agent"), c, None),
        Command::Run(c) => (None, c, None),
    };
    let result = build_config(name, common, grid).and_then(|cfg| execute(&cfg));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
