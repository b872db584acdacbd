use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedref_core::harness::default_out_dir;
use fedref_core::{run_simulation, sweep, write_outputs, Method, Result, SimConfig, SweepParam};

#[derive(Parser)]
#[command(name = "fedref", version, about = "Trust-aware federated client selection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and write `metrics.csv` and `summary.json`.
    Run {
        #[command(flatten)]
        common: Common,
        /// Output directory (default: out/<method>-seed<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one parameter over several seeds; one CSV per cell plus `aggregate.csv`.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values, e.g. `0.01,0.1,1`.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        values: Vec<f64>,
        /// Number of seeds per value, starting at the configured seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value = "out/sweep")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML file with `SimConfig` fields; omitted fields keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    v: Option<f64>,
}

impl Common {
    fn resolve(&self) -> Result<SimConfig> {
        let mut config = match &self.config {
            Some(path) => SimConfig::load(path)?,
            None => SimConfig::default(),
        };
        if let Some(method) = self.method {
            config.method = method;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(rounds) = self.rounds {
            config.horizon = rounds;
        }
        if let Some(v) = self.v {
            config.lyap.v = v;
        }
        config.validate()?;
        Ok(config)
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { common, out } => {
            let config = common.resolve()?;
            let out = out.unwrap_or_else(|| default_out_dir(&config));
            let run = run_simulation(&config)?;
            write_outputs(&run, &out)?;
            println!(
                "{} seed {}: {} rounds, time-average cost {:.6}, outputs in {}",
                config.method,
                config.seed,
                run.metrics.len(),
                run.final_time_avg_cost(),
                out.display()
            );
        }
        Command::Sweep { common, param, values, seeds, out } => {
            let config = common.resolve()?;
            let cells = sweep(&config, param, &values, seeds, Some(&out))?;
            for value in &values {
                let costs: Vec<f64> = cells.iter().filter(|c| c.value == *value).map(|c| c.time_avg_cost).collect();
                let mean = costs.iter().sum::<f64>() / costs.len() as f64;
                println!("{}={value}: mean time-average cost {mean:.6} over {} seeds", param.name(), costs.len());
            }
            println!("wrote {} cells to {}", cells.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
