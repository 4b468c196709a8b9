use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use autobalance_core::par::Exec;
use autobalance_xpcli::config::Fig3Config;
use autobalance_xpcli::{execute, ExperimentConfig, Preset, RunReport};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "autobalance", version, about = "Balancedness experiments for GD on homogeneous models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: config `out`, then $AUTOBALANCE_OUT, then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 2 if any monitored property is violated.
    #[arg(long)]
    strict: bool,
    /// Run on a single thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fig3Variant {
    Balanced,
    Unbalanced,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Plain vs regularized matrix factorization.
    Fig1(Common),
    /// Three-layer ReLU network, balanced and unbalanced initializations.
    Fig3 {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "both")]
        variant: Fig3Variant,
        /// Use the original widths instead of the reduced ones.
        #[arg(long)]
        full_size: bool,
    },
    /// Matrix factorization with balancedness monitoring.
    Mf(Common),
    /// Rank-1 factorization with stage monitors.
    Rank1(Common),
    /// Layer-balance drift versus step size.
    Drift(Common),
    /// Runs whatever preset the config file names.
    Run(Common),
    /// Prints the default configuration.
    Defaults,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn report(r: &RunReport) {
    for run in &r.runs {
        let bad: Vec<String> = run
            .violations
            .iter()
            .filter_map(|(k, v)| v.map(|t| format!("{k}@{t}")))
            .collect();
        let status = if bad.is_empty() { "ok".to_string() } else { format!("violated: {}", bad.join(", ")) };
        println!(
            "{:<24} iterations={:<8} final_objective={:.6e} {}",
            run.name, run.iterations, run.final_objective, status
        );
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<bool> {
    let cli = Cli::parse();
    let (common, presets, mut cfg) = match &cli.command {
        Command::Defaults => {
            print!("{}", ExperimentConfig::default().to_toml()?);
            return Ok(true);
        }
        Command::Fig1(c) => (c, vec![Preset::Fig1Mf], load(c)?),
        Command::Fig3 {
            common,
            variant,
            full_size,
        } => {
            let mut cfg = load(common)?;
            if *full_size {
                cfg.fig3 = Fig3Config::full_size();
            }
            let presets = match variant {
                Fig3Variant::Balanced => vec![Preset::Fig3Balanced],
                Fig3Variant::Unbalanced => vec![Preset::Fig3Unbalanced],
                Fig3Variant::Both => vec![Preset::Fig3Balanced, Preset::Fig3Unbalanced],
            };
            (common, presets, cfg)
        }
        Command::Mf(c) => (c, vec![Preset::MfRankR], load(c)?),
        Command::Rank1(c) => (c, vec![Preset::Rank1], load(c)?),
        Command::Drift(c) => (c, vec![Preset::FlowDrift], load(c)?),
        Command::Run(c) => {
            let cfg = load(c)?;
            (c, vec![cfg.preset], cfg)
        }
    };
    let exec = if common.sequential { Exec::Sequential } else { Exec::Parallel };
    let out = cfg.output_dir(common.out.as_deref());
    let mut clean = true;
    for preset in presets {
        cfg.preset = preset;
        let r = execute(&cfg, &out, exec)?;
        report(&r);
        clean &= r.is_clean();
    }
    println!("artifacts in {}", out.display());
    Ok(clean || !common.strict)
}
