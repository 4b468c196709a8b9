//! Seeded experiment presets. Each module exposes an in-memory `run` and a
//! `write` that emits CSV trajectories plus summary statistics.

pub mod custom;
pub mod drift;
pub mod fig1;
pub mod fig3;
pub mod mf;
pub mod rank1;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{Context, Result};
use autobalance_core::flow::Trajectory;
use autobalance_core::par::Exec;

use crate::config::{ExperimentConfig, Preset};
use crate::summary::RunReport;

/// Runs the configured preset, writes its artifacts into `out` and returns
/// the report (also written as `<preset>_seed<seed>_summary.json`).
pub fn execute(cfg: &ExperimentConfig, out: &Path, exec: Exec) -> Result<RunReport> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let seed = cfg.seed;
    let runs = match cfg.preset {
        Preset::Fig1Mf => fig1::run(&cfg.fig1, seed)?.write(out, seed)?,
        Preset::Fig3Balanced => fig3::run(&cfg.fig3, fig3::Variant::Balanced, seed, exec)?.write(out, seed)?,
        Preset::Fig3Unbalanced => fig3::run(&cfg.fig3, fig3::Variant::Unbalanced, seed, exec)?.write(out, seed)?,
        Preset::MfRankR => mf::run(&cfg.mf, seed)?.write(out, seed)?,
        Preset::Rank1 => rank1::write(&rank1::run(&cfg.rank1, seed, exec)?, out)?,
        Preset::FlowDrift => drift::write(&cfg.drift, &drift::run(&cfg.drift, seed, exec)?, out, seed)?,
        Preset::Custom => custom::run(&cfg.custom, seed, exec)?.write(out, seed)?,
    };
    let report = RunReport {
        preset: cfg.preset.name().to_string(),
        seed,
        runs,
    };
    report.write_json(&out.join(format!("{}_seed{seed}_summary.json", cfg.preset.name())))?;
    Ok(report)
}

pub(crate) fn write_trajectory<P>(dir: &Path, file: &str, traj: &Trajectory<P>, include_eta: bool) -> Result<()> {
    let path = dir.join(file);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    traj.write_csv(BufWriter::new(f), include_eta)?;
    Ok(())
}

/// First logged `t` whose flag is false.
pub(crate) fn first_false<I: IntoIterator<Item = (usize, bool)>>(items: I) -> Option<usize> {
    items.into_iter().find(|&(_, ok)| !ok).map(|(t, _)| t)
}
