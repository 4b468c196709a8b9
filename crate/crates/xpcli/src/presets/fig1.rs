//! Plain versus regularized GD on a random rank-`r` factorization from the
//! same small initialization.

use std::path::Path;

use anyhow::Result;
use autobalance_core::flow::StepSchedule;
use autobalance_core::mf::{sample_factors, solve_from, InitScheme, MfRun, SolveOptions, TargetMatrix};

use super::{first_false, write_trajectory};
use crate::config::{Fig1Config, InitKind};
use crate::summary::SummaryStats;

/// Plain GD ratio `|U|^2 / |V|^2` must stay within this fraction of its start.
pub const RATIO_BAND: f64 = 0.01;
/// Convergence threshold relative to `|M*|_F^2`.
pub const CONVERGED: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Fig1Outcome {
    pub target: TargetMatrix,
    pub plain: MfRun,
    pub regularized: MfRun,
}

pub fn run(cfg: &Fig1Config, seed: u64) -> Result<Fig1Outcome> {
    let target = TargetMatrix::from_random_factors(cfg.d1, cfg.d2, cfg.rank, cfg.target_norm, seed)?;
    let scheme = match cfg.init {
        InitKind::Gaussian => InitScheme::Gaussian,
        InitKind::Equalized => InitScheme::Equalized,
    };
    let init = sample_factors(cfg.d1, cfg.d2, cfg.rank, cfg.init_variance, scheme, seed ^ 0xf1);
    let schedule = StepSchedule::constant(cfg.eta)?;
    let mut opts = SolveOptions::new(cfg.steps);
    opts.record_every = cfg.record_every;
    let eps = cfg.target_norm;
    let plain = solve_from(&target, init.clone(), eps, &schedule, opts)?;
    opts.regularized = true;
    let regularized = solve_from(&target, init, eps, &schedule, opts)?;
    Ok(Fig1Outcome {
        target,
        plain,
        regularized,
    })
}

/// Largest `|ratio_t / ratio_0 - 1|` and the first `t` leaving the band.
pub fn ratio_deviation(run: &MfRun) -> (f64, Option<usize>) {
    let ratios = run.trajectory.meter("ratio_u_v").expect("mf meter");
    let r0 = ratios[0];
    let dev: Vec<f64> = ratios.iter().map(|r| (r / r0 - 1.0).abs()).collect();
    let worst = dev.iter().copied().fold(0.0, f64::max);
    let first = first_false(run.trajectory.records.iter().zip(&dev).map(|(rec, &d)| (rec.t, d <= RATIO_BAND)));
    (worst, first)
}

/// First logged `t` with objective `<= CONVERGED |M*|_F^2`.
pub fn converged_at(run: &MfRun, target: &TargetMatrix) -> Option<usize> {
    let thr = CONVERGED * target.fro_norm().powi(2);
    run.trajectory.records.iter().find(|r| r.objective <= thr).map(|r| r.t)
}

impl Fig1Outcome {
    pub fn write(&self, dir: &Path, seed: u64) -> Result<Vec<SummaryStats>> {
        let mut out = Vec::new();
        for (label, run) in [("plain", &self.plain), ("regularized", &self.regularized)] {
            let file = format!("fig1_mf_{label}_seed{seed}.csv");
            write_trajectory(dir, &file, &run.trajectory, true)?;
            let mut s = SummaryStats::from_trajectory(format!("fig1_mf_{label}"), file, &run.trajectory);
            let conv = converged_at(run, &self.target);
            s.violation("converged", if conv.is_some() { None } else { Some(s.iterations) });
            if let Some(t) = conv {
                s.extra("converged_at", t);
            }
            let (worst, first) = ratio_deviation(run);
            s.extra("ratio_max_rel_deviation", worst);
            if label == "plain" {
                s.violation("ratio_within_band", first);
            }
            out.push(s);
        }
        Ok(out)
    }
}
