//! Small-initialization GD on a rank-`r` target with balancedness,
//! monotonicity and boundedness monitored at every logged iterate.

use std::path::Path;

use anyhow::Result;
use autobalance_core::mf::{identities_check, init_factors, solve_from, MfRun, SolveOptions, TargetMatrix};

use super::{first_false, write_trajectory};
use crate::config::MfConfig;
use crate::summary::SummaryStats;

#[derive(Debug, Clone)]
pub struct MfOutcome {
    pub target: TargetMatrix,
    pub run: MfRun,
}

pub fn target(cfg: &MfConfig, seed: u64) -> Result<TargetMatrix> {
    Ok(match &cfg.target_csv {
        Some(path) => TargetMatrix::from_csv(path, cfg.rank)?,
        None => TargetMatrix::from_random_factors(cfg.d1, cfg.d2, cfg.rank, cfg.target_norm, seed)?,
    })
}

pub fn run(cfg: &MfConfig, seed: u64) -> Result<MfOutcome> {
    let target = target(cfg, seed)?;
    let schedule = cfg.schedule_for(target.fro_norm())?;
    let init = init_factors(target.d1(), target.d2(), target.rank, cfg.eps, seed ^ 0x3f)?;
    let mut opts = SolveOptions::new(cfg.steps);
    opts.record_every = cfg.record_every;
    opts.regularized = cfg.regularized;
    let run = solve_from(&target, init, cfg.eps, &schedule, opts)?;
    Ok(MfOutcome { target, run })
}

impl MfOutcome {
    pub fn write(&self, dir: &Path, seed: u64) -> Result<Vec<SummaryStats>> {
        let file = format!("mf_rank_r_seed{seed}.csv");
        write_trajectory(dir, &file, &self.run.trajectory, true)?;
        let mut s = SummaryStats::from_trajectory("mf_rank_r", file, &self.run.trajectory);
        let reports = &self.run.reports;
        s.violation("balanced", first_false(reports.iter().map(|r| (r.t, r.balanced))));
        s.violation("decreasing", first_false(reports.iter().map(|r| (r.t, r.decreasing))));
        s.violation("bounded", first_false(reports.iter().map(|r| (r.t, r.bounded))));
        if self.target.svd.is_some() {
            let ids = identities_check(&self.run.factors, &self.target)?;
            s.extra("final_identity_residual", ids.max_identity_residual());
        }
        s.extra("target_fro_norm", self.target.fro_norm());
        Ok(vec![s])
    }
}
