//! Rank-1 GD runs across consecutive seeds with the stage monitors.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::Result;
use autobalance_core::par::{self, Exec};
use autobalance_core::rank1::{
    derived, solve, stage1_monitor, stage2_monitor, Rank1Options, Rank1Problem, Rank1Run, StageReport,
};

use crate::config::Rank1Config;
use crate::summary::SummaryStats;

/// After `T1` the signal ratio must stay within `[1 / ENVELOPE, ENVELOPE]`.
pub const ENVELOPE: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct Rank1Outcome {
    pub seed: u64,
    pub run: Rank1Run,
    pub stage1: StageReport,
    pub stage2: Option<StageReport>,
    /// Min and max of `|alpha| / |beta|` from `T1` on.
    pub envelope: Option<(f64, f64)>,
    /// First `t` with `xi_{t+1} > xi_t`.
    pub xi_increase: Option<usize>,
}

impl Rank1Outcome {
    pub fn envelope_holds(&self) -> bool {
        self.envelope
            .is_none_or(|(lo, hi)| lo >= 1.0 / ENVELOPE && hi <= ENVELOPE)
    }
}

pub fn options(cfg: &Rank1Config) -> Rank1Options {
    Rank1Options {
        c_init: cfg.c_init,
        c_step: cfg.c_step,
        max_steps: cfg.max_steps,
        tol: cfg.tol,
        vectors_every: None,
    }
}

pub fn problem(cfg: &Rank1Config, seed: u64) -> Result<Rank1Problem> {
    Ok(Rank1Problem::random(cfg.dim, cfg.dim, cfg.sigma1, seed)?)
}

pub fn run_seed(cfg: &Rank1Config, seed: u64) -> Result<Rank1Outcome> {
    let prob = problem(cfg, seed)?;
    let run = solve(&prob, &options(cfg), seed)?;
    let stage1 = stage1_monitor(&run);
    let stage2 = run.t1.map(|t1| stage2_monitor(&run, t1));
    let envelope = run.t1.map(|t1| {
        run.states[t1..]
            .iter()
            .map(|s| s.ratio_signal())
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), r| (lo.min(r), hi.max(r)))
    });
    let xi_increase = run
        .states
        .windows(2)
        .position(|w| derived(&w[1], run.sigma1).xi > derived(&w[0], run.sigma1).xi);
    Ok(Rank1Outcome {
        seed,
        run,
        stage1,
        stage2,
        envelope,
        xi_increase,
    })
}

/// Seeds `seed, seed + 1, ..., seed + cfg.seeds - 1`, fanned out over threads.
pub fn run(cfg: &Rank1Config, seed: u64, exec: Exec) -> Result<Vec<Rank1Outcome>> {
    par::map_range(exec, cfg.seeds, |k| run_seed(cfg, seed + k as u64))
        .into_iter()
        .collect()
}

pub fn write(outcomes: &[Rank1Outcome], dir: &Path) -> Result<Vec<SummaryStats>> {
    let mut out = Vec::new();
    for o in outcomes {
        let file = format!("rank1_seed{}.csv", o.seed);
        o.run.write_csv(BufWriter::new(File::create(dir.join(&file))?))?;
        let mut s = SummaryStats::new(format!("rank1_seed{}", o.seed), file);
        s.iterations = o.run.states.len() - 1;
        s.final_objective = 0.5 * o.run.residuals.last().copied().unwrap_or(f64::NAN).powi(2);
        s.meter("residual_fro", &o.run.residuals);
        let xi: Vec<f64> = o.run.states.iter().map(|st| derived(st, o.run.sigma1).xi).collect();
        s.meter("xi", &xi);
        s.extra("hypothesis_met", o.run.sign_compliant);
        s.extra("t1", o.run.t1);
        s.extra("converged_at", o.run.converged_at);
        if let Some((lo, hi)) = o.envelope {
            s.extra("ratio_envelope", vec![lo, hi]);
        }
        if let Some(st2) = &o.stage2 {
            s.extra("c1", st2.c1);
            s.extra("xi_fitted_rate", st2.fitted_rate);
        }
        if o.run.sign_compliant {
            for c in &o.stage1.checks {
                s.violation(&format!("stage1_{}", c.name), c.first_violation);
            }
            if let Some(st2) = &o.stage2 {
                for c in &st2.checks {
                    s.violation(&format!("stage2_{}", c.name), c.first_violation);
                }
            }
            s.violation("xi_monotone", o.xi_increase);
            s.violation("converged", o.run.converged_at.is_none().then_some(s.iterations));
            let first_out = o.run.t1.and_then(|t1| {
                o.run.states[t1..]
                    .iter()
                    .position(|st| {
                        let r = st.ratio_signal();
                        !(1.0 / ENVELOPE..=ENVELOPE).contains(&r)
                    })
                    .map(|k| t1 + k)
            });
            s.violation("ratio_envelope", first_out);
        }
        out.push(s);
    }
    Ok(out)
}
