use crate::flow::{self, Meters, Objective, RunOptions, StepSchedule, Trajectory};
use crate::rng;
use crate::{Error, Result};

use super::{gradient, gradient_reg, objective, objective_reg, FactorPair, TargetMatrix};

/// Extra per-iteration columns logged by [`solve_from`].
pub const MF_METERS: [&str; 4] = ["gram_gap", "u_norm_sq", "v_norm_sq", "ratio_u_v"];

const MAX_RESAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitScheme {
    /// I.i.d. Gaussian entries.
    #[default]
    Gaussian,
    /// Gaussian draw, then `U` and `V` rescaled to the mean of their squared
    /// Frobenius norms so that `|U|_F = |V|_F` at `t = 0`.
    Equalized,
}

/// Entry variance `eps / (100 d r)` with `d = max(d1, d2)`.
pub fn init_variance(d1: usize, d2: usize, r: usize, eps: f64) -> f64 {
    eps / (100.0 * d1.max(d2) as f64 * r as f64)
}

/// Unguarded Gaussian draw with the given entry variance.
pub fn sample_factors(
    d1: usize,
    d2: usize,
    r: usize,
    variance: f64,
    scheme: InitScheme,
    seed: u64,
) -> FactorPair {
    let mut g = rng::seeded(seed);
    let std = variance.sqrt();
    let u = rng::gaussian_matrix(d1, r, std, &mut g);
    let v = rng::gaussian_matrix(d2, r, std, &mut g);
    let mut fp = FactorPair { u, v };
    if scheme == InitScheme::Equalized {
        let (nu, nv) = (fp.u.norm_squared(), fp.v.norm_squared());
        if nu > 0.0 && nv > 0.0 {
            let target = 0.5 * (nu + nv);
            fp.u *= (target / nu).sqrt();
            fp.v *= (target / nv).sqrt();
        }
    }
    fp
}

/// Small random initialization satisfying `|U_0|_F^2 <= eps`,
/// `|V_0|_F^2 <= eps` and `|U_0^T U_0 - V_0^T V_0|_F <= eps / 2`.
pub fn init_factors(d1: usize, d2: usize, r: usize, eps: f64, seed: u64) -> Result<FactorPair> {
    if !(eps > 0.0) || r == 0 || d1 == 0 || d2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "need eps > 0 and positive dimensions, got eps={eps}, {d1}x{d2}, r={r}"
        )));
    }
    let variance = init_variance(d1, d2, r, eps);
    let mut last = String::new();
    for attempt in 0..MAX_RESAMPLES {
        let candidate_seed = seed.wrapping_add((attempt as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let fp = sample_factors(d1, d2, r, variance, InitScheme::Gaussian, candidate_seed);
        let (nu, nv, gap) = (fp.u.norm_squared(), fp.v.norm_squared(), fp.gram_gap());
        if nu <= eps && nv <= eps && gap <= 0.5 * eps {
            return Ok(fp);
        }
        last = format!("|U|^2={nu:.3e}, |V|^2={nv:.3e}, gap={gap:.3e}; try a smaller variance");
    }
    Err(Error::Initialization {
        attempts: MAX_RESAMPLES,
        reason: last,
    })
}

#[derive(Debug, Clone)]
pub struct MfProblem<'a> {
    pub target: &'a TargetMatrix,
    pub regularized: bool,
}

impl Objective for MfProblem<'_> {
    type Params = FactorPair;

    fn value(&self, fp: &FactorPair) -> Result<f64> {
        if self.regularized {
            objective_reg(fp, self.target)
        } else {
            objective(fp, self.target)
        }
    }

    fn gradient(&self, fp: &FactorPair) -> Result<FactorPair> {
        if self.regularized {
            gradient_reg(fp, self.target)
        } else {
            gradient(fp, self.target)
        }
    }
}

/// Balancedness, monotonicity and boundedness flags at one logged iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    pub t: usize,
    pub gram_gap: f64,
    pub objective: f64,
    pub u_norm_sq: f64,
    pub v_norm_sq: f64,
    /// `gram_gap <= eps`
    pub balanced: bool,
    /// objective no larger than at the previous logged iterate, up to the
    /// round-off floor `(eps_mach |M*|_F)^2 d1 d2`
    pub decreasing: bool,
    /// both squared norms `<= 5 sqrt(r) |M*|_F`
    pub bounded: bool,
}

impl BalanceReport {
    pub fn all_hold(&self) -> bool {
        self.balanced && self.decreasing && self.bounded
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub steps: usize,
    pub record_every: usize,
    pub regularized: bool,
}

impl SolveOptions {
    pub fn new(steps: usize) -> Self {
        Self {
            steps,
            record_every: 1,
            regularized: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MfRun {
    pub factors: FactorPair,
    pub trajectory: Trajectory<FactorPair>,
    pub reports: Vec<BalanceReport>,
}

impl MfRun {
    /// First logged iterate where any of the three flags fails.
    pub fn first_violation(&self) -> Option<usize> {
        self.reports.iter().find(|r| !r.all_hold()).map(|r| r.t)
    }
}

/// Plain GD from [`init_factors`], logging every iteration.
pub fn solve(
    target: &TargetMatrix,
    eps: f64,
    schedule: &StepSchedule,
    steps: usize,
    seed: u64,
) -> Result<MfRun> {
    let init = init_factors(target.d1(), target.d2(), target.rank, eps, seed)?;
    solve_from(target, init, eps, schedule, SolveOptions::new(steps))
}

pub fn solve_from(
    target: &TargetMatrix,
    init: FactorPair,
    eps: f64,
    schedule: &StepSchedule,
    opts: SolveOptions,
) -> Result<MfRun> {
    let problem = MfProblem {
        target,
        regularized: opts.regularized,
    };
    let meters = Meters::new(&MF_METERS, |fp: &FactorPair| {
        let (nu, nv) = (fp.u.norm_squared(), fp.v.norm_squared());
        vec![fp.gram_gap(), nu, nv, nu / nv]
    });
    let trajectory = flow::run(
        &problem,
        init,
        schedule,
        RunOptions::new(opts.steps, opts.record_every),
        &meters,
    )?;
    let bound = 5.0 * (target.rank as f64).sqrt() * target.fro_norm();
    // Objective values below the round-off floor of the residual are noise.
    let floor = (f64::EPSILON * target.fro_norm()).powi(2) * (target.d1() * target.d2()) as f64;
    let mut prev = f64::INFINITY;
    let reports = trajectory
        .records
        .iter()
        .map(|rec| {
            let (gap, nu, nv) = (rec.meters[0], rec.meters[1], rec.meters[2]);
            let report = BalanceReport {
                t: rec.t,
                gram_gap: gap,
                objective: rec.objective,
                u_norm_sq: nu,
                v_norm_sq: nv,
                balanced: gap <= eps,
                decreasing: rec.objective <= prev + floor,
                bounded: nu <= bound && nv <= bound,
            };
            prev = rec.objective;
            report
        })
        .collect();
    Ok(MfRun {
        factors: trajectory.final_params.clone(),
        trajectory,
        reports,
    })
}
