//! Rank-1 factorization `M* = sigma1 u* v*^T` reduced to four scalars: the
//! signal components `alpha = u . u*`, `beta = v . v*` and the norms of the
//! complements `alpha_perp`, `beta_perp`.

use std::io::Write;

use nalgebra::DVector;

use crate::flow::fmt17;
use crate::rng;
use crate::{Error, Result};

pub const DEFAULT_C_INIT: f64 = 0.005;
pub const DEFAULT_C_STEP: f64 = 0.01;
pub const DEFAULT_MAX_STEPS: usize = 1_000_000;
pub const DEFAULT_TOL: f64 = 1e-2;
/// `|alpha - beta| <= RATIO_BOUND (alpha + beta)` in stage 1.
pub const RATIO_BOUND: f64 = 99.0 / 101.0;

/// Slack for comparisons that hold with equality in exact arithmetic,
/// relative to `sigma1`.
const ROUNDOFF: f64 = 1e-12;

pub const CSV_HEADER: [&str; 9] = [
    "t",
    "alpha",
    "alpha_perp",
    "beta",
    "beta_perp",
    "h",
    "xi",
    "residual_fro",
    "ratio_signal",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Problem {
    pub sigma1: f64,
    pub u_star: DVector<f64>,
    pub v_star: DVector<f64>,
}

impl Rank1Problem {
    pub fn new(sigma1: f64, u_star: DVector<f64>, v_star: DVector<f64>) -> Result<Self> {
        if !(sigma1 > 0.0) || !sigma1.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma1 must be positive, got {sigma1}")));
        }
        for (name, x) in [("u*", &u_star), ("v*", &v_star)] {
            if x.is_empty() || (x.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be a unit vector, has norm {}",
                    x.norm()
                )));
            }
        }
        Ok(Self {
            sigma1,
            u_star,
            v_star,
        })
    }

    /// Uniformly random unit directions.
    pub fn random(d1: usize, d2: usize, sigma1: f64, seed: u64) -> Result<Self> {
        let mut g = rng::stream(seed, 0x51);
        let u = rng::unit_vector(d1, &mut g);
        let v = rng::unit_vector(d2, &mut g);
        Self::new(sigma1, u, v)
    }

    pub fn d1(&self) -> usize {
        self.u_star.len()
    }

    pub fn d2(&self) -> usize {
        self.v_star.len()
    }

    /// `|u v^T - M*|_F`, without forming the matrix.
    pub fn residual(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let a = u.dot(&self.u_star);
        let b = v.dot(&self.v_star);
        let sq = u.norm_squared() * v.norm_squared() - 2.0 * self.sigma1 * a * b + self.sigma1 * self.sigma1;
        sq.max(0.0).sqrt()
    }

    /// One GD step on `1/2 |u v^T - M*|_F^2`:
    /// `u <- u - eta (u v^T - M*) v`, `v <- v - eta (u v^T - M*)^T u`.
    pub fn vector_step(&self, u: &DVector<f64>, v: &DVector<f64>, eta: f64) -> (DVector<f64>, DVector<f64>) {
        let s = self.sigma1;
        let gu = u * v.norm_squared() - &self.u_star * (s * v.dot(&self.v_star));
        let gv = v * u.norm_squared() - &self.v_star * (s * u.dot(&self.u_star));
        (u - gu * eta, v - gv * eta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rank1State {
    pub alpha: f64,
    pub alpha_perp: f64,
    pub beta: f64,
    pub beta_perp: f64,
}

impl Rank1State {
    pub fn u_norm_sq(&self) -> f64 {
        self.alpha * self.alpha + self.alpha_perp * self.alpha_perp
    }

    pub fn v_norm_sq(&self) -> f64 {
        self.beta * self.beta + self.beta_perp * self.beta_perp
    }

    /// `|alpha| / |beta|`
    pub fn ratio_signal(&self) -> f64 {
        self.alpha.abs() / self.beta.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rank1Derived {
    /// `alpha beta - sigma1`
    pub h: f64,
    /// `alpha_perp^2 + beta_perp^2`
    pub xi: f64,
}

pub fn project(u: &DVector<f64>, v: &DVector<f64>, prob: &Rank1Problem) -> Result<Rank1State> {
    if u.len() != prob.d1() || v.len() != prob.d2() {
        return Err(Error::Dimension(format!(
            "vectors of length {}/{} for a problem of size {}/{}",
            u.len(),
            v.len(),
            prob.d1(),
            prob.d2()
        )));
    }
    let alpha = u.dot(&prob.u_star);
    let beta = v.dot(&prob.v_star);
    Ok(Rank1State {
        alpha,
        alpha_perp: (u - &prob.u_star * alpha).norm(),
        beta,
        beta_perp: (v - &prob.v_star * beta).norm(),
    })
}

pub fn step(s: &Rank1State, eta: f64, sigma1: f64) -> Rank1State {
    let shrink_u = 1.0 - eta * s.v_norm_sq();
    let shrink_v = 1.0 - eta * s.u_norm_sq();
    Rank1State {
        alpha: shrink_u * s.alpha + eta * sigma1 * s.beta,
        alpha_perp: shrink_u * s.alpha_perp,
        beta: shrink_v * s.beta + eta * sigma1 * s.alpha,
        beta_perp: shrink_v * s.beta_perp,
    }
}

pub fn derived(s: &Rank1State, sigma1: f64) -> Rank1Derived {
    Rank1Derived {
        h: s.alpha * s.beta - sigma1,
        xi: s.alpha_perp * s.alpha_perp + s.beta_perp * s.beta_perp,
    }
}

/// `(h, xi)` one step ahead, from the closed-form recurrences.
pub fn derived_step(s: &Rank1State, eta: f64, sigma1: f64) -> Rank1Derived {
    let (a, b) = (s.alpha, s.beta);
    let (ap2, bp2) = (s.alpha_perp * s.alpha_perp, s.beta_perp * s.beta_perp);
    let Rank1Derived { h, xi } = derived(s, sigma1);
    let coeff = 1.0 - eta * (a * a + b * b) + eta * eta * (a * b * h + a * a * bp2 + b * b * ap2 + ap2 * bp2);
    let h_next = coeff * h - eta * a * b * xi + eta * eta * sigma1 * ap2 * bp2;
    let xi_next = (1.0 - eta * s.v_norm_sq()).powi(2) * ap2 + (1.0 - eta * s.u_norm_sq()).powi(2) * bp2;
    Rank1Derived { h: h_next, xi: xi_next }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rank1Options {
    pub c_init: f64,
    pub c_step: f64,
    pub max_steps: usize,
    /// Stop once `|u v^T - M*|_F <= tol * sigma1`.
    pub tol: f64,
    /// Keep `(t, u, v)` every this many iterations.
    pub vectors_every: Option<usize>,
}

impl Default for Rank1Options {
    fn default() -> Self {
        Self {
            c_init: DEFAULT_C_INIT,
            c_step: DEFAULT_C_STEP,
            max_steps: DEFAULT_MAX_STEPS,
            tol: DEFAULT_TOL,
            vectors_every: None,
        }
    }
}

impl Rank1Options {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_init > 0.0) || !(self.c_step > 0.0) || !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "c_init, c_step and tol must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Rank1Run {
    pub sigma1: f64,
    pub c_step: f64,
    pub eta: f64,
    /// Initialization variance `c_init sqrt(sigma1 / d)`.
    pub delta: f64,
    /// `u*, v*` were negated so that the initial signal components are positive.
    pub flipped: bool,
    /// `alpha_0 beta_0 > 0`; when false, the monitors report the hypothesis as unmet.
    pub sign_compliant: bool,
    pub states: Vec<Rank1State>,
    pub residuals: Vec<f64>,
    pub vectors: Vec<(usize, DVector<f64>, DVector<f64>)>,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    /// First `t` with `alpha_t^2 + beta_t^2 >= sigma1 / 2`.
    pub t1: Option<usize>,
    pub converged_at: Option<usize>,
}

impl Rank1Run {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for (t, (s, r)) in self.states.iter().zip(&self.residuals).enumerate() {
            let d = derived(s, self.sigma1);
            let row = [s.alpha, s.alpha_perp, s.beta, s.beta_perp, d.h, d.xi, *r, s.ratio_signal()];
            let mut rec = vec![t.to_string()];
            rec.extend(row.iter().map(|&x| fmt17(x)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws `u_0, v_0 ~ N(0, delta I)` and runs GD with `eta = c_step / sigma1`
/// until the residual drops to `tol * sigma1` or `max_steps` is reached.
pub fn solve(prob: &Rank1Problem, opts: &Rank1Options, seed: u64) -> Result<Rank1Run> {
    opts.validate()?;
    let d = prob.d1().max(prob.d2()) as f64;
    let delta = opts.c_init * (prob.sigma1 / d).sqrt();
    let mut g = rng::stream(seed, 0x52);
    let u0 = rng::gaussian_vector(prob.d1(), delta.sqrt(), &mut g);
    let v0 = rng::gaussian_vector(prob.d2(), delta.sqrt(), &mut g);
    solve_from(prob, u0, v0, opts, delta)
}

pub fn solve_from(
    prob: &Rank1Problem,
    mut u: DVector<f64>,
    mut v: DVector<f64>,
    opts: &Rank1Options,
    delta: f64,
) -> Result<Rank1Run> {
    opts.validate()?;
    let mut prob = prob.clone();
    let first = project(&u, &v, &prob)?;
    let flipped = first.alpha < 0.0 && first.beta < 0.0;
    if flipped {
        prob.u_star.neg_mut();
        prob.v_star.neg_mut();
    }
    let sign_compliant = first.alpha * first.beta > 0.0;
    let eta = opts.c_step / prob.sigma1;
    let target = opts.tol * prob.sigma1;
    let mut states = Vec::new();
    let mut residuals = Vec::new();
    let mut vectors = Vec::new();
    let mut t1 = None;
    let mut converged_at = None;
    for t in 0..=opts.max_steps {
        let s = project(&u, &v, &prob)?;
        let res = prob.residual(&u, &v);
        if !res.is_finite() {
            return Err(Error::NonFinite { iteration: t });
        }
        if t1.is_none() && s.alpha * s.alpha + s.beta * s.beta >= 0.5 * prob.sigma1 {
            t1 = Some(t);
        }
        if let Some(k) = opts.vectors_every {
            if k > 0 && t % k == 0 {
                vectors.push((t, u.clone(), v.clone()));
            }
        }
        states.push(s);
        residuals.push(res);
        if res <= target {
            converged_at = Some(t);
            break;
        }
        if t == opts.max_steps {
            break;
        }
        (u, v) = prob.vector_step(&u, &v, eta);
    }
    Ok(Rank1Run {
        sigma1: prob.sigma1,
        c_step: opts.c_step,
        eta,
        delta,
        flipped,
        sign_compliant,
        states,
        residuals,
        vectors,
        u,
        v,
        t1,
        converged_at,
    })
}

/// Runs vector GD and the scalar recurrence side by side and returns the
/// largest deviation of `(alpha, alpha_perp)` relative to `|u_t|` and of
/// `(beta, beta_perp)` relative to `|v_t|`.
pub fn equivalence_check(
    prob: &Rank1Problem,
    u0: &DVector<f64>,
    v0: &DVector<f64>,
    eta: f64,
    steps: usize,
) -> Result<f64> {
    let (mut u, mut v) = (u0.clone(), v0.clone());
    let mut scalar = project(&u, &v, prob)?;
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        (u, v) = prob.vector_step(&u, &v, eta);
        scalar = step(&scalar, eta, prob.sigma1);
        let vec_state = project(&u, &v, prob)?;
        let (nu, nv) = (u.norm().max(f64::MIN_POSITIVE), v.norm().max(f64::MIN_POSITIVE));
        worst = worst
            .max((vec_state.alpha - scalar.alpha).abs() / nu)
            .max((vec_state.alpha_perp - scalar.alpha_perp).abs() / nu)
            .max((vec_state.beta - scalar.beta).abs() / nv)
            .max((vec_state.beta_perp - scalar.beta_perp).abs() / nv);
        if !worst.is_finite() {
            return Err(Error::NonFinite { iteration: 0 });
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub holds: bool,
    pub first_violation: Option<usize>,
}

impl PropertyCheck {
    fn track(name: &'static str) -> Self {
        Self {
            name,
            holds: true,
            first_violation: None,
        }
    }

    fn record(&mut self, t: usize, ok: bool) {
        if !ok && self.holds {
            self.holds = false;
            self.first_violation = Some(t);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    /// False when the run started with `alpha_0 beta_0 <= 0`; checks are then
    /// informational only.
    pub hypothesis_met: bool,
    pub checks: Vec<PropertyCheck>,
    /// Stage-2 constant `min(alpha_T1, beta_T1)^2 / (4 sigma1)`.
    pub c1: Option<f64>,
    /// Geometric per-step decay of `xi` fitted over stage 2.
    pub fitted_rate: Option<f64>,
}

impl StageReport {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }

    pub fn check(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Stage-1 properties over the transitions `t -> t + 1` with `t < T1`
/// (the whole run if `T1` is never reached).
pub fn stage1_monitor(run: &Rank1Run) -> StageReport {
    let mut positive = PropertyCheck::track("positive_signal");
    let mut xi_bounded = PropertyCheck::track("xi_bounded");
    let mut growth = PropertyCheck::track("signal_growth");
    let mut ratio = PropertyCheck::track("signal_ratio");
    let slack = ROUNDOFF * run.sigma1;
    let end = run.t1.unwrap_or(run.states.len().saturating_sub(1));
    let xi0 = derived(&run.states[0], run.sigma1).xi;
    let c = run.c_step;
    for t in 0..end.min(run.states.len().saturating_sub(1)) {
        let (s, n) = (&run.states[t], &run.states[t + 1]);
        let sum = s.alpha + s.beta;
        let next = n.alpha + n.beta;
        positive.record(t, s.alpha > 0.0 && s.beta > 0.0);
        xi_bounded.record(t, derived(s, run.sigma1).xi <= xi0 + slack);
        growth.record(t, (1.0 + c / 3.0) * sum <= next + slack && next <= (1.0 + c) * sum + slack);
        ratio.record(t, (s.alpha - s.beta).abs() <= RATIO_BOUND * sum + slack);
    }
    StageReport {
        hypothesis_met: run.sign_compliant,
        checks: vec![positive, xi_bounded, growth, ratio],
        c1: None,
        fitted_rate: None,
    }
}

/// Stage-2 properties for `t >= t1`, with `c1` measured at `t1`.
pub fn stage2_monitor(run: &Rank1Run, t1: usize) -> StageReport {
    let mut lower = PropertyCheck::track("signal_lower_bound");
    let mut h_sign = PropertyCheck::track("h_nonpositive");
    let mut xi_decay = PropertyCheck::track("xi_geometric");
    let mut h_contract = PropertyCheck::track("h_contraction");
    let sigma = run.sigma1;
    let slack = ROUNDOFF * sigma;
    let mut c1 = None;
    let mut fitted_rate = None;
    if let Some(s1) = run.states.get(t1) {
        let c1v = s1.alpha.min(s1.beta).powi(2) / (4.0 * sigma);
        let floor = (c1v * sigma).sqrt();
        let rate = 1.0 - c1v * run.c_step;
        let xi0 = derived(&run.states[0], sigma).xi;
        for t in t1..run.states.len() {
            let s = &run.states[t];
            let d = derived(s, sigma);
            lower.record(t, s.alpha >= floor * (1.0 - 1e-12) && s.beta >= floor * (1.0 - 1e-12));
            h_sign.record(t, d.h <= slack);
            xi_decay.record(t, d.xi <= rate.powi((t - t1) as i32) * xi0 + slack);
            if let Some(n) = run.states.get(t + 1) {
                let dn = derived(n, sigma);
                h_contract.record(t, dn.h.abs() <= rate * d.h.abs() + run.c_step * d.xi + slack);
            }
        }
        let last = run.states.len() - 1;
        let xi_start = derived(s1, sigma).xi;
        let xi_end = derived(&run.states[last], sigma).xi;
        if last > t1 && xi_start > 0.0 && xi_end > 0.0 {
            fitted_rate = Some((xi_end / xi_start).powf(1.0 / (last - t1) as f64));
        }
        c1 = Some(c1v);
    }
    StageReport {
        hypothesis_met: run.sign_compliant,
        checks: vec![lower, h_sign, xi_decay, h_contract],
        c1,
        fitted_rate,
    }
}
