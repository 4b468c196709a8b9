//! Time stepping for `dw/dt = -grad L(w)`: plain gradient descent, classical
//! RK4, step-size schedules and a recording driver.

use std::io::Write;

use nalgebra::DVector;

use crate::{Error, Result};

/// Parameter magnitude beyond which a run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// Vector-space operations the steppers need.
pub trait Parameters: Clone {
    /// `self += alpha * x`
    fn axpy(&mut self, alpha: f64, x: &Self);
    fn dot(&self, other: &Self) -> f64;
    /// Largest absolute entry (NaN if any entry is NaN).
    fn max_abs(&self) -> f64;

    fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    fn is_finite(&self) -> bool {
        self.max_abs().is_finite()
    }
}

impl Parameters for f64 {
    fn axpy(&mut self, alpha: f64, x: &Self) {
        *self += alpha * x;
    }

    fn dot(&self, other: &Self) -> f64 {
        self * other
    }

    fn max_abs(&self) -> f64 {
        self.abs()
    }
}

impl Parameters for DVector<f64> {
    fn axpy(&mut self, alpha: f64, x: &Self) {
        self.axpy(alpha, x, 1.0);
    }

    fn dot(&self, other: &Self) -> f64 {
        nalgebra::Matrix::dot(self, other)
    }

    fn max_abs(&self) -> f64 {
        self.iter()
            .fold(0.0, |m: f64, x| if x.is_nan() || x.abs() > m { x.abs() } else { m })
    }
}

/// A differentiable objective over some parameter type.
pub trait Objective {
    type Params: Parameters;

    fn value(&self, params: &Self::Params) -> Result<f64>;
    fn gradient(&self, params: &Self::Params) -> Result<Self::Params>;

    fn value_and_gradient(&self, params: &Self::Params) -> Result<(f64, Self::Params)> {
        Ok((self.value(params)?, self.gradient(params)?))
    }
}

/// Step size as a function of the iteration index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant { eta: f64 },
    /// `eta_t = a / (t + 1)^(1/2 + delta)`, `delta` in `(0, 1/2]`.
    Polynomial { a: f64, delta: f64 },
    /// `eta_t = sqrt(eps / r) / (100 (t + 1) |M*|_F^(3/2))`.
    Harmonic { eps: f64, r: usize, m_norm: f64 },
}

impl StepSchedule {
    pub fn constant(eta: f64) -> Result<Self> {
        let s = StepSchedule::Constant { eta };
        s.validate()?;
        Ok(s)
    }

    pub fn polynomial(a: f64, delta: f64) -> Result<Self> {
        let s = StepSchedule::Polynomial { a, delta };
        s.validate()?;
        Ok(s)
    }

    pub fn harmonic(eps: f64, r: usize, m_norm: f64) -> Result<Self> {
        let s = StepSchedule::Harmonic { eps, r, m_norm };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant { eta } => eta > 0.0 && eta.is_finite(),
            StepSchedule::Polynomial { a, delta } => {
                a > 0.0 && a.is_finite() && delta > 0.0 && delta <= 0.5
            }
            StepSchedule::Harmonic { eps, r, m_norm } => {
                eps > 0.0 && r >= 1 && m_norm > 0.0 && m_norm.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid step schedule {self:?}")))
        }
    }

    pub fn eta(&self, t: usize) -> f64 {
        let t1 = (t + 1) as f64;
        match *self {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::Polynomial { a, delta } => a / t1.powf(0.5 + delta),
            StepSchedule::Harmonic { eps, r, m_norm } => {
                (eps / r as f64).sqrt() / (100.0 * t1 * m_norm.powf(1.5))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    GradientDescent,
    Rk4,
}

/// `params - eta * gradient`.
pub fn gd_step<P: Parameters>(params: &P, gradient: &P, eta: f64) -> Result<P> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {eta}")));
    }
    if !gradient.is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    let mut next = params.clone();
    next.axpy(-eta, gradient);
    Ok(next)
}

/// One classical four-stage Runge-Kutta step of `dw/dt = -grad(w)`.
pub fn rk4_step<P, F>(params: &P, mut grad_fn: F, h: f64) -> Result<P>
where
    P: Parameters,
    F: FnMut(&P) -> Result<P>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
    }
    let mut stage = |w: &P| -> Result<P> {
        let g = grad_fn(w)?;
        if g.is_finite() {
            Ok(g)
        } else {
            Err(Error::NonFinite { iteration: 0 })
        }
    };
    // stages hold gradients; the velocities are their negatives
    let g1 = stage(params)?;
    let mut w = params.clone();
    w.axpy(-0.5 * h, &g1);
    let g2 = stage(&w)?;
    let mut w = params.clone();
    w.axpy(-0.5 * h, &g2);
    let g3 = stage(&w)?;
    let mut w = params.clone();
    w.axpy(-h, &g3);
    let g4 = stage(&w)?;
    let mut next = params.clone();
    next.axpy(-h / 6.0, &g1);
    next.axpy(-h / 3.0, &g2);
    next.axpy(-h / 3.0, &g3);
    next.axpy(-h / 6.0, &g4);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::NonFinite { iteration: 0 })
    }
}

/// Named scalar diagnostics evaluated at every logged iterate.
pub struct Meters<'a, P> {
    names: Vec<String>,
    eval: Box<dyn Fn(&P) -> Vec<f64> + 'a>,
}

impl<'a, P> Meters<'a, P> {
    pub fn new<F>(names: &[&str], eval: F) -> Self
    where
        F: Fn(&P) -> Vec<f64> + 'a,
    {
        Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            eval: Box::new(eval),
        }
    }

    pub fn none() -> Self {
        Self {
            names: Vec::new(),
            eval: Box::new(|_| Vec::new()),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn eval(&self, p: &P) -> Vec<f64> {
        (self.eval)(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub t: usize,
    /// Step size used to leave iterate `t` (the last record repeats the
    /// schedule's value at `t`).
    pub eta: f64,
    pub objective: f64,
    pub grad_norm: f64,
    pub meters: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory<P> {
    pub meter_names: Vec<String>,
    pub records: Vec<TrajectoryRecord>,
    pub checkpoints: Vec<(usize, P)>,
    pub final_params: P,
}

impl<P> Trajectory<P> {
    pub fn meter(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.meter_names.iter().position(|n| n == name)?;
        Some(self.records.iter().map(|r| r.meters[idx]).collect())
    }

    pub fn last(&self) -> &TrajectoryRecord {
        self.records.last().expect("trajectory has at least two records")
    }

    /// CSV with header `t,[eta,]objective,grad_norm,<meters...>`.
    pub fn write_csv<W: Write>(&self, writer: W, include_eta: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        if include_eta {
            header.push("eta".into());
        }
        header.extend(["objective".to_string(), "grad_norm".to_string()]);
        header.extend(self.meter_names.iter().cloned());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.t.to_string()];
            if include_eta {
                row.push(fmt17(r.eta));
            }
            row.push(fmt17(r.objective));
            row.push(fmt17(r.grad_norm));
            row.extend(r.meters.iter().map(|&x| fmt17(x)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Decimal rendering with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub steps: usize,
    pub record_every: usize,
    /// Store full parameter snapshots every this many iterations.
    pub checkpoint_every: Option<usize>,
    pub integrator: Integrator,
}

impl RunOptions {
    pub fn new(steps: usize, record_every: usize) -> Self {
        Self {
            steps,
            record_every,
            checkpoint_every: None,
            integrator: Integrator::GradientDescent,
        }
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }
}

fn at_iteration(e: Error, iteration: usize) -> Error {
    match e {
        Error::NonFinite { .. } => Error::NonFinite { iteration },
        Error::Diverged { magnitude, .. } => Error::Diverged {
            iteration,
            magnitude,
        },
        other => other,
    }
}

/// Integrates from `init` for `opts.steps` iterations, logging iteration 0,
/// every `record_every`-th iteration, and the final iteration.
pub fn run<O: Objective>(
    problem: &O,
    init: O::Params,
    schedule: &StepSchedule,
    opts: RunOptions,
    meters: &Meters<'_, O::Params>,
) -> Result<Trajectory<O::Params>> {
    if opts.steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    schedule.validate()?;
    let every = opts.record_every.max(1);
    let mut params = init;
    let mut records = Vec::with_capacity(opts.steps / every + 2);
    let mut checkpoints = Vec::new();
    for t in 0..=opts.steps {
        let (value, grad) = problem
            .value_and_gradient(&params)
            .map_err(|e| at_iteration(e, t))?;
        if !value.is_finite() || !grad.is_finite() {
            return Err(Error::NonFinite { iteration: t });
        }
        let eta = schedule.eta(t);
        if t % every == 0 || t == opts.steps {
            records.push(TrajectoryRecord {
                t,
                eta,
                objective: value,
                grad_norm: grad.norm(),
                meters: meters.eval(&params),
            });
        }
        if let Some(k) = opts.checkpoint_every {
            if k > 0 && t % k == 0 {
                checkpoints.push((t, params.clone()));
            }
        }
        if t == opts.steps {
            break;
        }
        params = match opts.integrator {
            Integrator::GradientDescent => gd_step(&params, &grad, eta),
            Integrator::Rk4 => rk4_step(&params, |w| problem.gradient(w), eta),
        }
        .map_err(|e| at_iteration(e, t))?;
        let magnitude = params.max_abs();
        if !magnitude.is_finite() {
            return Err(Error::NonFinite { iteration: t + 1 });
        }
        if magnitude > DIVERGENCE_LIMIT {
            return Err(Error::Diverged {
                iteration: t + 1,
                magnitude,
            });
        }
    }
    Ok(Trajectory {
        meter_names: meters.names().to_vec(),
        records,
        checkpoints,
        final_params: params,
    })
}
