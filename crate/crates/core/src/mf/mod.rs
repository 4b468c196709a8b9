//! Asymmetric matrix factorization `f(U, V) = 1/2 |U V^T - M*|_F^2`.

mod objective;
mod saddle;
mod solver;

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::flow::Parameters;
use crate::{linalg, rng};
use crate::{Error, Result};

pub use objective::{
    gradient, gradient_reg, hessian_quadratic, objective, objective_reg, smoothness_bound,
};
pub use saddle::{
    identities_check, optimal_rotation, strict_saddle_test, IdentityReport, SaddleVerdict,
    DEFAULT_STATIONARITY,
};
pub use solver::{
    init_factors, init_variance, sample_factors, solve, solve_from, BalanceReport, InitScheme, MfProblem, MfRun,
    SolveOptions, MF_METERS,
};

/// The factors `(U, V)` with `U: d1 x r` and `V: d2 x r`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl FactorPair {
    pub fn new(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self> {
        if u.ncols() != v.ncols() {
            return Err(Error::Dimension(format!(
                "U has {} columns but V has {}",
                u.ncols(),
                v.ncols()
            )));
        }
        Ok(Self { u, v })
    }

    pub fn zeros(d1: usize, d2: usize, r: usize) -> Self {
        Self {
            u: DMatrix::zeros(d1, r),
            v: DMatrix::zeros(d2, r),
        }
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn product(&self) -> DMatrix<f64> {
        &self.u * self.v.transpose()
    }

    /// `|U^T U - V^T V|_F`
    pub fn gram_gap(&self) -> f64 {
        (self.u.transpose() * &self.u - self.v.transpose() * &self.v).norm()
    }

    /// `W = [U; V]`, shape `(d1 + d2) x r`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (d1, d2, r) = (self.u.nrows(), self.v.nrows(), self.rank());
        let mut w = DMatrix::zeros(d1 + d2, r);
        w.rows_mut(0, d1).copy_from(&self.u);
        w.rows_mut(d1, d2).copy_from(&self.v);
        w
    }

    pub fn from_stacked(w: &DMatrix<f64>, d1: usize) -> Self {
        let d2 = w.nrows() - d1;
        Self {
            u: w.rows(0, d1).into_owned(),
            v: w.rows(d1, d2).into_owned(),
        }
    }
}

impl Parameters for FactorPair {
    fn axpy(&mut self, alpha: f64, x: &Self) {
        self.u.zip_apply(&x.u, |a, b| *a += alpha * b);
        self.v.zip_apply(&x.v, |a, b| *a += alpha * b);
    }

    fn dot(&self, other: &Self) -> f64 {
        self.u.dot(&other.u) + self.v.dot(&other.v)
    }

    fn max_abs(&self) -> f64 {
        self.u
            .iter()
            .chain(self.v.iter())
            .fold(0.0, |m: f64, x| if x.is_nan() || x.abs() > m { x.abs() } else { m })
    }
}

/// Rank-`r` SVD `M* = Phi Sigma Psi^T` with descending positive `Sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub phi: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub psi: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetMatrix {
    pub m: DMatrix<f64>,
    pub rank: usize,
    pub svd: Option<SvdFactors>,
}

impl TargetMatrix {
    /// Wraps `m` and attaches its rank-`rank` SVD when `m` is exactly (to
    /// `1e-10` relative) of that rank with positive singular values.
    pub fn new(m: DMatrix<f64>, rank: usize) -> Result<Self> {
        if rank == 0 || rank > m.nrows().min(m.ncols()) {
            return Err(Error::InvalidArgument(format!(
                "rank {rank} invalid for a {}x{} target",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("target has non-finite entries".into()));
        }
        let svd = truncated_svd(&m, rank);
        Ok(Self { m, rank, svd })
    }

    /// `M* = A B^T` with Gaussian `A: d1 x r`, `B: d2 x r`, rescaled to the
    /// requested Frobenius norm.
    pub fn from_random_factors(d1: usize, d2: usize, r: usize, fro_norm: f64, seed: u64) -> Result<Self> {
        let mut rng = rng::stream(seed, 0x7a);
        let a = rng::gaussian_matrix(d1, r, 1.0, &mut rng);
        let b = rng::gaussian_matrix(d2, r, 1.0, &mut rng);
        let mut m = a * b.transpose();
        let n = m.norm();
        if n > 0.0 {
            m *= fro_norm / n;
        }
        Self::new(m, r)
    }

    /// Dense row-major CSV, no header.
    pub fn from_csv<P: AsRef<Path>>(path: P, rank: usize) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>().map_err(|_| Error::Parse {
                        line: i + 1,
                        msg: format!("bad number {s:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("expected {} columns, got {}", first.len(), row.len()),
                    });
                }
            }
            rows.push(row);
        }
        let ncols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || ncols == 0 {
            return Err(Error::InvalidArgument("empty target matrix".into()));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Self::new(DMatrix::from_row_slice(flat.len() / ncols, ncols, &flat), rank)
    }

    pub fn d1(&self) -> usize {
        self.m.nrows()
    }

    pub fn d2(&self) -> usize {
        self.m.ncols()
    }

    pub fn fro_norm(&self) -> f64 {
        self.m.norm()
    }

    pub fn svd(&self) -> Result<&SvdFactors> {
        self.svd.as_ref().ok_or(Error::MissingSvd)
    }

    /// `U* = Phi Sigma^(1/2)`, `V* = Psi Sigma^(1/2)`.
    pub fn balanced_factors(&self) -> Result<FactorPair> {
        let s = self.svd()?;
        let root = DMatrix::from_diagonal(&s.sigma.map(f64::sqrt));
        Ok(FactorPair {
            u: &s.phi * &root,
            v: &s.psi * &root,
        })
    }
}

fn truncated_svd(m: &DMatrix<f64>, rank: usize) -> Option<SvdFactors> {
    let (u, s, v) = linalg::thin_svd(m).ok()?;
    let sigma = s.rows(0, rank).into_owned();
    let scale = sigma[0].max(f64::MIN_POSITIVE);
    if sigma[rank - 1] <= 1e-12 * scale {
        return None;
    }
    let phi = u.columns(0, rank).into_owned();
    let psi = v.columns(0, rank).into_owned();
    let recon = &phi * DMatrix::from_diagonal(&sigma) * psi.transpose();
    if (&recon - m).norm() > 1e-10 * m.norm() {
        return None;
    }
    Some(SvdFactors { phi, sigma, psi })
}
