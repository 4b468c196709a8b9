use nalgebra::DMatrix;

use super::{gradient, hessian_quadratic, FactorPair, TargetMatrix};
use crate::linalg::thin_svd;
use crate::{Error, Result};

/// Default gradient-norm threshold for treating a point as stationary.
pub const DEFAULT_STATIONARITY: f64 = 1e-8;

/// Singular values below this fraction of the largest are treated as zero
/// when resolving Procrustes ties.
const RANK_TOL: f64 = 1e-12;

fn polar(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (u, _, v) = thin_svd(m)?;
    Ok(u * v.transpose())
}

/// Orthogonal `R` minimizing `|W - W* R|_F`, from the SVD of `W*^T W`.
///
/// Directions where the cross matrix is singular are filled with the
/// rotation closest to the identity, so `R = I` when `W*^T W = 0`.
pub fn optimal_rotation(w: &DMatrix<f64>, w_star: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if w.shape() != w_star.shape() {
        return Err(Error::Dimension(format!(
            "W is {:?} but W* is {:?}",
            w.shape(),
            w_star.shape()
        )));
    }
    let r = w.ncols();
    let cross = w_star.transpose() * w;
    let (a, s, b) = thin_svd(&cross)?;
    let top = s.max();
    let (kept, null): (Vec<usize>, Vec<usize>) = (0..r).partition(|&i| top > 0.0 && s[i] > RANK_TOL * top);
    let mut rot = DMatrix::zeros(r, r);
    for &i in &kept {
        rot += a.column(i) * b.column(i).transpose();
    }
    if !null.is_empty() {
        let na = DMatrix::from_columns(&null.iter().map(|&i| a.column(i)).collect::<Vec<_>>());
        let nb = DMatrix::from_columns(&null.iter().map(|&i| b.column(i)).collect::<Vec<_>>());
        let q = polar(&(na.transpose() * &nb))?;
        rot += &na * q * nb.transpose();
    }
    Ok(rot)
}

/// `Delta = W - W* R` for the optimal `R`, split back into `(dU, dV)`.
fn aligned_direction(fp: &FactorPair, target: &TargetMatrix) -> Result<(FactorPair, FactorPair)> {
    let star = target.balanced_factors()?;
    if star.rank() != fp.rank() {
        return Err(Error::Dimension(format!(
            "factor rank {} differs from target rank {}",
            fp.rank(),
            star.rank()
        )));
    }
    let w = fp.stacked();
    let w_star = star.stacked();
    let rot = optimal_rotation(&w, &w_star)?;
    let delta = &w - &w_star * rot;
    Ok((FactorPair::from_stacked(&delta, fp.u.nrows()), star))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleVerdict {
    pub is_near_optimal: bool,
    pub form_value: f64,
    pub residual_norm: f64,
    /// `form_value <= -eps^2 / 2`
    pub is_strict_saddle: bool,
    /// `form_value <= -residual^2 + eps^2 / 2`
    pub bound_holds: bool,
}

impl SaddleVerdict {
    pub fn dichotomy_holds(&self) -> bool {
        self.is_near_optimal || self.is_strict_saddle
    }
}

/// Hessian form along the Procrustes-aligned direction toward the balanced
/// optimum at an approximately stationary, `eps`-balanced point.
pub fn strict_saddle_test(
    fp: &FactorPair,
    target: &TargetMatrix,
    eps: f64,
    stationarity: f64,
) -> Result<SaddleVerdict> {
    target.svd()?;
    let g = gradient(fp, target)?;
    let grad_norm = (g.u.norm_squared() + g.v.norm_squared()).sqrt();
    if grad_norm > stationarity {
        return Err(Error::NotStationary {
            grad_norm,
            threshold: stationarity,
        });
    }
    let gap = fp.gram_gap();
    if gap > eps {
        return Err(Error::InvalidArgument(format!(
            "point is not eps-balanced: gram gap {gap:.3e} > {eps:.3e}"
        )));
    }
    let (delta, _) = aligned_direction(fp, target)?;
    let form_value = hessian_quadratic(fp, target, &delta.u, &delta.v)?;
    let residual_norm = (fp.product() - &target.m).norm();
    let half_eps_sq = 0.5 * eps * eps;
    Ok(SaddleVerdict {
        is_near_optimal: residual_norm <= eps,
        form_value,
        residual_norm,
        is_strict_saddle: form_value <= -half_eps_sq,
        bound_holds: form_value <= -residual_norm * residual_norm + half_eps_sq,
    })
}

/// Residuals of the algebraic identities behind the strict-saddle argument.
/// Each is relative to the larger of the two sides and the matching power of
/// `|W|_F^2 + |W*|_F^2`, so that `Delta = 0` is not judged on round-off.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    /// `U dV^T + dU V^T = dU dV^T + M - M*`
    pub linearization: f64,
    /// `|D D^T|^2 = 4 |dU dV^T|^2 + |dU^T dU - dV^T dV|^2`
    pub delta_decomposition: f64,
    /// expansion of `|W W^T - W* W*^T|^2`
    pub gram_expansion: f64,
    pub inequality_lhs: f64,
    pub inequality_rhs: f64,
    /// `<M - M*, dU dV^T> + |M - M*|^2`, relative to `|M - M*|^2`;
    /// only expected to vanish at stationary points.
    pub stationary_residual: f64,
}

impl IdentityReport {
    pub fn max_identity_residual(&self) -> f64 {
        self.linearization
            .max(self.delta_decomposition)
            .max(self.gram_expansion)
    }

    pub fn inequality_holds(&self) -> bool {
        self.inequality_lhs <= self.inequality_rhs * (1.0 + 1e-12) + f64::MIN_POSITIVE
    }
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn rel_mat(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    let scale = a.norm().max(b.norm()).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

pub fn identities_check(fp: &FactorPair, target: &TargetMatrix) -> Result<IdentityReport> {
    let (delta, star) = aligned_direction(fp, target)?;
    let (u, v) = (&fp.u, &fp.v);
    let (du, dv) = (&delta.u, &delta.v);
    let m = fp.product();
    let m_star = &target.m;
    let diff = &m - m_star;
    let w = fp.stacked();
    let w_star = star.stacked();
    let s2 = w.norm_squared() + w_star.norm_squared();

    let lin_lhs = u * dv.transpose() + du * v.transpose();
    let cross = du * dv.transpose();
    let lin_rhs = &cross + &diff;
    let linearization = rel_mat(&lin_lhs, &lin_rhs, s2);

    let d = delta.stacked();
    let ddt = (&d * d.transpose()).norm_squared();
    let dgap = du.transpose() * du - dv.transpose() * dv;
    let delta_rhs = 4.0 * cross.norm_squared() + dgap.norm_squared();
    let delta_decomposition = rel(ddt, delta_rhs, s2 * s2);

    let gram_lhs = (&w * w.transpose() - &w_star * w_star.transpose()).norm_squared();
    let mixed = u.transpose() * &star.u - v.transpose() * &star.v;
    let own = u.transpose() * u - v.transpose() * v;
    let star_gap = star.u.transpose() * &star.u - star.v.transpose() * &star.v;
    let gram_rhs = 4.0 * diff.norm_squared() - 2.0 * mixed.norm_squared()
        + own.norm_squared()
        + star_gap.norm_squared();
    let gram_expansion = rel(gram_lhs, gram_rhs, s2 * s2);

    let diff_sq = diff.norm_squared();
    let stationary_residual = if diff_sq == 0.0 {
        diff.dot(&cross).abs()
    } else {
        (diff.dot(&cross) + diff_sq).abs() / diff_sq
    };

    Ok(IdentityReport {
        linearization,
        delta_decomposition,
        gram_expansion,
        inequality_lhs: ddt,
        inequality_rhs: 2.0 * gram_lhs,
        stationary_residual,
    })
}
