use nalgebra::DMatrix;

use super::{FactorPair, TargetMatrix};
use crate::{Error, Result};

fn check(fp: &FactorPair, target: &TargetMatrix) -> Result<()> {
    if fp.u.nrows() != target.d1() || fp.v.nrows() != target.d2() {
        return Err(Error::Dimension(format!(
            "factors {}x{} / {}x{} do not match a {}x{} target",
            fp.u.nrows(),
            fp.u.ncols(),
            fp.v.nrows(),
            fp.v.ncols(),
            target.d1(),
            target.d2()
        )));
    }
    if fp.u.ncols() != fp.v.ncols() {
        return Err(Error::Dimension("U and V have different inner dimensions".into()));
    }
    Ok(())
}

fn residual(fp: &FactorPair, target: &TargetMatrix) -> DMatrix<f64> {
    fp.product() - &target.m
}

fn gram_difference(fp: &FactorPair) -> DMatrix<f64> {
    fp.u.transpose() * &fp.u - fp.v.transpose() * &fp.v
}

/// `1/2 |U V^T - M*|_F^2`
pub fn objective(fp: &FactorPair, target: &TargetMatrix) -> Result<f64> {
    check(fp, target)?;
    Ok(0.5 * residual(fp, target).norm_squared())
}

/// Objective plus the balancing term `1/8 |U^T U - V^T V|_F^2`.
pub fn objective_reg(fp: &FactorPair, target: &TargetMatrix) -> Result<f64> {
    Ok(objective(fp, target)? + 0.125 * gram_difference(fp).norm_squared())
}

/// `(R V, R^T U)` with `R = U V^T - M*`.
pub fn gradient(fp: &FactorPair, target: &TargetMatrix) -> Result<FactorPair> {
    check(fp, target)?;
    let r = residual(fp, target);
    Ok(FactorPair {
        u: &r * &fp.v,
        v: r.transpose() * &fp.u,
    })
}

/// Gradient of [`objective_reg`]: adds `U D / 2` and `-V D / 2` with
/// `D = U^T U - V^T V`.
pub fn gradient_reg(fp: &FactorPair, target: &TargetMatrix) -> Result<FactorPair> {
    let mut g = gradient(fp, target)?;
    let d = gram_difference(fp);
    g.u += 0.5 * (&fp.u * &d);
    g.v -= 0.5 * (&fp.v * &d);
    Ok(g)
}

/// Hessian quadratic form
/// `2 <U V^T - M*, dU dV^T> + |U dV^T + dU V^T|_F^2`.
pub fn hessian_quadratic(
    fp: &FactorPair,
    target: &TargetMatrix,
    du: &DMatrix<f64>,
    dv: &DMatrix<f64>,
) -> Result<f64> {
    check(fp, target)?;
    if du.shape() != fp.u.shape() || dv.shape() != fp.v.shape() {
        return Err(Error::Dimension("direction shape does not match the factors".into()));
    }
    let r = residual(fp, target);
    let cross = du * dv.transpose();
    let lin = &fp.u * dv.transpose() + du * fp.v.transpose();
    Ok(2.0 * r.dot(&cross) + lin.norm_squared())
}

/// Gradient-Lipschitz constant `(6c + 2) |M*|_F` valid on
/// `{|U|_F^2 <= c |M*|_F, |V|_F^2 <= c |M*|_F}`.
pub fn smoothness_bound(c: f64, m_norm: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("c must be positive, got {c}")));
    }
    if !(m_norm >= 0.0) {
        return Err(Error::InvalidArgument(format!("norm must be non-negative, got {m_norm}")));
    }
    Ok((6.0 * c + 2.0) * m_norm)
}
