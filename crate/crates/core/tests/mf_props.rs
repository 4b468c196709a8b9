use autobalance_core::flow::StepSchedule;
use autobalance_core::mf::{
    gradient, gradient_reg, hessian_quadratic, identities_check, init_factors, objective, objective_reg,
    smoothness_bound, solve_from, strict_saddle_test, FactorPair, SolveOptions, TargetMatrix,
};
use autobalance_core::rng;
use nalgebra::DMatrix;
use rand::Rng;

const GRAD_TOL: f64 = 1e-6;
const HESS_TOL: f64 = 1e-4;

struct Instance {
    target: TargetMatrix,
    point: FactorPair,
    dir: FactorPair,
}

fn instance(seed: u64) -> Instance {
    let mut g = rng::seeded(seed);
    let d1 = g.random_range(1..=10);
    let d2 = g.random_range(1..=10);
    let r = g.random_range(1..=3usize.min(d1).min(d2));
    let target = TargetMatrix::from_random_factors(d1, d2, r, 1.0 + 2.0 * g.random::<f64>(), seed).unwrap();
    let point = FactorPair::new(rng::gaussian_matrix(d1, r, 0.7, &mut g), rng::gaussian_matrix(d2, r, 0.7, &mut g)).unwrap();
    let dir = FactorPair::new(rng::gaussian_matrix(d1, r, 1.0, &mut g), rng::gaussian_matrix(d2, r, 1.0, &mut g)).unwrap();
    Instance { target, point, dir }
}

fn shifted(fp: &FactorPair, dir: &FactorPair, s: f64) -> FactorPair {
    FactorPair::new(&fp.u + &dir.u * s, &fp.v + &dir.v * s).unwrap()
}

/// Entrywise central differences of `f`, stacked as `[U; V]`.
fn fd_gradient(fp: &FactorPair, f: impl Fn(&FactorPair) -> f64) -> DMatrix<f64> {
    let w = fp.stacked();
    let d1 = fp.u.nrows();
    let h = 1e-5;
    let mut out = DMatrix::zeros(w.nrows(), w.ncols());
    for i in 0..w.nrows() {
        for j in 0..w.ncols() {
            let (mut plus, mut minus) = (w.clone(), w.clone());
            plus[(i, j)] += h;
            minus[(i, j)] -= h;
            out[(i, j)] = (f(&FactorPair::from_stacked(&plus, d1)) - f(&FactorPair::from_stacked(&minus, d1))) / (2.0 * h);
        }
    }
    out
}

fn normwise(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..100 {
        let Instance { target, point, .. } = instance(seed);
        let fd = fd_gradient(&point, |p| objective(p, &target).unwrap());
        let err = normwise(&gradient(&point, &target).unwrap().stacked(), &fd);
        assert!(err <= GRAD_TOL, "seed {seed}: plain gradient error {err:e}");
        let fd = fd_gradient(&point, |p| objective_reg(p, &target).unwrap());
        let err = normwise(&gradient_reg(&point, &target).unwrap().stacked(), &fd);
        assert!(err <= GRAD_TOL, "seed {seed}: regularized gradient error {err:e}");
    }
}

#[test]
fn hessian_form_matches_second_difference() {
    let s = 1e-3;
    for seed in 0..100 {
        let Instance { target, point, dir } = instance(seed);
        let f = |p: &FactorPair| objective(p, &target).unwrap();
        let second = (f(&shifted(&point, &dir, s)) + f(&shifted(&point, &dir, -s)) - 2.0 * f(&point)) / (s * s);
        let form = hessian_quadratic(&point, &target, &dir.u, &dir.v).unwrap();
        let resid = point.product() - &target.m;
        let lin = &point.u * dir.v.transpose() + &dir.u * point.v.transpose();
        let scale = (2.0 * resid.dot(&(&dir.u * dir.v.transpose()))).abs() + lin.norm_squared();
        let err = (form - second).abs() / scale;
        assert!(err <= HESS_TOL, "seed {seed}: form {form}, second difference {second}");
    }
}

#[test]
fn hessian_form_below_smoothness_bound_on_bounded_set() {
    let mut g = rng::seeded(71);
    for (k, c) in [0.5, 1.0, 11.0 * 3f64.sqrt()].into_iter().enumerate() {
        let target = TargetMatrix::from_random_factors(6, 5, 3, 1.5, k as u64).unwrap();
        let m_norm = target.fro_norm();
        let bound = smoothness_bound(c, m_norm).unwrap();
        for _ in 0..20 {
            let mut u = rng::gaussian_matrix(6, 3, 1.0, &mut g);
            let mut v = rng::gaussian_matrix(5, 3, 1.0, &mut g);
            let cap = c * m_norm;
            u *= (cap * g.random::<f64>() / u.norm_squared()).sqrt();
            v *= (cap * g.random::<f64>() / v.norm_squared()).sqrt();
            let point = FactorPair::new(u, v).unwrap();
            for _ in 0..100 {
                let du = rng::gaussian_matrix(6, 3, 1.0, &mut g);
                let dv = rng::gaussian_matrix(5, 3, 1.0, &mut g);
                let norm = (du.norm_squared() + dv.norm_squared()).sqrt();
                let form = hessian_quadratic(&point, &target, &(du / norm), &(dv / norm)).unwrap();
                assert!(form <= bound, "c={c}: form {form} exceeds bound {bound}");
            }
        }
    }
}

#[test]
fn constant_step_below_smoothness_bound_decreases_objective() {
    for seed in 0..5 {
        let target = TargetMatrix::from_random_factors(12, 10, 3, 1.0, seed).unwrap();
        let c = 5.0 * 3f64.sqrt();
        let eta = 1.0 / smoothness_bound(c, target.fro_norm()).unwrap();
        let init = init_factors(12, 10, 3, 0.1, seed).unwrap();
        let run = solve_from(&target, init, 0.1, &StepSchedule::constant(eta).unwrap(), SolveOptions::new(3000)).unwrap();
        let objs: Vec<f64> = run.trajectory.records.iter().map(|r| r.objective).collect();
        for (t, w) in objs.windows(2).enumerate() {
            assert!(w[1] <= w[0], "seed {seed}: objective rose at t={}", t + 1);
        }
        assert!(run.reports.iter().all(|r| r.u_norm_sq <= c && r.v_norm_sq <= c));
        assert!(objs.last().unwrap() < &(0.01 * objs[0]));
    }
}

fn gd_to_stationary(target: &TargetMatrix, mut fp: FactorPair, eta: f64, tol: f64, project: impl Fn(&mut FactorPair)) -> FactorPair {
    for _ in 0..200_000 {
        let g = gradient(&fp, target).unwrap();
        if (g.u.norm_squared() + g.v.norm_squared()).sqrt() <= tol {
            return fp;
        }
        fp.u -= g.u * eta;
        fp.v -= g.v * eta;
        project(&mut fp);
    }
    panic!("gradient descent did not reach a stationary point");
}

/// Removes the top singular pair from the factors. Gradient descent keeps
/// that subspace invariant, so projecting each step only strips round-off.
fn drop_top_pair(target: &TargetMatrix) -> impl Fn(&mut FactorPair) {
    let svd = target.svd().unwrap();
    let (phi, psi) = (svd.phi.column(0).into_owned(), svd.psi.column(0).into_owned());
    move |fp: &mut FactorPair| {
        fp.u -= &phi * (phi.transpose() * &fp.u);
        fp.v -= &psi * (psi.transpose() * &fp.v);
    }
}

fn saddle(target: &TargetMatrix, seed: u64, tol: f64) -> FactorPair {
    let project = drop_top_pair(target);
    let mut init = init_factors(target.d1(), target.d2(), target.rank, 0.1, seed).unwrap();
    // Zero columns also stay zero, which keeps the fit in the remaining
    // subspace rank-1 and the convergence linear.
    for j in 1..target.rank {
        init.u.column_mut(j).fill(0.0);
        init.v.column_mut(j).fill(0.0);
    }
    project(&mut init);
    gd_to_stationary(target, init, 0.05, tol, project)
}

#[test]
fn stationary_identity_at_gradient_descent_saddles() {
    for seed in 0..5 {
        let target = TargetMatrix::from_random_factors(8, 7, 2, 1.0, 100 + seed).unwrap();
        let saddle = saddle(&target, seed, 1e-10);
        let report = identities_check(&saddle, &target).unwrap();
        assert!((saddle.product() - &target.m).norm() > 0.1);
        assert!(report.stationary_residual <= 1e-6, "seed {seed}: {:e}", report.stationary_residual);
    }
}

#[test]
fn strict_saddle_dichotomy_on_gradient_descent_stationary_points() {
    let eps = 0.1;
    for seed in 0..5 {
        let target = TargetMatrix::from_random_factors(8, 7, 2, 1.0, 200 + seed).unwrap();
        let saddle = saddle(&target, seed, 1e-9);
        let verdict = strict_saddle_test(&saddle, &target, eps, 1e-8).unwrap();
        assert!(!verdict.is_near_optimal && verdict.is_strict_saddle, "seed {seed}: {verdict:?}");
        assert!(verdict.bound_holds);

        let init = init_factors(8, 7, 2, eps, seed).unwrap();
        let optimum = gd_to_stationary(&target, init, 0.05, 1e-9, |_| ());
        let verdict = strict_saddle_test(&optimum, &target, eps, 1e-8).unwrap();
        assert!(verdict.is_near_optimal && verdict.dichotomy_holds(), "seed {seed}: {verdict:?}");
    }
}

#[test]
fn regularized_descent_balances_factors() {
    let target = TargetMatrix::from_random_factors(10, 8, 2, 1.0, 5).unwrap();
    let mut g = rng::seeded(6);
    let init = FactorPair::new(rng::gaussian_matrix(10, 2, 0.5, &mut g), rng::gaussian_matrix(8, 2, 0.1, &mut g)).unwrap();
    let opts = SolveOptions {
        steps: 20_000,
        record_every: 1000,
        regularized: true,
    };
    let run = solve_from(&target, init.clone(), 1.0, &StepSchedule::constant(0.05).unwrap(), opts).unwrap();
    assert!(init.gram_gap() > 0.1);
    assert!(run.factors.gram_gap() <= 1e-6, "gap {:e}", run.factors.gram_gap());
    assert!(objective(&run.factors, &target).unwrap() <= 1e-12);
}
