//! Exit-gate criteria. Each prints one PASS/FAIL line; the single test fails
//! if any criterion does. Criteria run one after another so that runtime
//! limits are measured without competing work.

use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use autobalance_core::balance::{differential_identity_gram, differential_identity_neuron, snapshot};
use autobalance_core::homonet::{Activation, Dataset, Layer, Network};
use autobalance_core::mf::{
    gradient, gradient_reg, hessian_quadratic, identities_check, objective, objective_reg, strict_saddle_test,
    FactorPair, TargetMatrix,
};
use autobalance_core::par::Exec;
use autobalance_core::rank1::{derived, derived_step, equivalence_check, step, Rank1Problem, Rank1State};
use autobalance_core::rng;
use autobalance_xpcli::config::{DriftConfig, Fig1Config, Fig3Config, MfConfig, Rank1Config};
use autobalance_xpcli::presets::{drift, fig1, fig3, mf, rank1};
use nalgebra::{dmatrix, DMatrix};
use rand::Rng;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn run_criterion(n: usize, title: &str, f: impl FnOnce() -> Verdict) -> bool {
    let start = Instant::now();
    let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail) = match &verdict {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    // Written to the raw stream so the lines survive output capture.
    let _ = writeln!(std::io::stderr(), "{tag} criterion {n:>2}: {title} [{secs:.2}s] {detail}");
    verdict.is_ok()
}

fn activation(g: &mut impl Rng) -> Activation {
    match g.random_range(0..3) {
        0 => Activation::Linear,
        1 => Activation::Relu,
        _ => Activation::leaky_relu(0.1).unwrap(),
    }
}

fn random_net(seed: u64) -> (Network, Dataset) {
    let mut g = rng::seeded(seed);
    let depth = g.random_range(2..=4);
    let dims: Vec<usize> = (0..=depth).map(|_| g.random_range(1..=8)).collect();
    let acts = (0..depth - 1).map(|_| activation(&mut g)).collect();
    let stds: Vec<f64> = dims.windows(2).map(|w| 1.0 / (w[0] as f64).sqrt()).collect();
    let net = Network::random_dense(&dims, acts, &stds, &mut g).unwrap();
    let m = g.random_range(1..=16);
    let data = Dataset::new(
        rng::gaussian_matrix(dims[0], m, 1.0, &mut g),
        rng::gaussian_matrix(dims[depth], m, 1.0, &mut g),
    )
    .unwrap();
    (net, data)
}

fn proof_identities() -> Verdict {
    let start = Instant::now();
    let (mut worst_neuron, mut worst_gram, mut linear_junctions) = (0.0f64, 0.0f64, 0);
    let nets = 250;
    for seed in 0..nets {
        let (net, data) = random_net(seed);
        let grads = net.dense_grad(&data).unwrap();
        for h in 0..net.depth() - 1 {
            let (w_in, w_out) = (net.layers()[h].matrix(), net.layers()[h + 1].matrix());
            for i in 0..net.layers()[h].shape().0 {
                let (l, r) = differential_identity_neuron(&net, &data, h, i).unwrap();
                let scale = w_in.row(i).abs().dot(&grads[h].row(i).abs()) + w_out.column(i).abs().dot(&grads[h + 1].column(i).abs());
                if scale > 0.0 {
                    worst_neuron = worst_neuron.max((l - r).abs() / scale);
                }
            }
            if net.activations[h].is_linear() {
                linear_junctions += 1;
                let res = differential_identity_gram(&net, &data, h).unwrap();
                let scale = 2.0 * (w_in.norm() * grads[h].norm() + w_out.norm() * grads[h + 1].norm());
                if scale > 0.0 {
                    worst_gram = worst_gram.max(res.norm() / scale);
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        worst_neuron <= 1e-10 && worst_gram <= 1e-10 && linear_junctions > 0 && within(elapsed, 10.0),
        format!(
            "{nets} nets, neuron rel {worst_neuron:.1e}, gram rel {worst_gram:.1e} over {linear_junctions} linear junctions, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn chain(w1: f64, w2: f64) -> Network {
    Network::new(vec![Layer::dense(dmatrix![w1]), Layer::dense(dmatrix![w2])], vec![Activation::Linear]).unwrap()
}

fn chain_drift(w1: f64, w2: f64, x: f64, y: f64, eta: f64) -> (f64, f64) {
    let net = chain(w1, w2);
    let data = Dataset::new(dmatrix![x], dmatrix![y]).unwrap();
    let g = net.dense_grad(&data).unwrap();
    let (g1, g2) = (g[0][(0, 0)], g[1][(0, 0)]);
    let after = chain(w1 - eta * g1, w2 - eta * g2);
    let drift = snapshot(&after).junctions[0].layer_diff - snapshot(&net).junctions[0].layer_diff;
    (drift, eta * eta * (g1 * g1 - g2 * g2))
}

fn scalar_chain() -> Verdict {
    let (worked, expected) = chain_drift(1.0, 2.0, 1.0, 4.0, 0.01);
    let mut g = rng::seeded(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p: Vec<f64> = (0..4).map(|_| g.random_range(-2.0..2.0)).collect();
        let (d, e) = chain_drift(p[0], p[1], p[2], p[3], g.random_range(1e-4..0.05));
        worst = worst.max((d - e).abs());
    }
    check(
        (worked - 0.0012).abs() <= 1e-12 && (worked - expected).abs() <= 1e-12 && worst <= 1e-12,
        format!("worked drift {worked:.16}, max |drift - eta^2(g1^2-g2^2)| {worst:.1e} over 1000 draws"),
    )
}

fn euler_scaling() -> Verdict {
    let cfg = DriftConfig::default();
    let rows = drift::run(&cfg, 0, Exec::default()).unwrap();
    let ratios: Vec<f64> = rows.chunks(cfg.etas.len()).flat_map(drift::halving_ratios).collect();
    let (lo, hi) = drift::HALVING_RANGE;
    let ok = cfg.seeds >= 5 && ratios.iter().all(|r| (lo..=hi).contains(r));
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().copied().fold(0.0, f64::max);
    check(ok, format!("{} seeds, halving ratios in [{min:.3}, {max:.3}]", cfg.seeds))
}

fn fd_gradient(fp: &FactorPair, f: impl Fn(&FactorPair) -> f64) -> DMatrix<f64> {
    let w = fp.stacked();
    let h = 1e-5;
    DMatrix::from_fn(w.nrows(), w.ncols(), |i, j| {
        let (mut plus, mut minus) = (w.clone(), w.clone());
        plus[(i, j)] += h;
        minus[(i, j)] -= h;
        let d1 = fp.u.nrows();
        (f(&FactorPair::from_stacked(&plus, d1)) - f(&FactorPair::from_stacked(&minus, d1))) / (2.0 * h)
    })
}

fn mf_derivatives() -> Verdict {
    let (mut grad_err, mut hess_err) = (0.0f64, 0.0f64);
    for seed in 0..100u64 {
        let mut g = rng::seeded(seed);
        let (d1, d2) = (g.random_range(1..=10), g.random_range(1..=10));
        let r = g.random_range(1..=3usize.min(d1).min(d2));
        let target = TargetMatrix::from_random_factors(d1, d2, r, 2.0, seed).unwrap();
        let fp = FactorPair::new(rng::gaussian_matrix(d1, r, 0.7, &mut g), rng::gaussian_matrix(d2, r, 0.7, &mut g)).unwrap();
        for (exact, f) in [
            (gradient(&fp, &target).unwrap(), Box::new(|p: &FactorPair| objective(p, &target).unwrap()) as Box<dyn Fn(&FactorPair) -> f64>),
            (gradient_reg(&fp, &target).unwrap(), Box::new(|p: &FactorPair| objective_reg(p, &target).unwrap())),
        ] {
            let fd = fd_gradient(&fp, f);
            let exact = exact.stacked();
            grad_err = grad_err.max((&exact - &fd).norm() / exact.norm().max(fd.norm()));
        }
        let du = rng::gaussian_matrix(d1, r, 1.0, &mut g);
        let dv = rng::gaussian_matrix(d2, r, 1.0, &mut g);
        let s = 1e-3;
        let at = |t: f64| objective(&FactorPair::new(&fp.u + &du * t, &fp.v + &dv * t).unwrap(), &target).unwrap();
        let second = (at(s) + at(-s) - 2.0 * at(0.0)) / (s * s);
        let form = hessian_quadratic(&fp, &target, &du, &dv).unwrap();
        let resid = fp.product() - &target.m;
        let lin = &fp.u * dv.transpose() + &du * fp.v.transpose();
        let scale = (2.0 * resid.dot(&(&du * dv.transpose()))).abs() + lin.norm_squared();
        hess_err = hess_err.max((form - second).abs() / scale);
    }
    check(
        grad_err <= 1e-6 && hess_err <= 1e-4,
        format!("100 instances, gradient rel {grad_err:.1e}, Hessian form rel {hess_err:.1e}"),
    )
}

fn balance_monitor() -> Verdict {
    let cfg = MfConfig::default();
    let start = Instant::now();
    let out = mf::run(&cfg, 0).unwrap();
    let elapsed = start.elapsed();
    let reports = &out.run.reports;
    let max_gap = reports.iter().map(|r| r.gram_gap).fold(0.0, f64::max);
    let ok = cfg.d1 == 20
        && cfg.d2 == 20
        && cfg.rank == 3
        && cfg.eps == 0.1
        && cfg.steps == 100_000
        && reports.len() == cfg.steps + 1
        && out.run.first_violation().is_none()
        && within(elapsed, 60.0);
    check(
        ok,
        format!(
            "{} logged iterates, first violation {:?}, max gram gap {max_gap:.2e}, {:.2}s",
            reports.len(),
            out.run.first_violation(),
            elapsed.as_secs_f64()
        ),
    )
}

fn fig1_reproduction() -> Verdict {
    let cfg = Fig1Config::default();
    let start = Instant::now();
    let out = fig1::run(&cfg, 0).unwrap();
    let elapsed = start.elapsed();
    let plain_at = fig1::converged_at(&out.plain, &out.target);
    let reg_at = fig1::converged_at(&out.regularized, &out.target);
    let (dev, _) = fig1::ratio_deviation(&out.plain);
    check(
        plain_at.is_some() && reg_at.is_some() && dev <= fig1::RATIO_BAND && within(elapsed, 30.0),
        format!(
            "plain converged at {plain_at:?}, regularized at {reg_at:?}, max ratio deviation {:.3}%, {:.2}s",
            100.0 * dev,
            elapsed.as_secs_f64()
        ),
    )
}

fn saddle_identities() -> Verdict {
    let mut g = rng::seeded(7);
    let (mut worst, mut ineq_ok) = (0.0f64, true);
    for k in 0..1000u64 {
        let target = TargetMatrix::from_random_factors(5, 5, 2, g.random_range(0.5..3.0), 5000 + k).unwrap();
        let std = g.random_range(0.05..1.5);
        let fp = FactorPair::new(rng::gaussian_matrix(5, 2, std, &mut g), rng::gaussian_matrix(5, 2, std, &mut g)).unwrap();
        let rep = identities_check(&fp, &target).unwrap();
        worst = worst.max(rep.max_identity_residual());
        ineq_ok &= rep.inequality_holds();
    }
    check(worst <= 1e-10 && ineq_ok, format!("1000 draws, max identity residual {worst:.1e}, inequality on all: {ineq_ok}"))
}

fn saddle_dichotomy() -> Verdict {
    let eps = 0.1;
    let target = TargetMatrix::from_random_factors(6, 5, 2, 1.0, 11).unwrap();
    let origin = strict_saddle_test(&FactorPair::zeros(6, 5, 2), &target, eps, 1e-8).unwrap();
    let optimum = strict_saddle_test(&target.balanced_factors().unwrap(), &target, eps, 1e-8).unwrap();
    let ok = (origin.form_value + 2.0).abs() <= 1e-12
        && origin.form_value <= -0.5 * eps * eps
        && origin.is_strict_saddle
        && !origin.is_near_optimal
        && optimum.is_near_optimal
        && optimum.dichotomy_holds();
    check(
        ok,
        format!("origin form {:.15}, optimum residual {:.1e}", origin.form_value, optimum.residual_norm),
    )
}

fn rank1_reduction() -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let prob = Rank1Problem::random(30, 30, 1.0, seed).unwrap();
        let mut g = rng::seeded(100 + seed);
        let u0 = rng::gaussian_vector(30, 0.2, &mut g);
        let v0 = rng::gaussian_vector(30, 0.2, &mut g);
        worst = worst.max(equivalence_check(&prob, &u0, &v0, 0.05, 1000).unwrap());
    }
    let mut g = rng::seeded(3);
    let mut derived_worst: f64 = 0.0;
    for _ in 0..1000 {
        let s = Rank1State {
            alpha: g.random_range(-2.0..2.0),
            alpha_perp: g.random_range(0.0..2.0),
            beta: g.random_range(-2.0..2.0),
            beta_perp: g.random_range(0.0..2.0),
        };
        let (eta, sigma) = (g.random_range(0.0..0.2), g.random_range(0.1..3.0));
        let next = step(&s, eta, sigma);
        let (a, b) = (derived(&next, sigma), derived_step(&s, eta, sigma));
        derived_worst = derived_worst
            .max((a.h - b.h).abs() / ((next.alpha * next.beta).abs() + sigma))
            .max((a.xi - b.xi).abs() / a.xi.max(f64::MIN_POSITIVE));
    }
    check(
        worst <= 1e-9 && derived_worst <= 1e-12,
        format!("10 seeds at d=30, equivalence {worst:.1e}, derived formulas {derived_worst:.1e}"),
    )
}

fn rank1_desk_run() -> Verdict {
    let cfg = Rank1Config::default();
    let mut lines = Vec::new();
    let mut ok = cfg.dim == 50 && cfg.sigma1 == 1.0;
    let mut compliant = 0;
    for seed in 0..10 {
        let start = Instant::now();
        let out = rank1::run_seed(&cfg, seed).unwrap();
        let elapsed = start.elapsed();
        if !out.run.sign_compliant {
            continue;
        }
        compliant += 1;
        let stage2 = out.stage2.as_ref();
        let geometric = stage2.is_some_and(|s| {
            s.check("xi_geometric").is_some_and(|c| c.holds)
                && s.fitted_rate.zip(s.c1).is_some_and(|(rate, c1)| rate <= 1.0 - c1 * cfg.c_step)
        });
        let seed_ok = out.run.converged_at.is_some_and(|t| t <= 100_000)
            && out.envelope_holds()
            && out.xi_increase.is_none()
            && geometric
            && within(elapsed, 10.0);
        ok &= seed_ok;
        lines.push(format!("seed {seed}: {:?} its", out.run.converged_at));
    }
    let counts: Vec<Vec<usize>> = [0.1, 0.01, 0.001]
        .iter()
        .map(|&tol| {
            let cfg = Rank1Config { tol, ..Rank1Config::default() };
            (0..10)
                .filter_map(|seed| rank1::run_seed(&cfg, seed).ok())
                .filter(|o| o.run.sign_compliant)
                .map(|o| o.run.converged_at.unwrap_or(usize::MAX))
                .collect()
        })
        .collect();
    let sublinear = (0..counts[0].len()).all(|k| {
        let (a, b, c) = (counts[0][k] as f64, counts[1][k] as f64, counts[2][k] as f64);
        a < b && b < c && b / a < 10.0 && c / b < 10.0
    });
    ok &= compliant > 0 && sublinear;
    let mean = |v: &Vec<usize>| v.iter().sum::<usize>() as f64 / v.len().max(1) as f64;
    check(
        ok,
        format!(
            "{compliant} compliant seeds ({}), mean iterations at tol 0.1/0.01/0.001: {:.0}/{:.0}/{:.0}",
            lines.join(", "),
            mean(&counts[0]),
            mean(&counts[1]),
            mean(&counts[2])
        ),
    )
}

fn fig3_reproduction() -> Verdict {
    let cfg = Fig3Config::default();
    let start = Instant::now();
    let balanced = fig3::run(&cfg, fig3::Variant::Balanced, 0, Exec::default()).unwrap();
    let unbalanced = fig3::run(&cfg, fig3::Variant::Unbalanced, 0, Exec::default()).unwrap();
    let elapsed = start.elapsed();
    let fraction = balanced.final_balance_fraction();
    let changes = unbalanced.diff_changes();
    let gaps = unbalanced.ratio_gaps();
    let grew = unbalanced.final_norms().iter().sum::<f64>() > unbalanced.norms(0).iter().sum::<f64>();
    let ok = cfg.steps == 10_000
        && (cfg.input_dim, cfg.hidden_dim) == (128, 32)
        && fraction <= fig3::BALANCE_FRACTION
        && changes.iter().all(|&c| c <= fig3::DIFF_CHANGE)
        && gaps.iter().all(|&(g0, g1)| g1 < g0)
        && grew
        && within(elapsed, 300.0);
    check(
        ok,
        format!(
            "balanced spread {:.3}% of mean norm, unbalanced diff changes {:.3?}, ratio gaps {:.3?}, {:.1}s",
            100.0 * fraction,
            changes,
            gaps,
            elapsed.as_secs_f64()
        ),
    )
}

#[test]
fn acceptance_criteria() {
    let results = [
        run_criterion(1, "proof identities on random homogeneous nets", proof_identities),
        run_criterion(2, "scalar-chain exact one-step drift", scalar_chain),
        run_criterion(3, "Euler drift halves with the step size", euler_scaling),
        run_criterion(4, "MF gradient and Hessian finite differences", mf_derivatives),
        run_criterion(5, "balancedness, descent and boundedness monitor", balance_monitor),
        run_criterion(6, "constant-step MF with preserved factor ratio", fig1_reproduction),
        run_criterion(7, "strict-saddle algebraic identities", saddle_identities),
        run_criterion(8, "strict-saddle dichotomy", saddle_dichotomy),
        run_criterion(9, "rank-1 scalar reduction", rank1_reduction),
        run_criterion(10, "rank-1 desk run", rank1_desk_run),
        run_criterion(11, "three-layer ReLU net balance", fig3_reproduction),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
