//! Drift of the layer-norm differences under GD on a linear network when
//! the step size is halved at fixed total time.

use std::path::Path;

use anyhow::Result;
use autobalance_core::balance::{snapshot, total_layer_drift};
use autobalance_core::flow::{self, Meters, RunOptions, StepSchedule};
use autobalance_core::homonet::{Activation, Dataset, Network, Training};
use autobalance_core::par::{self, Exec};
use autobalance_core::rng;

use crate::config::DriftConfig;
use crate::summary::SummaryStats;

/// Accepted range of `drift(eta) / drift(eta / 2)`.
pub const HALVING_RANGE: (f64, f64) = (1.6, 2.4);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftRow {
    pub seed: u64,
    pub eta: f64,
    pub steps: usize,
    pub drift: f64,
}

pub fn setup(cfg: &DriftConfig, seed: u64) -> Result<(Network, Dataset)> {
    let mut g = rng::stream(seed, 11);
    let acts = vec![Activation::Linear; cfg.dims.len() - 2];
    let stds = vec![cfg.init_std; cfg.dims.len() - 1];
    let net = Network::random_dense(&cfg.dims, acts, &stds, &mut g)?;
    let x = rng::gaussian_matrix(cfg.dims[0], cfg.samples, 1.0, &mut g);
    let y = rng::gaussian_matrix(*cfg.dims.last().expect("dims"), cfg.samples, 1.0, &mut g);
    Ok((net, Dataset::new(x, y)?))
}

pub fn run_seed(cfg: &DriftConfig, seed: u64) -> Result<Vec<DriftRow>> {
    let (net, data) = setup(cfg, seed)?;
    let problem = Training::new(&net, &data).with_exec(Exec::Sequential);
    let start = snapshot(&net);
    cfg.etas
        .iter()
        .map(|&eta| {
            let steps = (cfg.total_time / eta).round().max(1.0) as usize;
            let traj = flow::run(
                &problem,
                net.weights.clone(),
                &StepSchedule::constant(eta)?,
                RunOptions::new(steps, steps),
                &Meters::none(),
            )?;
            let end = snapshot(&net.with_weights(traj.final_params));
            Ok(DriftRow {
                seed,
                eta,
                steps,
                drift: total_layer_drift(&start, &end),
            })
        })
        .collect()
}

pub fn run(cfg: &DriftConfig, seed: u64, exec: Exec) -> Result<Vec<DriftRow>> {
    let per_seed: Result<Vec<Vec<DriftRow>>> =
        par::map_range(exec, cfg.seeds, |k| run_seed(cfg, seed + k as u64)).into_iter().collect();
    Ok(per_seed?.into_iter().flatten().collect())
}

/// `drift(eta_i) / drift(eta_{i+1})` for consecutive rows of one seed.
pub fn halving_ratios(rows: &[DriftRow]) -> Vec<f64> {
    rows.windows(2).map(|w| w[0].drift / w[1].drift).collect()
}

pub fn write(cfg: &DriftConfig, rows: &[DriftRow], dir: &Path, seed: u64) -> Result<Vec<SummaryStats>> {
    let file = format!("flow_drift_seed{seed}.csv");
    let mut w = csv::Writer::from_path(dir.join(&file))?;
    w.write_record(["seed", "eta", "steps", "drift"])?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            flow::fmt17(r.eta),
            r.steps.to_string(),
            flow::fmt17(r.drift),
        ])?;
    }
    w.flush()?;
    let mut s = SummaryStats::new("flow_drift", file);
    s.iterations = rows.iter().map(|r| r.steps).max().unwrap_or(0);
    s.final_objective = f64::NAN;
    let drifts: Vec<f64> = rows.iter().map(|r| r.drift).collect();
    s.meter("drift", &drifts);
    let mut ratios = Vec::new();
    let mut first_bad = None;
    for chunk in rows.chunks(cfg.etas.len()) {
        for (i, r) in halving_ratios(chunk).into_iter().enumerate() {
            let halved = (chunk[i].eta / chunk[i + 1].eta - 2.0).abs() < 1e-12;
            if halved && !(HALVING_RANGE.0..=HALVING_RANGE.1).contains(&r) && first_bad.is_none() {
                first_bad = Some(ratios.len());
            }
            ratios.push(r);
        }
    }
    s.meter("halving_ratio", &ratios);
    s.extra("halving_ratios", ratios);
    s.violation("halving_ratio_in_range", first_bad);
    Ok(vec![s])
}
