//! GD on a user-described homogeneous network with Gaussian data.

use std::path::Path;

use anyhow::{Context, Result};
use autobalance_core::balance::layer_norms_sq;
use autobalance_core::flow::{self, Meters, RunOptions, StepSchedule, Trajectory};
use autobalance_core::homonet::{Activation, Dataset, Network, Training, WeightStack};
use autobalance_core::par::Exec;
use autobalance_core::rng;

use super::write_trajectory;
use crate::config::CustomConfig;
use crate::summary::SummaryStats;

#[derive(Debug, Clone)]
pub struct CustomOutcome {
    pub trajectory: Trajectory<WeightStack>,
    pub meter_names: Vec<String>,
}

pub fn network(cfg: &CustomConfig, seed: u64) -> Result<Network> {
    match &cfg.network {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut net = Network::from_description(&text).with_context(|| format!("in {}", path.display()))?;
            let mut g = rng::stream(seed, 21);
            for layer in &mut net.weights.0 {
                let params = layer.free_params_mut();
                if params.iter().all(|&x| x == 0.0) {
                    let fill = rng::gaussian_vector(params.len(), cfg.init_std, &mut g);
                    params.copy_from_slice(fill.as_slice());
                }
            }
            Ok(net)
        }
        None => {
            let mut g = rng::stream(seed, 21);
            Ok(Network::random_dense(
                &[4, 8, 8, 2],
                vec![Activation::Relu, Activation::Relu],
                &[cfg.init_std; 3],
                &mut g,
            )?)
        }
    }
}

pub fn run(cfg: &CustomConfig, seed: u64, exec: Exec) -> Result<CustomOutcome> {
    let net = network(cfg, seed)?;
    let mut g = rng::stream(seed, 22);
    let x = rng::gaussian_matrix(net.input_dim(), cfg.samples, 1.0, &mut g);
    let y = rng::gaussian_matrix(net.output_dim(), cfg.samples, 1.0, &mut g);
    let data = Dataset::new(x, y)?;
    let depth = net.depth();
    let mut names: Vec<String> = (1..=depth).map(|h| format!("norm_sq_{h}")).collect();
    names.extend((1..depth).map(|h| format!("diff_{h}{}", h + 1)));
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let arch = net.clone();
    let meters = Meters::new(&refs, move |w: &WeightStack| {
        let n = layer_norms_sq(&arch.with_weights(w.clone()));
        let mut v = n.clone();
        v.extend(n.windows(2).map(|p| p[0] - p[1]));
        v
    });
    let problem = Training::new(&net, &data).with_exec(exec);
    let trajectory = flow::run(
        &problem,
        net.weights.clone(),
        &StepSchedule::constant(cfg.eta)?,
        RunOptions::new(cfg.steps, cfg.record_every),
        &meters,
    )?;
    Ok(CustomOutcome {
        trajectory,
        meter_names: names,
    })
}

impl CustomOutcome {
    pub fn write(&self, dir: &Path, seed: u64) -> Result<Vec<SummaryStats>> {
        let file = format!("custom_seed{seed}.csv");
        write_trajectory(dir, &file, &self.trajectory, true)?;
        Ok(vec![SummaryStats::from_trajectory("custom", file, &self.trajectory)])
    }
}
