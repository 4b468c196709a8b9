//! Three-layer ReLU network trained by GD from balanced or unbalanced small
//! initializations, tracking per-layer squared norms.

use std::path::Path;

use anyhow::Result;
use autobalance_core::flow::{self, Meters, RunOptions, StepSchedule, Trajectory};
use autobalance_core::homonet::{Activation, Dataset, Layer, Network, Training, WeightStack};
use autobalance_core::par::Exec;
use autobalance_core::rng;
use nalgebra::DMatrix;

use super::write_trajectory;
use crate::config::Fig3Config;
use crate::summary::SummaryStats;

pub const METERS: [&str; 9] = [
    "norm_sq_1",
    "norm_sq_2",
    "norm_sq_3",
    "diff_12",
    "diff_23",
    "diff_13",
    "ratio_12",
    "ratio_23",
    "ratio_13",
];
const PAIRS: [(usize, usize); 3] = [(0, 1), (1, 2), (0, 2)];

/// Balanced preset: max pairwise diff at the end, as a fraction of the mean.
pub const BALANCE_FRACTION: f64 = 0.02;
/// Unbalanced preset: allowed change of each pairwise diff, relative.
pub const DIFF_CHANGE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Balanced,
    Unbalanced,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Balanced => "fig3_balanced",
            Variant::Unbalanced => "fig3_unbalanced",
        }
    }
}

fn dims(cfg: &Fig3Config) -> [usize; 4] {
    [cfg.input_dim, cfg.hidden_dim, cfg.hidden_dim, cfg.output_dim]
}

fn activations() -> Vec<Activation> {
    vec![Activation::Relu, Activation::Relu]
}

/// Teacher with unit-Frobenius layers, then a common rescaling so the mean
/// squared target norm equals `teacher_energy`. Inputs are `N(0, I / n_0)`.
pub fn dataset(cfg: &Fig3Config, seed: u64) -> Result<Dataset> {
    let d = dims(cfg);
    let mut g = rng::stream(seed, 1);
    let layers = d
        .windows(2)
        .map(|w| {
            let m = rng::gaussian_matrix(w[1], w[0], 1.0, &mut g);
            let n = m.norm();
            Layer::dense(m / n)
        })
        .collect();
    let teacher = Network::new(layers, activations())?;
    let mut g = rng::stream(seed, 2);
    let x = rng::gaussian_matrix(d[0], cfg.samples, 1.0 / (d[0] as f64).sqrt(), &mut g);
    let mut y = DMatrix::zeros(d[3], cfg.samples);
    for i in 0..cfg.samples {
        let out = teacher.forward(&x.column(i).into_owned())?;
        y.set_column(i, out.output());
    }
    let energy = y.norm_squared() / cfg.samples as f64;
    if energy > 0.0 {
        y *= (cfg.teacher_energy / energy).sqrt();
    }
    Ok(Dataset::new(x, y)?)
}

/// Student with entry variance `norms[h] / (n_h n_{h+1})`, so that
/// `E |W_h|_F^2 = norms[h]`.
pub fn student(cfg: &Fig3Config, variant: Variant, seed: u64) -> Result<Network> {
    let norms = match variant {
        Variant::Balanced => cfg.balanced_norms,
        Variant::Unbalanced => cfg.unbalanced_norms,
    };
    let d = dims(cfg);
    let stds: Vec<f64> = d
        .windows(2)
        .zip(norms)
        .map(|(w, n)| (n / (w[0] * w[1]) as f64).sqrt())
        .collect();
    let mut g = rng::stream(seed, 3);
    Ok(Network::random_dense(&d, activations(), &stds, &mut g)?)
}

fn meter_values(w: &WeightStack) -> Vec<f64> {
    let n: Vec<f64> = w.layers().iter().map(Layer::param_norm_sq).collect();
    let mut v = n.clone();
    v.extend(PAIRS.iter().map(|&(i, j)| n[i] - n[j]));
    v.extend(PAIRS.iter().map(|&(i, j)| n[i] / n[j]));
    v
}

#[derive(Debug, Clone)]
pub struct Fig3Outcome {
    pub variant: Variant,
    pub trajectory: Trajectory<WeightStack>,
}

pub fn run(cfg: &Fig3Config, variant: Variant, seed: u64, exec: Exec) -> Result<Fig3Outcome> {
    let data = dataset(cfg, seed)?;
    let net = student(cfg, variant, seed)?;
    let problem = Training::new(&net, &data).with_exec(exec);
    let meters = Meters::new(&METERS, meter_values);
    let trajectory = flow::run(
        &problem,
        net.weights.clone(),
        &StepSchedule::constant(cfg.eta)?,
        RunOptions::new(cfg.steps, cfg.record_every),
        &meters,
    )?;
    Ok(Fig3Outcome { variant, trajectory })
}

impl Fig3Outcome {
    fn series(&self, name: &str) -> Vec<f64> {
        self.trajectory.meter(name).expect("fig3 meter")
    }

    pub fn norms(&self, record: usize) -> [f64; 3] {
        let m = &self.trajectory.records[record].meters;
        [m[0], m[1], m[2]]
    }

    pub fn final_norms(&self) -> [f64; 3] {
        self.norms(self.trajectory.records.len() - 1)
    }

    /// Max pairwise `|norm_i - norm_j|` at the last iterate over the mean norm.
    pub fn final_balance_fraction(&self) -> f64 {
        let n = self.final_norms();
        let mean = n.iter().sum::<f64>() / 3.0;
        PAIRS.iter().map(|&(i, j)| (n[i] - n[j]).abs()).fold(0.0, f64::max) / mean
    }

    /// For each pair, the largest `|diff_t - diff_0| / |diff_0|` over the run.
    pub fn diff_changes(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (k, name) in ["diff_12", "diff_23", "diff_13"].iter().enumerate() {
            let s = self.series(name);
            out[k] = s.iter().map(|d| (d - s[0]).abs()).fold(0.0, f64::max) / s[0].abs();
        }
        out
    }

    /// `(|ratio_0 - 1|, |ratio_end - 1|)` per pair.
    pub fn ratio_gaps(&self) -> [(f64, f64); 3] {
        let mut out = [(0.0, 0.0); 3];
        for (k, name) in ["ratio_12", "ratio_23", "ratio_13"].iter().enumerate() {
            let s = self.series(name);
            out[k] = ((s[0] - 1.0).abs(), (s[s.len() - 1] - 1.0).abs());
        }
        out
    }

    pub fn write(&self, dir: &Path, seed: u64) -> Result<Vec<SummaryStats>> {
        let name = self.variant.name();
        let file = format!("{name}_seed{seed}.csv");
        write_trajectory(dir, &file, &self.trajectory, false)?;
        let mut s = SummaryStats::from_trajectory(name, file, &self.trajectory);
        let last = s.iterations;
        let frac = self.final_balance_fraction();
        s.extra("final_norms", self.final_norms().to_vec());
        s.extra("final_balance_fraction", frac);
        let changes = self.diff_changes();
        s.extra("diff_changes", changes.to_vec());
        match self.variant {
            Variant::Balanced => s.violation("final_balance", (frac > BALANCE_FRACTION).then_some(last)),
            Variant::Unbalanced => {
                for (k, name) in ["diff_12_stable", "diff_23_stable", "diff_13_stable"].iter().enumerate() {
                    let series = self.series(&METERS[3 + k]);
                    let d0 = series[0];
                    let first = self
                        .trajectory
                        .records
                        .iter()
                        .zip(&series)
                        .find(|(_, d)| (*d - d0).abs() > DIFF_CHANGE * d0.abs())
                        .map(|(r, _)| r.t);
                    s.violation(name, first);
                }
                let converging = self.ratio_gaps().iter().all(|(a, b)| b < a);
                s.violation("ratios_approach_one", (!converging).then_some(last));
            }
        }
        Ok(vec![s])
    }
}
