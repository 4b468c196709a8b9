//! TOML experiment configuration. Every key has a default and unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use autobalance_core::flow::StepSchedule;
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "AUTOBALANCE_OUT";
pub const DEFAULT_OUT: &str = "out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Fig1Mf,
    Fig3Balanced,
    Fig3Unbalanced,
    MfRankR,
    Rank1,
    FlowDrift,
    Custom,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1Mf => "fig1_mf",
            Preset::Fig3Balanced => "fig3_balanced",
            Preset::Fig3Unbalanced => "fig3_unbalanced",
            Preset::MfRankR => "mf_rank_r",
            Preset::Rank1 => "rank1",
            Preset::FlowDrift => "flow_drift",
            Preset::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub fig1: Fig1Config,
    pub fig3: Fig3Config,
    pub mf: MfConfig,
    pub rank1: Rank1Config,
    pub drift: DriftConfig,
    pub custom: CustomConfig,
}

impl ExperimentConfig {
    pub fn for_preset(preset: Preset) -> Self {
        Self {
            preset,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("invalid experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// `explicit`, then the config's `out`, then `$AUTOBALANCE_OUT`, then `out`.
    pub fn output_dir(&self, explicit: Option<&Path>) -> PathBuf {
        explicit
            .map(Path::to_path_buf)
            .or_else(|| self.out.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.fig1;
        positive("fig1.eta", f.eta)?;
        positive("fig1.init_variance", f.init_variance)?;
        positive("fig1.target_norm", f.target_norm)?;
        nonzero("fig1.steps", f.steps)?;
        nonzero("fig1.rank", f.rank)?;
        let g = &self.fig3;
        positive("fig3.eta", g.eta)?;
        positive("fig3.teacher_energy", g.teacher_energy)?;
        nonzero("fig3.steps", g.steps)?;
        nonzero("fig3.samples", g.samples)?;
        for (key, norms) in [("fig3.balanced_norms", &g.balanced_norms), ("fig3.unbalanced_norms", &g.unbalanced_norms)] {
            if norms.iter().any(|&x| !(x > 0.0)) {
                bail!("{key} must be positive");
            }
        }
        let m = &self.mf;
        positive("mf.eps", m.eps)?;
        positive("mf.target_norm", m.target_norm)?;
        nonzero("mf.steps", m.steps)?;
        m.schedule().context("mf.schedule")?;
        let r = &self.rank1;
        positive("rank1.sigma1", r.sigma1)?;
        positive("rank1.c_init", r.c_init)?;
        positive("rank1.c_step", r.c_step)?;
        positive("rank1.tol", r.tol)?;
        nonzero("rank1.seeds", r.seeds)?;
        let d = &self.drift;
        positive("drift.total_time", d.total_time)?;
        if d.etas.is_empty() || d.etas.iter().any(|&e| !(e > 0.0)) {
            bail!("drift.etas must be a non-empty list of positive step sizes");
        }
        if d.dims.len() < 3 {
            bail!("drift.dims must list at least three widths");
        }
        nonzero("drift.seeds", d.seeds)?;
        positive("custom.eta", self.custom.eta)?;
        positive("custom.init_std", self.custom.init_std)?;
        Ok(())
    }
}

fn positive(key: &str, x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        bail!("{key} must be positive, got {x}");
    }
    Ok(())
}

fn nonzero(key: &str, n: usize) -> Result<()> {
    if n == 0 {
        bail!("{key} must be at least 1");
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Gaussian,
    #[default]
    Equalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig1Config {
    pub d1: usize,
    pub d2: usize,
    pub rank: usize,
    pub target_norm: f64,
    pub eta: f64,
    pub init_variance: f64,
    pub init: InitKind,
    pub steps: usize,
    pub record_every: usize,
}

impl Default for Fig1Config {
    fn default() -> Self {
        Self {
            d1: 50,
            d2: 50,
            rank: 3,
            target_norm: 1.0,
            eta: 0.01,
            init_variance: 1e-6,
            init: InitKind::Equalized,
            steps: 10_000,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig3Config {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub samples: usize,
    pub steps: usize,
    pub eta: f64,
    pub record_every: usize,
    /// Mean squared target norm produced by the teacher network.
    pub teacher_energy: f64,
    /// Expected initial squared Frobenius norms of the three layers.
    pub balanced_norms: [f64; 3],
    pub unbalanced_norms: [f64; 3],
}

impl Default for Fig3Config {
    fn default() -> Self {
        Self {
            input_dim: 128,
            hidden_dim: 32,
            output_dim: 10,
            samples: 1000,
            steps: 10_000,
            eta: 0.05,
            record_every: 1,
            teacher_energy: 10.0,
            balanced_norms: [0.1, 0.1, 0.1],
            unbalanced_norms: [10.0, 1.0, 0.1],
        }
    }
}

impl Fig3Config {
    /// Widths of the original experiment.
    pub fn full_size() -> Self {
        Self {
            input_dim: 1000,
            hidden_dim: 100,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    Harmonic,
    Constant,
    Polynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MfConfig {
    pub d1: usize,
    pub d2: usize,
    pub rank: usize,
    pub target_norm: f64,
    /// Dense row-major CSV; overrides the random target when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_csv: Option<PathBuf>,
    pub eps: f64,
    pub schedule: ScheduleKind,
    /// Constant step size (`schedule = "constant"`).
    pub eta: f64,
    /// `a / (t + 1)^(1/2 + delta)` (`schedule = "polynomial"`).
    pub poly_a: f64,
    pub poly_delta: f64,
    pub regularized: bool,
    pub steps: usize,
    pub record_every: usize,
}

impl Default for MfConfig {
    fn default() -> Self {
        Self {
            d1: 20,
            d2: 20,
            rank: 3,
            target_norm: 1.0,
            target_csv: None,
            eps: 0.1,
            schedule: ScheduleKind::Harmonic,
            eta: 0.01,
            poly_a: 0.01,
            poly_delta: 0.5,
            regularized: false,
            steps: 100_000,
            record_every: 1,
        }
    }
}

impl MfConfig {
    /// Harmonic step sizes use the supplied target norm.
    pub fn schedule_for(&self, m_norm: f64) -> Result<StepSchedule> {
        Ok(match self.schedule {
            ScheduleKind::Harmonic => StepSchedule::harmonic(self.eps, self.rank, m_norm)?,
            ScheduleKind::Constant => StepSchedule::constant(self.eta)?,
            ScheduleKind::Polynomial => StepSchedule::polynomial(self.poly_a, self.poly_delta)?,
        })
    }

    fn schedule(&self) -> Result<StepSchedule> {
        self.schedule_for(self.target_norm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rank1Config {
    pub dim: usize,
    pub sigma1: f64,
    pub c_init: f64,
    pub c_step: f64,
    pub max_steps: usize,
    pub tol: f64,
    /// Number of consecutive seeds starting at the run seed.
    pub seeds: usize,
}

impl Default for Rank1Config {
    fn default() -> Self {
        use autobalance_core::rank1::*;
        Self {
            dim: 50,
            sigma1: 1.0,
            c_init: DEFAULT_C_INIT,
            c_step: DEFAULT_C_STEP,
            max_steps: DEFAULT_MAX_STEPS,
            tol: DEFAULT_TOL,
            seeds: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftConfig {
    /// Widths `n_0, ..., n_N` of the linear network.
    pub dims: Vec<usize>,
    pub samples: usize,
    pub init_std: f64,
    pub total_time: f64,
    pub etas: Vec<f64>,
    pub seeds: usize,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            dims: vec![4, 5, 5, 3],
            samples: 16,
            init_std: 0.5,
            total_time: 2.0,
            etas: vec![0.01, 0.005, 0.0025, 0.00125],
            seeds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CustomConfig {
    /// Network in the text description format; a small random ReLU net
    /// when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub network: Option<PathBuf>,
    /// Entry std for layers whose weights the description leaves out.
    pub init_std: f64,
    pub samples: usize,
    pub steps: usize,
    pub eta: f64,
    pub record_every: usize,
}

impl Default for CustomConfig {
    fn default() -> Self {
        Self {
            network: None,
            init_std: 0.3,
            samples: 64,
            steps: 1000,
            eta: 0.01,
            record_every: 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml("preset = \"rank1\"\nseed = 4\n[rank1]\ndim = 30\n").unwrap();
        assert_eq!(cfg.preset, Preset::Rank1);
        assert_eq!(cfg.rank1.dim, 30);
        assert_eq!(cfg.rank1.c_step, 0.01);
        assert_eq!(cfg.fig1, Fig1Config::default());
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ExperimentConfig::from_toml("[fig1]\nstep_size = 0.1\n").unwrap_err();
        assert!(format!("{err:#}").contains("step_size"), "{err:#}");
        let err = ExperimentConfig::from_toml("[mf]\neps = -1.0\n").unwrap_err();
        assert!(format!("{err:#}").contains("mf.eps"));
    }

    #[test]
    fn output_dir_precedence() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.output_dir(Some(Path::new("a"))), PathBuf::from("a"));
        cfg.out = Some("b".into());
        assert_eq!(cfg.output_dir(None), PathBuf::from("b"));
    }
}
