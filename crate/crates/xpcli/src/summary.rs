use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use autobalance_core::flow::Trajectory;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeterRange {
    pub initial: f64,
    pub last: f64,
    pub min: f64,
    pub max: f64,
}

impl MeterRange {
    pub fn of(values: &[f64]) -> Option<Self> {
        let (&initial, &last) = (values.first()?, values.last()?);
        Some(Self {
            initial,
            last,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// Per-run digest written next to the trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub name: String,
    pub csv: String,
    pub iterations: usize,
    pub final_objective: f64,
    pub meters: BTreeMap<String, MeterRange>,
    /// First logged iteration where each monitored property failed.
    pub violations: BTreeMap<String, Option<usize>>,
    pub extra: BTreeMap<String, Value>,
}

impl SummaryStats {
    pub fn new(name: impl Into<String>, csv: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            csv: csv.into(),
            iterations: 0,
            final_objective: f64::NAN,
            meters: BTreeMap::new(),
            violations: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn from_trajectory<P>(name: impl Into<String>, csv: impl Into<String>, traj: &Trajectory<P>) -> Self {
        let mut s = Self::new(name, csv);
        s.iterations = traj.last().t;
        s.final_objective = traj.last().objective;
        let objective: Vec<f64> = traj.records.iter().map(|r| r.objective).collect();
        let grad: Vec<f64> = traj.records.iter().map(|r| r.grad_norm).collect();
        s.meter("objective", &objective);
        s.meter("grad_norm", &grad);
        for name in &traj.meter_names {
            let values = traj.meter(name).expect("listed meter");
            s.meter(name, &values);
        }
        s
    }

    pub fn meter(&mut self, name: &str, values: &[f64]) {
        if let Some(r) = MeterRange::of(values) {
            self.meters.insert(name.to_string(), r);
        }
    }

    pub fn violation(&mut self, property: &str, first: Option<usize>) {
        self.violations.insert(property.to_string(), first);
    }

    pub fn extra(&mut self, key: &str, value: impl Into<Value>) {
        self.extra.insert(key.to_string(), value.into());
    }

    pub fn is_clean(&self) -> bool {
        self.violations.values().all(Option::is_none)
    }
}

/// Everything one invocation produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub preset: String,
    pub seed: u64,
    pub runs: Vec<SummaryStats>,
}

impl RunReport {
    pub fn is_clean(&self) -> bool {
        self.runs.iter().all(SummaryStats::is_clean)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_and_cleanliness() {
        let r = MeterRange::of(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!((r.initial, r.last, r.min, r.max), (3.0, 2.0, 1.0, 3.0));
        assert!(MeterRange::of(&[]).is_none());
        let mut s = SummaryStats::new("a", "a.csv");
        s.violation("p", None);
        assert!(s.is_clean());
        s.violation("q", Some(4));
        assert!(!s.is_clean());
    }
}
