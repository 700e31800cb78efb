use std::fmt;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::mnist::Dataset;
use super::stats::mean;
use super::train::{train_arm, ArmResult, OnEpoch};
use crate::error::{Error, Result};
use crate::network::{ActivationKind, PoolingArm};
use crate::pooling::InitScheme;

/// Which family a sweep cell belongs to. A classic cell uses the fixed
/// pooling matching its init scheme (average, max or min); there is no
/// classic counterpart of `uniform`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepArm {
    Classic,
    Ordinal,
}

impl fmt::Display for SweepArm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepArm::Classic => "classic",
            SweepArm::Ordinal => "ordinal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub inits: Vec<InitScheme>,
    pub activations: Vec<ActivationKind>,
    pub arms: Vec<SweepArm>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            inits: InitScheme::ALL.to_vec(),
            activations: ActivationKind::ALL.to_vec(),
            arms: vec![SweepArm::Classic, SweepArm::Ordinal],
        }
    }
}

/// Sweep input: the shared settings plus the grid. `arms`, `init` and
/// `activation` of the experiment block are taken from the grid instead.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub experiment: ExperimentConfig,
    pub grid: SweepGrid,
}

impl SweepConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(s)?;
        cfg.experiment.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Grid cells in order (init, activation, arm), skipping classic+uniform.
    pub fn cells(&self) -> Vec<(InitScheme, ActivationKind, PoolingArm)> {
        let mut out = Vec::new();
        for &init in &self.grid.inits {
            for &activation in &self.grid.activations {
                for &arm in &self.grid.arms {
                    let pooling = match arm {
                        SweepArm::Ordinal => Some(PoolingArm::Ordinal),
                        SweepArm::Classic => PoolingArm::classic_for(init),
                    };
                    if let Some(pooling) = pooling {
                        out.push((init, activation, pooling));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub init: InitScheme,
    pub activation: ActivationKind,
    pub pooling: PoolingArm,
    pub seeds: Vec<u64>,
    /// Final test error (percent) per seed.
    pub test_errors: Vec<f64>,
    pub mean_test_error: f64,
}

impl SweepCell {
    pub fn run_id(&self, seed: u64) -> String {
        format!("{}-{}-{}-seed{}", self.init, self.activation, self.pooling, seed)
    }
}

pub struct SweepOutcome {
    pub cells: Vec<SweepCell>,
    /// Per cell, per seed.
    pub runs: Vec<Vec<ArmResult>>,
}

pub fn sweep(cfg: &SweepConfig, train: &Dataset, test: &Dataset, on_epoch: &mut OnEpoch<'_>) -> Result<SweepOutcome> {
    let combos = cfg.cells();
    if combos.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let mut cells = Vec::with_capacity(combos.len());
    let mut runs = Vec::with_capacity(combos.len());
    for (init, activation, pooling) in combos {
        let mut exp = cfg.experiment.clone();
        exp.init = init;
        exp.activation = activation;
        exp.arms = vec![pooling];
        let results = exp
            .seeds
            .iter()
            .map(|&seed| train_arm(&exp, pooling, seed, train, test, on_epoch))
            .collect::<Result<Vec<_>>>()?;
        let test_errors: Vec<f64> = results.iter().map(|r| r.final_metrics().test_error).collect();
        cells.push(SweepCell {
            init,
            activation,
            pooling,
            seeds: exp.seeds.clone(),
            mean_test_error: mean(&test_errors),
            test_errors,
        });
        runs.push(results);
    }
    Ok(SweepOutcome { cells, runs })
}
