use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ActivationKind, NetworkName, NetworkSpec, PoolingArm};
use crate::pooling::InitScheme;
use crate::tensor::Precision;

/// Everything a run depends on. Serialized next to every result so a run can
/// be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: NetworkName,
    /// Arms to train. `compare` needs exactly one classic and one ordinal arm.
    pub arms: Vec<PoolingArm>,
    pub activation: ActivationKind,
    pub init: InitScheme,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub train_size: usize,
    pub test_size: usize,
    /// Maximum pixel shift of the optional augmentation; 0 disables it.
    pub shift: usize,
    pub precision: Precision,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            network: NetworkName::Baseline,
            arms: vec![PoolingArm::ClassicAvg, PoolingArm::Ordinal],
            activation: ActivationKind::Relu,
            init: InitScheme::Average,
            seeds: (1..=5).collect(),
            epochs: 5,
            batch_size: 64,
            lr: 0.01,
            momentum: 0.9,
            train_size: 10_000,
            test_size: 2_000,
            shift: 0,
            precision: Precision::F32,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.arms.is_empty() {
            return bad("at least one pooling arm is required".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("learning rate {} must be finite and nonnegative", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} must lie in [0, 1)", self.momentum));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return bad("train and test sizes must be positive".into());
        }
        if self.shift >= 28 {
            return bad(format!("shift {} must be below 28", self.shift));
        }
        Ok(())
    }

    /// The classic and ordinal arm of a paired comparison.
    pub fn pair(&self) -> Result<(PoolingArm, PoolingArm)> {
        match self.arms[..] {
            [a, b] if !a.is_ordinal() && b.is_ordinal() => Ok((a, b)),
            [a, b] if a.is_ordinal() && !b.is_ordinal() => Ok((b, a)),
            _ => Err(Error::Incompatible(format!(
                "a paired run needs one classic and one ordinal arm, got {:?}",
                self.arms
            ))),
        }
    }

    pub fn spec(&self, arm: PoolingArm) -> NetworkSpec {
        NetworkSpec {
            name: self.network,
            pooling: arm,
            activation: self.activation,
            init: self.init,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_desk_scale() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!((c.train_size, c.test_size, c.epochs, c.seeds.len()), (10_000, 2_000, 5, 5));
        assert_eq!((c.lr, c.momentum, c.batch_size), (0.01, 0.9, 64));
        assert_eq!(c.pair().unwrap(), (PoolingArm::ClassicAvg, PoolingArm::Ordinal));
    }

    #[test]
    fn json_round_trip_and_partial_input() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
        let p = ExperimentConfig::from_json(r#"{"network": "lenet5", "epochs": 0}"#).unwrap();
        assert_eq!((p.network, p.epochs, p.batch_size), (NetworkName::Lenet5, 0, 64));
        assert!(ExperimentConfig::from_json(r#"{"netwrk": "lenet5"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"momentum": 1.0}"#).is_err());
    }

    #[test]
    fn pairs() {
        let mut c = ExperimentConfig::default();
        c.arms = vec![PoolingArm::Ordinal, PoolingArm::ClassicMax];
        assert_eq!(c.pair().unwrap(), (PoolingArm::ClassicMax, PoolingArm::Ordinal));
        c.arms = vec![PoolingArm::ClassicAvg, PoolingArm::ClassicMax];
        assert!(c.pair().is_err());
        c.arms = vec![PoolingArm::Ordinal];
        assert!(c.pair().is_err());
    }
}
