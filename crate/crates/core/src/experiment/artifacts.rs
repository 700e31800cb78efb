//! Files written by runs: metrics CSV, kernel dumps and JSON snapshots.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::EpochMetrics;
use crate::error::{Error, Result};
use crate::network::PoolingArm;
use crate::pooling::OrdinalKernelSet;

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const KERNELS_FILE: &str = "kernels.json";
pub const DISTRIBUTIONS_FILE: &str = "distributions.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub arm: PoolingArm,
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_error: f64,
}

impl MetricsRow {
    pub fn new(run_id: &str, arm: PoolingArm, m: &EpochMetrics) -> Self {
        MetricsRow {
            run_id: run_id.to_string(),
            arm,
            epoch: m.epoch,
            train_loss: m.train_loss,
            test_loss: m.test_loss,
            test_error: m.test_error,
        }
    }
}

pub fn write_metrics_csv<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Learned kernels of one trained network, one set per ordinal layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRun {
    pub run_id: String,
    pub arm: PoolingArm,
    pub layers: Vec<OrdinalKernelSet>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KernelDump {
    pub runs: Vec<KernelRun>,
}

impl KernelDump {
    pub fn to_json(&self) -> Result<String> {
        to_json_pretty(self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json_pretty<S: Serialize>(value: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}
