use serde::Serialize;

use super::train::{EpochMetrics, PairedRunResult};
use crate::error::{Error, Result};

/// `100 * (new - old) / old`, or `None` when `old` is zero.
pub fn percent_change(old: f64, new: f64) -> Option<f64> {
    (old != 0.0).then(|| 100.0 * (new - old) / old)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance; needs at least two values.
pub fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricVariation {
    pub metric: &'static str,
    pub classic_mean: f64,
    pub ordinal_mean: f64,
    /// `None` when the classic mean is zero.
    pub mean_change_pct: Option<f64>,
    pub classic_variance: f64,
    pub ordinal_variance: f64,
    /// `None` when the classic variance is zero.
    pub variance_change_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterVariation {
    pub classic: usize,
    pub ordinal: usize,
    pub extra: usize,
    pub change_pct: f64,
}

impl ParameterVariation {
    pub fn new(classic: usize, ordinal: usize) -> Self {
        ParameterVariation {
            classic,
            ordinal,
            extra: ordinal.saturating_sub(classic),
            change_pct: 100.0 * (ordinal as f64 - classic as f64) / classic as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationTable {
    pub classic_runs: usize,
    pub ordinal_runs: usize,
    pub metrics: Vec<MetricVariation>,
    pub parameters: ParameterVariation,
    /// Names of percentages that could not be formed (zero denominators).
    pub degenerate: Vec<String>,
}

const METRICS: [(&str, fn(&EpochMetrics) -> f64); 3] = [
    ("train_loss", |m| m.train_loss),
    ("test_loss", |m| m.test_loss),
    ("test_error", |m| m.test_error),
];

/// Percent change from the classic to the ordinal runs of the mean and the
/// variance of each final metric.
pub fn relative_variation(
    classic: &[EpochMetrics],
    ordinal: &[EpochMetrics],
    parameters: ParameterVariation,
) -> Result<VariationTable> {
    if classic.len() < 2 || ordinal.len() < 2 {
        return Err(Error::Degenerate(format!(
            "relative variation needs at least two runs per arm, got {} and {}",
            classic.len(),
            ordinal.len()
        )));
    }
    let mut degenerate = Vec::new();
    let metrics = METRICS
        .iter()
        .map(|&(metric, get)| {
            let c: Vec<f64> = classic.iter().map(get).collect();
            let o: Vec<f64> = ordinal.iter().map(get).collect();
            let (cm, om, cv, ov) = (mean(&c), mean(&o), sample_variance(&c), sample_variance(&o));
            let mean_change_pct = percent_change(cm, om);
            let variance_change_pct = percent_change(cv, ov);
            if mean_change_pct.is_none() {
                degenerate.push(format!("{metric} mean"));
            }
            if variance_change_pct.is_none() {
                degenerate.push(format!("{metric} variance"));
            }
            MetricVariation {
                metric,
                classic_mean: cm,
                ordinal_mean: om,
                mean_change_pct,
                classic_variance: cv,
                ordinal_variance: ov,
                variance_change_pct,
            }
        })
        .collect();
    Ok(VariationTable {
        classic_runs: classic.len(),
        ordinal_runs: ordinal.len(),
        metrics,
        parameters,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRow {
    pub seed: u64,
    pub classic: EpochMetrics,
    pub ordinal: EpochMetrics,
    pub initial_loss_classic: f64,
    pub initial_loss_ordinal: f64,
}

/// Fraction of pairs in which the ordinal arm is strictly lower.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WinFractions {
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareSummary {
    pub pairs: Vec<PairRow>,
    pub ordinal_wins: WinFractions,
    pub parameters: ParameterVariation,
    /// Absent with fewer than two seeds.
    pub variation: Option<VariationTable>,
}

pub fn summarize(runs: &[PairedRunResult]) -> Result<CompareSummary> {
    let first = runs.first().ok_or_else(|| Error::Degenerate("no paired runs".into()))?;
    let parameters = ParameterVariation::new(first.classic.parameter_count, first.ordinal.parameter_count);
    let pairs: Vec<PairRow> = runs
        .iter()
        .map(|r| PairRow {
            seed: r.seed,
            classic: *r.classic.final_metrics(),
            ordinal: *r.ordinal.final_metrics(),
            initial_loss_classic: r.classic.initial_loss,
            initial_loss_ordinal: r.ordinal.initial_loss,
        })
        .collect();
    let frac = |get: fn(&EpochMetrics) -> f64| {
        pairs.iter().filter(|p| get(&p.ordinal) < get(&p.classic)).count() as f64 / pairs.len() as f64
    };
    let ordinal_wins = WinFractions {
        train_loss: frac(|m| m.train_loss),
        test_loss: frac(|m| m.test_loss),
        test_error: frac(|m| m.test_error),
    };
    let variation = if runs.len() >= 2 {
        let c: Vec<EpochMetrics> = pairs.iter().map(|p| p.classic).collect();
        let o: Vec<EpochMetrics> = pairs.iter().map(|p| p.ordinal).collect();
        Some(relative_variation(&c, &o, parameters.clone())?)
    } else {
        None
    };
    Ok(CompareSummary {
        pairs,
        ordinal_wins,
        parameters,
        variation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(train_loss: f64, test_loss: f64, test_error: f64) -> EpochMetrics {
        EpochMetrics {
            epoch: 1,
            train_loss,
            test_loss,
            test_error,
        }
    }

    #[test]
    fn identical_sets_vary_by_zero() {
        let runs = [m(0.5, 0.6, 2.0), m(0.4, 0.7, 3.0), m(0.3, 0.5, 1.0)];
        let t = relative_variation(&runs, &runs, ParameterVariation::new(10, 10)).unwrap();
        for v in &t.metrics {
            assert_eq!(v.mean_change_pct, Some(0.0));
            assert_eq!(v.variance_change_pct, Some(0.0));
        }
        assert!(t.degenerate.is_empty());
    }

    #[test]
    fn arithmetic() {
        let c = [m(1.0, 1.0, 2.0), m(3.0, 1.0, 4.0)];
        let o = [m(1.0, 1.0, 1.0), m(2.0, 1.0, 2.0)];
        let t = relative_variation(&c, &o, ParameterVariation::new(100, 108)).unwrap();
        // train loss: means 2 -> 1.5, variances 2 -> 0.5
        assert_eq!(t.metrics[0].mean_change_pct, Some(-25.0));
        assert_eq!(t.metrics[0].variance_change_pct, Some(-75.0));
        // test loss is constant: zero variance denominator
        assert_eq!(t.metrics[1].variance_change_pct, None);
        assert_eq!(t.degenerate, ["test_loss variance"]);
        assert_eq!(t.parameters.change_pct, 8.0);
    }

    #[test]
    fn parameter_deltas() {
        let p = ParameterVariation::new(52_746, 52_746 + 4224);
        assert_eq!(format!("{:.1}", p.change_pct), "8.0");
        let p = ParameterVariation::new(61_706, 61_706 + 88);
        assert_eq!(format!("{:.2}", p.change_pct), "0.14");
        let p = ParameterVariation::new(23_946, 23_946 + 3328);
        assert_eq!(format!("{:.1}", p.change_pct), "13.9");
    }

    #[test]
    fn too_few_runs() {
        let r = [m(1.0, 1.0, 1.0)];
        assert!(relative_variation(&r, &r, ParameterVariation::new(1, 1)).is_err());
    }

    #[test]
    fn variance_is_unbiased() {
        assert_eq!(sample_variance(&[1.0, 2.0, 3.0, 4.0]), 5.0 / 3.0);
    }
}
