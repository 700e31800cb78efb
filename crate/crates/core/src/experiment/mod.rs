//! MNIST ingestion, paired training runs, relative-variation tables and
//! initialization/activation sweeps.

mod artifacts;
mod config;
mod mnist;
mod stats;
mod sweep;
mod train;

pub use artifacts::{
    read_metrics_csv, to_json_pretty, write_file, write_metrics_csv, KernelDump, KernelRun, MetricsRow,
    CHECKPOINT_FILE, CONFIG_FILE, DISTRIBUTIONS_FILE, KERNELS_FILE, METRICS_FILE, SUMMARY_FILE,
};
pub use config::ExperimentConfig;
pub use mnist::{
    load_mnist_idx, load_split, parse_idx_images, parse_idx_labels, resolve_data_dir, Dataset, Split, CLASSES,
    IMAGES_MAGIC, IMAGE_SIDE, LABELS_MAGIC,
};
pub use stats::{
    mean, percent_change, relative_variation, sample_variance, summarize, CompareSummary, MetricVariation,
    PairRow, ParameterVariation, VariationTable, WinFractions,
};
pub use sweep::{sweep, SweepArm, SweepCell, SweepConfig, SweepGrid, SweepOutcome};
pub use train::{
    evaluate, paired_run, train_arm, train_network, ArmResult, EpochMetrics, OnEpoch, PairedRunResult,
    STREAM_AUGMENT, STREAM_BATCHES,
};

/// Loads the train and test splits from `dir` and keeps the first
/// `train_size` / `test_size` samples.
pub fn load_subsets(dir: &std::path::Path, train_size: usize, test_size: usize) -> crate::Result<(Dataset, Dataset)> {
    let train = load_split(dir, Split::Train)?.subset(train_size)?;
    let test = load_split(dir, Split::Test)?.subset(test_size)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{NetworkName, PoolingArm};
    use crate::tensor::{Precision, RngStream};

    /// Random images whose label is the quadrant holding the brightest blob.
    fn synthetic(n: usize, seed: u64, split: Split) -> Dataset {
        let mut rng = RngStream::new(seed);
        let mut pixels = vec![0u8; n * 784];
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = rng.next_below(4) as u8;
            let (r0, c0) = (((label / 2) * 14) as usize, ((label % 2) * 14) as usize);
            for r in 0..14 {
                for c in 0..14 {
                    pixels[i * 784 + (r0 + r) * 28 + c0 + c] = 120 + rng.next_below(100) as u8;
                }
            }
            labels.push(label);
        }
        Dataset::from_raw(split, pixels, labels).unwrap()
    }

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            network: NetworkName::Lenet5,
            seeds: vec![1],
            epochs: 2,
            batch_size: 16,
            train_size: 64,
            test_size: 32,
            ..Default::default()
        }
    }

    #[test]
    fn paired_run_is_deterministic_and_shares_batches() {
        let (train, test) = (synthetic(64, 1, Split::Train), synthetic(32, 2, Split::Test));
        let cfg = small_cfg();
        let a = paired_run(&cfg, 1, &train, &test, &mut |_, _, _| {}).unwrap();
        let b = paired_run(&cfg, 1, &train, &test, &mut |_, _, _| {}).unwrap();
        assert_eq!(a.classic.history, b.classic.history);
        assert_eq!(a.ordinal.history, b.ordinal.history);
        assert_eq!(a.ordinal.checkpoint, b.ordinal.checkpoint);
        assert_eq!(a.classic.batch_digest, a.ordinal.batch_digest);
        assert_eq!(a.classic.samples_seen, 128);
        // average init: same state, up to f32 summation order
        assert!((a.classic.initial_loss - a.ordinal.initial_loss).abs() < 1e-6);
        assert_eq!(a.classic.history.len(), 2);
        for k in &a.ordinal.kernels {
            k.validate(1e-9).unwrap();
        }
    }

    #[test]
    fn zero_epochs_evaluates_once() {
        let (train, test) = (synthetic(40, 1, Split::Train), synthetic(20, 2, Split::Test));
        let cfg = ExperimentConfig { epochs: 0, ..small_cfg() };
        let r = train_arm(&cfg, PoolingArm::Ordinal, 3, &train, &test, &mut |_, _, _| {}).unwrap();
        assert_eq!(r.history.len(), 1);
        assert_eq!(r.history[0].epoch, 0);
        assert_eq!(r.samples_seen, 0);
        assert!((0.0..=100.0).contains(&r.history[0].test_error));
    }

    #[test]
    fn training_learns_the_synthetic_task() {
        let (train, test) = (synthetic(256, 1, Split::Train), synthetic(64, 2, Split::Test));
        let cfg = ExperimentConfig { epochs: 3, ..small_cfg() };
        let r = train_arm(&cfg, PoolingArm::ClassicMax, 1, &train, &test, &mut |_, _, _| {}).unwrap();
        assert!(r.history[2].train_loss < r.history[0].train_loss);
        assert!(r.final_metrics().test_error < 50.0, "{:?}", r.history);
    }

    #[test]
    fn f64_and_f32_agree_closely() {
        let (train, test) = (synthetic(32, 1, Split::Train), synthetic(16, 2, Split::Test));
        let cfg = ExperimentConfig { epochs: 1, ..small_cfg() };
        let a = train_arm(&cfg, PoolingArm::Ordinal, 1, &train, &test, &mut |_, _, _| {}).unwrap();
        let cfg64 = ExperimentConfig { precision: Precision::F64, ..cfg };
        let b = train_arm(&cfg64, PoolingArm::Ordinal, 1, &train, &test, &mut |_, _, _| {}).unwrap();
        assert!((a.initial_loss - b.initial_loss).abs() < 1e-5);
        assert!((a.history[0].train_loss - b.history[0].train_loss).abs() < 1e-3);
    }

    #[test]
    fn summary_of_two_seeds() {
        let (train, test) = (synthetic(32, 1, Split::Train), synthetic(16, 2, Split::Test));
        let cfg = ExperimentConfig { epochs: 1, seeds: vec![1, 2], ..small_cfg() };
        let runs: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&s| paired_run(&cfg, s, &train, &test, &mut |_, _, _| {}).unwrap())
            .collect();
        let s = summarize(&runs).unwrap();
        assert_eq!(s.pairs.len(), 2);
        assert_eq!(s.parameters.extra, 88);
        assert!(s.variation.is_some());
        let one = summarize(&runs[..1]).unwrap();
        assert!(one.variation.is_none());
    }

    #[test]
    fn sweep_single_cell() {
        let (train, test) = (synthetic(32, 1, Split::Train), synthetic(16, 2, Split::Test));
        let cfg = SweepConfig {
            experiment: ExperimentConfig { epochs: 1, ..small_cfg() },
            grid: SweepGrid {
                inits: vec![crate::pooling::InitScheme::Min],
                activations: vec![crate::network::ActivationKind::None],
                arms: vec![SweepArm::Classic],
            },
        };
        let out = sweep(&cfg, &train, &test, &mut |_, _, _| {}).unwrap();
        assert_eq!(out.cells.len(), 1);
        assert_eq!(out.cells[0].pooling, PoolingArm::ClassicMin);
        assert_eq!(out.cells[0].mean_test_error, out.runs[0][0].final_metrics().test_error);
    }
}
