use serde::Serialize;

use super::config::ExperimentConfig;
use super::mnist::Dataset;
use crate::error::{Error, Result};
use crate::network::{build_network, build_paired, Checkpoint, Network, PoolingArm, Sgd};
use crate::pooling::OrdinalKernelSet;
use crate::tensor::{Precision, RngStream, Scalar};

/// Random stream for the per-epoch sample order.
pub const STREAM_BATCHES: u64 = 2;
/// Random stream for the optional pixel-shift augmentation.
pub const STREAM_AUGMENT: u64 = 3;

const EVAL_CHUNK: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's minibatches, each taken before its
    /// update; for epoch 0, the loss on the whole training set.
    pub train_loss: f64,
    pub test_loss: f64,
    /// Percent.
    pub test_error: f64,
}

/// One trained network.
#[derive(Debug, Clone)]
pub struct ArmResult {
    pub arm: PoolingArm,
    pub seed: u64,
    pub history: Vec<EpochMetrics>,
    /// Loss of the first training batch before any update.
    pub initial_loss: f64,
    /// FNV-1a digest of every sample index consumed, in order.
    pub batch_digest: u64,
    pub samples_seen: usize,
    pub parameter_count: usize,
    pub kernels: Vec<OrdinalKernelSet>,
    pub checkpoint: Checkpoint,
}

impl ArmResult {
    pub fn final_metrics(&self) -> &EpochMetrics {
        self.history.last().expect("at least one row")
    }
}

/// Progress callback: arm, seed and the row just recorded.
pub type OnEpoch<'a> = dyn FnMut(PoolingArm, u64, &EpochMetrics) + 'a;

struct Digest(u64);

impl Digest {
    fn new() -> Self {
        Digest(0xcbf2_9ce4_8422_2325)
    }

    fn push(&mut self, index: usize) {
        for b in (index as u64).to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
}

/// Mean loss and error rate (percent) over a dataset.
pub fn evaluate<T: Scalar>(net: &Network<T>, data: &Dataset) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0;
    let indices: Vec<usize> = (0..data.len()).collect();
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (x, y) = data.batch::<T>(chunk, 0, None)?;
        let (l, c) = net.evaluate(&x, &y)?;
        loss += l;
        correct += c;
    }
    let n = data.len() as f64;
    Ok((loss / n, 100.0 * (n - correct as f64) / n))
}

/// Trains `net` in place with the configured SGD. Sample order comes from
/// stream [`STREAM_BATCHES`] of `seed`, so any two networks trained with the
/// same seed and data see identical batches.
pub fn train_network<T: Scalar>(
    net: &mut Network<T>,
    arm: PoolingArm,
    cfg: &ExperimentConfig,
    seed: u64,
    train: &Dataset,
    test: &Dataset,
    on_epoch: &mut OnEpoch<'_>,
) -> Result<ArmResult> {
    cfg.validate()?;
    let mut order_rng = RngStream::with_stream(seed, STREAM_BATCHES);
    let mut aug_rng = RngStream::with_stream(seed, STREAM_AUGMENT);
    let mut sgd = Sgd::new(cfg.lr, cfg.momentum)?;
    let mut digest = Digest::new();
    let mut samples_seen = 0;
    let mut initial_loss = None;
    let mut history = Vec::with_capacity(cfg.epochs.max(1));

    for epoch in 1..=cfg.epochs {
        let order = order_rng.shuffled_indices(train.len())?;
        let mut sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let rng = (cfg.shift > 0).then_some(&mut aug_rng);
            let (x, y) = train.batch::<T>(batch, cfg.shift, rng)?;
            let (loss, grads) = net.loss_and_grad(&x, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            initial_loss.get_or_insert(loss);
            sgd.step(net, &grads)?;
            sum += loss * batch.len() as f64;
            batch.iter().for_each(|&i| digest.push(i));
            samples_seen += batch.len();
        }
        let (test_loss, test_error) = evaluate(net, test)?;
        let row = EpochMetrics {
            epoch,
            train_loss: sum / train.len() as f64,
            test_loss,
            test_error,
        };
        on_epoch(arm, seed, &row);
        history.push(row);
    }

    if cfg.epochs == 0 {
        let first: Vec<usize> = order_rng.shuffled_indices(train.len())?.into_iter().take(cfg.batch_size).collect();
        let (x, y) = train.batch::<T>(&first, 0, None)?;
        initial_loss = Some(net.loss_and_grad(&x, &y)?.0);
        let (train_loss, _) = evaluate(net, train)?;
        let (test_loss, test_error) = evaluate(net, test)?;
        let row = EpochMetrics {
            epoch: 0,
            train_loss,
            test_loss,
            test_error,
        };
        on_epoch(arm, seed, &row);
        history.push(row);
    }

    Ok(ArmResult {
        arm,
        seed,
        history,
        initial_loss: initial_loss.expect("set above"),
        batch_digest: digest.0,
        samples_seen,
        parameter_count: net.parameter_count(),
        kernels: net.ordinal_kernels().map(|(_, k)| k.clone()).collect(),
        checkpoint: Checkpoint::from_network(net),
    })
}

fn train_arm_at<T: Scalar>(
    cfg: &ExperimentConfig,
    arm: PoolingArm,
    seed: u64,
    train: &Dataset,
    test: &Dataset,
    on_epoch: &mut OnEpoch<'_>,
) -> Result<ArmResult> {
    let mut net = build_network::<T>(&cfg.spec(arm), seed)?;
    train_network(&mut net, arm, cfg, seed, train, test, on_epoch)
}

/// Builds and trains one arm at the configured precision.
pub fn train_arm(
    cfg: &ExperimentConfig,
    arm: PoolingArm,
    seed: u64,
    train: &Dataset,
    test: &Dataset,
    on_epoch: &mut OnEpoch<'_>,
) -> Result<ArmResult> {
    match cfg.precision {
        Precision::F32 => train_arm_at::<f32>(cfg, arm, seed, train, test, on_epoch),
        Precision::F64 => train_arm_at::<f64>(cfg, arm, seed, train, test, on_epoch),
    }
}

/// Both arms of one seed, trained from the same state on the same batches.
#[derive(Debug, Clone)]
pub struct PairedRunResult {
    pub seed: u64,
    pub classic: ArmResult,
    pub ordinal: ArmResult,
}

fn paired_at<T: Scalar>(
    cfg: &ExperimentConfig,
    seed: u64,
    train: &Dataset,
    test: &Dataset,
    on_epoch: &mut OnEpoch<'_>,
) -> Result<PairedRunResult> {
    let (classic_arm, ordinal_arm) = cfg.pair()?;
    let (mut classic_net, mut ordinal_net) =
        build_paired::<T>(&cfg.spec(classic_arm), &cfg.spec(ordinal_arm), seed)?;
    let classic = train_network(&mut classic_net, classic_arm, cfg, seed, train, test, on_epoch)?;
    let ordinal = train_network(&mut ordinal_net, ordinal_arm, cfg, seed, train, test, on_epoch)?;
    if classic.batch_digest != ordinal.batch_digest || classic.samples_seen != ordinal.samples_seen {
        return Err(Error::Incompatible("paired arms consumed different batches".into()));
    }
    Ok(PairedRunResult { seed, classic, ordinal })
}

pub fn paired_run(
    cfg: &ExperimentConfig,
    seed: u64,
    train: &Dataset,
    test: &Dataset,
    on_epoch: &mut OnEpoch<'_>,
) -> Result<PairedRunResult> {
    match cfg.precision {
        Precision::F32 => paired_at::<f32>(cfg, seed, train, test, on_epoch),
        Precision::F64 => paired_at::<f64>(cfg, seed, train, test, on_epoch),
    }
}
