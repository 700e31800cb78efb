//! The three reference architectures and paired construction.
//!
//! | name        | layers (activation `a` before each pooling)                                   |
//! |-------------|--------------------------------------------------------------------------------|
//! | `baseline`  | conv5x5x32, a, pool 2x2, conv5x5x64, a, global pool 8x8, FC 10                  |
//! | `baseline2` | conv3x3x16 ZP, a, pool 2x2, conv3x3x32 ZP, a, pool 2x2, conv3x3x64 ZP, a, global 7x7, FC 10 |
//! | `lenet5`    | conv5x5x6 ZP, a, pool 2x2, conv5x5x16, a, pool 2x2, FC 120, ReLU, FC 84, ReLU, FC 10 |
//!
//! Inputs are 28x28x1 images; the softmax lives in the loss.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ActivationKind, Conv2d, Dense, Layer, Network, PoolLayer};
use crate::error::{Error, Result};
use crate::pooling::{init_kernels, InitScheme, PoolKind, PoolMode};
use crate::tensor::{RngStream, Scalar, Tensor};

/// Random stream for non-pooling weights.
pub const STREAM_WEIGHTS: u64 = 0;
/// Random stream for ordinal kernels (only `uniform` init draws from it).
pub const STREAM_KERNELS: u64 = 1;

pub const INPUT_DIMS: [usize; 3] = [28, 28, 1];
pub const CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkName {
    Baseline,
    Baseline2,
    Lenet5,
}

impl NetworkName {
    pub const ALL: [NetworkName; 3] = [NetworkName::Baseline, NetworkName::Baseline2, NetworkName::Lenet5];
}

impl fmt::Display for NetworkName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetworkName::Baseline => "baseline",
            NetworkName::Baseline2 => "baseline2",
            NetworkName::Lenet5 => "lenet5",
        })
    }
}

impl FromStr for NetworkName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(NetworkName::Baseline),
            "baseline2" | "baseline-2" => Ok(NetworkName::Baseline2),
            "lenet5" | "lenet-5" => Ok(NetworkName::Lenet5),
            other => Err(Error::Config(format!("unknown network `{other}`"))),
        }
    }
}

/// Pooling used by a network: a fixed classic operator or trainable ordinal
/// pooling. Global pooling layers are average in every classic arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PoolingArm {
    #[serde(rename = "classic-avg")]
    ClassicAvg,
    #[serde(rename = "classic-max")]
    ClassicMax,
    #[serde(rename = "classic-min")]
    ClassicMin,
    #[serde(rename = "ordinal")]
    Ordinal,
}

impl PoolingArm {
    pub fn is_ordinal(self) -> bool {
        self == PoolingArm::Ordinal
    }

    /// Classic arm whose fixed behavior matches an ordinal init scheme;
    /// `uniform` has none.
    pub fn classic_for(init: InitScheme) -> Option<PoolingArm> {
        match init {
            InitScheme::Average => Some(PoolingArm::ClassicAvg),
            InitScheme::Max => Some(PoolingArm::ClassicMax),
            InitScheme::Min => Some(PoolingArm::ClassicMin),
            InitScheme::Uniform => None,
        }
    }

    fn local_kind(self) -> PoolKind {
        match self {
            PoolingArm::ClassicAvg => PoolKind::Avg,
            PoolingArm::ClassicMax => PoolKind::Max,
            PoolingArm::ClassicMin => PoolKind::Min,
            PoolingArm::Ordinal => PoolKind::Ordinal,
        }
    }
}

impl fmt::Display for PoolingArm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolingArm::ClassicAvg => "classic-avg",
            PoolingArm::ClassicMax => "classic-max",
            PoolingArm::ClassicMin => "classic-min",
            PoolingArm::Ordinal => "ordinal",
        })
    }
}

impl FromStr for PoolingArm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classic-avg" | "avg" => Ok(PoolingArm::ClassicAvg),
            "classic-max" | "max" => Ok(PoolingArm::ClassicMax),
            "classic-min" | "min" => Ok(PoolingArm::ClassicMin),
            "ordinal" => Ok(PoolingArm::Ordinal),
            other => Err(Error::Config(format!("unknown pooling arm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: NetworkName,
    pub pooling: PoolingArm,
    /// Activation in front of every pooling layer.
    pub activation: ActivationKind,
    /// Init of the local (non-global) ordinal kernels; global ordinal kernels
    /// always start as average pooling.
    pub init: InitScheme,
}

impl NetworkSpec {
    pub fn new(name: NetworkName, pooling: PoolingArm) -> Self {
        NetworkSpec {
            name,
            pooling,
            activation: ActivationKind::Relu,
            init: InitScheme::Average,
        }
    }

    pub fn with_activation(mut self, activation: ActivationKind) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_init(mut self, init: InitScheme) -> Self {
        self.init = init;
        self
    }
}

enum Block {
    Conv { k: usize, out: usize, zero_pad: bool },
    Act(ActivationKind),
    Pool2x2,
    GlobalPool,
    Flatten,
    Fc(usize),
}

fn blocks(spec: &NetworkSpec) -> Vec<Block> {
    use Block::*;
    let a = spec.activation;
    match spec.name {
        NetworkName::Baseline => vec![
            Conv { k: 5, out: 32, zero_pad: false },
            Act(a),
            Pool2x2,
            Conv { k: 5, out: 64, zero_pad: false },
            Act(a),
            GlobalPool,
            Flatten,
            Fc(CLASSES),
        ],
        NetworkName::Baseline2 => vec![
            Conv { k: 3, out: 16, zero_pad: true },
            Act(a),
            Pool2x2,
            Conv { k: 3, out: 32, zero_pad: true },
            Act(a),
            Pool2x2,
            Conv { k: 3, out: 64, zero_pad: true },
            Act(a),
            GlobalPool,
            Flatten,
            Fc(CLASSES),
        ],
        NetworkName::Lenet5 => vec![
            Conv { k: 5, out: 6, zero_pad: true },
            Act(a),
            Pool2x2,
            Conv { k: 5, out: 16, zero_pad: false },
            Act(a),
            Pool2x2,
            Flatten,
            Fc(120),
            Act(ActivationKind::Relu),
            Fc(84),
            Act(ActivationKind::Relu),
            Fc(CLASSES),
        ],
    }
}

fn glorot<T: Scalar>(rng: &mut RngStream, dims: &[usize], fan_in: usize, fan_out: usize) -> Result<Tensor<T>> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = dims.iter().product();
    let values = rng.uniform(n, -limit, limit)?;
    Tensor::from_vec(dims, values.into_iter().map(T::from_f64_lossy).collect())
}

/// Builds one network. Non-pooling weights come from stream
/// [`STREAM_WEIGHTS`] of `seed` in layer order (Glorot-uniform weights, zero
/// biases); ordinal kernels from stream [`STREAM_KERNELS`].
pub fn build_network<T: Scalar>(spec: &NetworkSpec, seed: u64) -> Result<Network<T>> {
    let mut weights_rng = RngStream::with_stream(seed, STREAM_WEIGHTS);
    let mut kernel_rng = RngStream::with_stream(seed, STREAM_KERNELS);
    let [mut h, mut w, mut c] = INPUT_DIMS;
    let mut layers = Vec::new();
    for block in blocks(spec) {
        let layer = match block {
            Block::Conv { k, out, zero_pad } => {
                let weight = glorot(&mut weights_rng, &[k, k, c, out], k * k * c, k * k * out)?;
                if !zero_pad {
                    h = h + 1 - k;
                    w = w + 1 - k;
                }
                c = out;
                Layer::Conv2d(Conv2d {
                    weight,
                    bias: Tensor::zeros(&[out])?,
                    zero_pad,
                })
            }
            Block::Act(kind) => Layer::Activation(kind),
            Block::Pool2x2 => {
                let kind = spec.pooling.local_kind();
                let mode = PoolMode::new(kind, 2, 2);
                h /= 2;
                w /= 2;
                Layer::Pool(if kind == PoolKind::Ordinal {
                    PoolLayer::Ordinal {
                        mode,
                        kernels: init_kernels(spec.init, 2, 2, c, &mut kernel_rng)?,
                    }
                } else {
                    PoolLayer::Classic(mode)
                })
            }
            Block::GlobalPool => {
                let layer = if spec.pooling.is_ordinal() {
                    PoolLayer::Ordinal {
                        mode: PoolMode::global(PoolKind::Ordinal, h, w),
                        kernels: init_kernels(InitScheme::Average, h, w, c, &mut kernel_rng)?,
                    }
                } else {
                    PoolLayer::Classic(PoolMode::global(PoolKind::Avg, h, w))
                };
                h = 1;
                w = 1;
                Layer::Pool(layer)
            }
            Block::Flatten => {
                c *= h * w;
                h = 1;
                w = 1;
                Layer::Flatten
            }
            Block::Fc(out) => {
                let weight = glorot(&mut weights_rng, &[c, out], c, out)?;
                c = out;
                Layer::Dense(Dense {
                    weight,
                    bias: Tensor::zeros(&[out])?,
                })
            }
        };
        layers.push(layer);
    }
    Network::new(format!("{}:{}", spec.name, spec.pooling), &INPUT_DIMS, layers)
}

/// A classic network and its ordinal counterpart with identical non-pooling
/// parameters. With average init both compute the same function.
pub fn build_paired<T: Scalar>(
    classic: &NetworkSpec,
    ordinal: &NetworkSpec,
    seed: u64,
) -> Result<(Network<T>, Network<T>)> {
    if classic.pooling.is_ordinal() || !ordinal.pooling.is_ordinal() {
        return Err(Error::Incompatible(format!(
            "expected a classic and an ordinal spec, got {} and {}",
            classic.pooling, ordinal.pooling
        )));
    }
    if classic.name != ordinal.name || classic.activation != ordinal.activation {
        return Err(Error::Incompatible(format!(
            "{}/{} vs {}/{}",
            classic.name, classic.activation, ordinal.name, ordinal.activation
        )));
    }
    Ok((build_network(classic, seed)?, build_network(ordinal, seed)?))
}
