//! JSON checkpoints: a layer list with flat weight arrays stored as f64.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ActivationKind, Conv2d, Dense, Layer, Network, PoolLayer};
use crate::error::{Error, Result};
use crate::pooling::{OrdinalKernelSet, PoolMode};
use crate::tensor::{Precision, Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerRecord {
    Conv2d {
        /// `[KH, KW, Cin, Cout]`
        dims: Vec<usize>,
        zero_pad: bool,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    Dense {
        /// `[in, out]`
        dims: Vec<usize>,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    Activation {
        kind: ActivationKind,
    },
    Pool {
        mode: PoolMode,
        /// Ordinal only: one kernel per channel.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        kernels: Option<Vec<Vec<f64>>>,
    },
    Flatten,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub name: String,
    pub precision: Precision,
    pub input_dims: Vec<usize>,
    pub layers: Vec<LayerRecord>,
}

fn to_f64<T: Scalar>(t: &Tensor<T>) -> Vec<f64> {
    t.data().iter().map(|v| v.to_f64_lossless()).collect()
}

fn from_f64<T: Scalar>(dims: &[usize], values: &[f64]) -> Result<Tensor<T>> {
    Tensor::from_vec(dims, values.iter().map(|&v| T::from_f64_lossy(v)).collect())
}

impl Checkpoint {
    pub fn from_network<T: Scalar>(net: &Network<T>) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|layer| match layer {
                Layer::Conv2d(c) => LayerRecord::Conv2d {
                    dims: c.weight.dims().to_vec(),
                    zero_pad: c.zero_pad,
                    weight: to_f64(&c.weight),
                    bias: to_f64(&c.bias),
                },
                Layer::Dense(d) => LayerRecord::Dense {
                    dims: d.weight.dims().to_vec(),
                    weight: to_f64(&d.weight),
                    bias: to_f64(&d.bias),
                },
                Layer::Activation(kind) => LayerRecord::Activation { kind: *kind },
                Layer::Pool(PoolLayer::Classic(mode)) => LayerRecord::Pool {
                    mode: *mode,
                    kernels: None,
                },
                Layer::Pool(PoolLayer::Ordinal { mode, kernels }) => LayerRecord::Pool {
                    mode: *mode,
                    kernels: Some(kernels.kernels().map(<[f64]>::to_vec).collect()),
                },
                Layer::Flatten => LayerRecord::Flatten,
            })
            .collect();
        Checkpoint {
            name: net.name().to_string(),
            precision: T::PRECISION,
            input_dims: net.input_dims().to_vec(),
            layers,
        }
    }

    /// Rebuilds the network; shapes and kernels are validated again.
    pub fn to_network<T: Scalar>(&self) -> Result<Network<T>> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for record in &self.layers {
            layers.push(match record {
                LayerRecord::Conv2d {
                    dims,
                    zero_pad,
                    weight,
                    bias,
                } => {
                    if dims.len() != 4 {
                        return Err(Error::Config(format!("conv2d dims {dims:?} must have rank 4")));
                    }
                    Layer::Conv2d(Conv2d {
                        weight: from_f64(dims, weight)?,
                        bias: from_f64(&[dims[3]], bias)?,
                        zero_pad: *zero_pad,
                    })
                }
                LayerRecord::Dense { dims, weight, bias } => {
                    if dims.len() != 2 {
                        return Err(Error::Config(format!("dense dims {dims:?} must have rank 2")));
                    }
                    Layer::Dense(Dense {
                        weight: from_f64(dims, weight)?,
                        bias: from_f64(&[dims[1]], bias)?,
                    })
                }
                LayerRecord::Activation { kind } => Layer::Activation(*kind),
                LayerRecord::Pool { mode, kernels } => {
                    let kernels = kernels
                        .as_ref()
                        .map(|k| OrdinalKernelSet::from_kernels(mode.window.0, mode.window.1, k.clone()))
                        .transpose()?;
                    Layer::Pool(super::pool_layer(*mode, kernels)?)
                }
                LayerRecord::Flatten => Layer::Flatten,
            });
        }
        Network::new(self.name.clone(), &self.input_dims, layers)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    /// Ordinal kernel sets in layer order.
    pub fn ordinal_kernels(&self) -> Result<Vec<OrdinalKernelSet>> {
        self.layers
            .iter()
            .filter_map(|r| match r {
                LayerRecord::Pool {
                    mode,
                    kernels: Some(k),
                } => Some(OrdinalKernelSet::from_kernels(mode.window.0, mode.window.1, k.clone())),
                _ => None,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_network, NetworkName, NetworkSpec, PoolingArm};
    use crate::pooling::InitScheme;

    #[test]
    fn round_trip_is_exact() {
        let spec = NetworkSpec::new(NetworkName::Lenet5, PoolingArm::Ordinal).with_init(InitScheme::Uniform);
        let net = build_network::<f64>(&spec, 9).unwrap();
        let ck = Checkpoint::from_network(&net);
        let json = ck.to_json().unwrap();
        let back = Checkpoint::from_json(&json).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_network::<f64>().unwrap(), net);
        assert_eq!(back.to_json().unwrap(), json);
    }

    #[test]
    fn f32_networks_round_trip() {
        let spec = NetworkSpec::new(NetworkName::Baseline2, PoolingArm::ClassicMax);
        let net = build_network::<f32>(&spec, 4).unwrap();
        let ck = Checkpoint::from_network(&net);
        assert_eq!(ck.precision, Precision::F32);
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back.to_network::<f32>().unwrap(), net);
        assert_eq!(back.ordinal_kernels().unwrap().len(), 0);
    }

    #[test]
    fn corrupt_kernel_rejected() {
        let spec = NetworkSpec::new(NetworkName::Lenet5, PoolingArm::Ordinal);
        let mut ck = Checkpoint::from_network(&build_network::<f64>(&spec, 1).unwrap());
        for r in &mut ck.layers {
            if let LayerRecord::Pool { kernels: Some(k), .. } = r {
                k[0][0] = 0.9;
            }
        }
        assert!(ck.to_network::<f64>().is_err());
    }
}
