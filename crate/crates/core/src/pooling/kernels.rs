use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::simplex::project_simplex_in_place;
use crate::error::{Error, Result};
use crate::tensor::RngStream;

/// Maximum deviation from nonnegativity and unit sum accepted for a kernel.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Per-channel ordinal pooling kernels, in rank order.
///
/// Entry `r` of channel `c` multiplies the `r`-th largest value of a window on
/// channel `c`; entry 0 meets the maximum, entry `m*n - 1` the minimum. Every
/// kernel is nonnegative and sums to one. Weights are held in 64 bits whatever
/// precision the surrounding network computes in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelSetJson", into = "KernelSetJson")]
pub struct OrdinalKernelSet {
    m: usize,
    n: usize,
    channels: usize,
    weights: Vec<f64>,
}

/// On-disk form: `{"m": .., "n": .., "C": .., "weights": [[..], ..]}`.
#[derive(Serialize, Deserialize)]
struct KernelSetJson {
    m: usize,
    n: usize,
    #[serde(rename = "C")]
    channels: usize,
    weights: Vec<Vec<f64>>,
}

impl TryFrom<KernelSetJson> for OrdinalKernelSet {
    type Error = Error;

    fn try_from(j: KernelSetJson) -> Result<Self> {
        if j.weights.len() != j.channels {
            return Err(Error::InvalidKernel {
                channel: j.weights.len(),
                reason: format!("{} kernels listed for C = {}", j.weights.len(), j.channels),
            });
        }
        OrdinalKernelSet::from_kernels(j.m, j.n, j.weights)
    }
}

impl From<OrdinalKernelSet> for KernelSetJson {
    fn from(k: OrdinalKernelSet) -> Self {
        KernelSetJson {
            m: k.m,
            n: k.n,
            channels: k.channels,
            weights: k.weights.chunks(k.m * k.n).map(<[f64]>::to_vec).collect(),
        }
    }
}

impl OrdinalKernelSet {
    /// Builds a set from one rank-ordered kernel per channel.
    pub fn from_kernels(m: usize, n: usize, kernels: Vec<Vec<f64>>) -> Result<Self> {
        if m == 0 || n == 0 || kernels.is_empty() {
            return Err(Error::InvalidShape {
                dims: vec![m, n, kernels.len()],
                reason: "kernel set needs m, n, C >= 1".into(),
            });
        }
        let mut weights = Vec::with_capacity(m * n * kernels.len());
        for (c, k) in kernels.iter().enumerate() {
            if k.len() != m * n {
                return Err(Error::InvalidKernel {
                    channel: c,
                    reason: format!("{} weights for a {m}x{n} window", k.len()),
                });
            }
            weights.extend_from_slice(k);
        }
        let set = OrdinalKernelSet {
            m,
            n,
            channels: kernels.len(),
            weights,
        };
        set.validate(SIMPLEX_TOLERANCE)?;
        Ok(set)
    }

    /// Every kernel equal to `[1/mn, ..]`: average pooling.
    pub fn average(m: usize, n: usize, channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(zero_channels());
        }
        Self::from_kernels(m, n, vec![vec![1.0 / (m * n) as f64; m * n]; channels])
    }

    pub fn window(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    pub fn window_size(&self) -> usize {
        self.m * self.n
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Trainable scalars: `m * n * C`.
    pub fn parameter_count(&self) -> usize {
        self.weights.len()
    }

    /// Rank-ordered kernel of channel `c`.
    pub fn kernel(&self, c: usize) -> &[f64] {
        let k = self.window_size();
        &self.weights[c * k..(c + 1) * k]
    }

    pub fn kernels(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.chunks(self.window_size())
    }

    /// All weights, channel-major.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mutable weights without revalidation. The caller restores the simplex
    /// invariant, typically with [`OrdinalKernelSet::project`]; derivative
    /// checks also use this to probe off-simplex points.
    pub fn weights_mut_unchecked(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Projects every kernel onto the simplex.
    pub fn project(&mut self) -> Result<()> {
        let k = self.window_size();
        for kernel in self.weights.chunks_mut(k) {
            project_simplex_in_place(kernel)?;
        }
        Ok(())
    }

    /// Checks nonnegativity and unit sum of every kernel within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for (c, kernel) in self.kernels().enumerate() {
            if let Some(w) = kernel.iter().find(|w| !w.is_finite() || **w < -tol) {
                return Err(Error::InvalidKernel {
                    channel: c,
                    reason: format!("weight {w} is negative or non-finite"),
                });
            }
            let sum: f64 = kernel.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::InvalidKernel {
                    channel: c,
                    reason: format!("weights sum to {sum}"),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn zero_channels() -> Error {
    Error::InvalidShape {
        dims: vec![0],
        reason: "kernel set needs at least one channel".into(),
    }
}

/// Starting point for ordinal kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitScheme {
    /// `1/(mn)` everywhere.
    Average,
    /// All mass on rank 1.
    Max,
    /// All mass on the last rank.
    Min,
    /// Independent uniform(0, 1) draws, normalized per kernel.
    Uniform,
}

impl InitScheme {
    pub const ALL: [InitScheme; 4] = [
        InitScheme::Average,
        InitScheme::Max,
        InitScheme::Min,
        InitScheme::Uniform,
    ];
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitScheme::Average => "average",
            InitScheme::Max => "max",
            InitScheme::Min => "min",
            InitScheme::Uniform => "uniform",
        })
    }
}

impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" | "avg" => Ok(InitScheme::Average),
            "max" => Ok(InitScheme::Max),
            "min" => Ok(InitScheme::Min),
            "uniform" => Ok(InitScheme::Uniform),
            other => Err(Error::Config(format!("unknown init scheme `{other}`"))),
        }
    }
}

/// `C` kernels over an `m x n` window. Only `Uniform` draws from `rng`.
pub fn init_kernels(
    scheme: InitScheme,
    m: usize,
    n: usize,
    channels: usize,
    rng: &mut RngStream,
) -> Result<OrdinalKernelSet> {
    if channels == 0 {
        return Err(zero_channels());
    }
    if m == 0 || n == 0 {
        return Err(Error::InvalidShape {
            dims: vec![m, n],
            reason: "empty pooling window".into(),
        });
    }
    let k = m * n;
    let kernels = (0..channels)
        .map(|_| -> Result<Vec<f64>> {
            let mut w = vec![0.0; k];
            match scheme {
                InitScheme::Average => w.fill(1.0 / k as f64),
                InitScheme::Max => w[0] = 1.0,
                InitScheme::Min => w[k - 1] = 1.0,
                InitScheme::Uniform => {
                    let draws = rng.uniform(k, 0.0, 1.0)?;
                    let total: f64 = draws.iter().sum();
                    if total > 0.0 {
                        for (wi, d) in w.iter_mut().zip(draws) {
                            *wi = d / total;
                        }
                    } else {
                        w.fill(1.0 / k as f64);
                    }
                }
            }
            Ok(w)
        })
        .collect::<Result<Vec<_>>>()?;
    OrdinalKernelSet::from_kernels(m, n, kernels)
}
