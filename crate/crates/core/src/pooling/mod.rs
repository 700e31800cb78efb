//! Classic and ordinal pooling.
//!
//! Every operator here works on channel-last maps, `[H, W, C]` or batched
//! `[N, H, W, C]`, sliced into exactly tiling windows. Ordinal pooling sorts
//! each window channel in decreasing order and dots it with that channel's
//! kernel; kernels live on the probability simplex so the output always lies
//! between the window minimum and maximum.

mod classic;
mod kernels;
mod ord;
mod ordinal;
mod simplex;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use classic::{classic_pool_backward, classic_pool_forward, ClassicPoolOutput, ClassicTrace};
pub use kernels::{init_kernels, InitScheme, OrdinalKernelSet, SIMPLEX_TOLERANCE};
pub use ord::{ord, rank_order, sort_pairs_desc};
pub use ordinal::{
    ordinal_pool_backward, ordinal_pool_backward_raw, ordinal_pool_forward,
    ordinal_pool_forward_raw, ordinal_pool_forward_strided, OrdinalPoolOutput, OrdinalTrace,
};
pub use simplex::{project_simplex, project_simplex_in_place};

use crate::error::{Error, Result};
use crate::tensor::WindowGrid;

/// Aggregation applied within each window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Avg,
    Max,
    Min,
    Ordinal,
}

impl fmt::Display for PoolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolKind::Avg => "avg",
            PoolKind::Max => "max",
            PoolKind::Min => "min",
            PoolKind::Ordinal => "ordinal",
        })
    }
}

impl FromStr for PoolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" | "average" => Ok(PoolKind::Avg),
            "max" => Ok(PoolKind::Max),
            "min" => Ok(PoolKind::Min),
            "ordinal" => Ok(PoolKind::Ordinal),
            other => Err(Error::Config(format!("unknown pool kind `{other}`"))),
        }
    }
}

/// A pooling layer's operator and window geometry.
///
/// A global mode covers the whole incoming map; its window is resolved against
/// the input extents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolMode {
    pub kind: PoolKind,
    pub window: (usize, usize),
    pub stride: (usize, usize),
    pub global: bool,
}

impl PoolMode {
    pub fn new(kind: PoolKind, m: usize, n: usize) -> Self {
        PoolMode {
            kind,
            window: (m, n),
            stride: (m, n),
            global: false,
        }
    }

    pub fn with_stride(mut self, stride_h: usize, stride_w: usize) -> Self {
        self.stride = (stride_h, stride_w);
        self
    }

    /// Window equal to the full `h x w` map.
    pub fn global(kind: PoolKind, h: usize, w: usize) -> Self {
        PoolMode {
            kind,
            window: (h, w),
            stride: (h, w),
            global: true,
        }
    }

    pub fn grid(&self, h: usize, w: usize) -> Result<WindowGrid> {
        if self.global {
            WindowGrid::new(h, w, h, w, h, w)
        } else {
            WindowGrid::new(h, w, self.window.0, self.window.1, self.stride.0, self.stride.1)
        }
    }
}
