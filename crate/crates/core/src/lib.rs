//! Ordinal pooling on a small deterministic CPU training engine.
//!
//! An ordinal pooling layer sorts every pooling window in decreasing order and
//! takes the dot product with a per-channel, trainable kernel constrained to the
//! probability simplex. Average-, max- and min-pooling are the special kernels
//! `[1/mn, ..]`, `[1, 0, ..]` and `[.., 0, 1]`.
//!
//! Modules, bottom-up:
//!
//! - [`tensor`]: dense channel-last tensors, window geometry, GEMM, and the
//!   seeded random stream every other module draws from.
//! - [`pooling`]: classic and ordinal pooling (forward and backward), simplex
//!   projection, kernel initialization and the kernel JSON form.
//! - [`network`]: convolution, dense, activation and loss layers, SGD, and the
//!   three reference architectures with paired construction.
//! - [`gradcheck`]: central finite-difference checks for every layer kind.
//! - [`analysis`]: template kernels and the distribution of learned kernels.
//! - [`experiment`]: MNIST ingestion, paired training runs, relative-variation
//!   tables and initialization/activation sweeps.

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod network;
pub mod pooling;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Precision, RngStream, Scalar, Shape, Tensor};
