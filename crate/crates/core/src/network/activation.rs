use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    None,
    Relu,
    Tanh,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 3] = [ActivationKind::None, ActivationKind::Relu, ActivationKind::Tanh];
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActivationKind::None => "none",
            ActivationKind::Relu => "relu",
            ActivationKind::Tanh => "tanh",
        })
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ActivationKind::None),
            "relu" => Ok(ActivationKind::Relu),
            "tanh" => Ok(ActivationKind::Tanh),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

pub fn activation_forward<T: Scalar>(x: &Tensor<T>, kind: ActivationKind) -> Tensor<T> {
    match kind {
        ActivationKind::None => x.clone(),
        ActivationKind::Relu => x.map(|v| if v > T::zero() { v } else { T::zero() }),
        ActivationKind::Tanh => x.map(T::tanh),
    }
}

/// Backward from the forward *output*: ReLU passes where the output is
/// positive, tanh scales by `1 - y^2`.
pub fn activation_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    output: &Tensor<T>,
    kind: ActivationKind,
) -> Result<Tensor<T>> {
    if grad_out.dims() != output.dims() {
        return Err(Error::ShapeMismatch {
            expected: output.dims().to_vec(),
            actual: grad_out.dims().to_vec(),
        });
    }
    let data = grad_out
        .data()
        .iter()
        .zip(output.data())
        .map(|(&g, &y)| match kind {
            ActivationKind::None => g,
            ActivationKind::Relu => {
                if y > T::zero() {
                    g
                } else {
                    T::zero()
                }
            }
            ActivationKind::Tanh => g * (T::one() - y * y),
        })
        .collect();
    Tensor::from_vec(grad_out.dims(), data)
}
