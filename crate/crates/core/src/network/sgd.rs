use super::{Conv2d, Dense, Gradients, Layer, LayerGrad, Network, PoolLayer};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

#[derive(Debug, Clone)]
enum Velocity<T> {
    None,
    Affine { weight: Vec<T>, bias: Vec<T> },
    Ordinal(Vec<f64>),
}

/// Stochastic gradient descent with classical momentum:
/// `v <- momentum * v + g`, `p <- p - lr * v`.
///
/// Every ordinal kernel is projected back onto the probability simplex right
/// after its update; other parameters are unconstrained.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<Velocity<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr.is_finite() && lr >= 0.0) || !(0.0..1.0).contains(&momentum) {
            return Err(Error::Config(format!(
                "sgd needs lr >= 0 and momentum in [0, 1), got lr {lr} momentum {momentum}"
            )));
        }
        Ok(Sgd {
            lr,
            momentum,
            velocity: Vec::new(),
        })
    }

    fn init_velocity(&mut self, net: &Network<T>) {
        self.velocity = net
            .layers()
            .iter()
            .map(|layer| match layer {
                Layer::Conv2d(Conv2d { weight, bias, .. }) | Layer::Dense(Dense { weight, bias }) => {
                    Velocity::Affine {
                        weight: vec![T::zero(); weight.len()],
                        bias: vec![T::zero(); bias.len()],
                    }
                }
                Layer::Pool(PoolLayer::Ordinal { kernels, .. }) => {
                    Velocity::Ordinal(vec![0.0; kernels.parameter_count()])
                }
                _ => Velocity::None,
            })
            .collect();
    }

    pub fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>) -> Result<()> {
        if grads.layers.len() != net.layers().len() {
            return Err(Error::ShapeMismatch {
                expected: vec![net.layers().len()],
                actual: vec![grads.layers.len()],
            });
        }
        if self.velocity.len() != net.layers().len() {
            self.init_velocity(net);
        }
        let lr = T::from_f64_lossy(self.lr);
        let mu = T::from_f64_lossy(self.momentum);
        let (lr64, mu64) = (self.lr, self.momentum);

        for ((layer, grad), vel) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.velocity)
        {
            match (layer, grad, vel) {
                (
                    Layer::Conv2d(Conv2d { weight, bias, .. }) | Layer::Dense(Dense { weight, bias }),
                    LayerGrad::Affine { weight: gw, bias: gb },
                    Velocity::Affine { weight: vw, bias: vb },
                ) => {
                    for ((p, &g), v) in weight.data_mut().iter_mut().zip(gw.data()).zip(vw.iter_mut()) {
                        *v = mu * *v + g;
                        *p -= lr * *v;
                    }
                    for ((p, &g), v) in bias.data_mut().iter_mut().zip(gb.data()).zip(vb.iter_mut()) {
                        *v = mu * *v + g;
                        *p -= lr * *v;
                    }
                }
                (Layer::Pool(PoolLayer::Ordinal { kernels, .. }), LayerGrad::Ordinal(gw), Velocity::Ordinal(vw)) => {
                    for ((p, &g), v) in kernels
                        .weights_mut_unchecked()
                        .iter_mut()
                        .zip(gw)
                        .zip(vw.iter_mut())
                    {
                        *v = mu64 * *v + g;
                        *p -= lr64 * *v;
                    }
                    kernels.project()?;
                }
                (_, LayerGrad::None, _) => {}
                _ => return Err(Error::Config("gradient does not match its layer".into())),
            }
        }
        Ok(())
    }
}
