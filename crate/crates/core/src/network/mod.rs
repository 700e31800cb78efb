//! Layers, loss and optimizer for the reference networks.
//!
//! A [`Network`] is an ordered list of [`Layer`]s over NHWC batches. Forward in
//! training mode returns a [`Tape`] holding every layer's backward artifacts;
//! [`Network::backward`] consumes it and yields [`Gradients`] aligned with the
//! layer list.

mod activation;
mod arch;
mod checkpoint;
mod conv;
mod dense;
mod loss;
mod sgd;

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

pub use activation::{activation_backward, activation_forward, ActivationKind};
pub use arch::{
    build_network, build_paired, NetworkName, NetworkSpec, PoolingArm, STREAM_KERNELS,
    STREAM_WEIGHTS,
};
pub use checkpoint::{Checkpoint, LayerRecord};
pub use conv::{conv2d_backward, conv2d_forward, ConvGeometry, ConvTrace};
pub use dense::{fc_backward, fc_forward};
pub use loss::{softmax_cross_entropy, softmax_cross_entropy_batch};
pub use sgd::Sgd;

use crate::error::{Error, Result};
use crate::pooling::{
    classic_pool_backward, classic_pool_forward, ordinal_pool_backward_raw,
    ordinal_pool_forward_raw, ClassicTrace, OrdinalKernelSet, OrdinalTrace, PoolKind, PoolMode,
};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    /// `[KH, KW, Cin, Cout]`
    pub weight: Tensor<T>,
    /// `[Cout]`
    pub bias: Tensor<T>,
    pub zero_pad: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    /// `[in, out]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PoolLayer {
    Classic(PoolMode),
    Ordinal {
        mode: PoolMode,
        kernels: OrdinalKernelSet,
    },
}

impl PoolLayer {
    pub fn mode(&self) -> &PoolMode {
        match self {
            PoolLayer::Classic(mode) | PoolLayer::Ordinal { mode, .. } => mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    Dense(Dense<T>),
    Activation(ActivationKind),
    Pool(PoolLayer),
    Flatten,
}

impl<T: Scalar> Layer<T> {
    /// Per-sample output extents for per-sample input extents.
    fn output_dims(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = |reason: &str| Error::InvalidShape {
            dims: input.to_vec(),
            reason: reason.to_string(),
        };
        match self {
            Layer::Conv2d(conv) => {
                let [h, w, c] = *input else {
                    return Err(bad("convolution expects [H, W, C]"));
                };
                let kernel: [usize; 4] = conv.weight.dims().try_into().map_err(|_| bad("conv weight rank"))?;
                let g = ConvGeometry::new([1, h, w, c], kernel, conv.zero_pad)?;
                Ok(vec![g.out_h, g.out_w, g.out_channels])
            }
            Layer::Dense(dense) => {
                let [inputs, outputs] = *dense.weight.dims() else {
                    return Err(bad("dense weight rank"));
                };
                if input != [inputs] {
                    return Err(Error::ShapeMismatch {
                        expected: vec![inputs],
                        actual: input.to_vec(),
                    });
                }
                Ok(vec![outputs])
            }
            Layer::Activation(_) => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
            Layer::Pool(pool) => {
                let [h, w, c] = *input else {
                    return Err(bad("pooling expects [H, W, C]"));
                };
                let grid = pool.mode().grid(h, w)?;
                if let PoolLayer::Ordinal { kernels, .. } = pool {
                    if kernels.channels() != c {
                        return Err(Error::ChannelMismatch {
                            kernels: kernels.channels(),
                            input: c,
                        });
                    }
                    if kernels.window() != (grid.m, grid.n) {
                        return Err(Error::InvalidKernel {
                            channel: 0,
                            reason: format!(
                                "kernel window {:?} differs from pooling window {}x{}",
                                kernels.window(),
                                grid.m,
                                grid.n
                            ),
                        });
                    }
                }
                Ok(vec![grid.out_h, grid.out_w, c])
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            Layer::Conv2d(c) => c.weight.len() + c.bias.len(),
            Layer::Dense(d) => d.weight.len() + d.bias.len(),
            Layer::Pool(PoolLayer::Ordinal { kernels, .. }) => kernels.parameter_count(),
            _ => 0,
        }
    }
}

/// Backward artifacts of one layer.
#[derive(Debug, Clone)]
pub enum Cache<T> {
    Conv(ConvTrace<T>),
    Dense { input: Tensor<T> },
    Activation { output: Tensor<T> },
    Classic(ClassicTrace),
    Ordinal(OrdinalTrace<T>),
    Flatten { input_dims: Vec<usize> },
}

#[derive(Debug, Clone)]
pub struct Tape<T> {
    caches: Vec<Cache<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn caches(&self) -> &[Cache<T>] {
        &self.caches
    }

    /// Hash of every discrete routing decision made during forward: ReLU
    /// masks, max/min selections and ordinal permutations. Equal signatures at
    /// two nearby inputs mean the network is smooth between them.
    pub fn routing_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for cache in &self.caches {
            match cache {
                Cache::Activation { output } => {
                    for v in output.data() {
                        (*v > T::zero()).hash(&mut h);
                    }
                }
                Cache::Classic(trace) => trace.argselect.hash(&mut h),
                Cache::Ordinal(trace) => trace.perms.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }
}

/// Gradient of one layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerGrad<T> {
    None,
    Affine { weight: Tensor<T>, bias: Tensor<T> },
    /// Channel-major, 64-bit, aligned with the kernel set.
    Ordinal(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrad<T>>,
    /// Gradient with respect to the network input, when requested.
    pub input: Option<Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// All parameter gradients in [`Network::parameters_f64`] order.
    pub fn flat_f64(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            match g {
                LayerGrad::None => {}
                LayerGrad::Affine { weight, bias } => {
                    out.extend(weight.data().iter().map(|v| v.to_f64_lossless()));
                    out.extend(bias.data().iter().map(|v| v.to_f64_lossless()));
                }
                LayerGrad::Ordinal(w) => out.extend_from_slice(w),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    name: String,
    input_dims: Vec<usize>,
    layers: Vec<Layer<T>>,
    output_dims: Vec<usize>,
}

impl<T: Scalar> Network<T> {
    /// Assembles layers over `[H, W, C]` samples, checking that shapes compose.
    pub fn new(name: impl Into<String>, input_dims: &[usize], layers: Vec<Layer<T>>) -> Result<Self> {
        let mut dims = input_dims.to_vec();
        for layer in &layers {
            dims = layer.output_dims(&dims)?;
        }
        Ok(Network {
            name: name.into(),
            input_dims: input_dims.to_vec(),
            layers,
            output_dims: dims,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn output_dims(&self) -> &[usize] {
        &self.output_dims
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    /// Parameters held by ordinal pooling kernels.
    pub fn ordinal_parameter_count(&self) -> usize {
        self.ordinal_kernels().map(|(_, k)| k.parameter_count()).sum()
    }

    /// `(layer index, kernels)` for every ordinal pooling layer.
    pub fn ordinal_kernels(&self) -> impl Iterator<Item = (usize, &OrdinalKernelSet)> {
        self.layers.iter().enumerate().filter_map(|(i, l)| match l {
            Layer::Pool(PoolLayer::Ordinal { kernels, .. }) => Some((i, kernels)),
            _ => None,
        })
    }

    pub fn ordinal_kernels_mut(&mut self) -> impl Iterator<Item = &mut OrdinalKernelSet> {
        self.layers.iter_mut().filter_map(|l| match l {
            Layer::Pool(PoolLayer::Ordinal { kernels, .. }) => Some(kernels),
            _ => None,
        })
    }

    fn batch_dims(&self, x: &Tensor<T>) -> Result<usize> {
        let dims = x.dims();
        if dims.len() == self.input_dims.len() + 1 && dims[1..] == self.input_dims[..] {
            Ok(dims[0])
        } else {
            let mut expected = vec![0];
            expected.extend_from_slice(&self.input_dims);
            Err(Error::ShapeMismatch {
                expected,
                actual: dims.to_vec(),
            })
        }
    }

    /// Inference forward on a `[N, ..input_dims]` batch.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run(x, false)?.0)
    }

    /// Forward that records what [`Network::backward`] needs.
    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tape<T>)> {
        let (out, caches) = self.run(x, true)?;
        Ok((out, Tape { caches }))
    }

    fn run(&self, x: &Tensor<T>, record: bool) -> Result<(Tensor<T>, Vec<Cache<T>>)> {
        let batch = self.batch_dims(x)?;
        let mut caches = Vec::with_capacity(if record { self.layers.len() } else { 0 });
        let mut cur = x.clone();
        for layer in &self.layers {
            let (next, cache) = match layer {
                Layer::Conv2d(conv) => {
                    let (y, trace) = conv2d_forward(&cur, &conv.weight, &conv.bias, conv.zero_pad)?;
                    (y, Some(Cache::Conv(trace)))
                }
                Layer::Dense(dense) => {
                    let y = fc_forward(&cur, &dense.weight, &dense.bias)?;
                    (y, Some(Cache::Dense { input: cur }))
                }
                Layer::Activation(kind) => {
                    let y = activation_forward(&cur, *kind);
                    let cache = record.then(|| Cache::Activation { output: y.clone() });
                    (y, cache)
                }
                Layer::Pool(PoolLayer::Classic(mode)) => {
                    let r = classic_pool_forward(&cur, mode)?;
                    (r.out, Some(Cache::Classic(r.trace)))
                }
                Layer::Pool(PoolLayer::Ordinal { mode, kernels }) => {
                    let [_, h, w, _] = cur.nhwc()?;
                    let weights: Vec<T> =
                        kernels.weights().iter().map(|&v| T::from_f64_lossy(v)).collect();
                    let r = ordinal_pool_forward_raw(&cur, mode.grid(h, w)?, &weights)?;
                    (r.out, Some(Cache::Ordinal(r.trace)))
                }
                Layer::Flatten => {
                    let input_dims = cur.dims().to_vec();
                    let per: usize = input_dims[1..].iter().product();
                    (cur.reshape(&[batch, per])?, Some(Cache::Flatten { input_dims }))
                }
            };
            if let (true, Some(cache)) = (record, cache) {
                caches.push(cache);
            }
            cur = next;
        }
        cur.ensure_finite("network output")?;
        Ok((cur, caches))
    }

    /// Backpropagates `grad_out` (gradient of the loss w.r.t. the network
    /// output) through the tape.
    pub fn backward(&self, tape: &Tape<T>, grad_out: &Tensor<T>, want_input_grad: bool) -> Result<Gradients<T>> {
        if tape.caches.len() != self.layers.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.layers.len()],
                actual: vec![tape.caches.len()],
            });
        }
        let mut grads = vec![LayerGrad::None; self.layers.len()];
        let mut g = grad_out.clone();
        for (i, (layer, cache)) in self.layers.iter().zip(&tape.caches).enumerate().rev() {
            let need_input = i > 0 || want_input_grad;
            g = match (layer, cache) {
                (Layer::Conv2d(conv), Cache::Conv(trace)) => {
                    let (gx, gw, gb) = conv2d_backward(&g, &conv.weight, trace, need_input)?;
                    grads[i] = LayerGrad::Affine { weight: gw, bias: gb };
                    match gx {
                        Some(gx) => gx,
                        None => break,
                    }
                }
                (Layer::Dense(dense), Cache::Dense { input }) => {
                    let (gx, gw, gb) = fc_backward(&g, input, &dense.weight)?;
                    grads[i] = LayerGrad::Affine { weight: gw, bias: gb };
                    gx
                }
                (Layer::Activation(kind), Cache::Activation { output }) => {
                    activation_backward(&g, output, *kind)?
                }
                (Layer::Pool(PoolLayer::Classic(mode)), Cache::Classic(trace)) => {
                    classic_pool_backward(&g, mode, trace)?
                }
                (Layer::Pool(PoolLayer::Ordinal { kernels, .. }), Cache::Ordinal(trace)) => {
                    let weights: Vec<T> =
                        kernels.weights().iter().map(|&v| T::from_f64_lossy(v)).collect();
                    let (gx, gw) = ordinal_pool_backward_raw(&g, &weights, trace)?;
                    grads[i] = LayerGrad::Ordinal(gw);
                    gx
                }
                (Layer::Flatten, Cache::Flatten { input_dims }) => g.reshape(input_dims)?,
                _ => {
                    return Err(Error::Config(format!("tape entry {i} does not match its layer")));
                }
            };
        }
        let input = if want_input_grad { Some(g) } else { None };
        Ok(Gradients { layers: grads, input })
    }

    /// Mean cross-entropy of a labelled batch and its parameter gradients.
    pub fn loss_and_grad(&self, x: &Tensor<T>, labels: &[usize]) -> Result<(f64, Gradients<T>)> {
        let (logits, tape) = self.forward_train(x)?;
        let (loss, grad) = softmax_cross_entropy_batch(&logits, labels)?;
        let grads = self.backward(&tape, &grad, false)?;
        Ok((loss, grads))
    }

    /// Summed cross-entropy and number of correct argmax predictions.
    pub fn evaluate(&self, x: &Tensor<T>, labels: &[usize]) -> Result<(f64, usize)> {
        let logits = self.forward(x)?;
        let classes = *logits.dims().last().expect("logits rank");
        let mut total = 0.0;
        let mut correct = 0;
        for (row, &label) in logits.data().chunks(classes).zip(labels) {
            total += softmax_cross_entropy(row, label)?.0;
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            if best == label {
                correct += 1;
            }
        }
        Ok((total, correct))
    }

    /// Every trainable scalar as `f64`, layer by layer: weights, then biases,
    /// then ordinal kernels in channel-major order.
    pub fn parameters_f64(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for layer in &self.layers {
            match layer {
                Layer::Conv2d(Conv2d { weight, bias, .. }) | Layer::Dense(Dense { weight, bias }) => {
                    out.extend(weight.data().iter().map(|v| v.to_f64_lossless()));
                    out.extend(bias.data().iter().map(|v| v.to_f64_lossless()));
                }
                Layer::Pool(PoolLayer::Ordinal { kernels, .. }) => out.extend_from_slice(kernels.weights()),
                _ => {}
            }
        }
        out
    }

    /// Inverse of [`Network::parameters_f64`]. Ordinal kernels are written
    /// without simplex validation.
    pub fn set_parameters_f64(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.parameter_count()],
                actual: vec![values.len()],
            });
        }
        let mut it = values.iter();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv2d(Conv2d { weight, bias, .. }) | Layer::Dense(Dense { weight, bias }) => {
                    for slot in weight.data_mut().iter_mut().chain(bias.data_mut()) {
                        *slot = T::from_f64_lossy(*it.next().expect("length checked"));
                    }
                }
                Layer::Pool(PoolLayer::Ordinal { kernels, .. }) => {
                    for slot in kernels.weights_mut_unchecked() {
                        *slot = *it.next().expect("length checked");
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Same architecture and parameters at another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv2d(c) => Layer::Conv2d(Conv2d {
                    weight: c.weight.cast(),
                    bias: c.bias.cast(),
                    zero_pad: c.zero_pad,
                }),
                Layer::Dense(d) => Layer::Dense(Dense {
                    weight: d.weight.cast(),
                    bias: d.bias.cast(),
                }),
                Layer::Activation(k) => Layer::Activation(*k),
                Layer::Pool(p) => Layer::Pool(p.clone()),
                Layer::Flatten => Layer::Flatten,
            })
            .collect();
        Network {
            name: self.name.clone(),
            input_dims: self.input_dims.clone(),
            layers,
            output_dims: self.output_dims.clone(),
        }
    }
}

/// Classic pooling layer of the given kind, or ordinal with kernels.
pub fn pool_layer(mode: PoolMode, kernels: Option<OrdinalKernelSet>) -> Result<PoolLayer> {
    match (mode.kind, kernels) {
        (PoolKind::Ordinal, Some(kernels)) => Ok(PoolLayer::Ordinal { mode, kernels }),
        (PoolKind::Ordinal, None) => Err(Error::Config("ordinal pooling needs kernels".into())),
        (_, None) => Ok(PoolLayer::Classic(mode)),
        (_, Some(_)) => Err(Error::Config("classic pooling takes no kernels".into())),
    }
}
