//! Central finite-difference checks of every backward pass, in f64.
//!
//! Each check draws a small random instance, evaluates a scalar loss, and
//! compares the analytic gradient of every input and parameter coordinate with
//! `(L(x + h) - L(x - h)) / 2h`. The error measure is
//!
//! ```text
//! |analytic - numeric| / max(|analytic|, |numeric|, ERROR_FLOOR)
//! ```
//!
//! The floor keeps coordinates whose true gradient is (near) zero from turning
//! rounding noise into large relative errors. Coordinates whose perturbation
//! changes a discrete routing decision (ReLU mask, max/min selection, ordinal
//! permutation) are skipped and counted; pooling inputs are drawn with
//! pairwise-distinct values so such skips stay rare.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::Serialize;

use crate::error::Result;
use crate::network::{
    activation_backward, activation_forward, conv2d_backward, conv2d_forward, fc_backward, fc_forward,
    softmax_cross_entropy_batch, ActivationKind, Conv2d, Dense, Layer, Network, PoolLayer,
};
use crate::pooling::{
    classic_pool_backward, classic_pool_forward, ordinal_pool_backward_raw, ordinal_pool_forward_raw, init_kernels,
    InitScheme, PoolKind, PoolMode,
};
use crate::tensor::{RngStream, Tensor};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-5;
pub const ERROR_FLOOR: f64 = 1e-4;

/// Layer kinds covered by [`run_all`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Conv,
    Dense,
    Identity,
    Relu,
    Tanh,
    AvgPool,
    MaxPool,
    MinPool,
    OrdinalPool,
    SoftmaxCrossEntropy,
    Network,
}

impl CheckKind {
    pub const ALL: [CheckKind; 11] = [
        CheckKind::Conv,
        CheckKind::Dense,
        CheckKind::Identity,
        CheckKind::Relu,
        CheckKind::Tanh,
        CheckKind::AvgPool,
        CheckKind::MaxPool,
        CheckKind::MinPool,
        CheckKind::OrdinalPool,
        CheckKind::SoftmaxCrossEntropy,
        CheckKind::Network,
    ];
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckKind::Conv => "conv",
            CheckKind::Dense => "dense",
            CheckKind::Identity => "identity",
            CheckKind::Relu => "relu",
            CheckKind::Tanh => "tanh",
            CheckKind::AvgPool => "avg-pool",
            CheckKind::MaxPool => "max-pool",
            CheckKind::MinPool => "min-pool",
            CheckKind::OrdinalPool => "ordinal-pool",
            CheckKind::SoftmaxCrossEntropy => "softmax-ce",
            CheckKind::Network => "network",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GradcheckOptions {
    pub trials: usize,
    pub seed: u64,
    /// Negative control: scales the analytic ordinal kernel gradient by
    /// 1.001 so the ordinal check must fail.
    pub inject_fault: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            trials: 50,
            seed: 0,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindReport {
    pub kind: CheckKind,
    pub trials: usize,
    pub compared: usize,
    pub skipped: usize,
    pub max_relative_error: f64,
}

impl KindReport {
    pub fn passed(&self) -> bool {
        self.compared > 0 && self.max_relative_error <= TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub error_floor: f64,
    pub kinds: Vec<KindReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.kinds.iter().all(KindReport::passed)
    }

    pub fn max_relative_error(&self) -> f64 {
        self.kinds.iter().map(|k| k.max_relative_error).fold(0.0, f64::max)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ERROR_FLOOR)
}

/// Runs `trials` random instances of every kind.
pub fn run_all(options: &GradcheckOptions) -> Result<GradcheckReport> {
    let kinds = CheckKind::ALL
        .iter()
        .map(|&kind| check_kind(kind, options))
        .collect::<Result<_>>()?;
    Ok(GradcheckReport {
        step: STEP,
        tolerance: TOLERANCE,
        error_floor: ERROR_FLOOR,
        kinds,
    })
}

pub fn check_kind(kind: CheckKind, options: &GradcheckOptions) -> Result<KindReport> {
    let index = CheckKind::ALL.iter().position(|&k| k == kind).expect("listed") as u64;
    let mut rng = RngStream::with_stream(options.seed, 0x6763_0000 + index);
    let mut report = KindReport {
        kind,
        trials: options.trials,
        compared: 0,
        skipped: 0,
        max_relative_error: 0.0,
    };
    for _ in 0..options.trials {
        let mut case = build_case(kind, &mut rng)?;
        if options.inject_fault && kind == CheckKind::OrdinalPool {
            case.fault = true;
        }
        case.check(&mut report)?;
    }
    Ok(report)
}

/// Loss value and routing signature at one point.
type Eval = (f64, u64);

struct Case {
    blocks: Vec<Vec<f64>>,
    eval: Box<dyn Fn(&[Vec<f64>]) -> Result<Eval>>,
    grad: Box<dyn Fn(&[Vec<f64>]) -> Result<Vec<Vec<f64>>>>,
    /// Block whose analytic gradient the fault injection corrupts.
    fault_block: Option<usize>,
    fault: bool,
}

impl Case {
    fn check(&self, report: &mut KindReport) -> Result<()> {
        let (_, base_sig) = (self.eval)(&self.blocks)?;
        let mut analytic = (self.grad)(&self.blocks)?;
        if self.fault {
            if let Some(b) = self.fault_block {
                analytic[b].iter_mut().for_each(|g| *g *= 1.001);
            }
        }
        let mut point = self.blocks.clone();
        for (b, block) in self.blocks.iter().enumerate() {
            for (i, &v) in block.iter().enumerate() {
                point[b][i] = v + STEP;
                let (plus, sig_plus) = (self.eval)(&point)?;
                point[b][i] = v - STEP;
                let (minus, sig_minus) = (self.eval)(&point)?;
                point[b][i] = v;
                if sig_plus != base_sig || sig_minus != base_sig {
                    report.skipped += 1;
                    continue;
                }
                let numeric = (plus - minus) / (2.0 * STEP);
                let err = relative_error(analytic[b][i], numeric);
                report.compared += 1;
                if !(err <= report.max_relative_error) {
                    report.max_relative_error = err;
                }
            }
        }
        Ok(())
    }
}

fn range(rng: &mut RngStream, lo: usize, hi: usize) -> usize {
    lo + rng.next_below((hi - lo + 1) as u64) as usize
}

/// `n` values on a shuffled grid of spacing 0.02 with a small jitter: pairwise
/// gaps stay above 0.01 and no value lies within 0.005 of zero.
pub fn distinct_values(rng: &mut RngStream, n: usize) -> Result<Vec<f64>> {
    let perm = rng.shuffled_indices(n)?;
    let centre = ((n - 1) / 2) as f64;
    let jitter = rng.uniform(n, 0.0, 0.004)?;
    Ok(perm
        .iter()
        .zip(jitter)
        .map(|(&p, j)| 0.02 * (p as f64 - centre) + 0.005 + j)
        .collect())
}

fn tensor(dims: &[usize], values: &[f64]) -> Result<Tensor<f64>> {
    Tensor::from_vec(dims, values.to_vec())
}

fn dot(a: &Tensor<f64>, r: &[f64]) -> f64 {
    a.data().iter().zip(r).map(|(x, y)| x * y).sum()
}

fn hash_of<H: Hash>(value: &H) -> u64 {
    let mut h = DefaultHasher::new();
    value.hash(&mut h);
    h.finish()
}

fn pool_geometry(rng: &mut RngStream, global: bool) -> (usize, usize, usize, usize, PoolMode) {
    let batch = range(rng, 1, 2);
    let channels = range(rng, 1, 3);
    let m = range(rng, 1, 3);
    let n = range(rng, 1, 3);
    if global {
        return (batch, m.max(2), n, channels, PoolMode::global(PoolKind::Ordinal, m.max(2), n));
    }
    let sh = range(rng, 1, m);
    let sw = range(rng, 1, n);
    let h = m + sh * range(rng, 0, 2);
    let w = n + sw * range(rng, 0, 2);
    (batch, h, w, channels, PoolMode::new(PoolKind::Ordinal, m, n).with_stride(sh, sw))
}

fn build_case(kind: CheckKind, rng: &mut RngStream) -> Result<Case> {
    match kind {
        CheckKind::Conv => conv_case(rng),
        CheckKind::Dense => dense_case(rng),
        CheckKind::Identity => activation_case(rng, ActivationKind::None),
        CheckKind::Relu => activation_case(rng, ActivationKind::Relu),
        CheckKind::Tanh => activation_case(rng, ActivationKind::Tanh),
        CheckKind::AvgPool => classic_case(rng, PoolKind::Avg),
        CheckKind::MaxPool => classic_case(rng, PoolKind::Max),
        CheckKind::MinPool => classic_case(rng, PoolKind::Min),
        CheckKind::OrdinalPool => ordinal_case(rng),
        CheckKind::SoftmaxCrossEntropy => softmax_case(rng),
        CheckKind::Network => network_case(rng),
    }
}

fn conv_case(rng: &mut RngStream) -> Result<Case> {
    let zero_pad = rng.next_below(2) == 1;
    let batch = range(rng, 1, 2);
    let h = range(rng, 3, 6);
    let w = range(rng, 3, 6);
    let cin = range(rng, 1, 3);
    let cout = range(rng, 1, 3);
    let (kh, kw) = if zero_pad {
        (2 * range(rng, 0, 1) + 1, 2 * range(rng, 0, 1) + 1)
    } else {
        (range(rng, 1, 3), range(rng, 1, 3))
    };
    let x_dims = [batch, h, w, cin];
    let w_dims = [kh, kw, cin, cout];
    let blocks = vec![
        rng.uniform(x_dims.iter().product(), -1.0, 1.0)?,
        rng.uniform(w_dims.iter().product(), -1.0, 1.0)?,
        rng.uniform(cout, -0.5, 0.5)?,
    ];
    let out_len = batch * if zero_pad { h * w } else { (h - kh + 1) * (w - kw + 1) } * cout;
    let r = rng.uniform(out_len, -1.0, 1.0)?;
    let r2 = r.clone();
    Ok(Case {
        blocks,
        eval: Box::new(move |b| {
            let (y, _) = conv2d_forward(&tensor(&x_dims, &b[0])?, &tensor(&w_dims, &b[1])?, &tensor(&[cout], &b[2])?, zero_pad)?;
            Ok((dot(&y, &r), 0))
        }),
        grad: Box::new(move |b| {
            let weight = tensor(&w_dims, &b[1])?;
            let (y, trace) = conv2d_forward(&tensor(&x_dims, &b[0])?, &weight, &tensor(&[cout], &b[2])?, zero_pad)?;
            let g = tensor(y.dims(), &r2)?;
            let (gx, gw, gb) = conv2d_backward(&g, &weight, &trace, true)?;
            Ok(vec![gx.expect("requested").into_data(), gw.into_data(), gb.into_data()])
        }),
        fault_block: None,
        fault: false,
    })
}

fn dense_case(rng: &mut RngStream) -> Result<Case> {
    let batch = range(rng, 1, 3);
    let inputs = range(rng, 1, 6);
    let outputs = range(rng, 1, 5);
    let blocks = vec![
        rng.uniform(batch * inputs, -1.0, 1.0)?,
        rng.uniform(inputs * outputs, -1.0, 1.0)?,
        rng.uniform(outputs, -0.5, 0.5)?,
    ];
    let r = rng.uniform(batch * outputs, -1.0, 1.0)?;
    let r2 = r.clone();
    let parts = move |b: &[Vec<f64>]| -> Result<_> {
        Ok((
            tensor(&[batch, inputs], &b[0])?,
            tensor(&[inputs, outputs], &b[1])?,
            tensor(&[outputs], &b[2])?,
        ))
    };
    Ok(Case {
        blocks,
        eval: Box::new(move |b| {
            let (x, w, bias) = parts(b)?;
            Ok((dot(&fc_forward(&x, &w, &bias)?, &r), 0))
        }),
        grad: Box::new(move |b| {
            let (x, w, _) = parts(b)?;
            let (gx, gw, gb) = fc_backward(&tensor(&[batch, outputs], &r2)?, &x, &w)?;
            Ok(vec![gx.into_data(), gw.into_data(), gb.into_data()])
        }),
        fault_block: None,
        fault: false,
    })
}

fn activation_case(rng: &mut RngStream, kind: ActivationKind) -> Result<Case> {
    let dims = [range(rng, 1, 2), range(rng, 1, 4), range(rng, 1, 4), range(rng, 1, 3)];
    let len: usize = dims.iter().product();
    // spread values so tanh is exercised away from its linear region
    let blocks = vec![distinct_values(rng, len)?.iter().map(|v| v * 20.0).collect()];
    let r = rng.uniform(len, -1.0, 1.0)?;
    let r2 = r.clone();
    Ok(Case {
        blocks,
        eval: Box::new(move |b| {
            let x = tensor(&dims, &b[0])?;
            let mask: Vec<bool> = x.data().iter().map(|&v| v > 0.0).collect();
            Ok((dot(&activation_forward(&x, kind), &r), hash_of(&mask)))
        }),
        grad: Box::new(move |b| {
            let y = activation_forward(&tensor(&dims, &b[0])?, kind);
            Ok(vec![activation_backward(&tensor(&dims, &r2)?, &y, kind)?.into_data()])
        }),
        fault_block: None,
        fault: false,
    })
}

fn classic_case(rng: &mut RngStream, kind: PoolKind) -> Result<Case> {
    let global = rng.next_below(4) == 0;
    let (batch, h, w, c, mut mode) = pool_geometry(rng, global);
    mode.kind = kind;
    let dims = [batch, h, w, c];
    let blocks = vec![distinct_values(rng, dims.iter().product())?];
    let out_len = {
        let grid = mode.grid(h, w)?;
        batch * grid.count() * c
    };
    let r = rng.uniform(out_len, -1.0, 1.0)?;
    let r2 = r.clone();
    Ok(Case {
        blocks,
        eval: Box::new(move |b| {
            let res = classic_pool_forward(&tensor(&dims, &b[0])?, &mode)?;
            Ok((dot(&res.out, &r), hash_of(&res.trace.argselect)))
        }),
        grad: Box::new(move |b| {
            let res = classic_pool_forward(&tensor(&dims, &b[0])?, &mode)?;
            let g = tensor(res.out.dims(), &r2)?;
            Ok(vec![classic_pool_backward(&g, &mode, &res.trace)?.into_data()])
        }),
        fault_block: None,
        fault: false,
    })
}

fn ordinal_case(rng: &mut RngStream) -> Result<Case> {
    let global = rng.next_below(4) == 0;
    let (batch, h, w, c, mode) = pool_geometry(rng, global);
    let dims = [batch, h, w, c];
    let k = mode.window.0 * mode.window.1;
    let blocks = vec![distinct_values(rng, dims.iter().product())?, rng.uniform(c * k, 0.0, 1.0)?];
    let grid = mode.grid(h, w)?;
    let r = rng.uniform(batch * grid.count() * c, -1.0, 1.0)?;
    let r2 = r.clone();
    Ok(Case {
        blocks,
        eval: Box::new(move |b| {
            let res = ordinal_pool_forward_raw(&tensor(&dims, &b[0])?, grid, &b[1])?;
            Ok((dot(&res.out, &r), hash_of(&res.trace.perms)))
        }),
        grad: Box::new(move |b| {
            let res = ordinal_pool_forward_raw(&tensor(&dims, &b[0])?, grid, &b[1])?;
            let g = tensor(res.out.dims(), &r2)?;
            let (gx, gw) = ordinal_pool_backward_raw(&g, &b[1], &res.trace)?;
            Ok(vec![gx.into_data(), gw])
        }),
        fault_block: Some(1),
        fault: false,
    })
}

fn softmax_case(rng: &mut RngStream) -> Result<Case> {
    let batch = range(rng, 1, 4);
    let classes = range(rng, 2, 10);
    let labels: Vec<usize> = (0..batch).map(|_| rng.next_below(classes as u64) as usize).collect();
    let blocks = vec![rng.uniform(batch * classes, -3.0, 3.0)?];
    let labels2 = labels.clone();
    Ok(Case {
        blocks,
        eval: Box::new(move |b| Ok((softmax_cross_entropy_batch(&tensor(&[batch, classes], &b[0])?, &labels)?.0, 0))),
        grad: Box::new(move |b| {
            Ok(vec![softmax_cross_entropy_batch(&tensor(&[batch, classes], &b[0])?, &labels2)?.1.into_data()])
        }),
        fault_block: None,
        fault: false,
    })
}

/// conv 3x3 ZP, ReLU, ordinal 2x2, conv 2x2, tanh, a second pooling layer
/// (classic avg/max/min or global ordinal), dense, dense, softmax-CE.
fn small_network(rng: &mut RngStream) -> Result<Network<f64>> {
    let init = InitScheme::ALL[rng.next_below(4) as usize];
    let mut affine = |dims: &[usize], bias: usize| -> Result<(Tensor<f64>, Tensor<f64>)> {
        Ok((
            tensor(dims, &rng.uniform(dims.iter().product(), -0.8, 0.8)?)?,
            tensor(&[bias], &rng.uniform(bias, -0.2, 0.2)?)?,
        ))
    };
    let (w1, b1) = affine(&[3, 3, 1, 2], 2)?;
    let (w2, b2) = affine(&[2, 2, 2, 3], 3)?;
    let (w3, b3) = affine(&[3, 4], 4)?;
    let (w4, b4) = affine(&[4, 3], 3)?;
    let second = rng.next_below(4);
    let mut kernel_rng = RngStream::with_stream(rng.next_u64(), 1);
    let first_pool = PoolLayer::Ordinal {
        mode: PoolMode::new(PoolKind::Ordinal, 2, 2),
        kernels: init_kernels(init, 2, 2, 2, &mut kernel_rng)?,
    };
    let second_pool = match second {
        0 => PoolLayer::Classic(PoolMode::new(PoolKind::Avg, 2, 2)),
        1 => PoolLayer::Classic(PoolMode::new(PoolKind::Max, 2, 2)),
        2 => PoolLayer::Classic(PoolMode::new(PoolKind::Min, 2, 2)),
        _ => PoolLayer::Ordinal {
            mode: PoolMode::global(PoolKind::Ordinal, 2, 2),
            kernels: init_kernels(InitScheme::Uniform, 2, 2, 3, &mut kernel_rng)?,
        },
    };
    let layers = vec![
        Layer::Conv2d(Conv2d { weight: w1, bias: b1, zero_pad: true }),
        Layer::Activation(ActivationKind::Relu),
        Layer::Pool(first_pool),
        Layer::Conv2d(Conv2d { weight: w2, bias: b2, zero_pad: false }),
        Layer::Activation(ActivationKind::Tanh),
        Layer::Pool(second_pool),
        Layer::Flatten,
        Layer::Dense(Dense { weight: w3, bias: b3 }),
        Layer::Activation(ActivationKind::None),
        Layer::Dense(Dense { weight: w4, bias: b4 }),
    ];
    Network::new("gradcheck", &[6, 6, 1], layers)
}

fn network_case(rng: &mut RngStream) -> Result<Case> {
    let net = small_network(rng)?;
    let batch = range(rng, 1, 2);
    let x_dims = [batch, 6, 6, 1];
    let labels: Vec<usize> = (0..batch).map(|_| rng.next_below(3) as usize).collect();
    let blocks = vec![net.parameters_f64(), rng.uniform(batch * 36, 0.0, 1.0)?];
    let labels2 = labels.clone();
    let net2 = net.clone();
    Ok(Case {
        blocks,
        eval: Box::new(move |b| {
            let mut n = net.clone();
            n.set_parameters_f64(&b[0])?;
            let (logits, tape) = n.forward_train(&tensor(&x_dims, &b[1])?)?;
            let (loss, _) = softmax_cross_entropy_batch(&logits, &labels)?;
            Ok((loss, tape.routing_signature()))
        }),
        grad: Box::new(move |b| {
            let mut n = net2.clone();
            n.set_parameters_f64(&b[0])?;
            let (logits, tape) = n.forward_train(&tensor(&x_dims, &b[1])?)?;
            let (_, g) = softmax_cross_entropy_batch(&logits, &labels2)?;
            let grads = n.backward(&tape, &g, true)?;
            Ok(vec![grads.flat_f64(), grads.input.expect("requested").into_data()])
        }),
        fault_block: None,
        fault: false,
    })
}
