use super::classic::output_dims;
use super::kernels::{OrdinalKernelSet, SIMPLEX_TOLERANCE};
use super::ord::sort_pairs_desc;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor, WindowGrid};

/// Forward artifacts: for every output element and rank, the flat input index
/// and the value it contributed.
#[derive(Debug, Clone)]
pub struct OrdinalTrace<T> {
    pub input_dims: Vec<usize>,
    pub grid: WindowGrid,
    pub channels: usize,
    /// `perms[o * mn + r]`: flat input index of the rank-`r` value of output `o`.
    pub perms: Vec<u32>,
    /// `sorted[o * mn + r]`: that value.
    pub sorted: Vec<T>,
}

impl<T> OrdinalTrace<T> {
    /// Rank-ordered source indices of output element `o`.
    pub fn permutation(&self, o: usize) -> &[u32] {
        let k = self.grid.window_size();
        &self.perms[o * k..(o + 1) * k]
    }
}

#[derive(Debug, Clone)]
pub struct OrdinalPoolOutput<T> {
    pub out: Tensor<T>,
    pub trace: OrdinalTrace<T>,
}

/// Ordinal pooling with stride equal to the kernel window.
pub fn ordinal_pool_forward<T: Scalar>(
    t: &Tensor<T>,
    k: &OrdinalKernelSet,
) -> Result<OrdinalPoolOutput<T>> {
    let (m, n) = k.window();
    ordinal_pool_forward_strided(t, k, m, n)
}

pub fn ordinal_pool_forward_strided<T: Scalar>(
    t: &Tensor<T>,
    k: &OrdinalKernelSet,
    stride_h: usize,
    stride_w: usize,
) -> Result<OrdinalPoolOutput<T>> {
    k.validate(SIMPLEX_TOLERANCE)?;
    let [_, h, w, c] = t.nhwc()?;
    if c != k.channels() {
        return Err(Error::ChannelMismatch {
            kernels: k.channels(),
            input: c,
        });
    }
    let (m, n) = k.window();
    let grid = WindowGrid::new(h, w, m, n, stride_h, stride_w)?;
    let weights: Vec<T> = k.weights().iter().map(|&x| T::from_f64_lossy(x)).collect();
    ordinal_pool_forward_raw(t, grid, &weights)
}

/// Forward on explicit channel-major weights, without simplex validation.
pub fn ordinal_pool_forward_raw<T: Scalar>(
    t: &Tensor<T>,
    grid: WindowGrid,
    weights: &[T],
) -> Result<OrdinalPoolOutput<T>> {
    let [batch, h, w, c] = t.nhwc()?;
    let k = grid.window_size();
    if weights.len() != c * k {
        return Err(Error::ChannelMismatch {
            kernels: weights.len() / k,
            input: c,
        });
    }
    if (grid.height, grid.width) != (h, w) {
        return Err(Error::ShapeMismatch {
            expected: vec![grid.height, grid.width],
            actual: vec![h, w],
        });
    }
    if batch * h * w * c > u32::MAX as usize {
        return Err(Error::InvalidShape {
            dims: t.dims().to_vec(),
            reason: "too many elements for 32-bit routing indices".into(),
        });
    }
    t.ensure_finite("ordinal pooling input")?;
    let x = t.data();
    let outputs = batch * grid.count() * c;
    let mut out = vec![T::zero(); outputs];
    let mut perms = vec![0u32; outputs * k];
    let mut sorted = vec![T::zero(); outputs * k];
    let mut offsets = vec![0usize; k];
    let mut pairs = vec![(T::zero(), 0u32); k];

    for b in 0..batch {
        let base = b * h * w * c;
        for oy in 0..grid.out_h {
            for ox in 0..grid.out_w {
                for (slot, off) in offsets.iter_mut().zip(grid.offsets(oy, ox)) {
                    *slot = base + off * c;
                }
                let o_base = ((b * grid.out_h + oy) * grid.out_w + ox) * c;
                for ch in 0..c {
                    for (p, &off) in pairs.iter_mut().zip(&offsets) {
                        *p = (x[off + ch], (off + ch) as u32);
                    }
                    sort_pairs_desc(&mut pairs);
                    let o = o_base + ch;
                    let kernel = &weights[ch * k..(ch + 1) * k];
                    let p_out = &mut perms[o * k..(o + 1) * k];
                    let s_out = &mut sorted[o * k..(o + 1) * k];
                    let mut acc = T::zero();
                    for r in 0..k {
                        let (v, src) = pairs[r];
                        acc += kernel[r] * v;
                        p_out[r] = src;
                        s_out[r] = v;
                    }
                    out[o] = acc;
                }
            }
        }
    }

    Ok(OrdinalPoolOutput {
        out: Tensor::from_vec(&output_dims(t.dims(), &grid, c), out)?,
        trace: OrdinalTrace {
            input_dims: t.dims().to_vec(),
            grid,
            channels: c,
            perms,
            sorted,
        },
    })
}

/// Gradients of ordinal pooling with respect to its input and kernels.
///
/// The input gradient flows through the permutation frozen at forward time:
/// the source of rank `r` receives `w_r * grad_out`. The kernel gradient of
/// rank `r` accumulates the rank-`r` value times `grad_out` over all windows,
/// in 64 bits and in a fixed order.
pub fn ordinal_pool_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    k: &OrdinalKernelSet,
    trace: &OrdinalTrace<T>,
) -> Result<(Tensor<T>, Vec<f64>)> {
    if k.channels() != trace.channels || k.window_size() != trace.grid.window_size() {
        return Err(Error::ChannelMismatch {
            kernels: k.channels(),
            input: trace.channels,
        });
    }
    let weights: Vec<T> = k.weights().iter().map(|&x| T::from_f64_lossy(x)).collect();
    ordinal_pool_backward_raw(grad_out, &weights, trace)
}

pub fn ordinal_pool_backward_raw<T: Scalar>(
    grad_out: &Tensor<T>,
    weights: &[T],
    trace: &OrdinalTrace<T>,
) -> Result<(Tensor<T>, Vec<f64>)> {
    let c = trace.channels;
    let k = trace.grid.window_size();
    let expected = output_dims(&trace.input_dims, &trace.grid, c);
    if grad_out.dims() != expected.as_slice() {
        return Err(Error::ShapeMismatch {
            expected,
            actual: grad_out.dims().to_vec(),
        });
    }
    if weights.len() != c * k {
        return Err(Error::ChannelMismatch {
            kernels: weights.len() / k.max(1),
            input: c,
        });
    }
    let mut grad_in = Tensor::zeros(&trace.input_dims)?;
    let gi = grad_in.data_mut();
    let mut grad_w = vec![0.0f64; c * k];
    for (o, &g) in grad_out.data().iter().enumerate() {
        let ch = o % c;
        let kernel = &weights[ch * k..(ch + 1) * k];
        let gw = &mut grad_w[ch * k..(ch + 1) * k];
        let perm = &trace.perms[o * k..(o + 1) * k];
        let vals = &trace.sorted[o * k..(o + 1) * k];
        let g64 = g.to_f64_lossless();
        for r in 0..k {
            gi[perm[r] as usize] += kernel[r] * g;
            gw[r] += vals[r].to_f64_lossless() * g64;
        }
    }
    Ok((grad_in, grad_w))
}
