use super::{PoolKind, PoolMode};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor, WindowGrid};

/// Everything backward needs from a classic forward call.
#[derive(Debug, Clone)]
pub struct ClassicTrace {
    pub input_dims: Vec<usize>,
    pub grid: WindowGrid,
    /// For max/min: flat input index selected by each output element.
    pub argselect: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct ClassicPoolOutput<T> {
    pub out: Tensor<T>,
    pub trace: ClassicTrace,
}

/// Average, max or min over each window and channel.
///
/// Max and min record the row-major-first position attaining the extremum.
pub fn classic_pool_forward<T: Scalar>(
    t: &Tensor<T>,
    mode: &PoolMode,
) -> Result<ClassicPoolOutput<T>> {
    if mode.kind == PoolKind::Ordinal {
        return Err(Error::Config("classic pooling called with ordinal mode".into()));
    }
    let [batch, h, w, c] = t.nhwc()?;
    let grid = mode.grid(h, w)?;
    let out_dims = output_dims(t.dims(), &grid, c);
    let per_map = grid.count() * c;
    let mut out = vec![T::zero(); batch * per_map];
    let mut argselect = match mode.kind {
        PoolKind::Avg => None,
        _ => Some(vec![0usize; out.len()]),
    };
    let inv = T::from_f64_lossy(1.0 / grid.window_size() as f64);
    let x = t.data();

    for b in 0..batch {
        let base = b * h * w * c;
        for oy in 0..grid.out_h {
            for ox in 0..grid.out_w {
                let o_base = b * per_map + (oy * grid.out_w + ox) * c;
                for ch in 0..c {
                    let mut offsets = grid.offsets(oy, ox).map(|off| base + off * c + ch);
                    let o = o_base + ch;
                    match mode.kind {
                        PoolKind::Avg => {
                            let mut sum = T::zero();
                            for i in offsets {
                                sum += x[i];
                            }
                            out[o] = sum * inv;
                        }
                        kind => {
                            let first = offsets.next().expect("window is non-empty");
                            let (mut best, mut at) = (x[first], first);
                            for i in offsets {
                                let better = if kind == PoolKind::Max {
                                    x[i] > best
                                } else {
                                    x[i] < best
                                };
                                if better {
                                    best = x[i];
                                    at = i;
                                }
                            }
                            out[o] = best;
                            argselect.as_mut().expect("max/min trace")[o] = at;
                        }
                    }
                }
            }
        }
    }

    Ok(ClassicPoolOutput {
        out: Tensor::from_vec(&out_dims, out)?,
        trace: ClassicTrace {
            input_dims: t.dims().to_vec(),
            grid,
            argselect,
        },
    })
}

/// Routes output gradients back to the window: evenly for average, to the
/// selected position for max/min.
pub fn classic_pool_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    mode: &PoolMode,
    trace: &ClassicTrace,
) -> Result<Tensor<T>> {
    let grid = &trace.grid;
    let in_dims = &trace.input_dims;
    let c = *in_dims.last().expect("validated at forward");
    let expected = output_dims(in_dims, grid, c);
    if grad_out.dims() != expected.as_slice() {
        return Err(Error::ShapeMismatch {
            expected,
            actual: grad_out.dims().to_vec(),
        });
    }
    let mut grad_in = Tensor::zeros(in_dims)?;
    let gi = grad_in.data_mut();
    let g = grad_out.data();

    match (mode.kind, &trace.argselect) {
        (PoolKind::Avg, _) => {
            let batch = g.len() / (grid.count() * c);
            let inv = T::from_f64_lossy(1.0 / grid.window_size() as f64);
            let map = grid.height * grid.width * c;
            for b in 0..batch {
                for oy in 0..grid.out_h {
                    for ox in 0..grid.out_w {
                        let o_base = (b * grid.count() + oy * grid.out_w + ox) * c;
                        for ch in 0..c {
                            let share = g[o_base + ch] * inv;
                            for off in grid.offsets(oy, ox) {
                                gi[b * map + off * c + ch] += share;
                            }
                        }
                    }
                }
            }
        }
        (PoolKind::Max | PoolKind::Min, Some(sel)) => {
            if sel.len() != g.len() {
                return Err(Error::ShapeMismatch {
                    expected: vec![sel.len()],
                    actual: vec![g.len()],
                });
            }
            for (&i, &go) in sel.iter().zip(g) {
                gi[i] += go;
            }
        }
        _ => {
            return Err(Error::Config(format!(
                "no classic backward for {} without a selection trace",
                mode.kind
            )))
        }
    }
    Ok(grad_in)
}

pub(super) fn output_dims(in_dims: &[usize], grid: &WindowGrid, c: usize) -> Vec<usize> {
    if in_dims.len() == 4 {
        vec![in_dims[0], grid.out_h, grid.out_w, c]
    } else {
        vec![grid.out_h, grid.out_w, c]
    }
}
