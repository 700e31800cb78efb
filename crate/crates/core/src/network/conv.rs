//! 2-D cross-correlation, stride 1, optional extent-preserving zero padding.
//!
//! Lowered to one GEMM per call: patches of the whole batch are gathered into
//! a `[N*OH*OW, KH*KW*Cin]` matrix and multiplied by the `[KH*KW*Cin, Cout]`
//! weight matrix, which yields the NHWC output directly.

use crate::error::{Error, Result};
use crate::tensor::linalg::{gemm, Op};
use crate::tensor::{Scalar, Tensor};

/// Geometry of a convolution call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        input: [usize; 4],
        kernel: [usize; 4],
        zero_pad: bool,
    ) -> Result<Self> {
        let [batch, height, width, in_channels] = input;
        let [kh, kw, kin, out_channels] = kernel;
        if kin != in_channels {
            return Err(Error::ShapeMismatch {
                expected: vec![kh, kw, in_channels, out_channels],
                actual: kernel.to_vec(),
            });
        }
        let (pad_h, pad_w) = if zero_pad {
            if kh % 2 == 0 || kw % 2 == 0 {
                return Err(Error::InvalidShape {
                    dims: kernel.to_vec(),
                    reason: "extent-preserving padding needs odd kernel sizes".into(),
                });
            }
            (kh / 2, kw / 2)
        } else {
            (0, 0)
        };
        if height + 2 * pad_h < kh || width + 2 * pad_w < kw {
            return Err(Error::InvalidShape {
                dims: input.to_vec(),
                reason: format!("{kh}x{kw} kernel larger than the padded input"),
            });
        }
        Ok(ConvGeometry {
            batch,
            height,
            width,
            in_channels,
            out_channels,
            kh,
            kw,
            pad_h,
            pad_w,
            out_h: height + 2 * pad_h - kh + 1,
            out_w: width + 2 * pad_w - kw + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.kh * self.kw * self.in_channels
    }

    fn rows(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }

    pub fn output_dims(&self) -> [usize; 4] {
        [self.batch, self.out_h, self.out_w, self.out_channels]
    }
}

/// What backward needs from a forward call.
#[derive(Debug, Clone)]
pub struct ConvTrace<T> {
    pub geometry: ConvGeometry,
    pub input_dims: Vec<usize>,
    cols: Vec<T>,
}

/// Columns `[kx0, kx1)` of a kernel row that land inside the input at output
/// column `ox`.
fn valid_kx(g: &ConvGeometry, ox: usize) -> (usize, usize) {
    let lo = g.pad_w.saturating_sub(ox);
    let hi = (g.width + g.pad_w).saturating_sub(ox).min(g.kw);
    (lo, hi.max(lo))
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeometry) -> Vec<T> {
    let c = g.in_channels;
    let k = g.patch_len();
    let mut cols = vec![T::zero(); g.rows() * k];
    let mut row = 0;
    for b in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let dst = &mut cols[row * k..(row + 1) * k];
                let (kx0, kx1) = valid_kx(g, ox);
                for ky in 0..g.kh {
                    let iy = (oy + ky) as isize - g.pad_h as isize;
                    if iy < 0 || iy >= g.height as isize || kx0 == kx1 {
                        continue;
                    }
                    let ix0 = ox + kx0 - g.pad_w;
                    let src = ((b * g.height + iy as usize) * g.width + ix0) * c;
                    let at = (ky * g.kw + kx0) * c;
                    let len = (kx1 - kx0) * c;
                    dst[at..at + len].copy_from_slice(&x[src..src + len]);
                }
                row += 1;
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: &[T], g: &ConvGeometry, grad_x: &mut [T]) {
    let c = g.in_channels;
    let k = g.patch_len();
    let mut row = 0;
    for b in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let src_row = &cols[row * k..(row + 1) * k];
                let (kx0, kx1) = valid_kx(g, ox);
                for ky in 0..g.kh {
                    let iy = (oy + ky) as isize - g.pad_h as isize;
                    if iy < 0 || iy >= g.height as isize || kx0 == kx1 {
                        continue;
                    }
                    let ix0 = ox + kx0 - g.pad_w;
                    let dst = ((b * g.height + iy as usize) * g.width + ix0) * c;
                    let at = (ky * g.kw + kx0) * c;
                    let len = (kx1 - kx0) * c;
                    for (d, s) in grad_x[dst..dst + len].iter_mut().zip(&src_row[at..at + len]) {
                        *d += *s;
                    }
                }
                row += 1;
            }
        }
    }
}

/// `x`: `[N, H, W, Cin]` (or `[H, W, Cin]`), `weight`: `[KH, KW, Cin, Cout]`,
/// `bias`: `[Cout]`.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    zero_pad: bool,
) -> Result<(Tensor<T>, ConvTrace<T>)> {
    let kernel: [usize; 4] = weight.dims().try_into().map_err(|_| Error::InvalidShape {
        dims: weight.dims().to_vec(),
        reason: "conv weight must be [KH, KW, Cin, Cout]".into(),
    })?;
    let g = ConvGeometry::new(x.nhwc()?, kernel, zero_pad)?;
    if bias.dims() != [g.out_channels] {
        return Err(Error::ShapeMismatch {
            expected: vec![g.out_channels],
            actual: bias.dims().to_vec(),
        });
    }
    let cols = im2col(x.data(), &g);
    let mut out = Vec::with_capacity(g.rows() * g.out_channels);
    for _ in 0..g.rows() {
        out.extend_from_slice(bias.data());
    }
    gemm(
        g.rows(),
        g.patch_len(),
        g.out_channels,
        &cols,
        Op::N,
        weight.data(),
        Op::N,
        T::one(),
        &mut out,
    );
    let out_dims = if x.dims().len() == 3 {
        vec![g.out_h, g.out_w, g.out_channels]
    } else {
        g.output_dims().to_vec()
    };
    Ok((
        Tensor::from_vec(&out_dims, out)?,
        ConvTrace {
            geometry: g,
            input_dims: x.dims().to_vec(),
            cols,
        },
    ))
}

/// Returns `(grad_x, grad_weight, grad_bias)`; `grad_x` only when requested.
pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    weight: &Tensor<T>,
    trace: &ConvTrace<T>,
    want_input_grad: bool,
) -> Result<(Option<Tensor<T>>, Tensor<T>, Tensor<T>)> {
    let g = &trace.geometry;
    if grad_out.len() != g.rows() * g.out_channels {
        return Err(Error::ShapeMismatch {
            expected: g.output_dims().to_vec(),
            actual: grad_out.dims().to_vec(),
        });
    }
    let go = grad_out.data();
    let (k, cout, rows) = (g.patch_len(), g.out_channels, g.rows());

    let mut grad_w = vec![T::zero(); k * cout];
    gemm(k, rows, cout, &trace.cols, Op::T, go, Op::N, T::zero(), &mut grad_w);

    let mut grad_b = vec![T::zero(); cout];
    for row in go.chunks(cout) {
        for (b, &v) in grad_b.iter_mut().zip(row) {
            *b += v;
        }
    }

    let grad_x = if want_input_grad {
        let mut grad_cols = vec![T::zero(); rows * k];
        gemm(rows, cout, k, go, Op::N, weight.data(), Op::T, T::zero(), &mut grad_cols);
        let mut gx = Tensor::zeros(&trace.input_dims)?;
        col2im(&grad_cols, g, gx.data_mut());
        Some(gx)
    } else {
        None
    };

    Ok((
        grad_x,
        Tensor::from_vec(weight.dims(), grad_w)?,
        Tensor::from_vec(&[cout], grad_b)?,
    ))
}
