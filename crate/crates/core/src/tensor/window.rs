use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Geometry of an exactly tiling `m x n` window sweep over an `H x W` map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowGrid {
    pub height: usize,
    pub width: usize,
    pub m: usize,
    pub n: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl WindowGrid {
    pub fn new(
        height: usize,
        width: usize,
        m: usize,
        n: usize,
        stride_h: usize,
        stride_w: usize,
    ) -> Result<Self> {
        if m == 0 || n == 0 || stride_h == 0 || stride_w == 0 {
            return Err(Error::Partition(format!(
                "window {m}x{n} with stride {stride_h}x{stride_w}"
            )));
        }
        if m > height || n > width {
            return Err(Error::Partition(format!(
                "window {m}x{n} larger than map {height}x{width}"
            )));
        }
        if !(height - m).is_multiple_of(stride_h) || !(width - n).is_multiple_of(stride_w) {
            return Err(Error::Partition(format!(
                "window {m}x{n} stride {stride_h}x{stride_w} leaves a partial window on {height}x{width}"
            )));
        }
        Ok(WindowGrid {
            height,
            width,
            m,
            n,
            stride_h,
            stride_w,
            out_h: (height - m) / stride_h + 1,
            out_w: (width - n) / stride_w + 1,
        })
    }

    /// Non-overlapping windows (stride equal to window size).
    pub fn tiled(height: usize, width: usize, m: usize, n: usize) -> Result<Self> {
        Self::new(height, width, m, n, m, n)
    }

    pub fn window_size(&self) -> usize {
        self.m * self.n
    }

    pub fn count(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Top-left `(row, col)` of window `(oy, ox)`.
    pub fn origin(&self, oy: usize, ox: usize) -> (usize, usize) {
        (oy * self.stride_h, ox * self.stride_w)
    }

    /// Spatial offsets `row * W + col` of the window's elements in row-major order.
    pub fn offsets(&self, oy: usize, ox: usize) -> impl Iterator<Item = usize> + '_ {
        let (r0, c0) = self.origin(oy, ox);
        (0..self.m).flat_map(move |j| (0..self.n).map(move |k| (r0 + j) * self.width + c0 + k))
    }
}

/// One pooling region: its `[m, n, C]` values and the map coordinates of its
/// top-left element.
#[derive(Debug, Clone, PartialEq)]
pub struct Region<T> {
    pub origin: (usize, usize),
    pub values: Tensor<T>,
}

/// Slices an `[H, W, C]` map into its pooling regions in row-major window order.
pub fn window_partition<T: Scalar>(
    t: &Tensor<T>,
    m: usize,
    n: usize,
    stride_h: usize,
    stride_w: usize,
) -> Result<Vec<Region<T>>> {
    let [h, w, c] = match *t.dims() {
        [h, w, c] => [h, w, c],
        _ => {
            return Err(Error::InvalidShape {
                dims: t.dims().to_vec(),
                reason: "window_partition expects [H, W, C]".into(),
            })
        }
    };
    let grid = WindowGrid::new(h, w, m, n, stride_h, stride_w)?;
    let data = t.data();
    let mut regions = Vec::with_capacity(grid.count());
    for oy in 0..grid.out_h {
        for ox in 0..grid.out_w {
            let mut values = Vec::with_capacity(m * n * c);
            for off in grid.offsets(oy, ox) {
                values.extend_from_slice(&data[off * c..(off + 1) * c]);
            }
            regions.push(Region {
                origin: grid.origin(oy, ox),
                values: Tensor::from_vec(&[m, n, c], values)?,
            });
        }
    }
    Ok(regions)
}
