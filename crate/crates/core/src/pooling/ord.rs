use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Fills `perm` with the source indices of `values` in decreasing value order.
///
/// The sort is stable: among equal values the earlier (row-major) position gets
/// the better rank.
#[inline]
pub fn rank_order<T: Scalar>(values: &[T], perm: &mut [usize]) {
    debug_assert_eq!(values.len(), perm.len());
    for (i, p) in perm.iter_mut().enumerate() {
        *p = i;
    }
    if perm.len() <= 16 {
        // insertion sort: strict comparison keeps equal values in place
        for i in 1..perm.len() {
            let cur = perm[i];
            let v = values[cur];
            let mut j = i;
            while j > 0 && values[perm[j - 1]] < v {
                perm[j] = perm[j - 1];
                j -= 1;
            }
            perm[j] = cur;
        }
    } else {
        perm.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(Ordering::Equal));
    }
}

/// Sorts `(value, source)` pairs by decreasing value, ties by increasing
/// source. Starting from pairs in source order this is the order
/// [`rank_order`] produces. Values must not be NaN.
#[inline]
pub fn sort_pairs_desc<T: Scalar>(pairs: &mut [(T, u32)]) {
    #[inline(always)]
    fn exchange<T: Scalar>(p: &mut [(T, u32)], i: usize, j: usize) {
        let (a, b) = (p[i], p[j]);
        let swap = b.0 > a.0 || (b.0 == a.0 && b.1 < a.1);
        p[i] = if swap { b } else { a };
        p[j] = if swap { a } else { b };
    }
    match pairs.len() {
        4 => {
            exchange(pairs, 0, 1);
            exchange(pairs, 2, 3);
            exchange(pairs, 0, 2);
            exchange(pairs, 1, 3);
            exchange(pairs, 1, 2);
        }
        0..=16 => {
            for i in 1..pairs.len() {
                let cur = pairs[i];
                let mut j = i;
                while j > 0 && (pairs[j - 1].0 < cur.0 || (pairs[j - 1].0 == cur.0 && pairs[j - 1].1 > cur.1)) {
                    pairs[j] = pairs[j - 1];
                    j -= 1;
                }
                pairs[j] = cur;
            }
        }
        _ => pairs.sort_unstable_by(|a, b| {
            b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
        }),
    }
}

/// Rearranges an `m x n` region in decreasing order.
///
/// Returns the sorted region (read row-major: largest first) and, for every
/// rank `r` (0-based), the row-major source position holding the `r`-th
/// largest value.
pub fn ord<T: Scalar>(region: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    region.ensure_finite("ord")?;
    if region.shape().rank() != 2 {
        return Err(Error::InvalidShape {
            dims: region.dims().to_vec(),
            reason: "ord expects an m x n region".into(),
        });
    }
    let values = region.data();
    let mut perm = vec![0; values.len()];
    rank_order(values, &mut perm);
    let sorted = perm.iter().map(|&p| values[p]).collect();
    Ok((Tensor::from_vec(region.dims(), sorted)?, perm))
}
