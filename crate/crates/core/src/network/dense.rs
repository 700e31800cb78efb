use crate::error::{Error, Result};
use crate::tensor::linalg::{gemm, Op};
use crate::tensor::{Scalar, Tensor};

fn rows_of<T: Scalar>(x: &Tensor<T>, inputs: usize) -> Result<usize> {
    let rows = match *x.dims() {
        [n] if n == inputs => 1,
        [b, n] if n == inputs => b,
        _ => {
            return Err(Error::ShapeMismatch {
                expected: vec![x.dims().first().copied().unwrap_or(1), inputs],
                actual: x.dims().to_vec(),
            })
        }
    };
    Ok(rows)
}

/// `y = x W + b` with `x`: `[N, in]`, `W`: `[in, out]`, `b`: `[out]`.
pub fn fc_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [inputs, outputs] = *w.dims() else {
        return Err(Error::InvalidShape {
            dims: w.dims().to_vec(),
            reason: "dense weight must be [in, out]".into(),
        });
    };
    if b.dims() != [outputs] {
        return Err(Error::ShapeMismatch {
            expected: vec![outputs],
            actual: b.dims().to_vec(),
        });
    }
    let rows = rows_of(x, inputs)?;
    let mut y = Vec::with_capacity(rows * outputs);
    for _ in 0..rows {
        y.extend_from_slice(b.data());
    }
    gemm(rows, inputs, outputs, x.data(), Op::N, w.data(), Op::N, T::one(), &mut y);
    let dims = if x.dims().len() == 1 {
        vec![outputs]
    } else {
        vec![rows, outputs]
    };
    Tensor::from_vec(&dims, y)
}

/// Returns `(grad_x, grad_w, grad_b)`.
pub fn fc_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let [inputs, outputs] = *w.dims() else {
        return Err(Error::InvalidShape {
            dims: w.dims().to_vec(),
            reason: "dense weight must be [in, out]".into(),
        });
    };
    let rows = rows_of(x, inputs)?;
    if grad_out.len() != rows * outputs {
        return Err(Error::ShapeMismatch {
            expected: vec![rows, outputs],
            actual: grad_out.dims().to_vec(),
        });
    }
    let g = grad_out.data();
    let mut gw = vec![T::zero(); inputs * outputs];
    gemm(inputs, rows, outputs, x.data(), Op::T, g, Op::N, T::zero(), &mut gw);
    let mut gb = vec![T::zero(); outputs];
    for row in g.chunks(outputs) {
        for (acc, &v) in gb.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let mut gx = vec![T::zero(); rows * inputs];
    gemm(rows, outputs, inputs, g, Op::N, w.data(), Op::T, T::zero(), &mut gx);
    Ok((
        Tensor::from_vec(x.dims(), gx)?,
        Tensor::from_vec(w.dims(), gw)?,
        Tensor::from_vec(&[outputs], gb)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights() {
        let x = Tensor::from_vec(&[1, 3], vec![1.0, -2.0, 3.0]).unwrap();
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let w = Tensor::from_vec(&[3, 3], eye).unwrap();
        let b = Tensor::<f64>::zeros(&[3]).unwrap();
        assert_eq!(fc_forward(&x, &w, &b).unwrap(), x);
    }

    #[test]
    fn zero_weights_give_bias() {
        let x = Tensor::from_vec(&[2, 2], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let w = Tensor::<f64>::zeros(&[2, 3]).unwrap();
        let b = Tensor::from_vec(&[3], vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(fc_forward(&x, &w, &b).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn backward_small_case() {
        let x = Tensor::from_vec(&[1, 2], vec![2.0, 3.0]).unwrap();
        let w = Tensor::from_vec(&[2, 1], vec![4.0, 5.0]).unwrap();
        let g = Tensor::from_vec(&[1, 1], vec![1.0]).unwrap();
        let (gx, gw, gb) = fc_backward(&g, &x, &w).unwrap();
        assert_eq!(gx.data(), &[4.0, 5.0]);
        assert_eq!(gw.data(), &[2.0, 3.0]);
        assert_eq!(gb.data(), &[1.0]);
    }

    #[test]
    fn wrong_input_width() {
        let x = Tensor::<f64>::zeros(&[1, 4]).unwrap();
        let w = Tensor::<f64>::zeros(&[3, 2]).unwrap();
        let b = Tensor::<f64>::zeros(&[2]).unwrap();
        assert!(fc_forward(&x, &w, &b).is_err());
    }
}
