use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Softmax cross-entropy of one logit vector.
///
/// Returns `-ln p[label]` and its gradient `p - onehot(label)`. The softmax is
/// computed in 64 bits after subtracting the maximum logit.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], label: usize) -> Result<(f64, Vec<T>)> {
    let classes = logits.len();
    if label >= classes {
        return Err(Error::Label { label, classes });
    }
    let z: Vec<f64> = logits.iter().map(|v| v.to_f64_lossless()).collect();
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let loss = total.ln() - (z[label] - max);
    let grad = exps
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let p = e / total;
            T::from_f64_lossy(if i == label { p - 1.0 } else { p })
        })
        .collect();
    Ok((loss, grad))
}

/// Mean cross-entropy over a `[N, K]` batch; the gradient carries the `1/N`.
pub fn softmax_cross_entropy_batch<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(f64, Tensor<T>)> {
    let [rows, classes] = *logits.dims() else {
        return Err(Error::InvalidShape {
            dims: logits.dims().to_vec(),
            reason: "logits must be [N, K]".into(),
        });
    };
    if labels.len() != rows {
        return Err(Error::ShapeMismatch {
            expected: vec![rows],
            actual: vec![labels.len()],
        });
    }
    let scale = 1.0 / rows as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(rows * classes);
    for (row, &label) in logits.data().chunks(classes).zip(labels) {
        let (loss, g) = softmax_cross_entropy(row, label)?;
        total += loss;
        grad.extend(g.into_iter().map(|v| T::from_f64_lossy(v.to_f64_lossless() * scale)));
    }
    Ok((total * scale, Tensor::from_vec(logits.dims(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_cost_ln_10() {
        let (loss, grad) = softmax_cross_entropy(&[0.0f64; 10], 3).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!((grad[3] + 0.9).abs() < 1e-12);
        assert!((grad[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn saturated_logit() {
        let mut z = [0.0f64; 10];
        z[7] = 40.0;
        let (loss, _) = softmax_cross_entropy(&z, 7).unwrap();
        assert!(loss < 1e-15);
        // large logits stay finite
        z[7] = 1e4;
        let (loss, grad) = softmax_cross_entropy(&z, 0).unwrap();
        assert!((loss - 1e4).abs() < 1e-9);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            softmax_cross_entropy(&[0.0f32; 10], 10),
            Err(Error::Label { label: 10, classes: 10 })
        ));
    }

    #[test]
    fn batch_mean() {
        let logits = Tensor::from_vec(&[2, 2], vec![0.0f64, 0.0, 0.0, 0.0]).unwrap();
        let (loss, grad) = softmax_cross_entropy_batch(&logits, &[0, 1]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        assert!((grad.data()[0] + 0.25).abs() < 1e-12);
    }
}
