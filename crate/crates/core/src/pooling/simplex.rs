//! Euclidean projection onto the probability simplex `{x : x >= 0, sum x = 1}`.
//!
//! Sort-based exact algorithm: with `u` sorted decreasingly and `rho` the
//! largest `j` such that `u_j > (sum_{i<=j} u_i - 1) / j`, the projection is
//! `max(v - theta, 0)` with `theta = (sum_{i<=rho} u_i - 1) / rho`.

use crate::error::{Error, Result};

pub fn project_simplex(v: &[f64]) -> Result<Vec<f64>> {
    let mut x = v.to_vec();
    project_simplex_in_place(&mut x)?;
    Ok(x)
}

pub fn project_simplex_in_place(v: &mut [f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Range("projection of an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("project_simplex"));
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if uj > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn point_on_simplex_is_fixed() {
        assert_eq!(project_simplex(&[0.25; 4]).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn mixed_sign_example() {
        let x = project_simplex(&[1.0, 0.5, -0.5, 0.0]).unwrap();
        assert_eq!(x, vec![0.75, 0.25, 0.0, 0.0]);
    }

    #[test]
    fn nearest_vertex() {
        assert_eq!(project_simplex(&[2.0, 0.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn all_negative_input() {
        let x = project_simplex(&[-3.0, -1.0, -2.0]).unwrap();
        assert_eq!(x, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(project_simplex(&[f64::INFINITY, 0.0]).is_err());
        assert!(project_simplex(&[]).is_err());
    }

    proptest! {
        #[test]
        fn lands_on_simplex_and_is_idempotent(v in prop::collection::vec(-5.0f64..5.0, 1..70)) {
            let x = project_simplex(&v).unwrap();
            prop_assert!(x.iter().all(|&xi| xi >= 0.0));
            prop_assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let y = project_simplex(&x).unwrap();
            for (a, b) in x.iter().zip(&y) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        // First-order optimality: for the projection x of v there is a theta with
        // x_i = v_i - theta where x_i > 0 and v_i <= theta where x_i = 0.
        #[test]
        fn satisfies_kkt(v in prop::collection::vec(-3.0f64..3.0, 2..12)) {
            let x = project_simplex(&v).unwrap();
            let (i, _) = x.iter().enumerate().find(|(_, &xi)| xi > 0.0).unwrap();
            let theta = v[i] - x[i];
            for (xi, vi) in x.iter().zip(&v) {
                if *xi > 0.0 {
                    prop_assert!((vi - xi - theta).abs() < 1e-9);
                } else {
                    prop_assert!(*vi <= theta + 1e-9);
                }
            }
        }
    }
}
