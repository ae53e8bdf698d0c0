use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hierarchy::AggregationStructure;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointMethod {
    /// Keep the bottom forecasts and sum them up.
    BottomUp,
    /// Generalized least squares projection onto the coherent subspace,
    /// `S (S' W^-1 S)^-1 S' W^-1 y`.
    MinT,
}

/// Coherent point forecast for all `n` nodes from an incoherent `[u; b]`
/// vector. `w` is the error covariance for MinT and defaults to identity.
pub fn point_reconcile<S: AggregationStructure + ?Sized>(
    y_hat: &[f64],
    structure: &S,
    method: PointMethod,
    w: Option<&DMatrix<f64>>,
) -> Result<Vec<f64>> {
    let n = structure.n_total();
    if y_hat.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: y_hat.len(),
        });
    }
    match method {
        PointMethod::BottomUp => Ok(structure.lift(&y_hat[structure.n_upper()..])),
        PointMethod::MinT => {
            let w = w.cloned().unwrap_or_else(|| DMatrix::identity(n, n));
            if w.nrows() != n || w.ncols() != n {
                return Err(Error::Dimension {
                    expected: n,
                    actual: w.nrows(),
                });
            }
            let s = structure.aggregating_matrix().summing_matrix();
            let w_chol = w
                .cholesky()
                .ok_or_else(|| Error::SingularMatrix("W is not positive definite".into()))?;
            let winv_s = w_chol.solve(&s);
            let y = DVector::from_column_slice(y_hat);
            let lhs = s.transpose() * &winv_s;
            let rhs = winv_s.transpose() * y;
            let b = lhs
                .cholesky()
                .ok_or_else(|| Error::SingularMatrix("S' W^-1 S is not positive definite".into()))?
                .solve(&rhs);
            Ok(structure.lift(b.as_slice()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::build_hierarchy;

    #[test]
    fn bottom_up_and_coherent_fixed_point() {
        let h = build_hierarchy(2, &[vec![vec![0, 1]]]).unwrap();
        let y = [10.0, 3.0, 4.0];
        assert_eq!(
            point_reconcile(&y, &h, PointMethod::BottomUp, None).unwrap(),
            vec![7.0, 3.0, 4.0]
        );
        let coherent = [7.0, 3.0, 4.0];
        let r = point_reconcile(&coherent, &h, PointMethod::MinT, None).unwrap();
        for (a, b) in r.iter().zip(coherent) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ols_splits_the_gap_evenly() {
        let h = build_hierarchy(2, &[vec![vec![0, 1]]]).unwrap();
        // Gap of 3 between u and b1 + b2 is shared equally by the three nodes.
        let r = point_reconcile(&[10.0, 3.0, 4.0], &h, PointMethod::MinT, None).unwrap();
        assert!((r[1] - 4.0).abs() < 1e-12 && (r[2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn singular_weight_matrix() {
        let h = build_hierarchy(2, &[vec![vec![0, 1]]]).unwrap();
        let w = DMatrix::zeros(3, 3);
        assert!(matches!(
            point_reconcile(&[1.0, 1.0, 1.0], &h, PointMethod::MinT, Some(&w)),
            Err(Error::SingularMatrix(_))
        ));
    }
}
