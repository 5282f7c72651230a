use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::gaussian::{condition_number, min_eigenvalue, symmetrize, Subject};

/// `eᵀ Σ⁻¹ e` with `e = mean − truth`.
pub fn nees(mean: &DVector<f64>, cov: &DMatrix<f64>, truth: &DVector<f64>) -> Result<f64> {
    if mean.len() != truth.len() || cov.shape() != (mean.len(), mean.len()) {
        return Err(Error::structural("NEES inputs have inconsistent sizes"));
    }
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("NEES covariance is not positive definite", condition_number(cov)))?;
    let e = mean - truth;
    Ok(e.dot(&chol.solve(&e)))
}

/// Smallest eigenvalue of `Σ_robot − Σ_cent`; non-negative means the robot is
/// conservative relative to the centralized estimate.
pub fn min_eig_diff(
    robot_order: &[Subject],
    robot_cov: &DMatrix<f64>,
    cent_order: &[Subject],
    cent_cov: &DMatrix<f64>,
) -> Result<f64> {
    if robot_order != cent_order || robot_cov.shape() != cent_cov.shape() {
        return Err(Error::structural(
            "covariances compared over different variable orderings",
        ));
    }
    let mut diff = robot_cov - cent_cov;
    symmetrize(&mut diff);
    min_eigenvalue(&diff)
}

/// Two-sided interval for the average of `runs` independent χ²(`dof`) draws.
pub fn mean_nees_bounds(dof: usize, runs: usize, confidence: f64) -> (f64, f64) {
    let total = (dof * runs) as f64;
    let chi = ChiSquared::new(total).expect("positive degrees of freedom");
    let tail = (1.0 - confidence) / 2.0;
    (
        chi.inverse_cdf(tail) / runs as f64,
        chi.inverse_cdf(1.0 - tail) / runs as f64,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn nees_examples() {
        let i2 = DMatrix::identity(2, 2);
        assert_eq!(nees(&dvector![1.0, 1.0], &i2, &dvector![1.0, 1.0]).unwrap(), 0.0);
        assert!((nees(&dvector![1.0, 1.0], &i2, &dvector![0.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!(nees(&dvector![1.0, 1.0], &DMatrix::zeros(2, 2), &dvector![0.0, 0.0]).is_err());
    }

    #[test]
    fn min_eig_diff_examples() {
        let order = [Subject::Target(1)];
        let cent = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert_eq!(min_eig_diff(&order, &cent, &order, &cent).unwrap(), 0.0);
        let wider = &cent + DMatrix::identity(2, 2);
        assert!((min_eig_diff(&order, &wider, &order, &cent).unwrap() - 1.0).abs() < 1e-12);
        assert!(min_eig_diff(&order, &cent, &[Subject::Target(2)], &cent).is_err());
    }

    #[test]
    fn bounds_bracket_the_mean() {
        let (lo, hi) = mean_nees_bounds(10, 250, 0.95);
        assert!(lo < 10.0 && 10.0 < hi);
        assert!((lo - 9.45).abs() < 0.05 && (hi - 10.56).abs() < 0.05, "{lo} {hi}");
    }
}
