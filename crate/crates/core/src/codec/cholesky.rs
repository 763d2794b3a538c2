//! Upper-triangular factorization `R = U'U` of 3x3 position covariances.
//!
//! Coding `U` instead of `R` keeps every decoded `R` positive semi-definite.

use nalgebra::Matrix3;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CholeskyFactors {
    pub u11: f64,
    pub u12: f64,
    pub u13: f64,
    pub u22: f64,
    pub u23: f64,
    pub u33: f64,
}

impl CholeskyFactors {
    pub fn upper(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.u11, self.u12, self.u13, //
            0.0, self.u22, self.u23, //
            0.0, 0.0, self.u33,
        )
    }

    /// `U'U`.
    pub fn to_matrix(&self) -> Matrix3<f64> {
        let u = self.upper();
        u.transpose() * u
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.u11, self.u12, self.u13, self.u22, self.u23, self.u33]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            u11: a[0],
            u12: a[1],
            u13: a[2],
            u22: a[3],
            u23: a[4],
            u33: a[5],
        }
    }
}

/// Factors a symmetric PSD matrix. Pivots within a small tolerance of zero
/// produce a zero row; clearly negative pivots are rejected.
pub fn cholesky_r(r: &Matrix3<f64>) -> Result<CholeskyFactors> {
    let tol = 1e-12 * r.trace().abs().max(1.0);
    let mut u = Matrix3::<f64>::zeros();
    for i in 0..3 {
        let mut pivot = r[(i, i)];
        for k in 0..i {
            pivot -= u[(k, i)] * u[(k, i)];
        }
        if pivot < -tol {
            return Err(Error::NotPsd { pivot: i, value: pivot });
        }
        if pivot <= tol {
            continue;
        }
        let d = pivot.sqrt();
        u[(i, i)] = d;
        for j in i + 1..3 {
            let mut s = r[(i, j)];
            for k in 0..i {
                s -= u[(k, i)] * u[(k, j)];
            }
            u[(i, j)] = s / d;
        }
    }
    Ok(CholeskyFactors {
        u11: u[(0, 0)],
        u12: u[(0, 1)],
        u13: u[(0, 2)],
        u22: u[(1, 1)],
        u23: u[(1, 2)],
        u33: u[(2, 2)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_and_diagonal() {
        let f = cholesky_r(&Matrix3::identity()).unwrap();
        assert_eq!(f.upper(), Matrix3::identity());
        let f = cholesky_r(&Matrix3::from_diagonal(&nalgebra::Vector3::new(4.0, 9.0, 16.0))).unwrap();
        assert_eq!((f.u11, f.u22, f.u33), (2.0, 3.0, 4.0));
        assert_eq!((f.u12, f.u13, f.u23), (0.0, 0.0, 0.0));
    }

    #[test]
    fn negative_definite_rejected() {
        let r = Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, -1.0, 1.0));
        assert!(matches!(cholesky_r(&r), Err(Error::NotPsd { pivot: 1, .. })));
    }

    #[test]
    fn rank_deficient_is_accepted() {
        let v = nalgebra::Vector3::new(1.0, 2.0, 3.0);
        let r = v * v.transpose();
        let f = cholesky_r(&r).unwrap();
        assert!((f.to_matrix() - r).amax() < 1e-10);
    }

    proptest! {
        #[test]
        fn random_psd_reconstructs(vals in proptest::array::uniform9(-10.0f64..10.0)) {
            let a = Matrix3::from_row_slice(&vals);
            let r = a.transpose() * a + Matrix3::identity() * 1e-3;
            let f = cholesky_r(&r).unwrap();
            prop_assert!(f.u11 >= 0.0 && f.u22 >= 0.0 && f.u33 >= 0.0);
            prop_assert!((f.to_matrix() - r).amax() < 1e-10);
        }
    }
}
