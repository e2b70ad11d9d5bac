//! Small dense matrix helpers for the motion filter, backed by nalgebra.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

pub fn mat_from_rows(rows: &[&[f64]]) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Shape("ragged or empty matrix rows".into()));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn diag(values: &[f64]) -> Mat {
    Mat::from_diagonal(&nalgebra::DVector::from_column_slice(values))
}

pub fn mat_mul(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.ncols() != b.nrows() {
        return Err(Error::Shape(format!(
            "cannot multiply {}x{} by {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(a * b)
}

pub fn mat_add(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("cannot add {:?} and {:?}", a.shape(), b.shape())));
    }
    Ok(a + b)
}

pub fn mat_sub(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("cannot subtract {:?} and {:?}", a.shape(), b.shape())));
    }
    Ok(a - b)
}

pub fn transpose(a: &Mat) -> Mat {
    a.transpose()
}

/// Inverse via LU; fails on exactly or numerically singular input.
pub fn invert(a: &Mat) -> Result<Mat> {
    if !a.is_square() {
        return Err(Error::Shape(format!("cannot invert non-square {:?}", a.shape())));
    }
    let lu = a.clone().lu();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let pivot_min = lu.u().diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if scale == 0.0 || pivot_min <= scale * 1e-14 * a.nrows() as f64 {
        return Err(Error::Singular(format!("{}x{} matrix has a zero pivot", a.nrows(), a.ncols())));
    }
    let inv = lu
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("{}x{} matrix", a.nrows(), a.ncols())))?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("inverse is not finite".into()));
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_product() {
        let x = mat_from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]).unwrap();
        let i = Mat::identity(2, 2);
        assert_eq!(mat_mul(&i, &x).unwrap(), x);
    }

    #[test]
    fn diagonal_inverse() {
        let a = mat_from_rows(&[&[2.0, 0.0], &[0.0, 4.0]]).unwrap();
        let inv = invert(&a).unwrap();
        assert_eq!(inv, mat_from_rows(&[&[0.5, 0.0], &[0.0, 0.25]]).unwrap());
    }

    #[test]
    fn singular_errors() {
        let a = mat_from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).unwrap();
        assert!(matches!(invert(&a), Err(Error::Singular(_))));
        assert!(invert(&Mat::zeros(3, 3)).is_err());
    }

    #[test]
    fn shape_errors() {
        let a = Mat::zeros(2, 3);
        assert!(mat_mul(&a, &a).is_err());
        assert!(mat_add(&a, &Mat::zeros(3, 2)).is_err());
        assert!(invert(&a).is_err());
    }

    #[test]
    fn inverse_round_trip_7x7() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let m = Mat::from_fn(7, 7, |_, _| rng.random_range(-1.0..1.0)) + Mat::identity(7, 7) * 4.0;
            let p = mat_mul(&m, &invert(&m).unwrap()).unwrap();
            assert!((p - Mat::identity(7, 7)).amax() < 1e-9);
        }
    }
}
