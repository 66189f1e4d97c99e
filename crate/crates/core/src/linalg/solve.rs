//! Dense linear solves by Gaussian elimination with partial pivoting.

use super::Matrix;
use crate::error::{LabError, Result};

/// Solves `a x = b` for square `a`.
pub fn solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    if !a.is_square() || b.rows() != n {
        return Err(LabError::Dimension(format!(
            "solve needs square a and matching b, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let k = b.cols();
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = a.max_abs();
    if scale == 0.0 {
        return Err(LabError::Singular("zero matrix".into()));
    }
    let tiny = scale * n as f64 * f64::EPSILON;

    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if lu[(r, col)].abs() > lu[(piv, col)].abs() {
                piv = r;
            }
        }
        if lu[(piv, col)].abs() <= tiny {
            return Err(LabError::Singular(format!("pivot {col} below {tiny:e}")));
        }
        if piv != col {
            for j in 0..n {
                let t = lu[(col, j)];
                lu[(col, j)] = lu[(piv, j)];
                lu[(piv, j)] = t;
            }
            for j in 0..k {
                let t = x[(col, j)];
                x[(col, j)] = x[(piv, j)];
                x[(piv, j)] = t;
            }
        }
        let p = lu[(col, col)];
        for r in (col + 1)..n {
            let f = lu[(r, col)] / p;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                lu[(r, j)] -= f * lu[(col, j)];
            }
            for j in 0..k {
                x[(r, j)] -= f * x[(col, j)];
            }
        }
    }
    for col in (0..n).rev() {
        let p = lu[(col, col)];
        for j in 0..k {
            let mut acc = x[(col, j)];
            for c in (col + 1)..n {
                acc -= lu[(col, c)] * x[(c, j)];
            }
            x[(col, j)] = acc / p;
        }
    }
    x.ensure_finite("solve output")?;
    Ok(x)
}

pub fn inverse(a: &Matrix) -> Result<Matrix> {
    solve(a, &Matrix::identity(a.rows()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Rng;

    #[test]
    fn inverse_round_trip() {
        let mut rng = Rng::new(2);
        let a = &rng.gaussian_matrix(6, 6, 1.0) + &Matrix::identity(6).scale(3.0);
        let inv = inverse(&a).unwrap();
        assert!((&a.matmul(&inv) - &Matrix::identity(6)).max_abs() < 1e-12);
    }

    #[test]
    fn needs_pivoting() {
        let a = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let b = Matrix::column_vector(&[2.0, 3.0]);
        let x = solve(&a, &b).unwrap();
        assert_eq!(x.data(), &[3.0, 2.0]);
    }

    #[test]
    fn singular_is_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(inverse(&a), Err(LabError::Singular(_))));
    }
}
