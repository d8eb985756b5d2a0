//! Dense linear solves, generic over the scalar type.
//!
//! Gaussian elimination with pivot selection driven by
//! [`Scalar::pivot_score`]: exact types accept any nonzero pivot, floats get
//! partial pivoting.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One row of a sparse linear system in the normalized form
/// `diag * x_row - sum_i w_i x_{col_i} = rhs` (neighbor weights carry the
/// sign convention of the generator equations).
#[derive(Debug, Clone)]
pub struct SparseRow<T> {
    pub diag: T,
    pub nbrs: Vec<(u32, T)>,
    pub rhs: T,
}

/// Materialize a sparse system and solve it densely.
pub fn solve_sparse_dense<T: Scalar>(rows: &[SparseRow<T>]) -> Result<Vec<T>> {
    let n = rows.len();
    let mut mat = vec![vec![T::zero(); n]; n];
    let mut rhs = vec![T::zero(); n];
    for (r, row) in rows.iter().enumerate() {
        mat[r][r] = row.diag.clone();
        for (col, w) in &row.nbrs {
            let cell = &mut mat[r][*col as usize];
            *cell = cell.clone() - w.clone();
        }
        rhs[r] = row.rhs.clone();
    }
    solve_dense(mat, rhs)
}

/// Solve `A x = rhs` in place, consuming the inputs. `a` is row-major.
pub fn solve_dense<T: Scalar>(mut a: Vec<Vec<T>>, mut rhs: Vec<T>) -> Result<Vec<T>> {
    let n = a.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if a.iter().any(|row| row.len() != n) || rhs.len() != n {
        return Err(Error::Invalid("solve_dense: dimension mismatch".into()));
    }

    for col in 0..n {
        // Pick the best pivot at or below the diagonal.
        let mut best = col;
        let mut best_score = a[col][col].pivot_score();
        for row in (col + 1)..n {
            let score = a[row][col].pivot_score();
            if score > best_score {
                best = row;
                best_score = score;
            }
        }
        if best_score == 0.0 {
            return Err(Error::Singular(format!("zero pivot column {col} of {n}")));
        }
        a.swap(col, best);
        rhs.swap(col, best);

        let inv = a[col][col].clone();
        for row in (col + 1)..n {
            if a[row][col].is_zero() {
                continue;
            }
            let factor = a[row][col].clone() / inv.clone();
            a[row][col] = T::zero();
            for k in (col + 1)..n {
                let delta = factor.clone() * a[col][k].clone();
                a[row][k] = a[row][k].clone() - delta;
            }
            let delta = factor * rhs[col].clone();
            rhs[row] = rhs[row].clone() - delta;
        }
    }

    // Back substitution.
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut acc = rhs[row].clone();
        for k in (row + 1)..n {
            if a[row][k].is_zero() {
                continue;
            }
            acc = acc - a[row][k].clone() * x[k].clone();
        }
        x[row] = acc / a[row][row].clone();
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{rat, Rational};

    #[test]
    fn solves_rational_system() {
        // [2 1; 1 3] x = [5; 10] -> x = (1, 3)
        let a = vec![vec![rat(2, 1), rat(1, 1)], vec![rat(1, 1), rat(3, 1)]];
        let rhs = vec![rat(5, 1), rat(10, 1)];
        let x = solve_dense(a, rhs).unwrap();
        assert_eq!(x, vec![rat(1, 1), rat(3, 1)]);
    }

    #[test]
    fn pivots_past_zero_diagonal() {
        let a = vec![vec![rat(0, 1), rat(1, 1)], vec![rat(1, 1), rat(0, 1)]];
        let rhs = vec![rat(7, 1), rat(4, 1)];
        let x = solve_dense(a, rhs).unwrap();
        assert_eq!(x, vec![rat(4, 1), rat(7, 1)]);
    }

    #[test]
    fn reports_singularity() {
        let a = vec![vec![rat(1, 1), rat(2, 1)], vec![rat(2, 1), rat(4, 1)]];
        let rhs = vec![rat(1, 1), rat(2, 1)];
        assert!(solve_dense(a, rhs).is_err());
    }

    #[test]
    fn float_path_matches_rational() {
        let a_r = vec![
            vec![rat(3, 1), rat(-1, 2), rat(0, 1)],
            vec![rat(1, 4), rat(2, 1), rat(1, 1)],
            vec![rat(0, 1), rat(1, 1), rat(5, 1)],
        ];
        let rhs_r = vec![rat(1, 1), rat(2, 1), rat(3, 1)];
        let a_f: Vec<Vec<f64>> = a_r
            .iter()
            .map(|row| row.iter().map(|v| crate::scalar::Scalar::to_f64_lossy(v)).collect())
            .collect();
        let rhs_f: Vec<f64> = rhs_r.iter().map(crate::scalar::Scalar::to_f64_lossy).collect();
        let xr: Vec<Rational> = solve_dense(a_r, rhs_r).unwrap();
        let xf = solve_dense(a_f, rhs_f).unwrap();
        for (r, f) in xr.iter().zip(&xf) {
            assert!((crate::scalar::Scalar::to_f64_lossy(r) - f).abs() < 1e-12);
        }
    }
}
