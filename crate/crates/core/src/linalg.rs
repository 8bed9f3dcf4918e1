//! Dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Condition numbers above this are flagged on fitted models.
pub const CONDITION_WARN: f64 = 1e10;

const COLLINEAR_TOL: f64 = 1e-9;

/// Indices of columns that are (numerically) linear combinations of the
/// columns before them, including all-zero columns.
pub fn collinear_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        if norm == 0.0 {
            bad.push(j);
            continue;
        }
        let mut v = col;
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let rnorm = v.norm();
        if rnorm <= COLLINEAR_TOL * norm {
            bad.push(j);
        } else {
            basis.push(v / rnorm);
        }
    }
    bad
}

/// Full-rank check that names the offending columns.
pub fn check_full_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let bad = collinear_columns(x);
    if bad.is_empty() {
        return Ok(());
    }
    let columns = bad
        .into_iter()
        .map(|j| names.get(j).cloned().unwrap_or_else(|| format!("x{j}")))
        .collect();
    Err(Error::RankDeficient { columns })
}

/// Least-squares solution from a Householder QR factorization.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coef: DVector<f64>,
    /// `(X'X)^-1 = R^-1 R^-T`.
    pub xtx_inv: DMatrix<f64>,
    pub condition: f64,
}

pub fn qr_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquares> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows but response has {}",
            y.len()
        )));
    }
    if n < k {
        return Err(Error::TooFewObservations { n, k });
    }
    let qr = x.clone().qr();
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let r = qr.r();
    let r = r.rows(0, k).into_owned();
    let sv = r.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smin > 0.0) || smin <= f64::EPSILON * smax * (n as f64) {
        let names: Vec<String> = (0..k).map(|j| format!("x{j}")).collect();
        check_full_rank(x, &names)?;
    }
    let condition = smax / smin;
    let coef = r
        .solve_upper_triangular(&qty.rows(0, k).into_owned())
        .ok_or_else(|| Error::RankDeficient {
            columns: vec!["<singular R>".into()],
        })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::RankDeficient {
            columns: vec!["<singular R>".into()],
        })?;
    let xtx_inv = &r_inv * r_inv.transpose();
    Ok(LeastSquares {
        coef,
        xtx_inv,
        condition,
    })
}

/// Inverse and log-determinant of a symmetric positive-definite matrix.
pub fn spd_inverse_logdet(a: &DMatrix<f64>, what: &str) -> Result<(DMatrix<f64>, f64)> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
    let l = chol.l_dirty();
    let logdet = 2.0 * (0..a.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
    Ok((chol.inverse(), logdet))
}

pub fn is_positive_definite(a: &DMatrix<f64>) -> bool {
    a.nrows() == a.ncols() && a.clone().cholesky().is_some()
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Symmetrize `(A + A') / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| a.row(i).iter().copied().collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::DimensionMismatch("matrix must be square".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_duplicate_and_zero_columns() {
        let x = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, 2.0, 0.0, //
                1.0, 1.0, 2.0, 0.0, //
                1.0, 2.0, 2.0, 0.0, //
                1.0, 3.0, 2.0, 0.0,
            ],
        );
        assert_eq!(collinear_columns(&x), vec![2, 3]);
        let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        match check_full_rank(&x, &names) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["c", "d"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exact_interpolation() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let ls = qr_least_squares(&x, &y).unwrap();
        assert!((ls.coef[0] - 1.0).abs() < 1e-14);
        assert!((ls.coef[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }
}
