//! Thin wrappers over faer factorizations.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::sparse::linalg::solvers::Lu;
use faer::{Col, Mat};

use crate::error::{GpdmError, Result};
use crate::sparse::CsrMatrix;

/// Sparse LU with partial pivoting plus one step of iterative refinement.
pub struct SparseSolver {
    matrix: CsrMatrix,
    lu: Lu<usize, f64>,
}

impl SparseSolver {
    pub fn new(matrix: &CsrMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(GpdmError::InvalidArgument(format!(
                "cannot factor a {}x{} matrix",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let lu = matrix
            .to_faer()
            .sp_lu()
            .map_err(|e| GpdmError::SolverFailure {
                reason: format!("sparse LU failed: {e:?}"),
                cond_estimate: f64::INFINITY,
            })?;
        Ok(SparseSolver {
            matrix: matrix.clone(),
            lu,
        })
    }

    fn raw_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Col::<f64>::from_fn(rhs.len(), |i| rhs[i]);
        let x = self.lu.solve(&b);
        x.iter().copied().collect()
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.raw_solve(rhs);
        let ax = self.matrix.matvec(&x);
        let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let dx = self.raw_solve(&r);
        x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GpdmError::SolverFailure {
                reason: "non-finite solution (matrix numerically singular)".into(),
                cond_estimate: self.condition_estimate(),
            });
        }
        Ok(x)
    }

    /// Cheap lower bound on the infinity-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.matrix.nrows();
        let probe: Vec<f64> = (0..n)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let y = self.raw_solve(&probe);
        let ones = self.raw_solve(&vec![1.0; n]);
        let inv = y.iter().chain(&ones).fold(0.0f64, |a, v| a.max(v.abs()));
        self.matrix.norm_inf() * inv
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }
}

/// Dense LU solver for small systems.
pub struct DenseSolver {
    matrix: Mat<f64>,
    lu: PartialPivLu<f64>,
}

impl DenseSolver {
    pub fn new(matrix: Mat<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(GpdmError::InvalidArgument(
                "dense solve needs a square matrix".into(),
            ));
        }
        let lu = matrix.partial_piv_lu();
        Ok(DenseSolver { matrix, lu })
    }

    pub fn solve_mat(&self, rhs: &Mat<f64>) -> Mat<f64> {
        let mut x = self.lu.solve(rhs);
        let r = rhs - &self.matrix * &x;
        x += self.lu.solve(&r);
        x
    }

    pub fn inverse(&self) -> Mat<f64> {
        let n = self.matrix.nrows();
        self.solve_mat(&Mat::identity(n, n))
    }

    pub fn is_singular(&self) -> bool {
        let n = self.matrix.nrows();
        let u = self.lu.U();
        let scale = (0..n).map(|i| u[(i, i)].abs()).fold(0.0f64, f64::max);
        (0..n).any(|i| {
            let d = u[(i, i)].abs();
            !d.is_finite() || d <= 1e-14 * scale || d == 0.0
        })
    }
}

pub fn mat_norm_inf(m: &Mat<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Least-squares slope of log(y) against log(x).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_solver_recovers_solution() {
        let a = CsrMatrix::from_dense(
            &[
                vec![4.0, -1.0, 0.0],
                vec![-1.0, 4.0, -1.0],
                vec![0.0, -1.0, 4.0],
            ],
            3,
        );
        let x = vec![1.0, -2.0, 3.0];
        let b = a.matvec(&x);
        let s = SparseSolver::new(&a).unwrap();
        let got = s.solve(&b).unwrap();
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).abs() < 1e-14);
        }
    }

    #[test]
    fn slope_of_power_law_is_exact() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.7)).collect();
        assert!((loglog_slope(&x, &y) + 1.7).abs() < 1e-12);
    }
}
