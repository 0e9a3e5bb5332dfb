//! Eigenvalue problems L psi = lambda psi with homogeneous boundary conditions.

use faer::{c64, Mat, Side};
use serde::{Deserialize, Serialize};

use crate::boundary_geometry::{BoundaryData, GhostSet};
use crate::error::{invalid, GpdmError, Result};
use crate::gpdm::{boundary_elimination, build_linear_extrapolation, linear_ghost_chain};
use crate::linalg::SparseSolver;
use crate::operators::{assemble, assemble_augmented, DmMatrix};
use crate::pde_solver::{baseline_bc, discretize_bc, BvpSpec};
use crate::pointcloud::PointCloud;
use crate::sparse::CsrMatrix;

/// Largest reduced size handled by the dense eigensolver.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EigReport {
    /// Real parts, sorted by descending value.
    pub lambdas: Vec<f64>,
    pub imag: Vec<f64>,
    /// Eigenvectors on `unknown_ids`, first significant entry positive, unit max-norm.
    #[serde(skip)]
    pub psis: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    /// Manifold-side ids of the entries of each eigenvector.
    #[serde(skip)]
    pub unknown_ids: Vec<usize>,
    /// Pairs whose imaginary part exceeds 1e-6 |lambda|.
    pub complex_pairs: Vec<usize>,
    /// False when some requested pair failed the residual check.
    pub converged: bool,
}

impl EigReport {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }
}

struct Pair {
    lambda: c64,
    vector: Vec<c64>,
}

fn dense_pairs(m: &Mat<f64>) -> Result<Vec<Pair>> {
    let evd = m
        .eigen()
        .map_err(|e| GpdmError::EigenFailure(format!("{e:?}")))?;
    let (u, s) = (evd.U(), evd.S());
    let values = s.column_vector();
    Ok((0..m.nrows())
        .map(|c| Pair {
            lambda: values[c],
            vector: (0..m.nrows()).map(|r| u[(r, c)]).collect(),
        })
        .collect())
}

/// Shift-invert Arnoldi around `shift`, full reorthogonalization, Krylov dimension `dim`.
fn shift_invert_pairs(op: &CsrMatrix, count: usize, shift: f64, dim: usize) -> Result<Vec<Pair>> {
    let n = op.nrows();
    let shifted = op.add(&CsrMatrix::identity(n).scale(-shift));
    let solver = SparseSolver::new(&shifted)?;
    let dim = dim.min(n);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    // deterministic, non-special start vector
    let start: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_75).fract())
        .collect();
    let norm = start.iter().map(|v| v * v).sum::<f64>().sqrt();
    basis.push(start.iter().map(|v| v / norm).collect());
    let mut hess = Mat::<f64>::zeros(dim, dim);
    let mut used = dim;
    for j in 0..dim {
        let mut w = solver.solve(&basis[j])?;
        for _pass in 0..2 {
            for (i, q) in basis.iter().enumerate() {
                let h: f64 = q.iter().zip(&w).map(|(a, b)| a * b).sum();
                hess[(i, j)] += h;
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= h * y);
            }
        }
        let beta = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if j + 1 == dim {
            break;
        }
        if beta < 1e-13 {
            used = j + 1;
            break;
        }
        hess[(j + 1, j)] = beta;
        basis.push(w.iter().map(|v| v / beta).collect());
    }
    let h = hess.as_ref().submatrix(0, 0, used, used).to_owned();
    let ritz = dense_pairs(&h)?;
    let mut pairs: Vec<Pair> = ritz
        .into_iter()
        .filter(|p| p.lambda.norm() > 0.0)
        .map(|p| {
            let lambda = c64::new(shift, 0.0) + c64::new(1.0, 0.0) / p.lambda;
            let vector = (0..n)
                .map(|r| {
                    (0..used).fold(c64::new(0.0, 0.0), |acc, c| acc + p.vector[c] * basis[c][r])
                })
                .collect();
            Pair { lambda, vector }
        })
        .collect();
    pairs.sort_by(|a, b| {
        (a.lambda - shift)
            .norm()
            .total_cmp(&(b.lambda - shift).norm())
    });
    pairs.truncate(count.max(1) * 2);
    Ok(pairs)
}

/// Leading `count` eigenpairs (largest real part first) of a square sparse operator.
pub fn leading_eigenpairs(
    op: &CsrMatrix,
    count: usize,
    unknown_ids: Vec<usize>,
) -> Result<EigReport> {
    let n = op.nrows();
    if op.ncols() != n {
        return Err(invalid("eigenproblem operator must be square"));
    }
    if count == 0 {
        return Ok(EigReport {
            unknown_ids,
            converged: true,
            ..Default::default()
        });
    }
    if count > n {
        return Err(invalid(format!(
            "{count} modes requested from a {n}-dimensional operator"
        )));
    }
    let mut pairs = if n <= DENSE_LIMIT {
        dense_pairs(&op.to_dense())?
    } else {
        if count > 30 {
            return Err(invalid(
                "at most 30 modes are supported above the dense limit",
            ));
        }
        shift_invert_pairs(op, count, 0.137, (4 * count + 40).max(80))?
    };
    pairs.sort_by(|a, b| {
        b.lambda
            .re
            .total_cmp(&a.lambda.re)
            .then(b.lambda.im.total_cmp(&a.lambda.im))
    });
    pairs.truncate(count);

    let mut report = EigReport {
        unknown_ids,
        converged: true,
        ..Default::default()
    };
    for (idx, p) in pairs.into_iter().enumerate() {
        // rotate so the largest entry is real, then keep the real part
        let pivot = p
            .vector
            .iter()
            .copied()
            .max_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap_or(c64::new(1.0, 0.0));
        let phase = pivot.conj() / pivot.norm().max(f64::MIN_POSITIVE);
        let rotated: Vec<c64> = p.vector.iter().map(|v| v * phase).collect();
        let scale = rotated.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let rotated: Vec<c64> = rotated.iter().map(|v| v / scale).collect();
        let first = rotated
            .iter()
            .find(|v| v.norm() > 1e-8)
            .map_or(1.0, |v| v.re.signum());
        let rotated: Vec<c64> = rotated.iter().map(|v| v * first).collect();
        let real_part: Vec<f64> = rotated.iter().map(|v| v.re).collect();
        let re = op.matvec(&real_part);
        let imag_part: Vec<f64> = rotated.iter().map(|v| v.im).collect();
        let im = op.matvec(&imag_part);
        let residual = (0..n)
            .map(|r| (c64::new(re[r], im[r]) - p.lambda * rotated[r]).norm())
            .fold(0.0, f64::max);
        if residual > 1e-6 * p.lambda.norm() + 1e-8 {
            report.converged = false;
        }
        if p.lambda.im.abs() > 1e-6 * p.lambda.norm() {
            report.complex_pairs.push(idx);
        }
        report.lambdas.push(p.lambda.re);
        report.imag.push(p.lambda.im);
        report.residuals.push(residual);
        report.psis.push(real_part);
    }
    if !report.converged {
        log::warn!("eigenpairs with large residuals: {:?}", report.residuals);
    }
    Ok(report)
}

/// GPDM eigenproblem: homogeneous linear extrapolation plus the homogeneous boundary condition,
/// reduced to the (N - J) interior unknowns.
pub fn gpdm_eigs(
    cloud: &PointCloud,
    ghosts: &GhostSet,
    spec: &BvpSpec,
    count: usize,
) -> Result<EigReport> {
    let lh = assemble_augmented(cloud, ghosts, &spec.operator)?;
    let manifold = ghosts.manifold_cloud(cloud)?;
    let bc = discretize_bc(spec, &manifold, ghosts)?;
    let reduced = build_linear_extrapolation(&lh, ghosts, &bc)?;
    leading_eigenpairs(&reduced.operator, count, reduced.interior_ids)
}

/// Ghost-free baseline: boundary values eliminated through the normal-derivative stencil.
pub fn dm_eigs(
    cloud: &PointCloud,
    boundary: &BoundaryData,
    spec: &BvpSpec,
    count: usize,
) -> Result<EigReport> {
    let n = cloud.len();
    let l = assemble(cloud, n, &spec.operator)?;
    let (bc, _) = baseline_bc(spec, cloud, boundary)?;
    let mut is_boundary = vec![false; n];
    boundary.ids.iter().for_each(|&b| is_boundary[b] = true);
    let interior: Vec<usize> = (0..n).filter(|&i| !is_boundary[i]).collect();
    let mut slot = vec![None; n];
    interior
        .iter()
        .enumerate()
        .for_each(|(s, &i)| slot[i] = Some(s));
    let c_b = boundary_elimination(&bc, &slot, interior.len())?;
    let mut lift_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    interior
        .iter()
        .enumerate()
        .for_each(|(s, &i)| lift_rows[i].push((s, 1.0)));
    for (j, &b) in boundary.ids.iter().enumerate() {
        lift_rows[b] = c_b.row_iter(j).collect();
    }
    let lift = CsrMatrix::from_rows(interior.len(), lift_rows)?;
    let op = l.matrix.select_rows(&interior).matmul(&lift);
    leading_eigenpairs(&op, count, interior)
}

/// Eigenproblem keeping boundary values as unknowns: interior rows from the estimator (with the
/// linear ghost chain when `ghosts` is given), boundary rows supplied by the caller as a J x N
/// matrix, for instance a first-order operator the equation reduces to at the boundary.
pub fn eigs_with_boundary_rows(
    lh: &DmMatrix,
    ghosts: Option<&GhostSet>,
    boundary_ids: &[usize],
    boundary_rows: &CsrMatrix,
    count: usize,
) -> Result<EigReport> {
    let n = lh.nrows();
    if boundary_rows.nrows() != boundary_ids.len() || boundary_rows.ncols() != n {
        return Err(invalid("boundary rows must be J x N"));
    }
    let interior_op = match ghosts {
        Some(g) => {
            let (l1, l2) = lh.matrix.split_columns(n);
            l1.add(&l2.matmul(&linear_ghost_chain(g)))
        }
        None => lh.matrix.clone(),
    };
    let mut slot = vec![None; n];
    boundary_ids
        .iter()
        .enumerate()
        .for_each(|(j, &b)| slot[b] = Some(j));
    let rows = (0..n)
        .map(|i| match slot[i] {
            Some(j) => boundary_rows.row_iter(j).collect(),
            None => interior_op.row_iter(i).collect(),
        })
        .collect();
    let op = CsrMatrix::from_rows(n, rows)?;
    leading_eigenpairs(&op, count, (0..n).collect())
}

/// Boundary condition family in phi for the half-torus separation of variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TorusBc {
    /// Dirichlet on both circles: sin(m phi), m = 1, 2, ...
    Dirichlet,
    /// Dirichlet at phi = 0, Neumann at phi = pi: sin(m phi), m = 1/2, 3/2, ...
    Mixed,
}

impl TorusBc {
    pub fn wavenumbers(&self, count: usize) -> Vec<f64> {
        let offset = match self {
            TorusBc::Dirichlet => 1.0,
            TorusBc::Mixed => 0.5,
        };
        (0..count).map(|i| i as f64 + offset).collect()
    }
}

/// Spectrum of Theta'' - sin(t)/(a + cos t) Theta' - m^2/(a + cos t)^2 Theta on the periodic
/// circle, by Fourier collocation on an odd grid of `n_theta` points; descending order.
pub fn theta_eigs(a: f64, m: f64, n_theta: usize) -> Result<Vec<f64>> {
    if n_theta < 3 || n_theta.is_multiple_of(2) {
        return Err(invalid(
            "the Fourier grid must have an odd number of points >= 3",
        ));
    }
    if !(a > 1.0) {
        return Err(invalid("the torus needs a > 1"));
    }
    let h = std::f64::consts::TAU / n_theta as f64;
    let w: Vec<f64> = (0..n_theta).map(|i| a + (i as f64 * h).cos()).collect();
    let diff = Mat::<f64>::from_fn(n_theta, n_theta, |i, j| {
        if i == j {
            0.0
        } else {
            let k = i as f64 - j as f64;
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            0.5 * sign / (0.5 * k * h).sin()
        }
    });
    // W^{-1/2} (D W D - m^2 W^{-1}) W^{-1/2}, symmetric and similar to the operator.
    let wd = Mat::<f64>::from_fn(n_theta, n_theta, |i, j| w[i] * diff[(i, j)]);
    let dwd = &diff * &wd;
    let sym = Mat::<f64>::from_fn(n_theta, n_theta, |i, j| {
        let base = 0.5 * (dwd[(i, j)] + dwd[(j, i)]);
        let diag = if i == j { m * m / w[i] } else { 0.0 };
        (base - diag) / (w[i] * w[j]).sqrt()
    });
    let evd = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| GpdmError::EigenFailure(format!("{e:?}")))?;
    let values = evd.S().column_vector();
    let mut out: Vec<f64> = (0..n_theta).map(|i| values[i]).collect();
    out.sort_by(|x, y| y.total_cmp(x));
    Ok(out)
}

/// Leading `count` Laplace-Beltrami eigenvalues of the half-torus phi in [0, pi] combining
/// the theta spectra over the admissible phi wavenumbers.
pub fn semitorus_reference_eigs(
    a: f64,
    bc: TorusBc,
    count: usize,
    n_theta: usize,
) -> Result<Vec<f64>> {
    let mut all = Vec::new();
    for m in bc.wavenumbers(count + 1) {
        let vals = theta_eigs(a, m, n_theta)?;
        all.extend(vals.into_iter().take(count));
    }
    all.sort_by(|x, y| y.total_cmp(x));
    all.truncate(count);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_mode_has_zero_eigenvalue() {
        let vals = theta_eigs(2.0, 0.0, 63).unwrap();
        assert!(vals[0].abs() < 1e-10);
        assert!(vals[1] < -0.1);
    }

    #[test]
    fn flat_torus_limit() {
        let vals = theta_eigs(1e6, 0.0, 63).unwrap();
        for (got, want) in vals.iter().zip([0.0, -1.0, -1.0]) {
            assert!((got - want).abs() < 1e-4, "{got} vs {want}");
        }
    }

    #[test]
    fn reference_converges_under_refinement() {
        let coarse = semitorus_reference_eigs(2.0, TorusBc::Mixed, 10, 127).unwrap();
        let fine = semitorus_reference_eigs(2.0, TorusBc::Mixed, 10, 255).unwrap();
        for (c, f) in coarse.iter().zip(&fine) {
            assert!((c - f).abs() < 1e-8 * (1.0 + f.abs()));
        }
    }

    #[test]
    fn dense_and_arnoldi_agree() {
        // 1D Dirichlet second difference
        let n = 60;
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, -2.0)];
                if i > 0 {
                    r.push((i - 1, 1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, 1.0));
                }
                r
            })
            .collect();
        let op = CsrMatrix::from_rows(n, rows).unwrap();
        let dense = leading_eigenpairs(&op, 4, (0..n).collect()).unwrap();
        let krylov = shift_invert_pairs(&op, 4, 0.137, 60).unwrap();
        let mut kr: Vec<f64> = krylov.iter().map(|p| p.lambda.re).collect();
        kr.sort_by(|a, b| b.total_cmp(a));
        for k in 0..4 {
            let exact = -4.0
                * ((k + 1) as f64 * std::f64::consts::PI / (2.0 * (n + 1) as f64))
                    .sin()
                    .powi(2);
            assert!((dense.lambdas[k] - exact).abs() < 1e-10);
            assert!((kr[k] - exact).abs() < 1e-8);
        }
        assert!(dense.converged);
        assert!(dense.psis[0].iter().all(|v| *v > 0.0));
    }

    #[test]
    fn zero_modes_give_empty_report() {
        let op = CsrMatrix::identity(3);
        let r = leading_eigenpairs(&op, 0, vec![0, 1, 2]).unwrap();
        assert!(r.is_empty() && r.converged);
    }
}
