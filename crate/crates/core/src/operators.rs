//! Diffusion-maps estimators of L1 (Laplace-Beltrami), L2 (weighted Laplacian) and
//! L3 (drift plus anisotropic diffusion) on a point set, optionally augmented with ghosts.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use faer::{Mat, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary_geometry::GhostSet;
use crate::error::{invalid, GpdmError, Result};
use crate::pointcloud::{build_index, squared_distance, NeighborIndex, PointCloud};
use crate::sparse::CsrMatrix;

pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Returns an n-vector for a point in R^n.
pub type VectorField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Returns an n x n matrix in row-major order for a point in R^n.
pub type MatrixField = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
pub enum OperatorKind {
    /// Laplace-Beltrami operator.
    L1,
    /// div(kappa grad u). `allow_degenerate` admits kappa = 0 (singular Sturm-Liouville problems).
    L2 {
        kappa: ScalarField,
        allow_degenerate: bool,
    },
    /// B . grad u + (1/2) C : Hess u with ambient drift B and covariance C.
    L3 {
        drift: VectorField,
        diffusion: MatrixField,
    },
}

impl OperatorKind {
    pub fn weighted(kappa: ScalarField) -> Self {
        OperatorKind::L2 {
            kappa,
            allow_degenerate: false,
        }
    }

    pub fn tag(&self) -> OperatorTag {
        match self {
            OperatorKind::L1 => OperatorTag::L1,
            OperatorKind::L2 { .. } => OperatorTag::L2,
            OperatorKind::L3 { .. } => OperatorTag::L3,
        }
    }
}

impl fmt::Debug for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.tag())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorTag {
    L1,
    L2,
    L3,
}

#[derive(Clone, Debug)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    pub eps: f64,
    pub k: usize,
}

impl OperatorSpec {
    pub fn new(kind: OperatorKind, eps: f64, k: usize) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(invalid(format!("bandwidth eps = {eps} must be positive")));
        }
        if k == 0 {
            return Err(invalid("neighbor count k must be positive"));
        }
        Ok(OperatorSpec { kind, eps, k })
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.kind.clone(), eps, self.k)
    }
}

/// Rows of (1/eps) S (D^{-1} W - I) for the first `nrows` points, over all points as columns.
#[derive(Clone, Debug)]
pub struct DmMatrix {
    pub matrix: CsrMatrix,
    pub eps: f64,
    pub tag: OperatorTag,
    /// Diagonal of S (kappa for L2, ones otherwise).
    pub row_scale: Vec<f64>,
}

impl DmMatrix {
    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Recovers the row-stochastic kernel part D^{-1} W = I + eps S^{-1} L (rows with S = 0 are skipped).
    pub fn kernel_part(&self) -> Vec<Option<Vec<(usize, f64)>>> {
        (0..self.nrows())
            .map(|i| {
                let s = self.row_scale[i];
                (s != 0.0).then(|| {
                    let mut row: Vec<(usize, f64)> = self
                        .matrix
                        .row_iter(i)
                        .map(|(c, v)| (c, self.eps * v / s))
                        .collect();
                    match row.iter_mut().find(|(c, _)| *c == i) {
                        Some(e) => e.1 += 1.0,
                        None => row.push((i, 1.0)),
                    }
                    row
                })
            })
            .collect()
    }

    pub fn write_matrix_market<W: Write>(&self, w: W) -> std::io::Result<()> {
        self.matrix.write_matrix_market(w)
    }
}

/// k-NN pattern made symmetric (an entry is kept when either point lists the other), plus self.
pub fn symmetric_pattern(index: &NeighborIndex) -> Vec<Vec<usize>> {
    let n = index.len();
    let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for i in 0..n {
        for &j in index.neighbors(i) {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    adj.par_iter_mut().for_each(|row| {
        row.sort_unstable();
        row.dedup();
    });
    adj
}

fn gaussian(d2: f64, eps: f64) -> f64 {
    (-d2 / (4.0 * eps)).exp()
}

/// Per-row data of the local kernel: shifted center and pseudo-inverse covariance.
struct LocalKernel {
    center: Vec<f64>,
    precision: Vec<f64>,
}

/// Moore-Penrose inverse of a symmetric PSD matrix keeping its `rank` largest eigenvalues.
pub fn psd_pseudo_inverse(c: &[f64], n: usize, rank: usize, point: usize) -> Result<Vec<f64>> {
    if c.len() != n * n || c.iter().any(|v| !v.is_finite()) {
        return Err(GpdmError::InvalidCoefficient {
            point,
            reason: "diffusion tensor malformed".into(),
        });
    }
    for r in 0..n {
        for s in 0..r {
            let (a, b) = (c[r * n + s], c[s * n + r]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                return Err(GpdmError::InvalidCoefficient {
                    point,
                    reason: "diffusion tensor not symmetric".into(),
                });
            }
        }
    }
    let m = Mat::<f64>::from_fn(n, n, |r, s| c[r * n + s]);
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| GpdmError::InvalidCoefficient {
            point,
            reason: format!("eigendecomposition failed: {e:?}"),
        })?;
    let vals: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    let top = vals[n - 1];
    if vals[0] < -1e-10 * top.abs().max(1e-300) {
        return Err(GpdmError::InvalidCoefficient {
            point,
            reason: "diffusion tensor has a negative eigenvalue".into(),
        });
    }
    let smallest_kept = vals[n - rank];
    if !(smallest_kept > 0.0) || top / smallest_kept > 1e12 {
        return Err(GpdmError::IllConditionedDiffusion {
            point,
            cond: top / smallest_kept.max(0.0),
        });
    }
    let u = evd.U();
    let mut out = vec![0.0; n * n];
    for e in n - rank..n {
        let inv = 1.0 / vals[e];
        for r in 0..n {
            for s in 0..n {
                out[r * n + s] += inv * u[(r, e)] * u[(s, e)];
            }
        }
    }
    Ok(out)
}

/// Assembles the estimator rows for the first `nrows` points of `points`.
pub fn assemble(points: &PointCloud, nrows: usize, spec: &OperatorSpec) -> Result<DmMatrix> {
    let total = points.len();
    if nrows > total {
        return Err(invalid("more rows requested than points"));
    }
    if spec.k >= total {
        return Err(invalid(format!(
            "k = {} must be smaller than the {} points",
            spec.k, total
        )));
    }
    let eps = spec.eps;
    let index = build_index(points, spec.k)?;
    let pattern = symmetric_pattern(&index);
    let q: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|i| {
            pattern[i]
                .iter()
                .map(|&j| gaussian(squared_distance(points.point(i), points.point(j)), eps))
                .sum()
        })
        .collect();

    let (col_weight, row_scale): (Vec<f64>, Vec<f64>) = match &spec.kind {
        OperatorKind::L2 {
            kappa,
            allow_degenerate,
        } => {
            let vals: Vec<f64> = (0..total)
                .into_par_iter()
                .map(|i| kappa(points.point(i)))
                .collect();
            for (i, &v) in vals.iter().enumerate() {
                let ok = v.is_finite() && (v > 0.0 || (*allow_degenerate && v == 0.0));
                if !ok {
                    return Err(GpdmError::InvalidCoefficient {
                        point: i,
                        reason: format!("kappa = {v}"),
                    });
                }
            }
            (
                vals.iter().map(|v| v.sqrt()).collect(),
                vals[..nrows].to_vec(),
            )
        }
        _ => (vec![1.0; total], vec![1.0; nrows]),
    };

    let local: Option<Vec<LocalKernel>> = match &spec.kind {
        OperatorKind::L3 { drift, diffusion } => {
            let d = points.require_intrinsic_dim()?;
            let n = points.ambient_dim();
            let rows: Result<Vec<LocalKernel>> = (0..nrows)
                .into_par_iter()
                .map(|i| {
                    let x = points.point(i);
                    let b = drift(x);
                    if b.len() != n || b.iter().any(|v| !v.is_finite()) {
                        return Err(GpdmError::InvalidCoefficient {
                            point: i,
                            reason: "drift malformed".into(),
                        });
                    }
                    let precision = psd_pseudo_inverse(&diffusion(x), n, d, i)?;
                    let center = x.iter().zip(&b).map(|(xi, bi)| xi + eps * bi).collect();
                    Ok(LocalKernel { center, precision })
                })
                .collect();
            Some(rows?)
        }
        _ => None,
    };

    let rows: Result<Vec<Vec<(usize, f64)>>> = (0..nrows)
        .into_par_iter()
        .map(|i| {
            let xi = points.point(i);
            let kernel: Vec<f64> = match &local {
                None => pattern[i]
                    .iter()
                    .map(|&j| gaussian(squared_distance(xi, points.point(j)), eps))
                    .collect(),
                Some(lk) => {
                    let lk = &lk[i];
                    let n = points.ambient_dim();
                    pattern[i]
                        .iter()
                        .map(|&j| {
                            let v: Vec<f64> = lk
                                .center
                                .iter()
                                .zip(points.point(j))
                                .map(|(c, y)| c - y)
                                .collect();
                            let mut quad = 0.0;
                            for r in 0..n {
                                for s in 0..n {
                                    quad += v[r] * lk.precision[r * n + s] * v[s];
                                }
                            }
                            (-quad / (2.0 * eps)).exp()
                        })
                        .collect()
                }
            };
            let w: Vec<f64> = pattern[i]
                .iter()
                .zip(&kernel)
                .map(|(&j, k)| k * col_weight[j] / q[j])
                .collect();
            let mass: f64 = w.iter().sum();
            if !(mass > 0.0) || !mass.is_finite() {
                return Err(GpdmError::DisconnectedPoint(i));
            }
            let s = row_scale[i] / eps;
            Ok(pattern[i]
                .iter()
                .zip(&w)
                .map(|(&j, wj)| {
                    let p = wj / mass;
                    (j, s * if j == i { p - 1.0 } else { p })
                })
                .collect())
        })
        .collect();
    let matrix = CsrMatrix::from_rows(total, rows?)?;
    Ok(DmMatrix {
        matrix,
        eps,
        tag: spec.kind.tag(),
        row_scale,
    })
}

fn check_kind(spec: &OperatorSpec, want: OperatorTag) -> Result<()> {
    if spec.kind.tag() != want {
        return Err(invalid(format!(
            "expected a {want:?} spec, got {:?}",
            spec.kind.tag()
        )));
    }
    Ok(())
}

pub fn assemble_l1(points: &PointCloud, nrows: usize, spec: &OperatorSpec) -> Result<DmMatrix> {
    check_kind(spec, OperatorTag::L1)?;
    assemble(points, nrows, spec)
}

pub fn assemble_l2(points: &PointCloud, nrows: usize, spec: &OperatorSpec) -> Result<DmMatrix> {
    check_kind(spec, OperatorTag::L2)?;
    assemble(points, nrows, spec)
}

pub fn assemble_l3(points: &PointCloud, nrows: usize, spec: &OperatorSpec) -> Result<DmMatrix> {
    check_kind(spec, OperatorTag::L3)?;
    assemble(points, nrows, spec)
}

/// The N x (N + JK) matrix L^h over manifold-side points and exterior ghost layers.
pub fn assemble_augmented(
    cloud: &PointCloud,
    ghosts: &GhostSet,
    spec: &OperatorSpec,
) -> Result<DmMatrix> {
    let aug = ghosts.augmented_cloud(cloud)?;
    assemble(&aug, ghosts.n_manifold(), spec)
}
