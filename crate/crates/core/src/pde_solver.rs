//! Boundary-value problems (-a + L) u = f in M, (beta1 d/dnu + beta2) u = g on the boundary.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::boundary_geometry::{BoundaryData, GhostSet};
use crate::error::{invalid, GpdmError, Result};
use crate::gpdm::GpdmOperator;
use crate::linalg::SparseSolver;
use crate::operators::{assemble, OperatorSpec, ScalarField};
use crate::pointcloud::{KdTree, PointCloud};
use crate::sparse::CsrMatrix;

#[derive(Clone)]
pub struct BvpSpec {
    pub operator: OperatorSpec,
    pub f: ScalarField,
    pub g: ScalarField,
    pub beta1: ScalarField,
    pub beta2: ScalarField,
    /// Zeroth-order shift; `None` means a = 0.
    pub a: Option<ScalarField>,
}

impl BvpSpec {
    fn shift(&self, cloud: &PointCloud) -> Vec<f64> {
        match &self.a {
            Some(a) => (0..cloud.len()).map(|i| a(cloud.point(i))).collect(),
            None => vec![0.0; cloud.len()],
        }
    }

    /// Checks the coefficient invariants on the given manifold-side cloud.
    pub fn validate(&self, cloud: &PointCloud, boundary_ids: &[usize]) -> Result<()> {
        let mut neumann = !boundary_ids.is_empty();
        for &b in boundary_ids {
            let x = cloud.point(b);
            let (b1, b2) = ((self.beta1)(x), (self.beta2)(x));
            if !b1.is_finite() || !b2.is_finite() || (b1 == 0.0 && b2 == 0.0) {
                return Err(GpdmError::InvalidBc(format!(
                    "beta1 = {b1}, beta2 = {b2} at boundary point {b}"
                )));
            }
            neumann &= b2 == 0.0;
        }
        let a = self.shift(cloud);
        if let Some(i) = a.iter().position(|v| !(*v >= 0.0)) {
            return Err(GpdmError::InvalidCoefficient {
                point: i,
                reason: format!("shift a = {} must be nonnegative", a[i]),
            });
        }
        if neumann && !(a.iter().copied().fold(f64::INFINITY, f64::min) > 0.0) {
            return Err(GpdmError::InvalidBc(
                "pure Neumann problems need a shift a with a_min > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Discrete boundary condition rows B (J x N): beta1 (u_B - u_G0)/h + beta2 u_B.
#[derive(Clone, Debug)]
pub struct BoundaryOperator {
    pub boundary_ids: Vec<usize>,
    pub rows: CsrMatrix,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub g: Vec<f64>,
}

impl BoundaryOperator {
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.rows.matvec(u)
    }

    pub fn is_dirichlet(&self) -> bool {
        self.beta1.iter().all(|&b| b == 0.0)
    }
}

pub fn discretize_bc(
    spec: &BvpSpec,
    cloud: &PointCloud,
    ghosts: &GhostSet,
) -> Result<BoundaryOperator> {
    let nm = ghosts.n_manifold();
    let mut rows = Vec::with_capacity(ghosts.boundary_len());
    let (mut beta1, mut beta2, mut g) = (Vec::new(), Vec::new(), Vec::new());
    for (j, &b) in ghosts.boundary_ids().iter().enumerate() {
        let x = cloud.point(b);
        let (b1, b2) = ((spec.beta1)(x), (spec.beta2)(x));
        if b1 == 0.0 && b2 == 0.0 {
            return Err(GpdmError::InvalidBc(format!(
                "beta1 = beta2 = 0 at boundary point {b}"
            )));
        }
        let h = ghosts.spacing()[j];
        rows.push(if b1 == 0.0 {
            vec![(b, b2)]
        } else {
            vec![(b, b1 / h + b2), (ghosts.g0_id(j), -b1 / h)]
        });
        beta1.push(b1);
        beta2.push(b2);
        g.push((spec.g)(x));
    }
    Ok(BoundaryOperator {
        boundary_ids: ghosts.boundary_ids().to_vec(),
        rows: CsrMatrix::from_rows(nm, rows)?,
        beta1,
        beta2,
        g,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub u_hat: Vec<f64>,
    pub residual_inf: f64,
    pub rhs_inf: f64,
    pub ie_inf: Option<f64>,
    pub eps_used: f64,
    pub n: usize,
    pub j: usize,
    pub k_layers: usize,
    pub wall_time_s: f64,
    pub dominance_margin: f64,
    pub warnings: Vec<String>,
}

impl SolveReport {
    /// Sup-norm error against `truth` over the first `count` entries.
    pub fn set_truth(&mut self, truth: &[f64], count: usize) {
        let e = self.u_hat[..count]
            .iter()
            .zip(&truth[..count])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        self.ie_inf = Some(e);
    }
}

/// Row-wise |diag| - sum |off-diagonal|, minimized over rows.
pub fn dominance_margin(m: &CsrMatrix) -> f64 {
    (0..m.nrows())
        .map(|i| {
            let mut diag = 0.0;
            let mut off = 0.0;
            for (c, v) in m.row_iter(i) {
                if c == i {
                    diag += v;
                } else {
                    off += v.abs();
                }
            }
            diag.abs() - off
        })
        .fold(f64::INFINITY, f64::min)
}

/// The full N x N system: interior rows (-a + L) u = f - offset, boundary rows B u = g.
pub fn full_system(
    l: &CsrMatrix,
    rhs_interior: &[f64],
    a: &[f64],
    bc: &BoundaryOperator,
) -> (CsrMatrix, Vec<f64>) {
    let n = l.nrows();
    let mut slot = vec![None; n];
    bc.boundary_ids
        .iter()
        .enumerate()
        .for_each(|(j, &b)| slot[b] = Some(j));
    let mut rows = Vec::with_capacity(n);
    let mut rhs = Vec::with_capacity(n);
    for i in 0..n {
        match slot[i] {
            Some(j) => {
                rows.push(bc.rows.row_iter(j).collect());
                rhs.push(bc.g[j]);
            }
            None => {
                let mut r: Vec<(usize, f64)> = l.row_iter(i).collect();
                if a[i] != 0.0 {
                    r.push((i, -a[i]));
                }
                rows.push(r);
                rhs.push(rhs_interior[i]);
            }
        }
    }
    (CsrMatrix::from_rows(n, rows).expect("square"), rhs)
}

/// Solves the full system, eliminating boundary unknowns first when each boundary row only
/// couples its own boundary value to interior values.
fn solve_with_bc(
    l: &CsrMatrix,
    rhs_interior: &[f64],
    a: &[f64],
    bc: &BoundaryOperator,
) -> Result<(Vec<f64>, f64, f64, f64)> {
    let n = l.nrows();
    let (full, rhs) = full_system(l, rhs_interior, a, bc);
    let margin = dominance_margin(&full);
    let mut is_boundary = vec![false; n];
    bc.boundary_ids.iter().for_each(|&b| is_boundary[b] = true);
    let separable = bc.boundary_ids.iter().enumerate().all(|(j, &b)| {
        bc.rows.get(j, b) != 0.0 && bc.rows.row_iter(j).all(|(c, _)| c == b || !is_boundary[c])
    });

    let u = if separable {
        let interior: Vec<usize> = (0..n).filter(|&i| !is_boundary[i]).collect();
        let mut slot = vec![None; n];
        interior
            .iter()
            .enumerate()
            .for_each(|(s, &i)| slot[i] = Some(s));
        let mut bslot = vec![None; n];
        bc.boundary_ids
            .iter()
            .enumerate()
            .for_each(|(j, &b)| bslot[b] = Some(j));
        let mut rows = Vec::with_capacity(interior.len());
        let mut red_rhs = Vec::with_capacity(interior.len());
        for &i in &interior {
            let mut r = Vec::new();
            let mut rhs_i = rhs[i];
            for (c, v) in full.row_iter(i) {
                if let Some(s) = slot[c] {
                    r.push((s, v));
                } else {
                    let j = bslot[c].expect("boundary column");
                    let d = bc.rows.get(j, c);
                    rhs_i -= v * bc.g[j] / d;
                    for (cc, w) in bc.rows.row_iter(j).filter(|&(cc, _)| cc != c) {
                        r.push((slot[cc].expect("interior column"), -v * w / d));
                    }
                }
            }
            rows.push(r);
            red_rhs.push(rhs_i);
        }
        let reduced = CsrMatrix::from_rows(interior.len(), rows)?;
        let ui = SparseSolver::new(&reduced)?.solve(&red_rhs)?;
        let mut u = vec![0.0; n];
        interior.iter().zip(&ui).for_each(|(&i, v)| u[i] = *v);
        for (j, &b) in bc.boundary_ids.iter().enumerate() {
            let d = bc.rows.get(j, b);
            let rest: f64 = bc
                .rows
                .row_iter(j)
                .filter(|&(c, _)| c != b)
                .map(|(c, w)| w * u[c])
                .sum();
            u[b] = (bc.g[j] - rest) / d;
        }
        u
    } else {
        SparseSolver::new(&full)?.solve(&rhs)?
    };
    let au = full.matvec(&u);
    let residual = au
        .iter()
        .zip(&rhs)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let rhs_inf = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(residual <= 1e-6 * rhs_inf.max(1e-300)) {
        return Err(GpdmError::SolverFailure {
            reason: format!("residual {residual:.3e} too large"),
            cond_estimate: SparseSolver::new(&full)
                .map(|s| s.condition_estimate())
                .unwrap_or(f64::INFINITY),
        });
    }
    Ok((u, residual, rhs_inf, margin))
}

fn eval(field: &ScalarField, cloud: &PointCloud) -> Vec<f64> {
    (0..cloud.len()).map(|i| field(cloud.point(i))).collect()
}

fn gpdm_solve(
    op: &GpdmOperator,
    spec: &BvpSpec,
    cloud: &PointCloud,
    bc: &BoundaryOperator,
    layers: usize,
) -> Result<SolveReport> {
    let start = Instant::now();
    let n = op.n();
    if cloud.len() != n {
        return Err(invalid(format!(
            "cloud has {} points, operator has {n} rows",
            cloud.len()
        )));
    }
    spec.validate(cloud, &bc.boundary_ids)?;
    let f = eval(&spec.f, cloud);
    let f_b: Vec<f64> = bc.boundary_ids.iter().map(|&b| f[b]).collect();
    let offset = op.offset_for(&f_b);
    let rhs: Vec<f64> = f.iter().zip(&offset).map(|(a, b)| a - b).collect();
    let a = spec.shift(cloud);
    let (u_hat, residual_inf, rhs_inf, margin) = solve_with_bc(&op.l1part, &rhs, &a, bc)?;
    let mut warnings = Vec::new();
    if margin < -1e-9 {
        warnings.push(format!(
            "nonconvergent regime: diagonal dominance margin {margin:.3e} < 0"
        ));
        log::warn!("{}", warnings.last().unwrap());
    }
    Ok(SolveReport {
        u_hat,
        residual_inf,
        rhs_inf,
        ie_inf: None,
        eps_used: op.eps,
        n,
        j: bc.boundary_ids.len(),
        k_layers: layers,
        wall_time_s: start.elapsed().as_secs_f64(),
        dominance_margin: margin,
        warnings,
    })
}

/// Dirichlet problem: L^I u^I = f^I - offset - L^B g, boundary values from g.
pub fn solve_dirichlet(
    op: &GpdmOperator,
    spec: &BvpSpec,
    cloud: &PointCloud,
    bc: &BoundaryOperator,
    layers: usize,
) -> Result<SolveReport> {
    if !bc.is_dirichlet() {
        return Err(GpdmError::InvalidBc(
            "Dirichlet solve requires beta1 = 0 everywhere".into(),
        ));
    }
    gpdm_solve(op, spec, cloud, bc, layers)
}

/// Robin, Neumann or mixed problem with the boundary rows B u = g.
pub fn solve_robin_neumann(
    op: &GpdmOperator,
    spec: &BvpSpec,
    cloud: &PointCloud,
    bc: &BoundaryOperator,
    layers: usize,
) -> Result<SolveReport> {
    if bc.is_dirichlet() {
        return Err(GpdmError::InvalidBc(
            "Robin/Neumann solve needs beta1 != 0 somewhere".into(),
        ));
    }
    gpdm_solve(op, spec, cloud, bc, layers)
}

/// Weights w with d u/d nu at x^B approximated by sum w_c u_c.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalStencil {
    pub weights: Vec<(usize, f64)>,
    /// True when no admissible opposite neighbor existed and a one-sided difference was used.
    pub fallback: bool,
}

const STENCIL_CONE: f64 = std::f64::consts::FRAC_PI_4;

/// Outward normal derivative from the nearest interior neighbors inside the cone of half-angle
/// pi/4 around -nu: the inward direction is regressed on the two neighbor directions.
pub fn normal_derivative_stencil(
    tree: &KdTree<'_>,
    cloud: &PointCloud,
    is_boundary: &[bool],
    boundary_id: usize,
    normal: &[f64],
) -> Result<NormalStencil> {
    let xb = cloud.point(boundary_id);
    let inward: Vec<f64> = normal.iter().map(|v| -v).collect();
    let cos_cone = STENCIL_CONE.cos();
    struct Cand {
        id: usize,
        dist: f64,
        dir: Vec<f64>,
        perp: Vec<f64>,
    }
    let mut k = 32.min(cloud.len() - 1);
    loop {
        let nn = tree.nearest(xb, k, Some(boundary_id));
        let cands: Vec<Cand> = nn
            .iter()
            .filter(|(_, j)| !is_boundary[*j])
            .filter_map(|&(d2, j)| {
                let dist = d2.sqrt();
                let dir: Vec<f64> = cloud
                    .point(j)
                    .iter()
                    .zip(xb)
                    .map(|(a, b)| (a - b) / dist)
                    .collect();
                let c: f64 = dir.iter().zip(&inward).map(|(a, b)| a * b).sum();
                (c > cos_cone).then(|| {
                    let perp = dir.iter().zip(&inward).map(|(a, b)| a - c * b).collect();
                    Cand {
                        id: j,
                        dist,
                        dir,
                        perp,
                    }
                })
            })
            .collect();
        if let Some(left) = cands.first() {
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let perp_norm = dot(&left.perp, &left.perp).sqrt();
            if perp_norm < 1e-12 {
                let w = 1.0 / left.dist;
                return Ok(NormalStencil {
                    weights: vec![(boundary_id, w), (left.id, -w)],
                    fallback: false,
                });
            }
            if let Some(right) = cands
                .iter()
                .skip(1)
                .find(|c| dot(&c.perp, &left.perp) < 0.0)
            {
                let c = dot(&left.dir, &right.dir);
                let (pl, pr) = (dot(&left.dir, &inward), dot(&right.dir, &inward));
                let det = 1.0 - c * c;
                let al = (pl - c * pr) / det;
                let ar = (pr - c * pl) / det;
                let (wl, wr) = (al / left.dist, ar / right.dist);
                return Ok(NormalStencil {
                    weights: vec![(boundary_id, wl + wr), (left.id, -wl), (right.id, -wr)],
                    fallback: false,
                });
            }
            if k >= cloud.len() - 1 || k >= 256 {
                let al = dot(&left.dir, &inward);
                let w = al / left.dist;
                return Ok(NormalStencil {
                    weights: vec![(boundary_id, w), (left.id, -w)],
                    fallback: true,
                });
            }
        } else if k >= cloud.len() - 1 || k >= 256 {
            return Err(GpdmError::DegenerateGeometry {
                point: boundary_id,
                reason: "no interior neighbor inside the normal-derivative cone".into(),
            });
        }
        k = (2 * k).min(cloud.len() - 1);
    }
}

/// Outward normal derivative of `u` at boundary point `boundary.ids[j]`; the flag marks a fallback.
pub fn normal_derivative(
    cloud: &PointCloud,
    boundary: &BoundaryData,
    j: usize,
    u: &[f64],
) -> Result<(f64, bool)> {
    let tree = KdTree::new(cloud.coords(), cloud.ambient_dim());
    let s = normal_derivative_stencil(
        &tree,
        cloud,
        &cloud.boundary_mask(),
        boundary.ids[j],
        boundary.normal(j),
    )?;
    Ok((s.weights.iter().map(|&(c, w)| w * u[c]).sum(), s.fallback))
}

/// Boundary rows for the ghost-free baseline: beta1 * (normal-derivative stencil) + beta2 u_B.
pub fn baseline_bc(
    spec: &BvpSpec,
    cloud: &PointCloud,
    boundary: &BoundaryData,
) -> Result<(BoundaryOperator, usize)> {
    let tree = KdTree::new(cloud.coords(), cloud.ambient_dim());
    let mask = cloud.boundary_mask();
    let mut rows = Vec::new();
    let (mut beta1, mut beta2, mut g) = (Vec::new(), Vec::new(), Vec::new());
    let mut fallbacks = 0;
    for (j, &b) in boundary.ids.iter().enumerate() {
        let x = cloud.point(b);
        let (b1, b2) = ((spec.beta1)(x), (spec.beta2)(x));
        if b1 == 0.0 && b2 == 0.0 {
            return Err(GpdmError::InvalidBc(format!(
                "beta1 = beta2 = 0 at boundary point {b}"
            )));
        }
        let mut row = vec![(b, b2)];
        if b1 != 0.0 {
            let s = normal_derivative_stencil(&tree, cloud, &mask, b, boundary.normal(j))?;
            fallbacks += usize::from(s.fallback);
            row.extend(s.weights.iter().map(|&(c, w)| (c, b1 * w)));
        }
        rows.push(row);
        beta1.push(b1);
        beta2.push(b2);
        g.push((spec.g)(x));
    }
    let bc = BoundaryOperator {
        boundary_ids: boundary.ids.clone(),
        rows: CsrMatrix::from_rows(cloud.len(), rows)?,
        beta1,
        beta2,
        g,
    };
    Ok((bc, fallbacks))
}

/// Standard diffusion maps on the samples alone, boundary conditions via the cone stencil.
pub fn solve_dm_baseline(
    spec: &BvpSpec,
    cloud: &PointCloud,
    boundary: &BoundaryData,
) -> Result<SolveReport> {
    let start = Instant::now();
    spec.validate(cloud, &boundary.ids)?;
    let l = assemble(cloud, cloud.len(), &spec.operator)?;
    let (bc, fallbacks) = baseline_bc(spec, cloud, boundary)?;
    let f = eval(&spec.f, cloud);
    let a = spec.shift(cloud);
    let (u_hat, residual_inf, rhs_inf, margin) = solve_with_bc(&l.matrix, &f, &a, &bc)?;
    let mut warnings = Vec::new();
    if fallbacks > 0 {
        warnings.push(format!(
            "stencil failure: one-sided normal difference used at {fallbacks} boundary points"
        ));
    }
    Ok(SolveReport {
        u_hat,
        residual_inf,
        rhs_inf,
        ie_inf: None,
        eps_used: spec.operator.eps,
        n: cloud.len(),
        j: boundary.len(),
        k_layers: 0,
        wall_time_s: start.elapsed().as_secs_f64(),
        dominance_margin: margin,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary_geometry::{build_ghosts, estimate_boundary, NormalOptions, SamplingMode};
    use crate::operators::{OperatorKind, OperatorSpec};
    use std::sync::Arc;

    fn constant(v: f64) -> ScalarField {
        Arc::new(move |_: &[f64]| v)
    }

    fn segment_spec(beta1: f64, beta2: f64) -> BvpSpec {
        BvpSpec {
            operator: OperatorSpec::new(OperatorKind::L1, 1e-3, 8).unwrap(),
            f: constant(0.0),
            g: constant(0.0),
            beta1: constant(beta1),
            beta2: constant(beta2),
            a: None,
        }
    }

    fn segment_ghosts(n: usize) -> (PointCloud, GhostSet) {
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let cloud = PointCloud::new(1, xs, Some(1), vec![0, n - 1]).unwrap();
        let bd = estimate_boundary(&cloud, SamplingMode::WellSampled, &NormalOptions::default())
            .unwrap();
        let (ghosts, _) = build_ghosts(&cloud, &bd, 2).unwrap();
        (cloud, ghosts)
    }

    #[test]
    fn dirichlet_row_is_identity() {
        let (cloud, ghosts) = segment_ghosts(11);
        let bc = discretize_bc(&segment_spec(0.0, 1.0), &cloud, &ghosts).unwrap();
        assert!(bc.is_dirichlet());
        for (j, &b) in bc.boundary_ids.iter().enumerate() {
            assert_eq!(bc.rows.row(j), (&[b][..], &[1.0][..]));
        }
    }

    #[test]
    fn neumann_row_is_exact_for_linear_data() {
        let (cloud, ghosts) = segment_ghosts(11);
        let bc = discretize_bc(&segment_spec(2.0, 0.0), &cloud, &ghosts).unwrap();
        let u: Vec<f64> = cloud.coords().iter().map(|x| 3.0 * x - 1.0).collect();
        let r = bc.apply(&u);
        // outward slopes are -3 at x = 0 and +3 at x = 1
        assert!((r[0] + 6.0).abs() < 1e-12 && (r[1] - 6.0).abs() < 1e-12);
        assert!(bc.rows.row(0).0.len() == 2);
    }

    #[test]
    fn both_betas_zero_rejected() {
        let (cloud, ghosts) = segment_ghosts(5);
        let spec = segment_spec(0.0, 0.0);
        assert!(matches!(
            discretize_bc(&spec, &cloud, &ghosts),
            Err(GpdmError::InvalidBc(_))
        ));
        assert!(spec.validate(&cloud, &[0, 4]).is_err());
    }

    #[test]
    fn neumann_without_shift_rejected() {
        let (cloud, _) = segment_ghosts(5);
        let mut spec = segment_spec(1.0, 0.0);
        assert!(spec.validate(&cloud, &[0, 4]).is_err());
        spec.a = Some(constant(1.0));
        assert!(spec.validate(&cloud, &[0, 4]).is_ok());
        spec.a = Some(constant(-1.0));
        assert!(matches!(
            spec.validate(&cloud, &[0, 4]),
            Err(GpdmError::InvalidCoefficient { .. })
        ));
    }

    #[test]
    fn dominance_margin_by_hand() {
        let m = CsrMatrix::from_dense(
            &[
                vec![-3.0, 1.0, 1.0],
                vec![0.5, -1.0, 0.25],
                vec![0.0, 2.0, 2.5],
            ],
            3,
        );
        assert!((dominance_margin(&m) - 0.25).abs() < 1e-15);
    }

    fn half_plane_grid(n: usize, shift: f64) -> (PointCloud, BoundaryData) {
        // rows y = 0 (boundary) and y = k/n above, columns offset by `shift` on odd rows
        let mut coords = Vec::new();
        let mut ids = Vec::new();
        for row in 0..n {
            for col in 0..(2 * n + 1) {
                let off = if row % 2 == 1 { shift } else { 0.0 };
                if row == 0 {
                    ids.push(coords.len() / 2);
                }
                coords.extend([
                    (col as f64 - n as f64 + off) / n as f64,
                    row as f64 / n as f64,
                ]);
            }
        }
        let j = ids.len();
        let normals = (0..j).flat_map(|_| [0.0, -1.0]).collect();
        let cloud = PointCloud::new(2, coords, Some(2), ids.clone()).unwrap();
        let bd = BoundaryData::new(
            ids,
            normals,
            vec![1.0 / n as f64; j],
            SamplingMode::Random,
            vec![None; j],
            2,
        )
        .unwrap();
        (cloud, bd)
    }

    #[test]
    fn stencil_exact_for_linear_fields() {
        for shift in [0.0, 0.5, 0.3] {
            let (cloud, bd) = half_plane_grid(8, shift);
            let u: Vec<f64> = (0..cloud.len())
                .map(|i| 2.0 * cloud.point(i)[0] + 3.0 * cloud.point(i)[1] + 1.0)
                .collect();
            let j = bd.len() / 2;
            let (d, fallback) = normal_derivative(&cloud, &bd, j, &u).unwrap();
            assert!(!fallback);
            assert!((d + 3.0).abs() < 1e-10, "shift {shift}: {d}");
        }
    }

    #[test]
    fn mirror_neighbors_get_equal_weights() {
        let coords = vec![0.0, 0.0, -0.3, 0.5, 0.3, 0.5, -1.0, 0.0, 1.0, 0.0, 0.0, 2.0];
        let cloud = PointCloud::new(2, coords, Some(2), vec![0, 3, 4]).unwrap();
        let tree = KdTree::new(cloud.coords(), 2);
        let s = normal_derivative_stencil(&tree, &cloud, &cloud.boundary_mask(), 0, &[0.0, -1.0])
            .unwrap();
        let w = |id: usize| {
            s.weights
                .iter()
                .find(|(c, _)| *c == id)
                .map(|p| p.1)
                .unwrap()
        };
        assert!((w(1) - w(2)).abs() < 1e-10);
        let total: f64 = s.weights.iter().map(|p| p.1).sum();
        assert!(total.abs() < 1e-12);
    }

    #[test]
    fn empty_cone_falls_back_or_fails() {
        // the only interior sample sits far off the inward direction
        let coords = vec![0.0, 0.0, 1.0, 0.1, 2.0, 0.0];
        let cloud = PointCloud::new(2, coords, Some(2), vec![0, 2]).unwrap();
        let tree = KdTree::new(cloud.coords(), 2);
        let err = normal_derivative_stencil(&tree, &cloud, &cloud.boundary_mask(), 0, &[0.0, -1.0]);
        assert!(matches!(
            err,
            Err(GpdmError::DegenerateGeometry { point: 0, .. })
        ));
        let coords = vec![0.0, 0.0, 0.1, 0.5, 2.0, 0.0];
        let cloud = PointCloud::new(2, coords, Some(2), vec![0, 2]).unwrap();
        let tree = KdTree::new(cloud.coords(), 2);
        let s = normal_derivative_stencil(&tree, &cloud, &cloud.boundary_mask(), 0, &[0.0, -1.0])
            .unwrap();
        assert!(s.fallback);
    }
}
