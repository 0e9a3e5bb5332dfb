//! Ghost-value extrapolation and the affine GPDM estimator built on it.

use faer::Mat;

use crate::boundary_geometry::GhostSet;
use crate::error::{invalid, GpdmError, Result};
use crate::linalg::{mat_norm_inf, DenseSolver};
use crate::operators::DmMatrix;
use crate::pde_solver::BoundaryOperator;
use crate::sparse::CsrMatrix;

/// The JK equations tying ghost values to manifold values, and their solved form
/// u^G = A u^M + F f_B.
#[derive(Clone, Debug)]
pub struct ExtrapolationSystem {
    /// JK x JK coefficient matrix acting on ghost unknowns.
    pub e: CsrMatrix,
    /// JK x N map from manifold-side values to right-hand sides.
    pub rhs_manifold: CsrMatrix,
    /// JK x N solved map A = E^{-1} R.
    pub a: CsrMatrix,
    /// JK x J solved map from boundary f values, F = E^{-1} F0.
    pub f_map: CsrMatrix,
    /// F f_B for the boundary data supplied at construction.
    pub b: Vec<f64>,
    pub e_inv_norm: f64,
    pub layers: usize,
    pub boundary_len: usize,
    /// Ray leader of each boundary point; followers carry no PDE row.
    pub leaders: Vec<Option<usize>>,
}

impl ExtrapolationSystem {
    /// E u^G - R u^M - F0 f_B, one entry per equation.
    pub fn residual(&self, u_manifold: &[f64], u_ghost: &[f64], f_boundary: &[f64]) -> Vec<f64> {
        let eg = self.e.matvec(u_ghost);
        let ru = self.rhs_manifold.matvec(u_manifold);
        (0..eg.len())
            .map(|r| {
                let j = r / self.layers;
                let f = if r % self.layers == 0 && self.leaders[j].is_none() {
                    f_boundary[j]
                } else {
                    0.0
                };
                eg[r] - ru[r] - f
            })
            .collect()
    }

    /// Ghost values A u^M + F f_B.
    pub fn ghost_values(&self, u_manifold: &[f64], f_boundary: &[f64]) -> Vec<f64> {
        let au = self.a.matvec(u_manifold);
        let ff = self.f_map.matvec(f_boundary);
        au.iter().zip(&ff).map(|(a, b)| a + b).collect()
    }
}

/// Randomly sampled boundaries: a boundary point closer than this multiple of its ghost spacing
/// to an earlier boundary point follows that point's ray instead of imposing its own PDE row.
/// Without this, nearly coincident boundary samples make E numerically singular.
pub const RANDOM_MERGE_FRACTION: f64 = 1.0;

/// For each boundary point, the earlier boundary point whose ray it follows, if any.
pub fn ray_leaders(
    ghosts: &GhostSet,
    manifold: &[f64],
    dim: usize,
    merge_fraction: f64,
) -> Vec<Option<usize>> {
    let ids = ghosts.boundary_ids();
    let point = |j: usize| &manifold[ids[j] * dim..(ids[j] + 1) * dim];
    let mut leaders: Vec<Option<usize>> = vec![None; ids.len()];
    for j in 0..ids.len() {
        let radius = merge_fraction * ghosts.spacing()[j];
        leaders[j] = (0..j)
            .filter(|&l| leaders[l].is_none())
            .map(|l| {
                (
                    crate::pointcloud::squared_distance(point(j), point(l)).sqrt(),
                    l,
                )
            })
            .filter(|&(d, _)| d < radius)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, l)| l);
    }
    leaders
}

/// Builds and solves the extrapolation system: per boundary point, the PDE row at x^B plus
/// K-1 matching conditions on second and third differences along the ghost ray.
pub fn build_extrapolation(
    lh: &DmMatrix,
    ghosts: &GhostSet,
    f_boundary: &[f64],
) -> Result<ExtrapolationSystem> {
    let jn = ghosts.boundary_len();
    build_extrapolation_with(lh, ghosts, f_boundary, &vec![None; jn], &vec![0.0; jn])
}

/// As [`build_extrapolation`], with two additions. A boundary point j with `leaders[j] = Some(l)`
/// replaces its PDE row by u_{G1,j} - u_{B,j} = u_{G1,l} - u_{B,l}. With a zeroth-order shift the
/// PDE row reads (L^h u)_{B_j} - a_j u_{B_j} = f(x^B_j).
pub fn build_extrapolation_with(
    lh: &DmMatrix,
    ghosts: &GhostSet,
    f_boundary: &[f64],
    leaders: &[Option<usize>],
    boundary_shift: &[f64],
) -> Result<ExtrapolationSystem> {
    let nm = ghosts.n_manifold();
    let jn = ghosts.boundary_len();
    let kl = ghosts.layers();
    if lh.nrows() != nm || lh.ncols() != ghosts.n_augmented() {
        return Err(invalid(format!(
            "L^h is {}x{}, expected {}x{}",
            lh.nrows(),
            lh.ncols(),
            nm,
            ghosts.n_augmented()
        )));
    }
    if leaders.len() != jn
        || leaders
            .iter()
            .enumerate()
            .any(|(j, l)| l.is_some_and(|l| l >= jn || l == j))
    {
        return Err(invalid("ray leaders must name other boundary points"));
    }
    if f_boundary.len() != jn || boundary_shift.len() != jn {
        return Err(invalid(
            "one f value and one shift per boundary point are required",
        ));
    }
    let size = jn * kl;
    if size == 0 {
        return Ok(ExtrapolationSystem {
            e: CsrMatrix::zeros(0, 0),
            rhs_manifold: CsrMatrix::zeros(0, nm),
            a: CsrMatrix::zeros(0, nm),
            f_map: CsrMatrix::zeros(0, jn),
            b: Vec::new(),
            e_inv_norm: 0.0,
            layers: kl,
            boundary_len: jn,
            leaders: leaders.to_vec(),
        });
    }
    let col = |j: usize, k: usize| j * kl + (k - 1);
    let mut e_rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(size);
    let mut r_rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(size);
    for j in 0..jn {
        let b = ghosts.boundary_ids()[j];
        let g0 = ghosts.g0_id(j);
        if let Some(l) = leaders[j] {
            e_rows.push(vec![(col(j, 1), 1.0), (col(l, 1), -1.0)]);
            r_rows.push(vec![(b, 1.0), (ghosts.boundary_ids()[l], -1.0)]);
        } else {
            // (L^h u)_{B_j} = f(x^B_j)
            let mut e1 = Vec::new();
            let mut r1 = Vec::new();
            for (c, v) in lh.matrix.row_iter(b) {
                if c >= nm {
                    e1.push((c - nm, v));
                } else {
                    r1.push((c, -v));
                }
            }
            if boundary_shift[j] != 0.0 {
                r1.push((b, boundary_shift[j]));
            }
            e_rows.push(e1);
            r_rows.push(r1);
        }
        if kl >= 2 {
            // u_G2 - 3 u_G1 = -3 u_B + u_G0
            e_rows.push(vec![(col(j, 2), 1.0), (col(j, 1), -3.0)]);
            r_rows.push(vec![(b, -3.0), (g0, 1.0)]);
        }
        if kl >= 3 {
            // u_G3 - 3 u_G2 + 3 u_G1 = u_B
            e_rows.push(vec![(col(j, 3), 1.0), (col(j, 2), -3.0), (col(j, 1), 3.0)]);
            r_rows.push(vec![(b, 1.0)]);
        }
        for k in 4..=kl {
            e_rows.push(vec![
                (col(j, k), 1.0),
                (col(j, k - 1), -3.0),
                (col(j, k - 2), 3.0),
                (col(j, k - 3), -1.0),
            ]);
            r_rows.push(Vec::new());
        }
    }
    let e = CsrMatrix::from_rows(size, e_rows)?;
    let rhs_manifold = CsrMatrix::from_rows(nm, r_rows)?;

    let solver = DenseSolver::new(e.to_dense())?;
    if solver.is_singular() {
        return Err(GpdmError::ExtrapolationSingular {
            boundary_points: jn,
            layers: kl,
        });
    }
    let e_inv = solver.inverse();
    let e_inv_norm = mat_norm_inf(&e_inv);
    if !e_inv_norm.is_finite() {
        return Err(GpdmError::ExtrapolationSingular {
            boundary_points: jn,
            layers: kl,
        });
    }

    // A = E^{-1} R restricted to the columns R touches.
    let mut used: Vec<usize> = (0..size)
        .flat_map(|r| rhs_manifold.row(r).0.to_vec())
        .collect();
    used.sort_unstable();
    used.dedup();
    let mut slot = vec![usize::MAX; nm];
    used.iter().enumerate().for_each(|(s, &c)| slot[c] = s);
    let mut r_dense = Mat::<f64>::zeros(size, used.len());
    for r in 0..size {
        for (c, v) in rhs_manifold.row_iter(r) {
            r_dense[(r, slot[c])] += v;
        }
    }
    let a_dense = solver.solve_mat(&r_dense);
    let a = dense_to_csr(&a_dense, |s| used[s], nm);

    let mut f0 = Mat::<f64>::zeros(size, jn);
    (0..jn)
        .filter(|&j| leaders[j].is_none())
        .for_each(|j| f0[(col(j, 1), j)] = 1.0);
    let f_dense = solver.solve_mat(&f0);
    let f_map = dense_to_csr(&f_dense, |s| s, jn);
    let b = f_map.matvec(f_boundary);
    Ok(ExtrapolationSystem {
        e,
        rhs_manifold,
        a,
        f_map,
        b,
        e_inv_norm,
        layers: kl,
        boundary_len: jn,
        leaders: leaders.to_vec(),
    })
}

/// Converts a dense block to CSR, dropping round-off entries below 1e-16 of the row maximum.
fn dense_to_csr(m: &Mat<f64>, column: impl Fn(usize) -> usize, ncols: usize) -> CsrMatrix {
    let rows = (0..m.nrows())
        .map(|r| {
            let max = (0..m.ncols()).fold(0.0f64, |a, c| a.max(m[(r, c)].abs()));
            (0..m.ncols())
                .filter(|&c| m[(r, c)] != 0.0 && m[(r, c)].abs() > 1e-16 * max)
                .map(|c| (column(c), m[(r, c)]))
                .collect()
        })
        .collect();
    CsrMatrix::from_rows(ncols, rows).expect("columns in range")
}

/// L^g(u) = (L^(1) + L^(2) A) u + L^(2) F f_B on the manifold-side points.
#[derive(Clone, Debug)]
pub struct GpdmOperator {
    pub l1part: CsrMatrix,
    pub offset: Vec<f64>,
    /// L^(1): manifold-side columns of L^h.
    pub l_manifold: CsrMatrix,
    /// L^(2): ghost-layer columns of L^h.
    pub l_ghost: CsrMatrix,
    /// L^(2) F, mapping boundary f values to the offset.
    pub boundary_f_map: CsrMatrix,
    pub boundary_rows: Vec<usize>,
    pub eps: f64,
}

impl GpdmOperator {
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let m = self.l1part.matvec(u);
        m.iter().zip(&self.offset).map(|(a, b)| a + b).collect()
    }

    /// Offset for different boundary f values.
    pub fn offset_for(&self, f_boundary: &[f64]) -> Vec<f64> {
        self.boundary_f_map.matvec(f_boundary)
    }

    pub fn n(&self) -> usize {
        self.l1part.nrows()
    }
}

pub fn build_gpdm(
    lh: &DmMatrix,
    ghosts: &GhostSet,
    system: &ExtrapolationSystem,
) -> Result<GpdmOperator> {
    let nm = ghosts.n_manifold();
    if lh.ncols() != ghosts.n_augmented()
        || system.a.nrows() != ghosts.boundary_len() * ghosts.layers()
    {
        return Err(invalid(
            "L^h, ghost set and extrapolation system are inconsistent",
        ));
    }
    let (l1, l2) = lh.matrix.split_columns(nm);
    let l1part = l1.add(&l2.matmul(&system.a));
    let boundary_f_map = l2.matmul(&system.f_map);
    let offset = l2.matvec(&system.b);
    Ok(GpdmOperator {
        l1part,
        offset,
        l_manifold: l1,
        l_ghost: l2,
        boundary_f_map,
        boundary_rows: ghosts.boundary_ids().to_vec(),
        eps: lh.eps,
    })
}

/// Ghost values from the homogeneous linear chain, u^{Gk} = (k+1) u_B - k u_{G0}, as a JK x N map.
pub fn linear_ghost_chain(ghosts: &GhostSet) -> CsrMatrix {
    let kl = ghosts.layers();
    let rows = (0..ghosts.boundary_len())
        .flat_map(|j| {
            let (b, g0) = (ghosts.boundary_ids()[j], ghosts.g0_id(j));
            (1..=kl).map(move |k| vec![(b, (k + 1) as f64), (g0, -(k as f64))])
        })
        .collect();
    CsrMatrix::from_rows(ghosts.n_manifold(), rows).expect("ids in range")
}

/// Homogeneous linear extrapolation combined with a homogeneous boundary condition.
#[derive(Clone, Debug)]
pub struct LinearExtrapolation {
    /// (J + JK) x (N - J): boundary values first, then ghosts, as functions of interior values.
    pub c: CsrMatrix,
    /// Reduced (N - J) x (N - J) operator L^(1) + L^(2) C on interior rows.
    pub operator: CsrMatrix,
    /// Manifold-side ids of the interior unknowns, ascending.
    pub interior_ids: Vec<usize>,
}

/// Expresses boundary values through the homogeneous condition B u = 0 as a J x (N - J) map.
pub(crate) fn boundary_elimination(
    bc: &BoundaryOperator,
    interior_slot: &[Option<usize>],
    n_int: usize,
) -> Result<CsrMatrix> {
    let rows: Result<Vec<Vec<(usize, f64)>>> = bc
        .boundary_ids
        .iter()
        .enumerate()
        .map(|(j, &b)| {
            let diag = bc.rows.get(j, b);
            if diag == 0.0 || !diag.is_finite() {
                return Err(GpdmError::InvalidBc(format!(
                    "boundary row {j} cannot be solved for its boundary value"
                )));
            }
            bc.rows
                .row_iter(j)
                .filter(|&(c, _)| c != b)
                .map(|(c, v)| {
                    interior_slot[c].map(|s| (s, -v / diag)).ok_or_else(|| {
                        GpdmError::InvalidBc(format!(
                            "boundary row {j} couples two boundary points"
                        ))
                    })
                })
                .collect()
        })
        .collect();
    CsrMatrix::from_rows(n_int, rows?)
}

pub fn build_linear_extrapolation(
    lh: &DmMatrix,
    ghosts: &GhostSet,
    bc: &BoundaryOperator,
) -> Result<LinearExtrapolation> {
    let nm = ghosts.n_manifold();
    if bc.boundary_ids != ghosts.boundary_ids() {
        return Err(invalid(
            "boundary operator and ghost set list different boundary points",
        ));
    }
    let mut is_boundary = vec![false; nm];
    ghosts
        .boundary_ids()
        .iter()
        .for_each(|&b| is_boundary[b] = true);
    let interior_ids: Vec<usize> = (0..nm).filter(|&i| !is_boundary[i]).collect();
    let mut slot = vec![None; nm];
    interior_ids
        .iter()
        .enumerate()
        .for_each(|(s, &i)| slot[i] = Some(s));
    let n_int = interior_ids.len();

    let c_b = boundary_elimination(bc, &slot, n_int)?;
    // Full manifold vector from interior values: u = P_I u_I + P_B C_B u_I.
    let mut lift_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nm];
    interior_ids
        .iter()
        .enumerate()
        .for_each(|(s, &i)| lift_rows[i].push((s, 1.0)));
    for (j, &b) in ghosts.boundary_ids().iter().enumerate() {
        lift_rows[b] = c_b.row_iter(j).collect();
    }
    let lift = CsrMatrix::from_rows(n_int, lift_rows)?;
    let c_g = linear_ghost_chain(ghosts).matmul(&lift);

    let c_rows: Vec<Vec<(usize, f64)>> = (0..c_b.nrows())
        .map(|r| c_b.row_iter(r).collect())
        .chain((0..c_g.nrows()).map(|r| c_g.row_iter(r).collect()))
        .collect();
    let c = CsrMatrix::from_rows(n_int, c_rows)?;

    let (l1, l2) = lh.matrix.split_columns(nm);
    let rows_l1 = l1.select_rows(&interior_ids);
    let rows_l2 = l2.select_rows(&interior_ids);
    let operator = rows_l1.matmul(&lift).add(&rows_l2.matmul(&c_g));
    Ok(LinearExtrapolation {
        c,
        operator,
        interior_ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary_geometry::{build_ghosts, estimate_boundary, NormalOptions, SamplingMode};
    use crate::operators::{assemble_augmented, OperatorKind, OperatorSpec};
    use crate::pointcloud::PointCloud;

    fn segment(n: usize, boundary: Vec<usize>) -> PointCloud {
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        PointCloud::new(1, xs, Some(1), boundary).unwrap()
    }

    fn setup(cloud: &PointCloud, layers: usize, eps: f64, k: usize) -> (GhostSet, DmMatrix) {
        let bd =
            estimate_boundary(cloud, SamplingMode::WellSampled, &NormalOptions::default()).unwrap();
        let (ghosts, _) = build_ghosts(cloud, &bd, layers).unwrap();
        let spec = OperatorSpec::new(OperatorKind::L1, eps, k).unwrap();
        let lh = assemble_augmented(cloud, &ghosts, &spec).unwrap();
        (ghosts, lh)
    }

    #[test]
    fn hand_elimination_matches() {
        let cloud = segment(5, vec![0]);
        let (ghosts, lh) = setup(&cloud, 3, 0.05, 7);
        let sys = build_extrapolation(&lh, &ghosts, &[0.7]).unwrap();
        let c = |col: usize| lh.matrix.get(0, col);
        let (c1, c2, c3) = (c(5), c(6), c(7));
        let s = c1 + 3.0 * c2 + 6.0 * c3;
        let mut a_row: Vec<f64> = (0..5).map(|i| -c(i)).collect();
        a_row[0] += 3.0 * c2 + 8.0 * c3;
        a_row[1] -= c2 + 3.0 * c3;
        for (i, want) in a_row.iter().enumerate() {
            assert!((sys.a.get(0, i) - want / s).abs() < 1e-12 * (1.0 + want.abs() / s.abs()));
        }
        assert!((sys.f_map.get(0, 0) - 1.0 / s).abs() < 1e-12);
        assert!((sys.b[0] - 0.7 / s).abs() < 1e-12);
        // later layers follow the chain
        let g2 = 3.0 * sys.a.get(0, 1) + 1.0;
        assert!((sys.a.get(1, 1) - g2).abs() < 1e-10);
    }

    #[test]
    fn quadratic_satisfies_matching_rows() {
        let cloud = segment(21, vec![0, 20]);
        let (ghosts, lh) = setup(&cloud, 4, 1e-3, 10);
        let sys = build_extrapolation(&lh, &ghosts, &[0.0, 0.0]).unwrap();
        let u = |x: f64| 1.0 - 2.0 * x + 3.5 * x * x;
        let um: Vec<f64> = cloud.coords().iter().map(|&x| u(x)).collect();
        let ug: Vec<f64> = (0..2)
            .flat_map(|j| (1..=4).map(move |k| (j, k)))
            .map(|(j, k)| u(ghosts.layer_point(j, k)[0]))
            .collect();
        let r = sys.residual(&um, &ug, &[0.0, 0.0]);
        for (row, v) in r.iter().enumerate() {
            if row % 4 != 0 {
                assert!(v.abs() < 1e-10, "row {row}: {v}");
            }
        }
    }

    #[test]
    fn ghosts_satisfy_their_own_system() {
        let cloud = segment(31, vec![0, 30]);
        let (ghosts, lh) = setup(&cloud, 3, 5e-4, 8);
        let f = [0.3, -1.2];
        let sys = build_extrapolation(&lh, &ghosts, &f).unwrap();
        let um: Vec<f64> = cloud.coords().iter().map(|x| (2.0 * x).sin()).collect();
        let ug = sys.ghost_values(&um, &f);
        assert!(sys.residual(&um, &ug, &f).iter().all(|v| v.abs() < 1e-9));
        assert!(sys.e_inv_norm < 1e4);
    }

    #[test]
    fn affine_identity() {
        use rand::{Rng, SeedableRng};
        let cloud = segment(41, vec![0, 40]);
        let (ghosts, lh) = setup(&cloud, 3, 4e-4, 10);
        let f = [0.5, 2.0];
        let sys = build_extrapolation(&lh, &ghosts, &f).unwrap();
        let op = build_gpdm(&lh, &ghosts, &sys).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let um: Vec<f64> = (0..41).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut full = um.clone();
            full.extend(sys.ghost_values(&um, &f));
            let want = lh.matrix.matvec(&full);
            let got = op.apply(&um);
            let scale = want.iter().fold(1.0f64, |a, v| a.max(v.abs()));
            assert!(got
                .iter()
                .zip(&want)
                .all(|(a, b)| (a - b).abs() < 1e-12 * scale));
        }
    }

    #[test]
    fn row_sums_vanish_with_zero_data() {
        let cloud = segment(41, vec![0, 40]);
        let (ghosts, lh) = setup(&cloud, 3, 4e-4, 10);
        let sys = build_extrapolation(&lh, &ghosts, &[0.0, 0.0]).unwrap();
        let op = build_gpdm(&lh, &ghosts, &sys).unwrap();
        let sums = op.l1part.scale(op.eps).row_sums();
        assert!(sums.iter().all(|s| s.abs() < 1e-9), "{sums:?}");
        assert!(op.offset.iter().all(|v| *v == 0.0));
        // Boundary rows reproduce f exactly and are empty here.
        assert!(op
            .l1part
            .row(0)
            .1
            .iter()
            .chain(op.l1part.row(40).1)
            .all(|v| v.abs() < 1e-9));
        for i in 1..40 {
            for (c, v) in op.l1part.row_iter(i) {
                if c == i {
                    assert!(v < 0.0);
                } else {
                    assert!(v > -1e-9 / op.eps, "row {i} col {c}: {v}");
                }
            }
        }
    }

    #[test]
    fn no_layers_reduces_to_plain_block() {
        let cloud = segment(11, vec![0, 10]);
        let (ghosts, lh) = setup(&cloud, 0, 5e-3, 6);
        let sys = build_extrapolation(&lh, &ghosts, &[1.0, 1.0]).unwrap();
        let op = build_gpdm(&lh, &ghosts, &sys).unwrap();
        assert!(op.l1part.add(&lh.matrix.scale(-1.0)).norm_inf() == 0.0);
        assert!(op.offset.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn followers_share_the_leader_step() {
        let cloud = segment(21, vec![0, 20]);
        let (ghosts, lh) = setup(&cloud, 2, 1e-3, 8);
        // Both ends are far apart, so nothing merges at a small radius.
        assert_eq!(
            ray_leaders(&ghosts, cloud.coords(), 1, 1.0),
            vec![None, None]
        );
        let leaders = ray_leaders(&ghosts, cloud.coords(), 1, 20.0);
        assert_eq!(leaders, vec![None, Some(0)]);
        let sys =
            build_extrapolation_with(&lh, &ghosts, &[0.0, 5.0], &leaders, &[0.0, 0.0]).unwrap();
        let um: Vec<f64> = cloud.coords().iter().map(|x| x * x).collect();
        let ug = sys.ghost_values(&um, &[0.0, 5.0]);
        // u_G1 - u_B agrees between the two rays; f at the follower is ignored.
        assert!(((ug[2] - um[20]) - (ug[0] - um[0])).abs() < 1e-12);
        assert!(sys.f_map.get(2, 1) == 0.0 && sys.f_map.get(0, 1) == 0.0);
        assert!(
            build_extrapolation_with(&lh, &ghosts, &[0.0, 0.0], &[Some(0), None], &[0.0, 0.0])
                .is_err()
        );
    }

    #[test]
    fn linear_chain_reproduces_linear_data() {
        let cloud = segment(11, vec![0, 10]);
        let (ghosts, _) = setup(&cloud, 3, 5e-3, 6);
        let chain = linear_ghost_chain(&ghosts);
        let u: Vec<f64> = cloud.coords().iter().map(|x| 2.0 * x - 0.5).collect();
        let g = chain.matvec(&u);
        for j in 0..2 {
            for k in 1..=3 {
                let x = ghosts.layer_point(j, k)[0];
                assert!((g[j * 3 + k - 1] - (2.0 * x - 0.5)).abs() < 1e-12);
            }
        }
    }
}
