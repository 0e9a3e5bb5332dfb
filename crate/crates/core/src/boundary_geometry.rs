//! Outward normals at boundary samples and the ghost points laid along them.

use std::io::Write;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, GpdmError, Result};
use crate::pointcloud::{
    build_index, local_spacing_with, tune_bandwidth, KdTree, PointCloud, TuningRule,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Ordered samples with equal intrinsic spacing; normals from secant lines.
    WellSampled,
    /// Unstructured samples; normals from local SVD regression.
    Random,
}

/// Per-boundary-point normals and spacings, in the order of `cloud.boundary_ids()`.
#[derive(Clone, Debug)]
pub struct BoundaryData {
    pub ids: Vec<usize>,
    normals: Vec<f64>,
    pub spacing: Vec<f64>,
    pub mode: SamplingMode,
    /// In well-sampled mode, the interior sample used for the secant (it doubles as x^{G0}).
    pub adjacent: Vec<Option<usize>>,
    ambient_dim: usize,
}

impl BoundaryData {
    pub fn new(
        ids: Vec<usize>,
        normals: Vec<f64>,
        spacing: Vec<f64>,
        mode: SamplingMode,
        adjacent: Vec<Option<usize>>,
        ambient_dim: usize,
    ) -> Result<Self> {
        let j = ids.len();
        if normals.len() != j * ambient_dim || spacing.len() != j || adjacent.len() != j {
            return Err(invalid("boundary data arrays have inconsistent lengths"));
        }
        for (b, nu) in normals.chunks(ambient_dim).enumerate() {
            let norm = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(invalid(format!("normal {b} has length {norm}")));
            }
        }
        if let Some(b) = spacing.iter().position(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(invalid(format!(
                "spacing of boundary point {b} is not positive"
            )));
        }
        Ok(BoundaryData {
            ids,
            normals,
            spacing,
            mode,
            adjacent,
            ambient_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn normal(&self, j: usize) -> &[f64] {
        &self.normals[j * self.ambient_dim..(j + 1) * self.ambient_dim]
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalOptions {
    /// Neighbors used for surface tangents.
    pub surface_neighbors: usize,
    /// Neighbors (among boundary samples) used for boundary-curve tangents.
    pub boundary_neighbors: usize,
    /// Neighbors whose centroid fixes the orientation.
    pub orientation_neighbors: usize,
    /// Neighbors averaged for the ghost spacing in random mode.
    pub spacing_neighbors: usize,
}

impl Default for NormalOptions {
    fn default() -> Self {
        NormalOptions {
            surface_neighbors: 20,
            boundary_neighbors: 10,
            orientation_neighbors: 20,
            spacing_neighbors: 10,
        }
    }
}

fn unit(v: Vec<f64>) -> (Vec<f64>, f64) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (v.into_iter().map(|x| x / n).collect(), n)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Nearest sample to `id` that is not a boundary point.
fn nearest_interior(
    tree: &KdTree<'_>,
    cloud: &PointCloud,
    mask: &[bool],
    id: usize,
) -> Option<(f64, usize)> {
    let mut k = 4.min(cloud.len() - 1);
    loop {
        let nn = tree.nearest(cloud.point(id), k, Some(id));
        if let Some(&hit) = nn.iter().find(|(_, j)| !mask[*j]) {
            return Some(hit);
        }
        if k >= cloud.len() - 1 {
            return None;
        }
        k = (2 * k).min(cloud.len() - 1);
    }
}

/// Secant estimate (x^B - x_nbr)/|x^B - x_nbr| using the nearest interior sample.
/// Returns the unit normal and the neighbor id.
pub fn secant_normal(cloud: &PointCloud, boundary_id: usize) -> Result<(Vec<f64>, usize)> {
    let tree = KdTree::new(cloud.coords(), cloud.ambient_dim());
    secant_normal_with(&tree, cloud, &cloud.boundary_mask(), boundary_id)
}

fn secant_normal_with(
    tree: &KdTree<'_>,
    cloud: &PointCloud,
    mask: &[bool],
    id: usize,
) -> Result<(Vec<f64>, usize)> {
    if cloud.len() < 2 {
        return Err(GpdmError::DegenerateGeometry {
            point: id,
            reason: "no neighbors".into(),
        });
    }
    let (d2, nbr) =
        nearest_interior(tree, cloud, mask, id).ok_or_else(|| GpdmError::DegenerateGeometry {
            point: id,
            reason: "no interior samples".into(),
        })?;
    if d2.sqrt() < 1e-14 {
        return Err(GpdmError::DegenerateGeometry {
            point: id,
            reason: "nearest interior sample coincides".into(),
        });
    }
    let diff: Vec<f64> = cloud
        .point(id)
        .iter()
        .zip(cloud.point(nbr))
        .map(|(a, b)| a - b)
        .collect();
    Ok((unit(diff).0, nbr))
}

/// Leading `count` left singular vectors of the kernel-weighted displacement matrix around
/// `center`, built from its `kn` nearest samples in `cloud` (excluding `exclude`).
pub fn svd_tangent_basis(
    cloud: &PointCloud,
    center: &[f64],
    exclude: Option<usize>,
    kn: usize,
    count: usize,
) -> Result<Vec<Vec<f64>>> {
    let tree = KdTree::new(cloud.coords(), cloud.ambient_dim());
    svd_tangent_basis_with(&tree, cloud, center, exclude, kn, count)
}

fn svd_tangent_basis_with(
    tree: &KdTree<'_>,
    cloud: &PointCloud,
    center: &[f64],
    exclude: Option<usize>,
    kn: usize,
    count: usize,
) -> Result<Vec<Vec<f64>>> {
    let point = exclude.unwrap_or(usize::MAX);
    let n = cloud.ambient_dim();
    if kn <= count {
        return Err(invalid(format!(
            "K_n = {kn} must exceed the tangent dimension {count}"
        )));
    }
    if count > n {
        return Err(invalid("more tangents requested than ambient dimensions"));
    }
    let available = cloud.len() - usize::from(exclude.is_some());
    if kn > available {
        return Err(invalid(format!(
            "K_n = {kn} exceeds the {available} available samples"
        )));
    }
    let nn = tree.nearest(center, kn, exclude);
    let eps = local_bandwidth(cloud, center, &nn, count.max(1))?;
    let weights: Vec<f64> = nn.iter().map(|(d2, _)| (-d2 / (4.0 * eps)).exp()).collect();
    let mass: f64 = nn.iter().map(|(d2, _)| (-d2 / (2.0 * eps)).exp()).sum();
    let scale = mass.powf(-0.5);
    let x = Mat::<f64>::from_fn(n, kn, |r, c| {
        let j = nn[c].1;
        scale * weights[c] * (cloud.point(j)[r] - center[r])
    });
    let svd = x.thin_svd().map_err(|e| GpdmError::DegenerateGeometry {
        point,
        reason: format!("svd failed: {e:?}"),
    })?;
    let s = svd.S().column_vector();
    let sigma1 = s[0];
    if count > 0 && !(s[count - 1] >= 1e-12 * sigma1 && sigma1 > 0.0) {
        return Err(GpdmError::DegenerateGeometry {
            point,
            reason: "rank-deficient local neighborhood".into(),
        });
    }
    let u = svd.U();
    Ok((0..count)
        .map(|c| (0..n).map(|r| u[(r, c)]).collect())
        .collect())
}

/// Bandwidth for the local regression, tuned on the neighborhood itself.
fn local_bandwidth(
    cloud: &PointCloud,
    center: &[f64],
    nn: &[(f64, usize)],
    d: usize,
) -> Result<f64> {
    let mut coords = center.to_vec();
    for &(_, j) in nn {
        coords.extend_from_slice(cloud.point(j));
    }
    let local = PointCloud::new_unchecked(cloud.ambient_dim(), coords, None, vec![])?;
    let index = build_index(&local, local.len() - 1)?;
    let grid = crate::pointcloud::default_eps_grid();
    match tune_bandwidth(&index, &grid, TuningRule::ClosestToHalfDim(d)) {
        Ok(report) => Ok(report.eps_star),
        Err(_) => Ok(nn.iter().map(|(d2, _)| d2).sum::<f64>() / nn.len() as f64),
    }
}

/// Gram-Schmidt: the component of t1 orthogonal to t_b, or of t2 when t1 is nearly parallel.
pub fn normal_from_projection(t1: &[f64], t2: &[f64], t_boundary: &[f64]) -> Result<Vec<f64>> {
    normal_from_tangents(
        &[t1.to_vec(), t2.to_vec()],
        &[t_boundary.to_vec()],
        usize::MAX,
    )
}

/// First surface tangent whose component orthogonal to the boundary tangents has norm >= 0.1.
pub fn normal_from_tangents(
    surface: &[Vec<f64>],
    boundary: &[Vec<f64>],
    point: usize,
) -> Result<Vec<f64>> {
    let ortho = orthonormalize(boundary);
    for t in surface {
        let mut v = t.clone();
        for b in &ortho {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let (u, norm) = unit(v);
        if norm >= 0.1 {
            return Ok(u);
        }
    }
    Err(GpdmError::DegenerateGeometry {
        point,
        reason: "surface tangents parallel to the boundary".into(),
    })
}

/// Sorts surface tangents so the one least aligned with the boundary comes first.
fn by_transversality(mut surface: Vec<Vec<f64>>, boundary: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let ortho = orthonormalize(boundary);
    let along = |t: &Vec<f64>| ortho.iter().map(|b| dot(t, b).powi(2)).sum::<f64>();
    surface.sort_by(|a, b| along(a).total_cmp(&along(b)));
    surface
}

fn orthonormalize(vs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in vs {
        let mut w = v.clone();
        for b in &out {
            let c = dot(&w, b);
            w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let (u, n) = unit(w);
        if n > 1e-12 {
            out.push(u);
        }
    }
    out
}

/// Flips `normal` if needed so it points away from the centroid of the k nearest samples.
pub fn orient_normal(
    normal: &[f64],
    cloud: &PointCloud,
    boundary_id: usize,
    k: usize,
) -> Result<Vec<f64>> {
    let tree = KdTree::new(cloud.coords(), cloud.ambient_dim());
    orient_normal_with(&tree, normal, cloud, boundary_id, k)
}

fn orient_normal_with(
    tree: &KdTree<'_>,
    normal: &[f64],
    cloud: &PointCloud,
    id: usize,
    k: usize,
) -> Result<Vec<f64>> {
    if k < 3 {
        return Err(invalid("orientation needs k >= 3"));
    }
    let nn = tree.nearest(cloud.point(id), k, Some(id));
    let n = cloud.ambient_dim();
    let mut centroid = vec![0.0; n];
    for &(_, j) in &nn {
        centroid
            .iter_mut()
            .zip(cloud.point(j))
            .for_each(|(c, x)| *c += x / nn.len() as f64);
    }
    let offset: Vec<f64> = centroid
        .iter()
        .zip(cloud.point(id))
        .map(|(c, x)| c - x)
        .collect();
    let d = dot(normal, &offset);
    if d.abs() < 1e-10 {
        return Err(GpdmError::OrientationAmbiguous { point: id, dot: d });
    }
    Ok(if d > 0.0 {
        normal.iter().map(|v| -v).collect()
    } else {
        normal.to_vec()
    })
}

/// Estimates normals and ghost spacings for every boundary sample of `cloud`.
pub fn estimate_boundary(
    cloud: &PointCloud,
    mode: SamplingMode,
    opts: &NormalOptions,
) -> Result<BoundaryData> {
    let tree = KdTree::new(cloud.coords(), cloud.ambient_dim());
    let mask = cloud.boundary_mask();
    let ids = cloud.boundary_ids().to_vec();
    let mut normals = Vec::with_capacity(ids.len() * cloud.ambient_dim());
    let mut spacing = Vec::with_capacity(ids.len());
    let mut adjacent = Vec::with_capacity(ids.len());
    match mode {
        SamplingMode::WellSampled => {
            for &b in &ids {
                let (nu, nbr) = secant_normal_with(&tree, cloud, &mask, b)?;
                normals.extend(nu);
                spacing.push(
                    crate::pointcloud::squared_distance(cloud.point(b), cloud.point(nbr)).sqrt(),
                );
                adjacent.push(Some(nbr));
            }
        }
        SamplingMode::Random => {
            let d = cloud.require_intrinsic_dim()?;
            let bcoords: Vec<f64> = ids
                .iter()
                .flat_map(|&b| cloud.point(b).iter().copied())
                .collect();
            let bcloud = PointCloud::new_unchecked(cloud.ambient_dim(), bcoords, None, vec![])?;
            let btree = KdTree::new(bcloud.coords(), bcloud.ambient_dim());
            // boundary samples trace a curve; left in the surface fit they can tilt it into the
            // curve's osculating plane
            let icoords: Vec<f64> = (0..cloud.len())
                .filter(|&i| !mask[i])
                .flat_map(|i| cloud.point(i).iter().copied())
                .collect();
            let icloud = PointCloud::new_unchecked(cloud.ambient_dim(), icoords, None, vec![])?;
            let itree = KdTree::new(icloud.coords(), icloud.ambient_dim());
            for (j, &b) in ids.iter().enumerate() {
                let surface = svd_tangent_basis_with(
                    &itree,
                    &icloud,
                    cloud.point(b),
                    None,
                    opts.surface_neighbors.min(icloud.len()),
                    d,
                )
                .map_err(|e| match e {
                    GpdmError::DegenerateGeometry { reason, .. } => {
                        GpdmError::DegenerateGeometry { point: b, reason }
                    }
                    e => e,
                })?;
                let raw = if d == 1 {
                    surface[0].clone()
                } else {
                    let kb = opts.boundary_neighbors.min(bcloud.len() - 1);
                    let btan = svd_tangent_basis_with(
                        &btree,
                        &bcloud,
                        cloud.point(b),
                        Some(j),
                        kb,
                        d - 1,
                    )?;
                    normal_from_tangents(&by_transversality(surface, &btan), &btan, b)?
                };
                normals.extend(orient_normal_with(
                    &tree,
                    &raw,
                    cloud,
                    b,
                    opts.orientation_neighbors,
                )?);
                spacing.push(local_spacing_with(&tree, cloud, b, opts.spacing_neighbors)?);
                adjacent.push(None);
            }
        }
    }
    BoundaryData::new(ids, normals, spacing, mode, adjacent, cloud.ambient_dim())
}

/// Interior ghosts x^B - h nu and exterior layers x^B + k h nu, k = 1..K.
#[derive(Clone, Debug)]
pub struct GhostSet {
    layers: usize,
    ambient_dim: usize,
    n_original: usize,
    n_manifold: usize,
    boundary_ids: Vec<usize>,
    spacing: Vec<f64>,
    interior: Vec<f64>,
    exterior: Vec<f64>,
    g0_ids: Vec<usize>,
}

pub const MAX_GHOST_LAYERS: usize = 10;
pub const DEFAULT_GHOST_LAYERS: usize = 6;

impl GhostSet {
    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn boundary_len(&self) -> usize {
        self.boundary_ids.len()
    }

    pub fn boundary_ids(&self) -> &[usize] {
        &self.boundary_ids
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Number of samples in the original cloud.
    pub fn n_original(&self) -> usize {
        self.n_original
    }

    /// Manifold-side point count: the original samples plus appended interior ghosts.
    pub fn n_manifold(&self) -> usize {
        self.n_manifold
    }

    /// Total augmented point count N + JK (manifold side plus exterior layers).
    pub fn n_augmented(&self) -> usize {
        self.n_manifold + self.boundary_ids.len() * self.layers
    }

    pub fn interior_point(&self, j: usize) -> &[f64] {
        &self.interior[j * self.ambient_dim..(j + 1) * self.ambient_dim]
    }

    /// Exterior ghost x^{Gk}_j for k in 1..=K.
    pub fn layer_point(&self, j: usize, k: usize) -> &[f64] {
        let at = (j * self.layers + (k - 1)) * self.ambient_dim;
        &self.exterior[at..at + self.ambient_dim]
    }

    /// Manifold-side index of the interior ghost of boundary point j.
    pub fn g0_id(&self, j: usize) -> usize {
        self.g0_ids[j]
    }

    /// Column of x^{Gk}_j in the augmented cloud.
    pub fn augmented_id(&self, j: usize, k: usize) -> usize {
        debug_assert!((1..=self.layers).contains(&k));
        self.n_manifold + j * self.layers + (k - 1)
    }

    /// Inverse of [`GhostSet::augmented_id`].
    pub fn ghost_of(&self, column: usize) -> Option<(usize, usize)> {
        if column < self.n_manifold || column >= self.n_augmented() {
            return None;
        }
        let r = column - self.n_manifold;
        Some((r / self.layers, r % self.layers + 1))
    }

    /// The cloud of manifold-side points (original samples plus appended interior ghosts).
    pub fn manifold_cloud(&self, cloud: &PointCloud) -> Result<PointCloud> {
        let extra: Vec<f64> = (self.n_original..self.n_manifold)
            .flat_map(|m| {
                let j = self
                    .g0_ids
                    .iter()
                    .position(|&g| g == m)
                    .expect("appended ghost");
                self.interior_point(j).to_vec()
            })
            .collect();
        cloud.extended(&extra)
    }

    /// Manifold-side points followed by all exterior layers in augmented-id order.
    pub fn augmented_cloud(&self, cloud: &PointCloud) -> Result<PointCloud> {
        self.manifold_cloud(cloud)?.extended(&self.exterior)
    }

    /// CSV rows `id,tag,x1,..,xn` with tags manifold, interior and ghost:k.
    pub fn write_csv<W: Write>(&self, cloud: &PointCloud, mut w: W) -> Result<()> {
        let aug = self.augmented_cloud(cloud)?;
        let header: Vec<String> = (1..=self.ambient_dim).map(|i| format!("x{i}")).collect();
        writeln!(w, "id,tag,{}", header.join(","))?;
        for i in 0..aug.len() {
            let tag = if i < self.n_original {
                "manifold".to_string()
            } else if i < self.n_manifold {
                "interior".to_string()
            } else {
                format!("ghost:{}", self.ghost_of(i).expect("ghost column").1)
            };
            let xs: Vec<String> = aug.point(i).iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{i},{tag},{}", xs.join(","))?;
        }
        Ok(())
    }
}

/// Lays `layers` ghost points along each boundary normal. Returns the set and any warnings.
pub fn build_ghosts(
    cloud: &PointCloud,
    boundary: &BoundaryData,
    layers: usize,
) -> Result<(GhostSet, Vec<String>)> {
    if layers > MAX_GHOST_LAYERS {
        return Err(invalid(format!(
            "ghost layers K = {layers} exceeds the cap {MAX_GHOST_LAYERS}"
        )));
    }
    let n = cloud.ambient_dim();
    let j_count = boundary.len();
    let mut interior = Vec::with_capacity(j_count * n);
    let mut exterior = Vec::with_capacity(j_count * layers * n);
    let mut g0_ids = Vec::with_capacity(j_count);
    let mut next = cloud.len();
    for j in 0..j_count {
        let xb = cloud.point(boundary.ids[j]);
        let nu = boundary.normal(j);
        let h = boundary.spacing[j];
        interior.extend(xb.iter().zip(nu).map(|(x, v)| x - h * v));
        for k in 1..=layers {
            exterior.extend(xb.iter().zip(nu).map(|(x, v)| x + k as f64 * h * v));
        }
        match (boundary.mode, boundary.adjacent[j]) {
            (SamplingMode::WellSampled, Some(a)) => g0_ids.push(a),
            _ => {
                g0_ids.push(next);
                next += 1;
            }
        }
    }
    let set = GhostSet {
        layers,
        ambient_dim: n,
        n_original: cloud.len(),
        n_manifold: next,
        boundary_ids: boundary.ids.clone(),
        spacing: boundary.spacing.clone(),
        interior,
        exterior,
        g0_ids,
    };
    let warnings = collar_overlap(&set).into_iter().collect();
    Ok((set, warnings))
}

/// Heuristic self-intersection check: ghosts of different rays closer than a quarter spacing.
fn collar_overlap(set: &GhostSet) -> Option<String> {
    if set.layers == 0 || set.boundary_len() < 2 {
        return None;
    }
    let tree = KdTree::new(&set.exterior, set.ambient_dim);
    let total = set.boundary_len() * set.layers;
    for g in 0..total {
        let j = g / set.layers;
        let p = &set.exterior[g * set.ambient_dim..(g + 1) * set.ambient_dim];
        for (d2, other) in tree.nearest(p, 2.min(total - 1), Some(g)) {
            let jo = other / set.layers;
            if jo != j && d2.sqrt() < 0.25 * set.spacing[j].min(set.spacing[jo]) {
                return Some(format!(
                    "collar overlap: ghost rays of boundary points {} and {} nearly intersect",
                    set.boundary_ids[j], set.boundary_ids[jo]
                ));
            }
        }
    }
    None
}
