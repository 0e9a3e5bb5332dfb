//! Point clouds, exact k-nearest-neighbor search, density estimates and bandwidth tuning.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, GpdmError, Result};

/// Sample points in R^n, optionally tagged with their intrinsic dimension and boundary ids.
#[derive(Clone, Debug)]
pub struct PointCloud {
    ambient_dim: usize,
    coords: Vec<f64>,
    intrinsic_dim: Option<usize>,
    boundary_ids: Vec<usize>,
}

impl PointCloud {
    pub fn new(
        ambient_dim: usize,
        coords: Vec<f64>,
        intrinsic_dim: Option<usize>,
        boundary_ids: Vec<usize>,
    ) -> Result<Self> {
        let cloud = Self::new_unchecked(ambient_dim, coords, intrinsic_dim, boundary_ids)?;
        cloud.check_duplicates()?;
        Ok(cloud)
    }

    /// Same as [`PointCloud::new`] without the O(N log N) duplicate scan.
    pub fn new_unchecked(
        ambient_dim: usize,
        coords: Vec<f64>,
        intrinsic_dim: Option<usize>,
        boundary_ids: Vec<usize>,
    ) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(invalid("ambient dimension must be positive"));
        }
        if !coords.len().is_multiple_of(ambient_dim) {
            return Err(invalid(
                "coordinate buffer is not a multiple of the ambient dimension",
            ));
        }
        if let Some(d) = intrinsic_dim {
            if d == 0 || d > ambient_dim {
                return Err(invalid(format!(
                    "intrinsic dimension {d} not in 1..={ambient_dim}"
                )));
            }
        }
        if let Some(p) = coords.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite coordinate in point {}",
                p / ambient_dim
            )));
        }
        let n = coords.len() / ambient_dim;
        let mut seen = vec![false; n];
        for &b in &boundary_ids {
            if b >= n {
                return Err(invalid(format!("boundary id {b} out of range (N = {n})")));
            }
            if std::mem::replace(&mut seen[b], true) {
                return Err(invalid(format!("boundary id {b} listed twice")));
            }
        }
        Ok(PointCloud {
            ambient_dim,
            coords,
            intrinsic_dim,
            boundary_ids,
        })
    }

    pub fn from_rows(
        rows: &[Vec<f64>],
        intrinsic_dim: Option<usize>,
        boundary_ids: Vec<usize>,
    ) -> Result<Self> {
        let n = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| invalid("empty point cloud"))?;
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid("rows have inconsistent lengths"));
        }
        Self::new(n, rows.concat(), intrinsic_dim, boundary_ids)
    }

    fn check_duplicates(&self) -> Result<()> {
        if self.len() < 2 {
            return Ok(());
        }
        let tree = KdTree::new(&self.coords, self.ambient_dim);
        for i in 0..self.len() {
            let nn = tree.nearest(self.point(i), 1, Some(i));
            if let Some(&(d2, j)) = nn.first() {
                if d2.sqrt() < 1e-12 {
                    return Err(invalid(format!("points {i} and {j} coincide")));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.ambient_dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn intrinsic_dim(&self) -> Option<usize> {
        self.intrinsic_dim
    }

    pub fn require_intrinsic_dim(&self) -> Result<usize> {
        self.intrinsic_dim
            .ok_or_else(|| invalid("intrinsic dimension d is required here"))
    }

    pub fn with_intrinsic_dim(mut self, d: usize) -> Result<Self> {
        if d == 0 || d > self.ambient_dim {
            return Err(invalid(format!(
                "intrinsic dimension {d} not in 1..={}",
                self.ambient_dim
            )));
        }
        self.intrinsic_dim = Some(d);
        Ok(self)
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.ambient_dim..(i + 1) * self.ambient_dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn boundary_ids(&self) -> &[usize] {
        &self.boundary_ids
    }

    pub fn boundary_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        self.boundary_ids.iter().for_each(|&b| mask[b] = true);
        mask
    }

    /// Non-boundary ids in ascending order.
    pub fn interior_ids(&self) -> Vec<usize> {
        let mask = self.boundary_mask();
        (0..self.len()).filter(|&i| !mask[i]).collect()
    }

    /// Returns a new cloud with `extra` points appended (boundary ids unchanged).
    pub fn extended(&self, extra: &[f64]) -> Result<Self> {
        let mut coords = self.coords.clone();
        coords.extend_from_slice(extra);
        Self::new_unchecked(
            self.ambient_dim,
            coords,
            self.intrinsic_dim,
            self.boundary_ids.clone(),
        )
    }

    /// Reorders points so that `order[new] = old`; boundary ids are mapped accordingly.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(invalid("permutation length mismatch"));
        }
        let mut inverse = vec![usize::MAX; self.len()];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new;
        }
        let coords = order
            .iter()
            .flat_map(|&o| self.point(o).iter().copied())
            .collect();
        let boundary = self.boundary_ids.iter().map(|&b| inverse[b]).collect();
        Self::new_unchecked(self.ambient_dim, coords, self.intrinsic_dim, boundary)
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// (squared distance, index) ordered lexicographically so ties go to the smaller index.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Exact kd-tree over a flat coordinate buffer.
pub struct KdTree<'a> {
    coords: &'a [f64],
    dim: usize,
    perm: Vec<usize>,
    nodes: Vec<Node>,
}

const LEAF_SIZE: usize = 12;

impl<'a> KdTree<'a> {
    pub fn new(coords: &'a [f64], dim: usize) -> Self {
        let n = coords.len() / dim;
        let mut tree = KdTree {
            coords,
            dim,
            perm: (0..n).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    fn coord(&self, i: usize, axis: usize) -> f64 {
        self.coords[i * self.dim + axis]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let axis = (0..self.dim)
            .map(|a| {
                let (lo, hi) = self.perm[start..end].iter().fold(
                    (f64::INFINITY, f64::NEG_INFINITY),
                    |(lo, hi), &i| {
                        let c = self.coord(i, a);
                        (lo.min(c), hi.max(c))
                    },
                );
                (a, hi - lo)
            })
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
            .map(|(a, _)| a)
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        let (coords, dim) = (self.coords, self.dim);
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            coords[a * dim + axis]
                .total_cmp(&coords[b * dim + axis])
                .then(a.cmp(&b))
        });
        let value = self.coord(self.perm[mid], axis);
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// The `k` nearest points to `query` as (squared distance, index), ascending with ties
    /// broken by index. `exclude` removes one index (the query point itself).
    pub fn nearest(&self, query: &[f64], k: usize, exclude: Option<usize>) -> Vec<(f64, usize)> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, query, k, exclude, &mut heap);
        }
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.0, c.1)).collect()
    }

    fn search(
        &self,
        node: usize,
        q: &[f64],
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.perm[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let c = Candidate(
                        squared_distance(q, &self.coords[i * self.dim..(i + 1) * self.dim]),
                        i,
                    );
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, k, exclude, heap);
                if heap.len() < k || diff * diff <= heap.peek().unwrap().0 {
                    self.search(far, q, k, exclude, heap);
                }
            }
        }
    }
}

/// k nearest neighbors of every point, self excluded.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    n: usize,
    k: usize,
    neighbors: Vec<usize>,
    distances: Vec<f64>,
}

impl NeighborIndex {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }
}

pub fn build_index(cloud: &PointCloud, k: usize) -> Result<NeighborIndex> {
    let n = cloud.len();
    if k >= n {
        return Err(invalid(format!("k = {k} must be smaller than N = {n}")));
    }
    let tree = KdTree::new(cloud.coords(), cloud.ambient_dim());
    let rows: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|i| tree.nearest(cloud.point(i), k, Some(i)))
        .collect();
    let mut neighbors = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    for row in rows {
        for (d2, j) in row {
            neighbors.push(j);
            distances.push(d2.sqrt());
        }
    }
    Ok(NeighborIndex {
        n,
        k,
        neighbors,
        distances,
    })
}

/// Brute-force all-pairs kNN, used as a reference in tests.
pub fn brute_force_neighbors(cloud: &PointCloud, k: usize) -> Vec<Vec<usize>> {
    (0..cloud.len())
        .map(|i| {
            let mut all: Vec<Candidate> = (0..cloud.len())
                .filter(|&j| j != i)
                .map(|j| Candidate(squared_distance(cloud.point(i), cloud.point(j)), j))
                .collect();
            all.sort();
            all.into_iter().take(k).map(|c| c.1).collect()
        })
        .collect()
}

/// Outcome of the log-log slope scan over candidate bandwidths.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BandwidthReport {
    pub eps_grid: Vec<f64>,
    pub log_s: Vec<f64>,
    pub slope: Vec<f64>,
    pub eps_star: f64,
    pub d_est: usize,
    pub max_slope: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TuningRule {
    /// Pick the grid cell whose slope is closest to d/2.
    ClosestToHalfDim(usize),
    /// Pick the grid cell with the largest slope.
    MaxSlope,
}

/// Log-uniform grid from 2^lo to 2^hi with `steps_per_octave` points per doubling.
pub fn log2_grid(lo: f64, hi: f64, steps_per_octave: usize) -> Vec<f64> {
    let n = ((hi - lo) * steps_per_octave as f64).round() as usize;
    (0..=n)
        .map(|i| (lo + i as f64 / steps_per_octave as f64).exp2())
        .collect()
}

/// Default candidate bandwidths: 2^-30 .. 2^10 in steps of 2^0.1.
pub fn default_eps_grid() -> Vec<f64> {
    log2_grid(-30.0, 10.0, 10)
}

/// Scans S(eps) = (1/(N(k+1))) sum exp(-|x_i - x_j|^2 / (4 eps)) over each point's k-NN list
/// together with the point itself.
pub fn tune_bandwidth(
    index: &NeighborIndex,
    eps_grid: &[f64],
    rule: TuningRule,
) -> Result<BandwidthReport> {
    if eps_grid.len() < 2 {
        return Err(invalid("bandwidth grid needs at least two values"));
    }
    if eps_grid.iter().any(|&e| !(e > 0.0) || !e.is_finite())
        || eps_grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(invalid(
            "bandwidth grid must be positive and strictly increasing",
        ));
    }
    let n = index.len();
    if n == 0 {
        return Err(invalid("empty neighbor index"));
    }
    let sq: Vec<f64> = index.distances.iter().map(|d| d * d).collect();
    let norm = (n * (index.k + 1)) as f64;
    let log_s: Vec<f64> = eps_grid
        .par_iter()
        .map(|&eps| {
            let s: f64 = sq.iter().map(|d2| (-d2 / (4.0 * eps)).exp()).sum::<f64>() + n as f64;
            (s / norm).ln()
        })
        .collect();
    let slope: Vec<f64> = (0..eps_grid.len() - 1)
        .map(|c| (log_s[c + 1] - log_s[c]) / (eps_grid[c + 1].ln() - eps_grid[c].ln()))
        .collect();
    let max_slope = slope.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max_slope <= 0.05 {
        return Err(GpdmError::TuningFailed { max_slope });
    }
    let pick = match rule {
        TuningRule::MaxSlope => argmin_by(&slope, |s| -s),
        TuningRule::ClosestToHalfDim(d) => argmin_by(&slope, |s| (s - d as f64 / 2.0).abs()),
    };
    Ok(BandwidthReport {
        eps_grid: eps_grid.to_vec(),
        log_s,
        eps_star: eps_grid[pick],
        d_est: (2.0 * max_slope).round().max(1.0) as usize,
        max_slope,
        slope,
    })
}

fn argmin_by(values: &[f64], key: impl Fn(f64) -> f64) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if key(v) < key(values[best]) {
            best = i;
        }
    }
    best
}

/// q(x_j) = eps^{-d/2} N^{-1} (1 + sum over the k-NN list of j of exp(-|x_i - x_j|^2/(4 eps))).
pub fn estimate_density(index: &NeighborIndex, eps: f64, d: usize) -> Result<Vec<f64>> {
    if !(eps > 0.0) {
        return Err(invalid("eps must be positive"));
    }
    let n = index.len();
    let pref = eps.powf(-(d as f64) / 2.0) / n as f64;
    Ok((0..n)
        .map(|j| {
            let s: f64 = index
                .distances(j)
                .iter()
                .map(|r| (-r * r / (4.0 * eps)).exp())
                .sum();
            pref * (1.0 + s)
        })
        .collect())
}

/// Mean distance from point `id` to its `p` nearest neighbors.
pub fn local_spacing(cloud: &PointCloud, id: usize, p: usize) -> Result<f64> {
    let tree = KdTree::new(cloud.coords(), cloud.ambient_dim());
    local_spacing_with(&tree, cloud, id, p)
}

pub fn local_spacing_with(
    tree: &KdTree<'_>,
    cloud: &PointCloud,
    id: usize,
    p: usize,
) -> Result<f64> {
    if p == 0 || p >= cloud.len() {
        return Err(invalid(format!(
            "P = {p} must be in 1..N (N = {})",
            cloud.len()
        )));
    }
    if id >= cloud.len() {
        return Err(invalid(format!("point {id} out of range")));
    }
    let nn = tree.nearest(cloud.point(id), p, Some(id));
    Ok(nn.iter().map(|(d2, _)| d2.sqrt()).sum::<f64>() / p as f64)
}

/// Sidecar describing which rows of a cloud CSV are boundary samples.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BoundaryFile {
    pub boundary_ids: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
}

pub fn read_cloud_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    parse_cloud_csv(&text)
}

pub fn parse_cloud_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if rows.is_empty() && lineno == 0 => continue, // header
            Err(e) => return Err(GpdmError::Parse(format!("line {}: {e}", lineno + 1))),
        }
    }
    Ok(rows)
}

pub fn load_cloud(csv: &Path, boundary_json: &Path) -> Result<PointCloud> {
    let rows = read_cloud_csv(csv)?;
    let meta: BoundaryFile = serde_json::from_str(&std::fs::read_to_string(boundary_json)?)
        .map_err(|e| GpdmError::Parse(format!("{}: {e}", boundary_json.display())))?;
    PointCloud::from_rows(&rows, meta.d, meta.boundary_ids)
}

pub fn save_cloud(cloud: &PointCloud, csv: &Path, boundary_json: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..cloud.len() {
        let row: Vec<String> = cloud.point(i).iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(csv, out)?;
    let meta = BoundaryFile {
        boundary_ids: cloud.boundary_ids().to_vec(),
        d: cloud.intrinsic_dim(),
    };
    std::fs::write(
        boundary_json,
        serde_json::to_string_pretty(&meta).expect("serializable"),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> PointCloud {
        PointCloud::new(1, xs.to_vec(), Some(1), vec![]).unwrap()
    }

    #[test]
    fn three_collinear_points() {
        let idx = build_index(&line(&[0.0, 1.0, 3.0]), 1).unwrap();
        assert_eq!(idx.neighbors, vec![1, 0, 1]);
        assert_eq!(idx.distances, vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn ties_go_to_smaller_index() {
        let idx = build_index(&line(&[0.0, -1.0, 1.0]), 1).unwrap();
        assert_eq!(idx.neighbors(0), &[1]);
    }

    #[test]
    fn full_neighborhood_is_a_permutation() {
        let xs: Vec<f64> = (0..9)
            .map(|i| (i as f64 * 0.7).sin() * 3.0 + i as f64 * 0.01)
            .collect();
        let idx = build_index(&line(&xs), 8).unwrap();
        for i in 0..9 {
            let mut row = idx.neighbors(i).to_vec();
            row.sort();
            let expect: Vec<usize> = (0..9).filter(|&j| j != i).collect();
            assert_eq!(row, expect);
        }
    }

    #[test]
    fn k_too_large_is_rejected() {
        assert!(matches!(
            build_index(&line(&[0.0, 1.0]), 2),
            Err(GpdmError::InvalidArgument(_))
        ));
    }

    #[test]
    fn duplicate_points_are_rejected() {
        assert!(PointCloud::new(2, vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0], None, vec![]).is_err());
    }

    #[test]
    fn spacing_on_equispaced_grid() {
        let xs: Vec<f64> = (0..10).map(|i| 0.25 * i as f64).collect();
        let h = local_spacing(&line(&xs), 0, 2).unwrap();
        assert!((h - 1.5 * 0.25).abs() < 1e-15);
        assert!(local_spacing(&line(&xs), 0, 10).is_err());
    }

    #[test]
    fn single_point_density_is_prefactor() {
        let idx = build_index(&line(&[0.3]), 0).unwrap();
        let q = estimate_density(&idx, 0.01, 1).unwrap();
        assert!((q[0] - 0.01f64.powf(-0.5)).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cloud =
            PointCloud::new(2, vec![0.0, 1.0, 2.5, -3.0, 1e-3, 7.0], Some(1), vec![0, 2]).unwrap();
        let (c, b) = (dir.path().join("c.csv"), dir.path().join("b.json"));
        save_cloud(&cloud, &c, &b).unwrap();
        let back = load_cloud(&c, &b).unwrap();
        assert_eq!(back.coords(), cloud.coords());
        assert_eq!(back.boundary_ids(), &[0, 2]);
        assert_eq!(back.intrinsic_dim(), Some(1));
    }

    #[test]
    fn header_line_is_skipped() {
        let rows = parse_cloud_csv("x,y\n1,2\n3,4\n").unwrap();
        assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert!(parse_cloud_csv("1,2\nfoo,4\n").is_err());
    }
}
