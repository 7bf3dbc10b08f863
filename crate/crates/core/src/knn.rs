//! k-nearest-neighbor estimators for mutual information (MI) and conditional
//! mutual information (CMI) under the maximum norm.
//!
//! For each point the distance `eps` to its k-th nearest neighbor in the
//! joint space is found, then neighbors strictly within `eps` are counted in
//! the marginal subspaces:
//!
//! ```text
//! I(X;Y)    = psi(k) + psi(N) - < psi(n_x+1) + psi(n_y+1) >
//! I(X;Y|Z)  = psi(k) - < psi(n_xz+1) + psi(n_yz+1) - psi(n_z+1) >
//! ```
//!
//! where `< . >` averages over points and `psi` is the digamma function.
//! Both estimators can return small negative values; callers must tolerate
//! that bias. All quantities are in nats.
//!
//! Neighbor searches are exact. Up to [`KDTREE_MAX_DIMS`] dimensions a k-d
//! tree with max-norm rectangle pruning is used; above that an early-abort
//! linear scan is faster and stays exact. One-dimensional marginals are
//! counted on a sorted copy. Per-point digamma terms are accumulated through
//! integer count histograms, which makes the estimates exactly invariant to
//! row permutations.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Dimension cutoff between the k-d tree and the linear scan.
pub const KDTREE_MAX_DIMS: usize = 12;

const LEAF_SIZE: usize = 16;

// ---------------------------------------------------------------------------
// digamma

/// Digamma function, accurate to about 1e-12 for x > 0.
///
/// Uses the recurrence `psi(x) = psi(x+1) - 1/x` to shift the argument above
/// 10 and evaluates the asymptotic series there.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::DomainError(format!("digamma requires x > 0, got {x}")));
    }
    Ok(digamma_unchecked(x))
}

fn digamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    // asymptotic expansion: ln x - 1/2x - sum B_2n / (2n x^2n)
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))));
    acc + x.ln() - 0.5 * inv - series
}

/// Table of `psi(1) ..= psi(max)` for integer arguments.
fn digamma_table(max: usize) -> Vec<f64> {
    (1..=max).map(|v| digamma_unchecked(v as f64)).collect()
}

// ---------------------------------------------------------------------------
// point cloud

/// Row-major set of points compared under the maximum-coordinate (Chebyshev)
/// metric.
#[derive(Debug, Clone)]
pub struct PointCloud {
    data: Vec<f64>,
    rows: usize,
    dims: usize,
}

impl PointCloud {
    pub fn new(data: Vec<f64>, rows: usize, dims: usize) -> Result<Self> {
        if data.len() != rows * dims {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {rows}x{dims} cloud",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("cloud contains non-finite coordinates".into()));
        }
        Ok(Self { data, rows, dims })
    }

    /// Cloud with zero columns; valid only as a degenerate conditioning set.
    pub fn empty(rows: usize) -> Self {
        Self { data: Vec::new(), rows, dims: 0 }
    }

    pub fn from_array(view: ndarray::ArrayView2<'_, f64>) -> Result<Self> {
        let (rows, dims) = view.dim();
        let mut data = Vec::with_capacity(rows * dims);
        for i in 0..rows {
            for j in 0..dims {
                data.push(view[[i, j]]);
            }
        }
        Self::new(data, rows, dims)
    }

    pub fn from_column(col: &[f64]) -> Result<Self> {
        Self::new(col.to_vec(), col.len(), 1)
    }

    /// Horizontal concatenation; all parts must share the row count.
    pub fn hstack(parts: &[&PointCloud]) -> Result<Self> {
        let rows = parts.first().map(|p| p.rows).ok_or(Error::EmptyInput)?;
        if parts.iter().any(|p| p.rows != rows) {
            return Err(Error::DimensionMismatch("hstack row counts differ".into()));
        }
        let dims: usize = parts.iter().map(|p| p.dims).sum();
        let mut data = Vec::with_capacity(rows * dims);
        for i in 0..rows {
            for p in parts {
                data.extend_from_slice(p.row(i));
            }
        }
        Ok(Self { data, rows, dims })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }
}

/// Joint-space k-th neighbor distances plus neighbor counts in marginal
/// subspaces.
#[derive(Debug, Clone)]
pub struct NeighborStats {
    /// Per-point distance to the k-th nearest neighbor (self excluded).
    pub eps: Vec<f64>,
    /// Per-subspace, per-point counts of neighbors strictly within `eps`.
    pub counts: Vec<Vec<usize>>,
}

// ---------------------------------------------------------------------------
// distance kernels

/// True when the max-norm distance of `a` and `b` is strictly below `bound`.
#[inline]
fn within_strict(a: &[f64], b: &[f64], bound: f64) -> bool {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() >= bound {
            return false;
        }
    }
    true
}

/// Max-norm distance, aborting with `None` once it reaches `bound`.
#[inline]
fn chebyshev_bounded(a: &[f64], b: &[f64], bound: f64) -> Option<f64> {
    let mut d = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let t = (x - y).abs();
        if t >= bound {
            return None;
        }
        if t > d {
            d = t;
        }
    }
    Some(d)
}

/// Buffer of the k smallest distances seen so far.
struct KSmallest {
    buf: Vec<f64>,
    k: usize,
}

impl KSmallest {
    fn new(k: usize) -> Self {
        Self { buf: Vec::with_capacity(k + 1), k }
    }

    #[inline]
    fn threshold(&self) -> f64 {
        if self.buf.len() < self.k {
            f64::INFINITY
        } else {
            self.buf[self.k - 1]
        }
    }

    #[inline]
    fn insert(&mut self, d: f64) {
        let pos = self.buf.partition_point(|&b| b <= d);
        self.buf.insert(pos, d);
        self.buf.truncate(self.k);
    }

    fn kth(&self) -> f64 {
        self.buf[self.k - 1]
    }
}

// ---------------------------------------------------------------------------
// max-norm k-d tree

struct TreeNode {
    lo: u32,
    hi: u32,
    /// u32::MAX marks a leaf.
    left: u32,
    right: u32,
}

/// Static k-d tree over a point cloud, pruned with per-node bounding boxes
/// under the max norm.
struct MaxNormKdTree<'a> {
    cloud: &'a PointCloud,
    order: Vec<u32>,
    nodes: Vec<TreeNode>,
    /// Flat per-node bounding boxes: `2 * dims` values per node.
    bounds: Vec<f64>,
}

impl<'a> MaxNormKdTree<'a> {
    fn build(cloud: &'a PointCloud) -> Self {
        let rows = cloud.rows();
        let mut tree = Self {
            cloud,
            order: (0..rows as u32).collect(),
            nodes: Vec::with_capacity(2 * rows / LEAF_SIZE + 2),
            bounds: Vec::new(),
        };
        tree.build_range(0, rows);
        tree
    }

    fn build_range(&mut self, lo: usize, hi: usize) -> u32 {
        let dims = self.cloud.dims();
        let id = self.nodes.len() as u32;
        self.nodes.push(TreeNode { lo: lo as u32, hi: hi as u32, left: u32::MAX, right: u32::MAX });
        let base = self.bounds.len();
        self.bounds.extend(std::iter::repeat(f64::INFINITY).take(dims));
        self.bounds.extend(std::iter::repeat(f64::NEG_INFINITY).take(dims));
        for &p in &self.order[lo..hi] {
            let row = self.cloud.row(p as usize);
            for (d, &v) in row.iter().enumerate() {
                if v < self.bounds[base + d] {
                    self.bounds[base + d] = v;
                }
                if v > self.bounds[base + dims + d] {
                    self.bounds[base + dims + d] = v;
                }
            }
        }
        if hi - lo > LEAF_SIZE {
            // split the widest extent at the median
            let mut split_dim = 0;
            let mut widest = f64::NEG_INFINITY;
            for d in 0..dims {
                let w = self.bounds[base + dims + d] - self.bounds[base + d];
                if w > widest {
                    widest = w;
                    split_dim = d;
                }
            }
            if widest > 0.0 {
                let mid = (lo + hi) / 2;
                let cloud = self.cloud;
                self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
                    cloud.row(a as usize)[split_dim]
                        .total_cmp(&cloud.row(b as usize)[split_dim])
                });
                let left = self.build_range(lo, mid);
                let right = self.build_range(mid, hi);
                self.nodes[id as usize].left = left;
                self.nodes[id as usize].right = right;
            }
        }
        id
    }

    #[inline]
    fn bbox_dist_lower(&self, node: u32, q: &[f64]) -> f64 {
        let dims = self.cloud.dims();
        let base = node as usize * 2 * dims;
        let mut d = 0.0f64;
        for (i, &v) in q.iter().enumerate() {
            let below = self.bounds[base + i] - v;
            let above = v - self.bounds[base + dims + i];
            let t = below.max(above);
            if t > d {
                d = t;
            }
        }
        d
    }

    #[inline]
    fn bbox_dist_upper(&self, node: u32, q: &[f64]) -> f64 {
        let dims = self.cloud.dims();
        let base = node as usize * 2 * dims;
        let mut d = 0.0f64;
        for (i, &v) in q.iter().enumerate() {
            let t = (v - self.bounds[base + i]).abs().max((self.bounds[base + dims + i] - v).abs());
            if t > d {
                d = t;
            }
        }
        d
    }

    /// Distance to the k-th nearest neighbor of `q`, excluding point `exclude`.
    fn kth_distance(&self, q: &[f64], exclude: usize, k: usize) -> f64 {
        let mut best = KSmallest::new(k);
        self.kth_visit(0, q, exclude, &mut best);
        best.kth()
    }

    fn kth_visit(&self, node: u32, q: &[f64], exclude: usize, best: &mut KSmallest) {
        let n = &self.nodes[node as usize];
        if n.left == u32::MAX {
            for &p in &self.order[n.lo as usize..n.hi as usize] {
                if p as usize == exclude {
                    continue;
                }
                if let Some(d) = chebyshev_bounded(self.cloud.row(p as usize), q, best.threshold())
                {
                    best.insert(d);
                }
            }
            return;
        }
        let dl = self.bbox_dist_lower(n.left, q);
        let dr = self.bbox_dist_lower(n.right, q);
        let (first, d1, second, d2) =
            if dl <= dr { (n.left, dl, n.right, dr) } else { (n.right, dr, n.left, dl) };
        if d1 < best.threshold() {
            self.kth_visit(first, q, exclude, best);
        }
        if d2 < best.threshold() {
            self.kth_visit(second, q, exclude, best);
        }
    }

    /// Number of points strictly within `radius` of `q`, self included.
    fn count_lt(&self, node: u32, q: &[f64], radius: f64) -> usize {
        let n = &self.nodes[node as usize];
        if self.bbox_dist_lower(node, q) >= radius {
            return 0;
        }
        if self.bbox_dist_upper(node, q) < radius {
            return (n.hi - n.lo) as usize;
        }
        if n.left == u32::MAX {
            let mut c = 0;
            for &p in &self.order[n.lo as usize..n.hi as usize] {
                if within_strict(self.cloud.row(p as usize), q, radius) {
                    c += 1;
                }
            }
            return c;
        }
        self.count_lt(n.left, q, radius) + self.count_lt(n.right, q, radius)
    }
}

// ---------------------------------------------------------------------------
// neighbor search

fn validate_search(cloud: &PointCloud, k: usize) -> Result<()> {
    if cloud.dims() == 0 {
        return Err(Error::InvalidParameter("neighbor search on a zero-dimensional cloud".into()));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("neighbor count k must be positive".into()));
    }
    if cloud.rows() <= k + 1 {
        return Err(Error::SeriesTooShort { n_eff: cloud.rows(), min: k + 1 });
    }
    Ok(())
}

fn brute_kth_distances(cloud: &PointCloud, k: usize) -> Vec<f64> {
    (0..cloud.rows())
        .into_par_iter()
        .map(|i| {
            let q = cloud.row(i);
            let mut best = KSmallest::new(k);
            for j in 0..cloud.rows() {
                if j == i {
                    continue;
                }
                if let Some(d) = chebyshev_bounded(cloud.row(j), q, best.threshold()) {
                    best.insert(d);
                }
            }
            best.kth()
        })
        .collect()
}

fn kth_distances(cloud: &PointCloud, k: usize) -> Result<Vec<f64>> {
    validate_search(cloud, k)?;
    let eps = if cloud.dims() <= KDTREE_MAX_DIMS {
        let tree = MaxNormKdTree::build(cloud);
        (0..cloud.rows())
            .into_par_iter()
            .map(|i| tree.kth_distance(cloud.row(i), i, k))
            .collect()
    } else {
        brute_kth_distances(cloud, k)
    };
    let degenerate = eps.iter().filter(|&&e| e == 0.0).count();
    if degenerate > cloud.rows() / 2 {
        return Err(Error::DegenerateDuplicates { duplicates: degenerate, rows: cloud.rows() });
    }
    Ok(eps)
}

/// Exact distance to the k-th nearest neighbor of every point (self
/// excluded) under the max norm.
///
/// Fails with [`Error::DegenerateDuplicates`] when more than half of the
/// points coincide with at least `k` others (e.g. a constant series).
pub fn knn_search(cloud: &PointCloud, k: usize) -> Result<NeighborStats> {
    Ok(NeighborStats { eps: kth_distances(cloud, k)?, counts: Vec::new() })
}

/// Per-point count of neighbors strictly within `eps[i]` (self excluded).
pub fn count_within(cloud: &PointCloud, eps: &[f64]) -> Result<Vec<usize>> {
    if cloud.rows() != eps.len() {
        return Err(Error::DimensionMismatch("eps length differs from cloud rows".into()));
    }
    if cloud.dims() == 0 {
        return Err(Error::InvalidParameter("count_within on a zero-dimensional cloud".into()));
    }
    Ok(if cloud.dims() == 1 {
        let mut sorted: Vec<f64> = (0..cloud.rows()).map(|i| cloud.row(i)[0]).collect();
        sorted.sort_unstable_by(f64::total_cmp);
        (0..cloud.rows())
            .into_par_iter()
            .map(|i| {
                let e = eps[i];
                if e <= 0.0 {
                    return 0;
                }
                let q = cloud.row(i)[0];
                let below = sorted.partition_point(|&v| v < q + e);
                let at_or_under = sorted.partition_point(|&v| v <= q - e);
                below - at_or_under - 1
            })
            .collect()
    } else if cloud.dims() <= KDTREE_MAX_DIMS {
        let tree = MaxNormKdTree::build(cloud);
        (0..cloud.rows())
            .into_par_iter()
            .map(|i| {
                let e = eps[i];
                if e <= 0.0 {
                    return 0;
                }
                tree.count_lt(0, cloud.row(i), e) - 1
            })
            .collect()
    } else {
        (0..cloud.rows())
            .into_par_iter()
            .map(|i| {
                let e = eps[i];
                if e <= 0.0 {
                    return 0;
                }
                let q = cloud.row(i);
                let mut c = 0;
                for j in 0..cloud.rows() {
                    if j != i && within_strict(cloud.row(j), q, e) {
                        c += 1;
                    }
                }
                c
            })
            .collect()
    })
}

/// Sum of `psi(count + 1)` over points, accumulated through a histogram so
/// the result is independent of row order.
fn digamma_count_sum(counts: &[usize], table: &[f64]) -> f64 {
    let mut hist = vec![0u32; table.len()];
    for &c in counts {
        hist[c] += 1;
    }
    let mut sum = 0.0;
    for (c, &mult) in hist.iter().enumerate() {
        if mult > 0 {
            sum += mult as f64 * table[c]; // table[c] = psi(c + 1)
        }
    }
    sum
}

// ---------------------------------------------------------------------------
// estimators

fn check_same_rows(parts: &[&PointCloud]) -> Result<usize> {
    let rows = parts.first().map(|p| p.rows()).ok_or(Error::EmptyInput)?;
    if parts.iter().any(|p| p.rows() != rows) {
        return Err(Error::DimensionMismatch("clouds differ in row count".into()));
    }
    Ok(rows)
}

/// Mutual information I(X;Y) in nats.
pub fn mutual_information(x: &PointCloud, y: &PointCloud, k: usize) -> Result<f64> {
    let rows = check_same_rows(&[x, y])?;
    let joint = PointCloud::hstack(&[x, y])?;
    let eps = kth_distances(&joint, k)?;
    let n_x = count_within(x, &eps)?;
    let n_y = count_within(y, &eps)?;
    let table = digamma_table(rows + 1);
    let mean = (digamma_count_sum(&n_x, &table) + digamma_count_sum(&n_y, &table)) / rows as f64;
    Ok(digamma_unchecked(k as f64) + digamma_unchecked(rows as f64) - mean)
}

/// Conditional mutual information I(X;Y|Z) in nats.
///
/// A zero-column `z` reduces exactly to [`mutual_information`].
pub fn conditional_mutual_information(
    x: &PointCloud,
    y: &PointCloud,
    z: &PointCloud,
    k: usize,
) -> Result<f64> {
    if z.dims() == 0 {
        return mutual_information(x, y, k);
    }
    let rows = check_same_rows(&[x, y, z])?;
    // z leads so that the early-abort scans reject far points on the widest
    // block first
    let joint = PointCloud::hstack(&[z, x, y])?;
    let (n_xz, n_yz, n_z);
    if joint.dims() <= KDTREE_MAX_DIMS {
        let eps = kth_distances(&joint, k)?;
        let xz = PointCloud::hstack(&[x, z])?;
        let yz = PointCloud::hstack(&[y, z])?;
        n_xz = count_within(&xz, &eps)?;
        n_yz = count_within(&yz, &eps)?;
        n_z = count_within(z, &eps)?;
    } else {
        let stats = brute_cmi_stats(&joint, z.dims(), x.dims(), k)?;
        n_xz = stats.1;
        n_yz = stats.2;
        n_z = stats.3;
    }
    let table = digamma_table(rows + 1);
    let mean = (digamma_count_sum(&n_xz, &table) + digamma_count_sum(&n_yz, &table)
        - digamma_count_sum(&n_z, &table))
        / rows as f64;
    Ok(digamma_unchecked(k as f64) - mean)
}

/// Combined eps + marginal-count pass for high-dimensional joint spaces.
///
/// `joint` has layout `[z | x | y]`; all three counts are collected in one
/// scan per point, skipping a candidate as soon as its z-distance already
/// reaches `eps`.
#[allow(clippy::type_complexity)]
fn brute_cmi_stats(
    joint: &PointCloud,
    z_dims: usize,
    x_dims: usize,
    k: usize,
) -> Result<(Vec<f64>, Vec<usize>, Vec<usize>, Vec<usize>)> {
    validate_search(joint, k)?;
    let eps = brute_kth_distances(joint, k);
    let degenerate = eps.iter().filter(|&&e| e == 0.0).count();
    if degenerate > joint.rows() / 2 {
        return Err(Error::DegenerateDuplicates { duplicates: degenerate, rows: joint.rows() });
    }
    let rows = joint.rows();
    let counts: Vec<(usize, usize, usize)> = (0..rows)
        .into_par_iter()
        .map(|i| {
            let e = eps[i];
            if e <= 0.0 {
                return (0, 0, 0);
            }
            let q = joint.row(i);
            let (qz, qrest) = q.split_at(z_dims);
            let (qx, qy) = qrest.split_at(x_dims);
            let mut nz = 0;
            let mut nxz = 0;
            let mut nyz = 0;
            for j in 0..rows {
                if j == i {
                    continue;
                }
                let r = joint.row(j);
                let (rz, rrest) = r.split_at(z_dims);
                if !within_strict(rz, qz, e) {
                    continue;
                }
                nz += 1;
                let (rx, ry) = rrest.split_at(x_dims);
                if within_strict(rx, qx, e) {
                    nxz += 1;
                }
                if within_strict(ry, qy, e) {
                    nyz += 1;
                }
            }
            (nxz, nyz, nz)
        })
        .collect();
    let n_xz = counts.iter().map(|c| c.0).collect();
    let n_yz = counts.iter().map(|c| c.1).collect();
    let n_z = counts.iter().map(|c| c.2).collect();
    Ok((eps, n_xz, n_yz, n_z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_cloud(rng: &mut ChaCha8Rng, rows: usize, dims: usize) -> PointCloud {
        let data: Vec<f64> = (0..rows * dims).map(|_| rng.sample(StandardNormal)).collect();
        PointCloud::new(data, rows, dims).unwrap()
    }

    /// O(n^2) reference for the k-th neighbor distance.
    fn oracle_kth(cloud: &PointCloud, k: usize) -> Vec<f64> {
        (0..cloud.rows())
            .map(|i| {
                let mut d: Vec<f64> = (0..cloud.rows())
                    .filter(|&j| j != i)
                    .map(|j| {
                        cloud
                            .row(i)
                            .iter()
                            .zip(cloud.row(j))
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0f64, f64::max)
                    })
                    .collect();
                d.sort_unstable_by(f64::total_cmp);
                d[k - 1]
            })
            .collect()
    }

    #[test]
    fn digamma_known_values() {
        assert!((digamma(1.0).unwrap() + 0.5772156649015329).abs() < 1e-12);
        assert!((digamma(0.5).unwrap() + 1.9635100260214235).abs() < 1e-12);
        assert!((digamma(10.0).unwrap() - 2.251752589066721).abs() < 1e-12);
        assert!((digamma(100.0).unwrap() - 4.600161852738087).abs() < 1e-12);
        assert!((digamma(0.1).unwrap() + 10.423754940411076).abs() < 1e-10);
        assert!((digamma(3.7).unwrap() - 1.1671535393615114).abs() < 1e-12);
    }

    #[test]
    fn digamma_recurrence() {
        for &x in &[0.5, 1.0, 2.0, 10.0] {
            let lhs = digamma(x + 1.0).unwrap();
            let rhs = digamma(x).unwrap() + 1.0 / x;
            assert!((lhs - rhs).abs() < 1e-10, "recurrence failed at x={x}");
        }
    }

    #[test]
    fn digamma_domain() {
        assert!(matches!(digamma(0.0), Err(Error::DomainError(_))));
        assert!(matches!(digamma(-3.0), Err(Error::DomainError(_))));
    }

    #[test]
    fn knn_equispaced_grid() {
        let cloud = PointCloud::from_column(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        let stats = knn_search(&cloud, 1).unwrap();
        assert_eq!(stats.eps, vec![1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn chebyshev_definition() {
        // max-norm distance of (0,0) and (3,4) is 4
        let cloud = PointCloud::new(
            vec![0.0, 0.0, 3.0, 4.0, 20.0, -20.0, -15.0, 30.0],
            4,
            2,
        )
        .unwrap();
        let stats = knn_search(&cloud, 1).unwrap();
        assert_eq!(stats.eps[0], 4.0);
        assert_eq!(stats.eps[1], 4.0);
    }

    #[test]
    fn tree_matches_brute_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let dims = 1 + (trial % 5);
            let cloud = normal_cloud(&mut rng, 120, dims);
            let k = 1 + (trial % 7);
            let got = knn_search(&cloud, k).unwrap().eps;
            let want = oracle_kth(&cloud, k);
            assert_eq!(got, want, "mismatch at trial {trial} (dims {dims}, k {k})");
        }
    }

    #[test]
    fn high_dim_brute_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cloud = normal_cloud(&mut rng, 90, KDTREE_MAX_DIMS + 2);
        let got = knn_search(&cloud, 4).unwrap().eps;
        assert_eq!(got, oracle_kth(&cloud, 4));
    }

    #[test]
    fn count_within_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for dims in [1usize, 2, 3, KDTREE_MAX_DIMS + 1] {
            let cloud = normal_cloud(&mut rng, 100, dims);
            let eps = knn_search(&cloud, 5).unwrap().eps;
            let got = count_within(&cloud, &eps).unwrap();
            for i in 0..cloud.rows() {
                let want = (0..cloud.rows())
                    .filter(|&j| j != i)
                    .filter(|&j| {
                        cloud
                            .row(i)
                            .iter()
                            .zip(cloud.row(j))
                            .map(|(a, b)| (a - b).abs())
                            .fold(0.0f64, f64::max)
                            < eps[i]
                    })
                    .count();
                assert_eq!(got[i], want, "dims {dims}, point {i}");
                assert!(got[i] <= cloud.rows() - 1);
            }
        }
    }

    #[test]
    fn degenerate_duplicates_rejected() {
        let cloud = PointCloud::from_column(&vec![1.0; 50]).unwrap();
        assert!(matches!(
            knn_search(&cloud, 3),
            Err(Error::DegenerateDuplicates { .. })
        ));
    }

    #[test]
    fn mi_independent_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = normal_cloud(&mut rng, 2000, 1);
        let y = normal_cloud(&mut rng, 2000, 1);
        let mi = mutual_information(&x, &y, 10).unwrap();
        assert!(mi.abs() < 0.05, "independent MI = {mi}");
    }

    #[test]
    fn mi_identical_series_diverges() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = normal_cloud(&mut rng, 2000, 1);
        let mi = mutual_information(&x, &x.clone(), 10).unwrap();
        assert!(mi > 2.0, "MI of a series with itself = {mi}");
    }

    #[test]
    fn cmi_empty_conditioning_equals_mi() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = normal_cloud(&mut rng, 500, 2);
        let y = normal_cloud(&mut rng, 500, 1);
        let z = PointCloud::empty(500);
        let mi = mutual_information(&x, &y, 10).unwrap();
        let cmi = conditional_mutual_information(&x, &y, &z, 10).unwrap();
        assert_eq!(mi, cmi);
    }

    #[test]
    fn cmi_independent_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let x = normal_cloud(&mut rng, 2000, 1);
        let y = normal_cloud(&mut rng, 2000, 1);
        let z = normal_cloud(&mut rng, 2000, 1);
        let cmi = conditional_mutual_information(&x, &y, &z, 10).unwrap();
        assert!(cmi.abs() < 0.05, "independent CMI = {cmi}");
    }

    #[test]
    fn cmi_symmetric_in_x_and_y() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let x = normal_cloud(&mut rng, 400, 2);
        let y = normal_cloud(&mut rng, 400, 1);
        let z = normal_cloud(&mut rng, 400, 2);
        let a = conditional_mutual_information(&x, &y, &z, 8).unwrap();
        let b = conditional_mutual_information(&y, &x, &z, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cmi_conditioning_removes_mediated_dependence() {
        // X -> Z -> Y chain: conditioning on Z lowers the dependence
        let mut better = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let n = 800;
            let xs: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let zs: Vec<f64> = xs
                .iter()
                .map(|&v| v + 0.5 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let ys: Vec<f64> = zs
                .iter()
                .map(|&v| v + 0.5 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let x = PointCloud::from_column(&xs).unwrap();
            let y = PointCloud::from_column(&ys).unwrap();
            let z = PointCloud::from_column(&zs).unwrap();
            let with_z = conditional_mutual_information(&x, &y, &z, 10).unwrap();
            let without = mutual_information(&x, &y, 10).unwrap();
            if with_z < without {
                better += 1;
            }
        }
        assert!(better >= 18, "conditioning reduced dependence in only {better}/20 runs");
    }

    #[test]
    fn permutation_invariance_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let n = 300;
        let x = normal_cloud(&mut rng, n, 2);
        let y = normal_cloud(&mut rng, n, 1);
        let z = normal_cloud(&mut rng, n, 3);
        let base_mi = mutual_information(&x, &y, 6).unwrap();
        let base_cmi = conditional_mutual_information(&x, &y, &z, 6).unwrap();

        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        let shuffle = |c: &PointCloud| {
            let mut data = Vec::with_capacity(n * c.dims());
            for &i in &perm {
                data.extend_from_slice(c.row(i));
            }
            PointCloud::new(data, n, c.dims()).unwrap()
        };
        let (xs, ys, zs) = (shuffle(&x), shuffle(&y), shuffle(&z));
        assert_eq!(mutual_information(&xs, &ys, 6).unwrap(), base_mi);
        assert_eq!(conditional_mutual_information(&xs, &ys, &zs, 6).unwrap(), base_cmi);
    }

    #[test]
    fn constant_column_in_z_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let n = 300;
        let x = normal_cloud(&mut rng, n, 1);
        let y = normal_cloud(&mut rng, n, 1);
        let z = normal_cloud(&mut rng, n, 2);
        let base = conditional_mutual_information(&x, &y, &z, 5).unwrap();
        let padded = PointCloud::hstack(&[&z, &PointCloud::from_column(&vec![7.5; n]).unwrap()])
            .unwrap();
        let with_const = conditional_mutual_information(&x, &y, &padded, 5).unwrap();
        assert_eq!(base, with_const);
    }

    #[test]
    fn high_dim_cmi_path_matches_tree_path() {
        // same data, same counts: append constant columns to push the joint
        // dimension over the k-d tree cutoff without changing any distance
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let n = 250;
        let x = normal_cloud(&mut rng, n, 2);
        let y = normal_cloud(&mut rng, n, 1);
        let z = normal_cloud(&mut rng, n, 3);
        let base = conditional_mutual_information(&x, &y, &z, 7).unwrap();
        let pad = PointCloud::new(vec![0.0; n * 8], n, 8).unwrap();
        let z_padded = PointCloud::hstack(&[&z, &pad]).unwrap();
        assert!(z_padded.dims() + x.dims() + y.dims() > KDTREE_MAX_DIMS);
        let padded = conditional_mutual_information(&x, &y, &z_padded, 7).unwrap();
        assert_eq!(base, padded);
    }
}
