//! Regression random forest with minimal-depth variable importance.
//!
//! CART-style trees grown without pruning: bootstrap row sampling, `mtry`
//! candidate features per node, variance-reduction splits, growth until the
//! node weight drops to `min_node_size`. Importance of a variable is the
//! depth of the shallowest node splitting on it, averaged over trees; a
//! variable never used in a tree is charged the proxy depth
//! `D_max = ceil(log2(n / min_node_size))` so means stay finite.
//!
//! Split scanning works on per-feature presorted index lists that are
//! stably partitioned on the way down, so no per-node sorting happens.

use ndarray::ArrayView2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Forest hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate features per split; `None` = `ceil(p / 3)` (regression
    /// convention).
    pub mtry: Option<usize>,
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry: None,
            min_node_size: 5,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    fn effective_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or_else(|| p.div_ceil(3)).min(p)
    }
}

/// One node of a fitted tree; `split_feature == None` marks a leaf.
#[derive(Debug, Clone)]
pub struct TreeNode {
    pub split_feature: Option<usize>,
    pub split_value: f64,
    pub left: u32,
    pub right: u32,
    pub depth: u16,
    /// Mean target of the node's training rows (the prediction for leaves).
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
    /// Bootstrap multiplicity per training row (all ones without bootstrap).
    in_bag: Vec<u32>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = &self.nodes[0];
        while let Some(f) = node.split_feature {
            node = if x[f] <= node.split_value {
                &self.nodes[node.left as usize]
            } else {
                &self.nodes[node.right as usize]
            };
        }
        node.value
    }

    /// Minimal split depth per feature, or `d_max` where a feature is unused.
    fn minimal_depths(&self, p: usize, d_max: f64) -> Vec<f64> {
        let mut depth = vec![d_max; p];
        for node in &self.nodes {
            if let Some(f) = node.split_feature {
                depth[f] = depth[f].min(node.depth as f64);
            }
        }
        depth
    }
}

/// A fitted regression forest.
#[derive(Debug, Clone)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub n_rows: usize,
    pub d_max: f64,
}

impl Forest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Out-of-bag mean squared error; `None` when no row was ever left out.
    pub fn oob_error(&self, features: ArrayView2<'_, f64>, target: &[f64]) -> Option<f64> {
        let mut sum = 0.0;
        let mut used = 0usize;
        for i in 0..self.n_rows {
            let row: Vec<f64> = features.row(i).to_vec();
            let mut acc = 0.0;
            let mut trees = 0usize;
            for t in &self.trees {
                if t.in_bag[i] == 0 {
                    acc += t.predict(&row);
                    trees += 1;
                }
            }
            if trees > 0 {
                let err = acc / trees as f64 - target[i];
                sum += err * err;
                used += 1;
            }
        }
        (used > 0).then(|| sum / used as f64)
    }
}

/// Per-variable mean minimal depth with the mean-threshold selection rule.
#[derive(Debug, Clone, Serialize)]
pub struct VimpReport {
    pub mean_minimal_depth: Vec<f64>,
    pub threshold: f64,
    pub selected: Vec<bool>,
    pub d_max: f64,
}

struct FitContext<'a> {
    features: ArrayView2<'a, f64>,
    target: &'a [f64],
    mtry: usize,
    min_node_size: usize,
    max_depth: usize,
}

struct TreeBuilder<'b, 'a> {
    ctx: &'b FitContext<'a>,
    weights: Vec<u32>,
    nodes: Vec<TreeNode>,
    rng: ChaCha8Rng,
    scratch: Vec<usize>,
}

impl<'b, 'a> TreeBuilder<'b, 'a> {
    /// Grows the subtree for the rows in `feats` (one sorted index list per
    /// feature, all holding the same row set) and returns its node index.
    fn grow(&mut self, feats: Vec<Vec<u32>>, depth: u16) -> u32 {
        let rows = &feats[0];
        let mut s_w = 0.0;
        let mut s_y = 0.0;
        let mut s_yy = 0.0;
        for &r in rows {
            let w = self.weights[r as usize] as f64;
            let y = self.ctx.target[r as usize];
            s_w += w;
            s_y += w * y;
            s_yy += w * y * y;
        }
        let mean = s_y / s_w;
        let sse = s_yy - s_y * s_y / s_w;
        let id = self.nodes.len() as u32;
        self.nodes.push(TreeNode {
            split_feature: None,
            split_value: 0.0,
            left: 0,
            right: 0,
            depth,
            value: mean,
        });
        if s_w <= self.ctx.min_node_size as f64
            || depth as usize >= self.ctx.max_depth
            || sse <= 1e-12
        {
            return id;
        }

        // sample mtry candidate features; first best split wins ties
        let p = self.ctx.features.ncols();
        for (i, v) in self.scratch.iter_mut().enumerate() {
            *v = i;
        }
        for i in 0..self.ctx.mtry {
            let j = self.rng.gen_range(i..p);
            self.scratch.swap(i, j);
        }
        let mut best_gain = 0.0;
        let mut best: Option<(usize, f64)> = None;
        for ci in 0..self.ctx.mtry {
            let f = self.scratch[ci];
            let order = &feats[f];
            let mut wl = 0.0;
            let mut yl = 0.0;
            for t in 0..order.len() - 1 {
                let r = order[t] as usize;
                let w = self.weights[r] as f64;
                wl += w;
                yl += w * self.ctx.target[r];
                let v0 = self.ctx.features[[r, f]];
                let v1 = self.ctx.features[[order[t + 1] as usize, f]];
                if v0 < v1 {
                    let wr = s_w - wl;
                    let yr = s_y - yl;
                    let gain = yl * yl / wl + yr * yr / wr - s_y * s_y / s_w;
                    if gain > best_gain {
                        best_gain = gain;
                        best = Some((f, 0.5 * (v0 + v1)));
                    }
                }
            }
        }
        let Some((feat, threshold)) = best else {
            return id;
        };

        // stable partition of every feature list
        let n_left = feats[feat]
            .iter()
            .filter(|&&r| self.ctx.features[[r as usize, feat]] <= threshold)
            .count();
        let mut left_feats = Vec::with_capacity(feats.len());
        let mut right_feats = Vec::with_capacity(feats.len());
        for order in &feats {
            let mut l = Vec::with_capacity(n_left);
            let mut r = Vec::with_capacity(order.len() - n_left);
            for &row in order {
                if self.ctx.features[[row as usize, feat]] <= threshold {
                    l.push(row);
                } else {
                    r.push(row);
                }
            }
            left_feats.push(l);
            right_feats.push(r);
        }
        drop(feats);
        let left = self.grow(left_feats, depth + 1);
        let right = self.grow(right_feats, depth + 1);
        let node = &mut self.nodes[id as usize];
        node.split_feature = Some(feat);
        node.split_value = threshold;
        node.left = left;
        node.right = right;
        id
    }
}

/// Fits a regression forest to `features` (rows x p) against `target`.
pub fn fit_forest<'a>(
    features: ArrayView2<'a, f64>,
    target: &'a [f64],
    config: &ForestConfig,
) -> Result<Forest> {
    let (n, p) = features.dim();
    if p < 1 {
        return Err(Error::InvalidParameter("forest needs at least one feature".into()));
    }
    if target.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} target values for {n} feature rows",
            target.len()
        )));
    }
    if config.n_trees == 0 || config.min_node_size == 0 {
        return Err(Error::InvalidParameter("n_trees and min_node_size must be positive".into()));
    }
    if n < 2 * config.min_node_size {
        return Err(Error::InvalidParameter(format!(
            "forest needs n >= 2*min_node_size = {}, got {n}",
            2 * config.min_node_size
        )));
    }
    if features.iter().any(|v| !v.is_finite()) || target.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("forest inputs must be finite".into()));
    }
    if target.iter().all(|&v| v == target[0]) {
        return Err(Error::DegenerateTarget);
    }

    let ctx = FitContext {
        features,
        target,
        mtry: config.effective_mtry(p),
        min_node_size: config.min_node_size,
        max_depth: config.max_depth.unwrap_or(u16::MAX as usize),
    };
    // global presort, shared by all trees
    let presorted: Vec<Vec<u32>> = (0..p)
        .into_par_iter()
        .map(|f| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_unstable_by(|&a, &b| {
                features[[a as usize, f]].total_cmp(&features[[b as usize, f]])
            });
            idx
        })
        .collect();

    let trees: Vec<Tree> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[t as u64]));
            let mut weights = vec![0u32; n];
            if config.bootstrap {
                for _ in 0..n {
                    weights[rng.gen_range(0..n)] += 1;
                }
            } else {
                weights.fill(1);
            }
            let feats: Vec<Vec<u32>> = presorted
                .iter()
                .map(|order| {
                    order.iter().copied().filter(|&r| weights[r as usize] > 0).collect()
                })
                .collect();
            let mut builder = TreeBuilder {
                ctx: &ctx,
                weights,
                nodes: Vec::new(),
                rng,
                scratch: vec![0usize; p],
            };
            builder.grow(feats, 0);
            Tree { nodes: builder.nodes, in_bag: builder.weights }
        })
        .collect();

    let d_max = (n as f64 / config.min_node_size as f64).log2().ceil().max(0.0);
    Ok(Forest { trees, n_features: p, n_rows: n, d_max })
}

/// Mean minimal depth per variable; a variable is selected when its mean
/// depth does not exceed the average over all variables.
pub fn minimal_depth_vimp(forest: &Forest) -> VimpReport {
    let p = forest.n_features;
    let mut mean = vec![0.0; p];
    for tree in &forest.trees {
        for (m, d) in mean.iter_mut().zip(tree.minimal_depths(p, forest.d_max)) {
            *m += d;
        }
    }
    for m in &mut mean {
        *m /= forest.trees.len() as f64;
    }
    let threshold = mean.iter().sum::<f64>() / p as f64;
    let selected = mean.iter().map(|&m| m <= threshold).collect();
    VimpReport { mean_minimal_depth: mean, threshold, selected, d_max: forest.d_max }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_distr::StandardNormal;

    fn random_features(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
    }

    fn tree_shape(t: &Tree) -> Vec<(Option<usize>, u16, u64)> {
        t.nodes.iter().map(|n| (n.split_feature, n.depth, n.split_value.to_bits())).collect()
    }

    #[test]
    fn planted_linear_signal_found() {
        let mut hits = 0;
        for seed in 0..100 {
            let x = random_features(300, 5, 900 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(7_000 + seed);
            let y: Vec<f64> = (0..300)
                .map(|i| 3.0 * x[[i, 0]] + 0.01 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let cfg = ForestConfig { n_trees: 50, seed, ..Default::default() };
            let forest = fit_forest(x.view(), &y, &cfg).unwrap();
            let vimp = minimal_depth_vimp(&forest);
            let best = vimp
                .mean_minimal_depth
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            if best == 0 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "signal feature ranked first in only {hits}/100 fits");
    }

    #[test]
    fn single_tree_recalls_pure_data() {
        // y is constant on each side of x0 = 0.5; leaves become pure, so a
        // training point predicts exactly its leaf mean
        let n = 64;
        let mut x = Array2::zeros((n, 2));
        let mut y = vec![0.0; n];
        for i in 0..n {
            x[[i, 0]] = i as f64 / n as f64;
            x[[i, 1]] = (i as f64 * 0.37).sin();
            y[i] = if x[[i, 0]] < 0.5 { -2.0 } else { 4.0 };
        }
        let cfg = ForestConfig {
            n_trees: 1,
            mtry: Some(2),
            min_node_size: 1,
            bootstrap: false,
            seed: 3,
            ..Default::default()
        };
        let forest = fit_forest(x.view(), &y, &cfg).unwrap();
        for i in 0..n {
            let row: Vec<f64> = x.row(i).to_vec();
            assert_eq!(forest.predict(&row), y[i]);
        }
    }

    #[test]
    fn relabeling_symmetry() {
        let n = 200;
        let x = random_features(n, 4, 31);
        let y: Vec<f64> = (0..n).map(|i| x[[i, 1]] + 0.5 * x[[i, 3]] * x[[i, 3]]).collect();
        let cfg =
            ForestConfig { n_trees: 10, mtry: Some(4), seed: 5, ..Default::default() };
        let base = minimal_depth_vimp(&fit_forest(x.view(), &y, &cfg).unwrap());

        // swap feature columns 0<->1 and 2<->3
        let perm = [1usize, 0, 3, 2];
        let mut xp = Array2::zeros((n, 4));
        for i in 0..n {
            for (to, &from) in perm.iter().enumerate() {
                xp[[i, to]] = x[[i, from]];
            }
        }
        let permuted = minimal_depth_vimp(&fit_forest(xp.view(), &y, &cfg).unwrap());
        for (to, &from) in perm.iter().enumerate() {
            assert_eq!(
                base.mean_minimal_depth[from], permuted.mean_minimal_depth[to],
                "depth of relabeled feature differs"
            );
        }
    }

    #[test]
    fn dominant_feature_splits_every_root() {
        let n = 256;
        let x = random_features(n, 3, 17);
        let y: Vec<f64> = (0..n).map(|i| x[[i, 0]]).collect();
        let cfg =
            ForestConfig { n_trees: 30, mtry: Some(3), seed: 11, ..Default::default() };
        let forest = fit_forest(x.view(), &y, &cfg).unwrap();
        let vimp = minimal_depth_vimp(&forest);
        assert_eq!(vimp.mean_minimal_depth[0], 0.0);
        assert!(vimp.selected[0]);
    }

    #[test]
    fn noise_feature_stays_near_proxy_depth() {
        let n = 400;
        let x = random_features(n, 3, 23);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let y: Vec<f64> = (0..n)
            .map(|i| 2.0 * x[[i, 0]] + x[[i, 1]] + 0.05 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let cfg =
            ForestConfig { n_trees: 100, mtry: Some(3), seed: 37, ..Default::default() };
        let forest = fit_forest(x.view(), &y, &cfg).unwrap();
        let vimp = minimal_depth_vimp(&forest);
        assert!(
            (vimp.mean_minimal_depth[2] - forest.d_max).abs() <= 1.0,
            "noise depth {} vs d_max {}",
            vimp.mean_minimal_depth[2],
            forest.d_max
        );
        assert!(!vimp.selected[2]);
    }

    #[test]
    fn mean_threshold_selects_at_least_one() {
        let n = 150;
        let x = random_features(n, 6, 41);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let forest = fit_forest(
            x.view(),
            &y,
            &ForestConfig { n_trees: 20, seed: 47, ..Default::default() },
        )
        .unwrap();
        let vimp = minimal_depth_vimp(&forest);
        assert!(vimp.selected.iter().any(|&s| s));
    }

    #[test]
    fn deterministic_under_seed() {
        let n = 180;
        let x = random_features(n, 4, 53);
        let y: Vec<f64> = (0..n).map(|i| x[[i, 2]] * 2.0 - x[[i, 0]]).collect();
        let cfg = ForestConfig { n_trees: 12, seed: 59, ..Default::default() };
        let a = fit_forest(x.view(), &y, &cfg).unwrap();
        let b = fit_forest(x.view(), &y, &cfg).unwrap();
        for (ta, tb) in a.trees.iter().zip(&b.trees) {
            assert_eq!(tree_shape(ta), tree_shape(tb));
        }
    }

    #[test]
    fn oob_error_beats_target_variance() {
        let n = 400;
        let x = random_features(n, 5, 61);
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let y: Vec<f64> = (0..n)
            .map(|i| 3.0 * x[[i, 0]] + 0.2 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let forest = fit_forest(
            x.view(),
            &y,
            &ForestConfig { n_trees: 60, seed: 71, ..Default::default() },
        )
        .unwrap();
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
        let oob = forest.oob_error(x.view(), &y).unwrap();
        assert!(oob < var, "oob {oob} not below variance {var}");
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let x = random_features(50, 2, 73);
        assert!(matches!(
            fit_forest(x.view(), &vec![1.0; 50], &ForestConfig::default()),
            Err(Error::DegenerateTarget)
        ));
        let y: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let cfg = ForestConfig { min_node_size: 30, ..Default::default() };
        assert!(fit_forest(x.view(), &y, &cfg).is_err());
    }
}
