//! Pairwise association measures with significance tests.
//!
//! The connectivity-based conditioning criteria rank confounders by their
//! association with the driver or response variable. Two measures are
//! offered: the linear correlation coefficient, tested parametrically via
//! the t statistic `t = r sqrt((n-2)/(1-r^2))`, and mutual information,
//! tested non-parametrically by permuting one of the series. Associations
//! are computed on the contemporaneous raw series, not on embeddings.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::knn::{mutual_information, PointCloud};
use crate::rng::{rng_from, stream};

/// Association value with its significance decision at level `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationResult {
    /// Correlation coefficient in [-1,1] or mutual information in nats.
    pub value: f64,
    pub p_value: f64,
    pub significant: bool,
}

impl AssociationResult {
    fn at_level(value: f64, p_value: f64, alpha: f64) -> Self {
        Self { value, p_value, significant: p_value < alpha }
    }
}

/// Cumulative distribution function of Student's t with `dof` degrees of
/// freedom.
pub fn t_cdf(t: f64, dof: usize) -> Result<f64> {
    if dof == 0 {
        return Err(Error::DomainError("t distribution needs dof >= 1".into()));
    }
    let dist =
        StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::DomainError(e.to_string()))?;
    Ok(dist.cdf(t))
}

fn check_series(x: &[f64], y: &[f64]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch("series lengths differ".into()));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::SeriesTooShort { n_eff: n, min: 2 });
    }
    for (name, s) in [("x", x), ("y", y)] {
        let first = s[0];
        if s.iter().all(|&v| v == first) {
            return Err(Error::ZeroVariance { column: name.into() });
        }
    }
    Ok(n)
}

/// Pearson correlation with a two-sided t test.
pub fn pearson(x: &[f64], y: &[f64], alpha: f64) -> Result<AssociationResult> {
    let n = check_series(x, y)?;
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let p = if 1.0 - r * r <= 0.0 {
        0.0
    } else {
        let t = r * ((nf - 2.0) / (1.0 - r * r)).sqrt();
        2.0 * (1.0 - t_cdf(t.abs(), n - 2)?)
    };
    Ok(AssociationResult::at_level(r, p, alpha))
}

/// Mutual information with a one-sided permutation test.
///
/// `y` is permuted `n_perm` times; the p-value is
/// `(1 + #{MI_perm >= MI_obs}) / (n_perm + 1)`.
pub fn mi_association(
    x: &[f64],
    y: &[f64],
    k: usize,
    n_perm: usize,
    alpha: f64,
    seed: u64,
) -> Result<AssociationResult> {
    check_series(x, y)?;
    if n_perm < 99 {
        return Err(Error::InvalidParameter(format!(
            "permutation test needs n_perm >= 99, got {n_perm}"
        )));
    }
    let cx = PointCloud::from_column(x)?;
    let cy = PointCloud::from_column(y)?;
    let observed = mutual_information(&cx, &cy, k)?;
    let mut rng = rng_from(seed, &[stream::ASSOCIATION]);
    let mut perm = y.to_vec();
    let mut at_least = 0usize;
    for _ in 0..n_perm {
        // Fisher-Yates on the permuted copy
        for i in (1..perm.len()).rev() {
            let j = rand::Rng::gen_range(&mut rng, 0..=i);
            perm.swap(i, j);
        }
        let cp = PointCloud::from_column(&perm)?;
        if mutual_information(&cx, &cp, k)? >= observed {
            at_least += 1;
        }
    }
    let p = (1 + at_least) as f64 / (n_perm + 1) as f64;
    Ok(AssociationResult::at_level(observed, p, alpha))
}
