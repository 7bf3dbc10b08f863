//! Conditioning-set construction for the causality-measure variants.
//!
//! Estimating direct causality for a pair in a K-variable system nominally
//! conditions on all K-2 confounders, which ruins the neighbor estimator as
//! K grows. Each variant replaces the full set with a small subset:
//!
//! - `1A/1B` (`2A/2B`): the most (least) associated confounders to the
//!   driver, by correlation (A) or mutual information (B), capped at `nc`;
//! - `3A/3B` (`4A/4B`): the same against the response;
//! - `5A/5B`: confounders picked by random-forest minimal depth when
//!   predicting the driver (response) from the confounders' lagged values;
//! - `5C`: the union of the `5A` and `5B` selections.
//!
//! Connectivity variants rank only confounders whose association is
//! significant at level alpha; when nothing qualifies the measure falls back
//! to the bivariate transfer entropy. Selection happens once per pair on the
//! original data and is reused by every surrogate, so the surrogate test
//! randomizes the measure, not the selection.
//!
//! [`AnalysisContext`] caches the per-realization association matrices and
//! forest selections so that evaluating many pairs and variants on one
//! dataset does not recompute them.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use crate::association::{mi_association, pearson};
use crate::error::{Error, Result};
use crate::forest::{fit_forest, minimal_depth_vimp, ForestConfig};
use crate::measures::{PairSpec, PreparedMeasure};
use crate::rng::{derive_seed, stream};
use crate::timeseries::{Dataset, EstimationParams};

/// Association measure behind a connectivity criterion ("A" = correlation,
/// "B" = mutual information).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionCriterion {
    Correlation,
    MutualInformation,
}

/// Rank direction of a connectivity criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankOrder {
    Most,
    Least,
}

/// Which endpoint of the pair the confounders are ranked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anchor {
    Driver,
    Response,
}

/// Prediction target of the random-forest criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RfTarget {
    Driver,
    Response,
    Both,
}

/// One causality measure of the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum VariantId {
    /// Bivariate transfer entropy.
    Te,
    /// Partial transfer entropy on all K-2 confounders.
    Pte,
    /// PTE on the `nc` top- or bottom-ranked significantly associated
    /// confounders.
    Connectivity { criterion: SelectionCriterion, order: RankOrder, anchor: Anchor, nc: usize },
    /// PTE on the random-forest-selected confounders.
    RandomForest { target: RfTarget, forest: ForestConfig },
}

impl VariantId {
    /// Parses a variant label (`TE`, `PTE`, `1A`..`4B`, `5A`..`5C`).
    pub fn parse(label: &str, nc: usize, forest: ForestConfig) -> Result<Self> {
        use {Anchor::*, RankOrder::*, SelectionCriterion::*};
        let up = label.to_ascii_uppercase();
        let conn = |criterion, order, anchor| {
            if nc == 0 {
                return Err(Error::InvalidParameter(format!(
                    "variant {up} needs nc >= 1 conditioning variables"
                )));
            }
            Ok(VariantId::Connectivity { criterion, order, anchor, nc })
        };
        match up.as_str() {
            "TE" => Ok(VariantId::Te),
            "PTE" => Ok(VariantId::Pte),
            "1A" => conn(Correlation, Most, Driver),
            "1B" => conn(MutualInformation, Most, Driver),
            "2A" => conn(Correlation, Least, Driver),
            "2B" => conn(MutualInformation, Least, Driver),
            "3A" => conn(Correlation, Most, Response),
            "3B" => conn(MutualInformation, Most, Response),
            "4A" => conn(Correlation, Least, Response),
            "4B" => conn(MutualInformation, Least, Response),
            "5A" => Ok(VariantId::RandomForest { target: RfTarget::Driver, forest }),
            "5B" => Ok(VariantId::RandomForest { target: RfTarget::Response, forest }),
            "5C" => Ok(VariantId::RandomForest { target: RfTarget::Both, forest }),
            other => Err(Error::InvalidParameter(format!("unknown variant '{other}'"))),
        }
    }

    pub fn label(&self) -> &'static str {
        use {Anchor::*, RankOrder::*, SelectionCriterion::*};
        match self {
            VariantId::Te => "TE",
            VariantId::Pte => "PTE",
            VariantId::Connectivity { criterion, order, anchor, .. } => {
                match (order, anchor, criterion) {
                    (Most, Driver, Correlation) => "1A",
                    (Most, Driver, MutualInformation) => "1B",
                    (Least, Driver, Correlation) => "2A",
                    (Least, Driver, MutualInformation) => "2B",
                    (Most, Response, Correlation) => "3A",
                    (Most, Response, MutualInformation) => "3B",
                    (Least, Response, Correlation) => "4A",
                    (Least, Response, MutualInformation) => "4B",
                }
            }
            VariantId::RandomForest { target, .. } => match target {
                RfTarget::Driver => "5A",
                RfTarget::Response => "5B",
                RfTarget::Both => "5C",
            },
        }
    }

    /// Stable identifier distinguishing the same variant at different `nc`.
    pub fn key(&self) -> String {
        match self {
            VariantId::Connectivity { nc, .. } => format!("{}_nc{nc}", self.label()),
            _ => self.label().to_string(),
        }
    }

    pub fn nc(&self) -> Option<usize> {
        match self {
            VariantId::Connectivity { nc, .. } => Some(*nc),
            _ => None,
        }
    }
}

/// Per-confounder evidence behind one selection.
#[derive(Debug, Clone, Serialize)]
pub struct ConfounderDiagnostic {
    pub variable: usize,
    /// Association value (signed r, MI in nats) or forest minimal depth.
    pub value: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
    pub selected: bool,
}

/// Result of building a conditioning set.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionOutcome {
    /// Selected variables, ranked; empty for TE and on fallback.
    pub conditioning: Vec<usize>,
    /// True when a connectivity/RF variant found nothing to condition on and
    /// the bivariate TE is estimated instead.
    pub fallback_to_te: bool,
    pub diagnostics: Vec<ConfounderDiagnostic>,
}

/// Symmetric pairwise association matrix over all variables.
struct AssocMatrix {
    k: usize,
    value: Vec<f64>,
    p_value: Vec<f64>,
    significant: Vec<bool>,
}

impl AssocMatrix {
    fn at(&self, i: usize, j: usize) -> (f64, f64, bool) {
        let idx = i * self.k + j;
        (self.value[idx], self.p_value[idx], self.significant[idx])
    }
}

type RfKey = (usize, usize, bool, ForestKey);
type ForestKey = (usize, Option<usize>, usize, Option<usize>, bool);

struct RfSelection {
    /// Selected variables, ascending.
    selected: Vec<usize>,
    /// (variable, minimal depth) per confounder, ascending by variable.
    depths: Vec<(usize, f64)>,
}

/// Shared state for evaluating many pairs and variants on one dataset:
/// the dataset, the hyperparameters, the seed, and lazily computed
/// association matrices and forest selections.
pub struct AnalysisContext<'a> {
    pub data: &'a Dataset,
    pub params: EstimationParams,
    pub seed: u64,
    pub assoc_permutations: usize,
    pearson_cache: Mutex<Option<Arc<AssocMatrix>>>,
    mi_cache: Mutex<Option<Arc<AssocMatrix>>>,
    rf_cache: Mutex<HashMap<RfKey, Arc<RfSelection>>>,
}

impl<'a> AnalysisContext<'a> {
    pub fn new(data: &'a Dataset, params: EstimationParams, seed: u64) -> Self {
        Self {
            data,
            params,
            seed,
            assoc_permutations: 100,
            pearson_cache: Mutex::new(None),
            mi_cache: Mutex::new(None),
            rf_cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_assoc_permutations(mut self, n_perm: usize) -> Self {
        self.assoc_permutations = n_perm;
        self
    }

    fn assoc_matrix(&self, criterion: SelectionCriterion) -> Result<Arc<AssocMatrix>> {
        let cache = match criterion {
            SelectionCriterion::Correlation => &self.pearson_cache,
            SelectionCriterion::MutualInformation => &self.mi_cache,
        };
        if let Some(m) = cache.lock().unwrap().as_ref() {
            return Ok(Arc::clone(m));
        }
        let k = self.data.k();
        let pairs: Vec<(usize, usize)> =
            (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
        let computed: Vec<((usize, usize), crate::association::AssociationResult)> = pairs
            .into_par_iter()
            .map(|(i, j)| {
                let x = self.data.column_vec(i);
                let y = self.data.column_vec(j);
                let res = match criterion {
                    SelectionCriterion::Correlation => pearson(&x, &y, self.params.alpha),
                    SelectionCriterion::MutualInformation => mi_association(
                        &x,
                        &y,
                        self.params.k,
                        self.assoc_permutations,
                        self.params.alpha,
                        derive_seed(self.seed, &[stream::ASSOCIATION, i as u64, j as u64]),
                    ),
                };
                res.map(|r| ((i, j), r))
            })
            .collect::<Result<_>>()?;
        let mut m = AssocMatrix {
            k,
            value: vec![0.0; k * k],
            p_value: vec![1.0; k * k],
            significant: vec![false; k * k],
        };
        for ((i, j), r) in computed {
            for idx in [i * k + j, j * k + i] {
                m.value[idx] = r.value;
                m.p_value[idx] = r.p_value;
                m.significant[idx] = r.significant;
            }
        }
        let arc = Arc::new(m);
        *cache.lock().unwrap() = Some(Arc::clone(&arc));
        Ok(arc)
    }

    /// Random-forest confounder selection for one pair and target role.
    fn rf_selection(
        &self,
        driver: usize,
        response: usize,
        target_is_driver: bool,
        forest_cfg: &ForestConfig,
    ) -> Result<Arc<RfSelection>> {
        let fkey: ForestKey = (
            forest_cfg.n_trees,
            forest_cfg.mtry,
            forest_cfg.min_node_size,
            forest_cfg.max_depth,
            forest_cfg.bootstrap,
        );
        let key: RfKey = (driver, response, target_is_driver, fkey);
        if let Some(s) = self.rf_cache.lock().unwrap().get(&key) {
            return Ok(Arc::clone(s));
        }

        let k = self.data.k();
        let n = self.data.n();
        let m = self.params.m;
        let confounders: Vec<usize> =
            (0..k).filter(|&v| v != driver && v != response).collect();
        let target_var = if target_is_driver { driver } else { response };
        if n <= m {
            return Err(Error::SeriesTooShort { n_eff: 0, min: 1 });
        }
        let rows = n - m;
        // features: lags 1..m of every confounder, predicting the target's
        // current value
        let mut features = ndarray::Array2::zeros((rows, confounders.len() * m));
        for (ci, &v) in confounders.iter().enumerate() {
            let col = self.data.column_vec(v);
            for r in 0..rows {
                for lag in 1..=m {
                    features[[r, ci * m + lag - 1]] = col[r + m - lag];
                }
            }
        }
        let target: Vec<f64> = self.data.column_vec(target_var)[m..].to_vec();
        let seed = derive_seed(
            self.seed,
            &[stream::FOREST, driver as u64, response as u64, target_is_driver as u64],
        );
        let cfg = ForestConfig { seed, ..*forest_cfg };
        let forest = fit_forest(features.view(), &target, &cfg)?;
        let vimp = minimal_depth_vimp(&forest);

        // depth of a variable = best depth over its lag features
        let depths: Vec<(usize, f64)> = confounders
            .iter()
            .enumerate()
            .map(|(ci, &v)| {
                let d = (0..m)
                    .map(|l| vimp.mean_minimal_depth[ci * m + l])
                    .fold(f64::INFINITY, f64::min);
                (v, d)
            })
            .collect();
        let threshold =
            depths.iter().map(|&(_, d)| d).sum::<f64>() / depths.len().max(1) as f64;
        let selected: Vec<usize> =
            depths.iter().filter(|&&(_, d)| d <= threshold).map(|&(v, _)| v).collect();
        let arc = Arc::new(RfSelection { selected, depths });
        self.rf_cache.lock().unwrap().insert(key, Arc::clone(&arc));
        Ok(arc)
    }
}

fn check_pair(data: &Dataset, driver: usize, response: usize) -> Result<()> {
    for v in [driver, response] {
        if v >= data.k() {
            return Err(Error::IndexOutOfRange { index: v, count: data.k() });
        }
    }
    if driver == response {
        return Err(Error::InvalidParameter("driver and response must differ".into()));
    }
    Ok(())
}

/// Builds the conditioning set prescribed by `variant` for one ordered pair.
pub fn select_conditioning_in(
    ctx: &AnalysisContext<'_>,
    driver: usize,
    response: usize,
    variant: &VariantId,
) -> Result<SelectionOutcome> {
    check_pair(ctx.data, driver, response)?;
    let confounders: Vec<usize> =
        (0..ctx.data.k()).filter(|&v| v != driver && v != response).collect();

    match variant {
        VariantId::Te => Ok(SelectionOutcome {
            conditioning: Vec::new(),
            fallback_to_te: false,
            diagnostics: Vec::new(),
        }),
        VariantId::Pte => Ok(SelectionOutcome {
            conditioning: confounders.clone(),
            fallback_to_te: confounders.is_empty(),
            diagnostics: confounders
                .iter()
                .map(|&v| ConfounderDiagnostic {
                    variable: v,
                    value: None,
                    p_value: None,
                    significant: true,
                    selected: true,
                })
                .collect(),
        }),
        VariantId::Connectivity { criterion, order, anchor, nc } => {
            let matrix = ctx.assoc_matrix(*criterion)?;
            let anchor_var = match anchor {
                Anchor::Driver => driver,
                Anchor::Response => response,
            };
            // rank key: |r| for correlation, raw value for MI
            let entry = |v: usize| {
                let (value, p, sig) = matrix.at(anchor_var, v);
                let rank = match criterion {
                    SelectionCriterion::Correlation => value.abs(),
                    SelectionCriterion::MutualInformation => value,
                };
                (v, value, p, sig, rank)
            };
            let mut significant: Vec<(usize, f64)> = confounders
                .iter()
                .map(|&v| entry(v))
                .filter(|e| e.3)
                .map(|e| (e.0, e.4))
                .collect();
            match order {
                RankOrder::Most => significant.sort_by(|a, b| b.1.total_cmp(&a.1)),
                RankOrder::Least => significant.sort_by(|a, b| a.1.total_cmp(&b.1)),
            }
            significant.truncate(*nc);
            let conditioning: Vec<usize> = significant.iter().map(|&(v, _)| v).collect();
            let diagnostics = confounders
                .iter()
                .map(|&v| {
                    let e = entry(v);
                    ConfounderDiagnostic {
                        variable: v,
                        value: Some(e.1),
                        p_value: Some(e.2),
                        significant: e.3,
                        selected: conditioning.contains(&v),
                    }
                })
                .collect();
            Ok(SelectionOutcome {
                fallback_to_te: conditioning.is_empty(),
                conditioning,
                diagnostics,
            })
        }
        VariantId::RandomForest { target, forest } => {
            if confounders.is_empty() {
                return Ok(SelectionOutcome {
                    conditioning: Vec::new(),
                    fallback_to_te: true,
                    diagnostics: Vec::new(),
                });
            }
            let selections = match target {
                RfTarget::Driver => vec![ctx.rf_selection(driver, response, true, forest)?],
                RfTarget::Response => vec![ctx.rf_selection(driver, response, false, forest)?],
                RfTarget::Both => vec![
                    ctx.rf_selection(driver, response, true, forest)?,
                    ctx.rf_selection(driver, response, false, forest)?,
                ],
            };
            let mut conditioning: Vec<usize> = Vec::new();
            for s in &selections {
                for &v in &s.selected {
                    if !conditioning.contains(&v) {
                        conditioning.push(v);
                    }
                }
            }
            conditioning.sort_unstable();
            let diagnostics = confounders
                .iter()
                .map(|&v| {
                    let depth = selections
                        .iter()
                        .flat_map(|s| s.depths.iter().filter(|&&(dv, _)| dv == v))
                        .map(|&(_, d)| d)
                        .fold(f64::INFINITY, f64::min);
                    ConfounderDiagnostic {
                        variable: v,
                        value: Some(depth),
                        p_value: None,
                        significant: conditioning.contains(&v),
                        selected: conditioning.contains(&v),
                    }
                })
                .collect();
            Ok(SelectionOutcome {
                fallback_to_te: conditioning.is_empty(),
                conditioning,
                diagnostics,
            })
        }
    }
}

/// The pair actually estimated for `variant`, after selection and fallback.
pub(crate) fn effective_pair(
    ctx: &AnalysisContext<'_>,
    driver: usize,
    response: usize,
    variant: &VariantId,
) -> Result<(PairSpec, SelectionOutcome)> {
    let outcome = select_conditioning_in(ctx, driver, response, variant)?;
    let conditioning =
        if outcome.fallback_to_te { Vec::new() } else { outcome.conditioning.clone() };
    Ok((PairSpec::new(driver, response, conditioning)?, outcome))
}

/// Measure value of `variant` for one ordered pair.
pub fn variant_measure_in(
    ctx: &AnalysisContext<'_>,
    driver: usize,
    response: usize,
    variant: &VariantId,
) -> Result<f64> {
    let (pair, _) = effective_pair(ctx, driver, response, variant)?;
    let prepared = PreparedMeasure::new(ctx.data, &pair, &ctx.params)?;
    prepared.evaluate(&ctx.data.column_vec(driver))
}

/// One-shot selection without a shared context.
pub fn select_conditioning(
    data: &Dataset,
    driver: usize,
    response: usize,
    variant: &VariantId,
    params: &EstimationParams,
    seed: u64,
) -> Result<SelectionOutcome> {
    select_conditioning_in(&AnalysisContext::new(data, *params, seed), driver, response, variant)
}

/// One-shot measure evaluation without a shared context.
pub fn variant_measure(
    data: &Dataset,
    driver: usize,
    response: usize,
    variant: &VariantId,
    params: &EstimationParams,
    seed: u64,
) -> Result<f64> {
    variant_measure_in(&AnalysisContext::new(data, *params, seed), driver, response, variant)
}
