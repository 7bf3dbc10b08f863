//! Scoring detected coupling networks against ground truth.
//!
//! A detected or true network is a K x K boolean adjacency over ordered
//! variable pairs (diagonal pinned false). Scoring counts TP/TN/FP/FN over
//! all K(K-1) pairs and reports sensitivity, specificity and F1. Networks
//! can be exported as DOT and JSON; detected edges are classified against
//! the truth as direct, indirect (truth-reachable through intermediates but
//! not adjacent) or spurious.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::significance::SurrogateTest;

/// K x K boolean adjacency of directed couplings; the diagonal is always
/// false.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingMatrix {
    k: usize,
    edges: Vec<bool>,
}

impl CouplingMatrix {
    pub fn new(k: usize) -> Self {
        Self { k, edges: vec![false; k * k] }
    }

    pub fn from_edges(k: usize, edges: &[(usize, usize)]) -> Self {
        let mut m = Self::new(k);
        for &(i, j) in edges {
            m.set(i, j, true);
        }
        m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Sets an edge; the diagonal is ignored.
    pub fn set(&mut self, from: usize, to: usize, present: bool) {
        if from != to {
            self.edges[from * self.k + to] = present;
        }
    }

    pub fn get(&self, from: usize, to: usize) -> bool {
        from != to && self.edges[from * self.k + to]
    }

    /// Ordered pairs (from, to) with an edge.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for from in 0..self.k {
            for to in 0..self.k {
                if self.get(from, to) {
                    out.push((from, to));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }

    /// True when `to` is reachable from `from` along directed edges.
    fn reachable(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.k];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            for w in 0..self.k {
                if self.get(v, w) && !seen[w] {
                    if w == to {
                        return true;
                    }
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        false
    }
}

/// Classification of a detected edge against the truth network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    /// The truth has this edge.
    Direct,
    /// No direct edge, but the truth reaches `to` from `from` through
    /// intermediates.
    Indirect,
    /// Not explained by the truth at all.
    Spurious,
}

/// Classifies one detected ordered pair against the truth.
pub fn classify_edge(truth: &CouplingMatrix, from: usize, to: usize) -> EdgeKind {
    if truth.get(from, to) {
        EdgeKind::Direct
    } else if truth.reachable(from, to) {
        EdgeKind::Indirect
    } else {
        EdgeKind::Spurious
    }
}

/// Confusion counts and derived metrics over ordered pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionSummary {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Sensitivity TP/(TP+FN); 1 when the truth has no positives.
    pub sen: f64,
    /// Specificity TN/(TN+FP); 1 when the truth has no negatives.
    pub spec: f64,
    /// F1 = 2TP/(2TP+FP+FN); 0 when that denominator is 0.
    pub f1: f64,
}

impl ConfusionSummary {
    pub fn from_counts(tp: usize, tn: usize, fp: usize, fn_: usize) -> Self {
        let sen = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
        let spec = if tn + fp == 0 { 1.0 } else { tn as f64 / (tn + fp) as f64 };
        let f1 =
            if 2 * tp + fp + fn_ == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
        Self { tp, tn, fp, fn_, sen, spec, f1 }
    }
}

/// Scores a detected network against the truth over all ordered pairs.
pub fn score(detected: &CouplingMatrix, truth: &CouplingMatrix) -> Result<ConfusionSummary> {
    if detected.k() != truth.k() {
        return Err(Error::DimensionMismatch(format!(
            "detected K={} vs truth K={}",
            detected.k(),
            truth.k()
        )));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for i in 0..truth.k() {
        for j in 0..truth.k() {
            if i == j {
                continue;
            }
            match (detected.get(i, j), truth.get(i, j)) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
            }
        }
    }
    Ok(ConfusionSummary::from_counts(tp, tn, fp, fn_))
}

/// Combines per-realization summaries: counts are pooled, metrics are the
/// arithmetic means of the per-realization metrics.
pub fn aggregate(runs: &[ConfusionSummary]) -> Result<ConfusionSummary> {
    if runs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = runs.len() as f64;
    Ok(ConfusionSummary {
        tp: runs.iter().map(|r| r.tp).sum(),
        tn: runs.iter().map(|r| r.tn).sum(),
        fp: runs.iter().map(|r| r.fp).sum(),
        fn_: runs.iter().map(|r| r.fn_).sum(),
        sen: runs.iter().map(|r| r.sen).sum::<f64>() / n,
        spec: runs.iter().map(|r| r.spec).sum::<f64>() / n,
        f1: runs.iter().map(|r| r.f1).sum::<f64>() / n,
    })
}

/// Builds the detected network from per-pair surrogate tests: an edge is
/// drawn exactly where the non-causality null was rejected.
pub fn extract_network(
    results: &BTreeMap<(usize, usize), SurrogateTest>,
    k: usize,
) -> Result<CouplingMatrix> {
    let mut m = CouplingMatrix::new(k);
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let test = results
                .get(&(i, j))
                .ok_or(Error::MissingPair { driver: i, response: j })?;
            m.set(i, j, test.reject);
        }
    }
    Ok(m)
}

/// One drawable edge of a network report.
#[derive(Debug, Clone, Serialize)]
pub struct NetworkEdge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
    /// Rejection rate over realizations (1.0 for single-run networks).
    pub rate: f64,
}

/// Classifies all detected edges against the truth, in deterministic order.
pub fn network_edges(
    detected: &CouplingMatrix,
    truth: &CouplingMatrix,
    labels: &[String],
    rates: Option<&BTreeMap<(usize, usize), f64>>,
) -> Vec<NetworkEdge> {
    detected
        .edge_list()
        .into_iter()
        .map(|(i, j)| NetworkEdge {
            from: labels[i].clone(),
            to: labels[j].clone(),
            kind: classify_edge(truth, i, j),
            rate: rates.and_then(|r| r.get(&(i, j)).copied()).unwrap_or(1.0),
        })
        .collect()
}

/// Renders a classified network as DOT. Direct edges are solid, indirect
/// ones dashed, spurious ones drawn as double lines.
pub fn to_dot(name: &str, labels: &[String], edges: &[NetworkEdge]) -> String {
    let mut out = String::new();
    out.push_str(&format!("digraph \"{name}\" {{\n"));
    out.push_str("  rankdir=LR;\n  node [shape=circle];\n");
    for l in labels {
        out.push_str(&format!("  \"{l}\";\n"));
    }
    for e in edges {
        let attrs = match e.kind {
            EdgeKind::Direct => String::new(),
            EdgeKind::Indirect => " [style=dashed]".into(),
            EdgeKind::Spurious => " [color=\"black:invis:black\"]".into(),
        };
        out.push_str(&format!("  \"{}\" -> \"{}\"{};\n", e.from, e.to, attrs));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_truth() -> CouplingMatrix {
        // 0 -> 1 -> 2, plus 3 isolated
        CouplingMatrix::from_edges(4, &[(0, 1), (1, 2)])
    }

    #[test]
    fn diagonal_is_pinned_false() {
        let mut m = CouplingMatrix::new(3);
        m.set(1, 1, true);
        assert!(!m.get(1, 1));
        assert_eq!(m.edge_count(), 0);
    }

    #[test]
    fn perfect_detection_scores_one() {
        let truth = chain_truth();
        let s = score(&truth, &truth).unwrap();
        assert_eq!((s.sen, s.spec, s.f1), (1.0, 1.0, 1.0));
        assert_eq!(s.tp + s.tn + s.fp + s.fn_, 12);
    }

    #[test]
    fn inverted_detection_scores_zero() {
        let truth = chain_truth();
        let mut inverted = CouplingMatrix::new(4);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    inverted.set(i, j, !truth.get(i, j));
                }
            }
        }
        let s = score(&inverted, &truth).unwrap();
        assert_eq!(s.sen, 0.0);
        assert_eq!(s.spec, 0.0);
    }

    #[test]
    fn hand_computed_counts() {
        // TP=2, FP=1, FN=1, TN=16 (K=5 gives 20 ordered pairs)
        let truth = CouplingMatrix::from_edges(5, &[(0, 1), (1, 2), (2, 3)]);
        let detected = CouplingMatrix::from_edges(5, &[(0, 1), (1, 2), (4, 0)]);
        let s = score(&detected, &truth).unwrap();
        assert_eq!((s.tp, s.fp, s.fn_, s.tn), (2, 1, 1, 16));
        assert!((s.sen - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.spec - 16.0 / 17.0).abs() < 1e-12);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_consistent_with_precision_recall() {
        let truth = CouplingMatrix::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]);
        for mask in 0..32u32 {
            let mut det = CouplingMatrix::new(5);
            for (b, &(i, j)) in [(0, 1), (1, 2), (2, 3), (0, 2), (4, 1)].iter().enumerate() {
                det.set(i, j, mask & (1 << b) != 0);
            }
            let s = score(&det, &truth).unwrap();
            if s.tp + s.fp > 0 && s.tp + s.fn_ > 0 && s.tp > 0 {
                let ppv = s.tp as f64 / (s.tp + s.fp) as f64;
                let expect = 2.0 * s.sen * ppv / (s.sen + ppv);
                assert!((s.f1 - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn score_invariant_under_relabeling() {
        let truth = chain_truth();
        let detected = CouplingMatrix::from_edges(4, &[(0, 1), (2, 0), (3, 1)]);
        let base = score(&detected, &truth).unwrap();
        let perm = [2usize, 0, 3, 1];
        let map = |m: &CouplingMatrix| {
            let mut out = CouplingMatrix::new(4);
            for (i, j) in m.edge_list() {
                out.set(perm[i], perm[j], true);
            }
            out
        };
        let s = score(&map(&detected), &map(&truth)).unwrap();
        assert_eq!(s, base);
    }

    #[test]
    fn vacuous_truth_conventions() {
        let empty = CouplingMatrix::new(3);
        let s = score(&empty, &empty).unwrap();
        assert_eq!((s.sen, s.spec, s.f1), (1.0, 1.0, 0.0));

        let mut full = CouplingMatrix::new(3);
        for i in 0..3 {
            for j in 0..3 {
                full.set(i, j, true);
            }
        }
        let s = score(&full, &full).unwrap();
        assert_eq!((s.sen, s.spec), (1.0, 1.0));
    }

    #[test]
    fn aggregate_means() {
        let a = ConfusionSummary::from_counts(4, 10, 2, 1);
        let b = ConfusionSummary::from_counts(2, 11, 1, 3);
        let single = aggregate(&[a]).unwrap();
        assert_eq!(single, a);
        let both = aggregate(&[a, b]).unwrap();
        assert_eq!(both.tp, 6);
        assert!((both.f1 - (a.f1 + b.f1) / 2.0).abs() < 1e-12);
        assert!((both.sen - (a.sen + b.sen) / 2.0).abs() < 1e-12);
        assert!(aggregate(&[]).is_err());

        let same = aggregate(&[a, a, a]).unwrap();
        assert!((same.f1 - a.f1).abs() < 1e-12);
    }

    #[test]
    fn extract_network_from_tests() {
        fn fake(reject: bool) -> SurrogateTest {
            SurrogateTest {
                observed: 0.1,
                surrogate_values: vec![0.0; 5],
                p_value: if reject { 0.01 } else { 0.5 },
                reject,
            }
        }
        let truth = chain_truth();
        let mut results = BTreeMap::new();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    results.insert((i, j), fake(truth.get(i, j)));
                }
            }
        }
        let net = extract_network(&results, 4).unwrap();
        assert_eq!(net, truth);

        results.remove(&(0, 1));
        assert!(matches!(
            extract_network(&results, 4),
            Err(Error::MissingPair { driver: 0, response: 1 })
        ));

        let accepting: BTreeMap<_, _> = (0..4)
            .flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| ((i, j), fake(false))))
            .collect();
        assert_eq!(extract_network(&accepting, 4).unwrap().edge_count(), 0);
    }

    #[test]
    fn edge_classification() {
        let truth = chain_truth();
        assert_eq!(classify_edge(&truth, 0, 1), EdgeKind::Direct);
        assert_eq!(classify_edge(&truth, 0, 2), EdgeKind::Indirect);
        assert_eq!(classify_edge(&truth, 2, 0), EdgeKind::Spurious);
        assert_eq!(classify_edge(&truth, 0, 3), EdgeKind::Spurious);
    }

    #[test]
    fn dot_rendering_styles() {
        let truth = chain_truth();
        let detected = CouplingMatrix::from_edges(4, &[(0, 1), (0, 2), (3, 0)]);
        let labels: Vec<String> = (1..=4).map(|i| format!("X{i}")).collect();
        let edges = network_edges(&detected, &truth, &labels, None);
        let dot = to_dot("test", &labels, &edges);
        assert!(dot.contains("\"X1\" -> \"X2\";"));
        assert!(dot.contains("\"X1\" -> \"X3\" [style=dashed];"));
        assert!(dot.contains("\"X4\" -> \"X1\" [color=\"black:invis:black\"];"));
    }
}
