//! Cost-sensitive gradient-boosted decision trees.
//!
//! Newton boosting on weighted logistic loss. Each round computes, for
//! instance weight `w` and current probability `p`,
//!
//! ```text
//! g = w (p - y)        h = w p (1 - p)
//! ```
//!
//! and grows one tree depth-first with exact greedy split enumeration. A split
//! of a node with sums `G, H` into `(GL, HL)` and `(GR, HR)` scores
//!
//! ```text
//! gain = 1/2 [ GL^2/(HL + lambda) + GR^2/(HR + lambda) - G^2/(H + lambda) ]
//! ```
//!
//! and is kept when `gain > gamma` and both children carry at least
//! `min_child_weight` hessian. Leaves take `-G / (H + lambda)`, clipped to
//! `max_delta_step` when that is positive. `lambda` is fixed at [`LAMBDA`].

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{instance_cost, neutral_probability, InstanceCosts, ThresholdRule};
use crate::data::{CladRecord, Dataset, FeatureMatrix, FEATURE_NAMES};
use crate::error::{Error, Result};
use crate::{open_unit, sigmoid};

/// L2 penalty on leaf weights.
pub const LAMBDA: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtParams {
    pub max_depth: usize,
    pub min_child_weight: f64,
    /// Upper bound on boosting rounds.
    pub n_rounds: usize,
    pub learning_rate: f64,
    /// Minimum split gain.
    pub gamma: f64,
    pub subsample: f64,
    pub colsample: f64,
    /// Leaf weight clip; 0 disables.
    pub max_delta_step: f64,
    /// Patience, in rounds, on validation total cost.
    pub early_stop_rounds: usize,
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            max_depth: 6,
            min_child_weight: 3.0,
            n_rounds: 60,
            learning_rate: 0.1,
            gamma: 0.0,
            subsample: 1.0,
            colsample: 1.0,
            max_delta_step: 0.0,
            early_stop_rounds: 100,
            seed: 0,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::config("max_depth", "must be >= 1"));
        }
        if self.n_rounds < 1 {
            return Err(Error::config("n_rounds", "must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be > 0"));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::config("subsample", "must lie in (0, 1]"));
        }
        if !(self.colsample > 0.0 && self.colsample <= 1.0) {
            return Err(Error::config("colsample", "must lie in (0, 1]"));
        }
        if !(self.min_child_weight.is_finite() && self.min_child_weight >= 0.0) {
            return Err(Error::config("min_child_weight", "must be >= 0"));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::config("gamma", "must be >= 0"));
        }
        if !(self.max_delta_step.is_finite() && self.max_delta_step >= 0.0) {
            return Err(Error::config("max_delta_step", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `value < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf {
        weight: f64,
    },
}

/// Node arena; the root is `nodes[0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(weight: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { weight }],
        }
    }

    pub fn leaf_value(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { weight } => return *weight,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if row[*feature] < *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn split_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub trees: Vec<Tree>,
    /// Initial log-odds.
    pub base_score: f64,
    pub schema: Vec<String>,
    pub params: GbdtParams,
}

impl GbdtModel {
    /// `base_score + learning_rate * sum of leaf weights`.
    pub fn raw_score(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.leaf_value(row)).sum();
        self.base_score + self.params.learning_rate * sum
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.schema.len() {
            return Err(Error::Schema(format!(
                "model expects {} features, got {}",
                self.schema.len(),
                row.len()
            )));
        }
        Ok(open_unit(sigmoid(self.raw_score(row))))
    }

    pub fn predict_record(&self, rec: &CladRecord) -> Result<f64> {
        check_case_schema(&self.schema)?;
        self.predict_proba(&rec.features())
    }

    /// The model restricted to its first `n_trees` trees.
    pub fn prefix(&self, n_trees: usize) -> GbdtModel {
        GbdtModel {
            trees: self.trees[..n_trees.min(self.trees.len())].to_vec(),
            ..self.clone()
        }
    }

    /// Total split gain per feature, normalised to sum to 1. A model without
    /// splits yields all zeros.
    pub fn feature_importance(&self) -> Vec<f64> {
        let mut gains = vec![0.0; self.schema.len()];
        for tree in &self.trees {
            for node in &tree.nodes {
                if let Node::Split { feature, gain, .. } = node {
                    gains[*feature] += gain;
                }
            }
        }
        let total: f64 = gains.iter().sum();
        if total > 0.0 {
            gains.iter_mut().for_each(|g| *g /= total);
        } else {
            log::warn!("model has no splits; feature importance is all zero");
        }
        gains
    }

    /// The `k` most important features, highest first, ties by schema order.
    pub fn top_features(&self, k: usize) -> Vec<(String, f64)> {
        let imp = self.feature_importance();
        let mut pairs: Vec<(usize, f64)> = imp.into_iter().enumerate().collect();
        pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        pairs
            .into_iter()
            .take(k)
            .map(|(i, v)| (self.schema[i].clone(), v))
            .collect()
    }
}

pub(crate) fn check_case_schema(schema: &[String]) -> Result<()> {
    if schema.len() != FEATURE_NAMES.len() || schema.iter().zip(FEATURE_NAMES).any(|(a, b)| a != b) {
        return Err(Error::Schema(format!(
            "model schema [{}] does not match the case schema",
            schema.join(", ")
        )));
    }
    Ok(())
}

/// A chosen split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Second-order structure score improvement of a split.
#[inline]
pub fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64) -> f64 {
    let g = gl + gr;
    let h = hl + hr;
    0.5 * (gl * gl / (hl + LAMBDA) + gr * gr / (hr + LAMBDA) - g * g / (h + LAMBDA))
}

/// Best split of `rows` over `features`, regardless of sign of gain.
///
/// Candidates are midpoints between consecutive distinct values; both children
/// must carry at least `min_child_weight` hessian. Ties keep the lowest feature
/// index, then the lowest threshold.
pub fn best_split(
    x: &FeatureMatrix,
    rows: &[usize],
    grad: &[f64],
    hess: &[f64],
    features: &[usize],
    min_child_weight: f64,
) -> Option<SplitCandidate> {
    let g: f64 = rows.iter().map(|&r| grad[r]).sum();
    let h: f64 = rows.iter().map(|&r| hess[r]).sum();
    let mut best: Option<SplitCandidate> = None;
    let mut sorted = rows.to_vec();
    for &f in features {
        sorted.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)));
        if let Some(c) = scan_sorted(&sorted, f, x, grad, hess, g, h, min_child_weight) {
            if best.is_none_or(|b| c.gain > b.gain) {
                best = Some(c);
            }
        }
    }
    best
}

/// Linear scan over rows pre-sorted by `feature`.
#[allow(clippy::too_many_arguments)]
fn scan_sorted(
    sorted: &[usize],
    feature: usize,
    x: &FeatureMatrix,
    grad: &[f64],
    hess: &[f64],
    g_total: f64,
    h_total: f64,
    min_child_weight: f64,
) -> Option<SplitCandidate> {
    let mut gl = 0.0;
    let mut hl = 0.0;
    let mut best: Option<SplitCandidate> = None;
    for w in 0..sorted.len().saturating_sub(1) {
        let r = sorted[w];
        gl += grad[r];
        hl += hess[r];
        let lo = x.get(r, feature);
        let hi = x.get(sorted[w + 1], feature);
        if !(lo < hi) {
            continue;
        }
        let hr = h_total - hl;
        if hl < min_child_weight || hr < min_child_weight {
            continue;
        }
        let gain = split_gain(gl, hl, g_total - gl, hr);
        if best.is_none_or(|b| gain > b.gain) {
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold <= lo {
                threshold = hi;
            }
            best = Some(SplitCandidate {
                feature,
                threshold,
                gain,
            });
        }
    }
    best
}

fn leaf_weight(g: f64, h: f64, max_delta_step: f64) -> f64 {
    let w = -g / (h + LAMBDA);
    if max_delta_step > 0.0 {
        w.clamp(-max_delta_step, max_delta_step)
    } else {
        w
    }
}

struct TreeBuilder<'a> {
    x: &'a FeatureMatrix,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbdtParams,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
}

impl TreeBuilder<'_> {
    /// `lists[i]` holds the node's rows sorted by `features[i]`.
    fn grow(&mut self, lists: Vec<Vec<usize>>, features: &[usize], depth: usize) -> usize {
        let rows = &lists[0];
        let g: f64 = rows.iter().map(|&r| self.grad[r]).sum();
        let h: f64 = rows.iter().map(|&r| self.hess[r]).sum();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            weight: leaf_weight(g, h, self.params.max_delta_step),
        });
        if depth >= self.params.max_depth || rows.len() < 2 {
            return id;
        }

        let mut best: Option<SplitCandidate> = None;
        for (list, &f) in lists.iter().zip(features) {
            let c = scan_sorted(
                list,
                f,
                self.x,
                self.grad,
                self.hess,
                g,
                h,
                self.params.min_child_weight,
            );
            if let Some(c) = c {
                if best.is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        let Some(split) = best.filter(|s| s.gain > self.params.gamma && s.gain > 0.0) else {
            return id;
        };

        for &r in rows {
            self.goes_left[r] = self.x.get(r, split.feature) < split.threshold;
        }
        let mut left_lists = Vec::with_capacity(lists.len());
        let mut right_lists = Vec::with_capacity(lists.len());
        for list in lists {
            let (l, r): (Vec<usize>, Vec<usize>) = list.into_iter().partition(|&r| self.goes_left[r]);
            left_lists.push(l);
            right_lists.push(r);
        }
        let left = self.grow(left_lists, features, depth + 1);
        let right = self.grow(right_lists, features, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            gain: split.gain,
        };
        id
    }
}

/// Held-out data for early stopping on total misclassification cost.
pub struct Validation<'a> {
    pub x: &'a FeatureMatrix,
    pub labels: &'a [bool],
    /// Costs used to charge errors and set thresholds.
    pub costs: &'a [InstanceCosts],
    /// Costs the training weights came from, when training was cost weighted.
    pub training_costs: Option<&'a [InstanceCosts]>,
    pub rule: ThresholdRule,
}

impl Validation<'_> {
    fn total_cost(&self, raw: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..raw.len() {
            let mut p = sigmoid(raw[i]);
            if let Some(tc) = self.training_costs {
                p = neutral_probability(p, &tc[i]);
            }
            let decision = p > self.rule.threshold(&self.costs[i])?;
            total += instance_cost(self.labels[i], decision, &self.costs[i]);
        }
        Ok(total)
    }
}

/// Trains on the case dataset's features.
pub fn train_dataset(ds: &Dataset, params: &GbdtParams, weights: &[f64]) -> Result<GbdtModel> {
    let labels = ds.labels()?;
    train(&ds.feature_matrix(), &labels, weights, params, ds.schema.clone(), None)
}

pub fn train(
    x: &FeatureMatrix,
    labels: &[bool],
    weights: &[f64],
    params: &GbdtParams,
    schema: Vec<String>,
    validation: Option<&Validation<'_>>,
) -> Result<GbdtModel> {
    params.validate()?;
    let n = x.n_rows;
    if n == 0 {
        return Err(Error::Empty("no training rows".into()));
    }
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: labels.len(),
        });
    }
    if weights.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: weights.len(),
        });
    }
    if schema.len() != x.n_cols {
        return Err(Error::Schema(format!(
            "{} schema names for {} columns",
            schema.len(),
            x.n_cols
        )));
    }
    if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Domain(format!("weight {i} must be positive, got {}", weights[i])));
    }
    if let Some(i) = x.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "non-finite value in row {}, feature `{}`",
            i / x.n_cols + 1,
            schema[i % x.n_cols]
        )));
    }
    if let Some(v) = validation {
        if v.x.n_cols != x.n_cols || v.labels.len() != v.x.n_rows || v.costs.len() != v.x.n_rows {
            return Err(Error::Mismatch("validation set shape".into()));
        }
    }

    let w_total: f64 = weights.iter().sum();
    let w_pos: f64 = labels.iter().zip(weights).filter(|(y, _)| **y).map(|(_, w)| w).sum();
    let prevalence = (w_pos / w_total).clamp(1e-6, 1.0 - 1e-6);
    let base_score = (prevalence / (1.0 - prevalence)).ln();
    let mut model = GbdtModel {
        trees: Vec::new(),
        base_score,
        schema,
        params: params.clone(),
    };
    if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
        log::warn!("training labels contain a single class; returning a constant model");
        return Ok(model);
    }

    let order: Vec<Vec<usize>> = (0..x.n_cols)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)));
            idx
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut raw = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut in_sample = vec![true; n];
    let mut goes_left = vec![false; n];

    let mut valid_raw = validation.map(|v| vec![base_score; v.x.n_rows]);
    let mut best_cost = match (validation, &valid_raw) {
        (Some(v), Some(r)) => v.total_cost(r)?,
        _ => f64::INFINITY,
    };
    let mut best_trees = 0usize;

    for round in 0..params.n_rounds {
        for i in 0..n {
            let p = sigmoid(raw[i]);
            let y = if labels[i] { 1.0 } else { 0.0 };
            grad[i] = weights[i] * (p - y);
            hess[i] = weights[i] * p * (1.0 - p);
        }

        if params.subsample < 1.0 {
            let take = ((params.subsample * n as f64).round() as usize).clamp(1, n);
            in_sample.iter_mut().for_each(|m| *m = false);
            for i in sample(&mut rng, n, take) {
                in_sample[i] = true;
            }
        }
        let features: Vec<usize> = if params.colsample < 1.0 {
            let take = ((params.colsample * x.n_cols as f64).round() as usize).clamp(1, x.n_cols);
            let mut f = sample(&mut rng, x.n_cols, take).into_vec();
            f.sort_unstable();
            f
        } else {
            (0..x.n_cols).collect()
        };
        let lists: Vec<Vec<usize>> = features
            .iter()
            .map(|&f| order[f].iter().copied().filter(|&r| in_sample[r]).collect())
            .collect();

        let mut builder = TreeBuilder {
            x,
            grad: &grad,
            hess: &hess,
            params,
            nodes: Vec::new(),
            goes_left: std::mem::take(&mut goes_left),
        };
        builder.grow(lists, &features, 0);
        goes_left = builder.goes_left;
        let tree = Tree {
            nodes: builder.nodes,
        };

        for (i, r) in raw.iter_mut().enumerate() {
            *r += params.learning_rate * tree.leaf_value(x.row(i));
        }
        model.trees.push(tree);

        if let (Some(v), Some(vr)) = (validation, valid_raw.as_mut()) {
            let tree = model.trees.last().expect("just pushed");
            for (i, r) in vr.iter_mut().enumerate() {
                *r += params.learning_rate * tree.leaf_value(v.x.row(i));
            }
            let cost = v.total_cost(vr)?;
            if cost < best_cost {
                best_cost = cost;
                best_trees = round + 1;
            } else if round + 1 - best_trees >= params.early_stop_rounds {
                log::debug!("early stop after {} rounds, best {best_trees}", round + 1);
                break;
            }
        }
    }
    if validation.is_some() {
        model.trees.truncate(best_trees);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_feature(values: &[f64]) -> FeatureMatrix {
        FeatureMatrix {
            n_rows: values.len(),
            n_cols: 1,
            values: values.to_vec(),
        }
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("f{i}")).collect()
    }

    #[test]
    fn separable_stump_splits_at_midpoint() {
        let x = one_feature(&[1.0, 2.0, 3.0, 4.0]);
        let y = [false, false, true, true];
        let params = GbdtParams {
            max_depth: 1,
            n_rounds: 1,
            min_child_weight: 0.0,
            learning_rate: 1.0,
            ..Default::default()
        };
        let m = train(&x, &y, &[1.0; 4], &params, names(1), None).unwrap();
        assert_eq!(m.trees.len(), 1);
        match &m.trees[0].nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 2.5);
            }
            other => panic!("expected split, got {other:?}"),
        }
        for (i, &label) in y.iter().enumerate() {
            let p = m.predict_proba(x.row(i)).unwrap();
            assert_eq!(p > 0.5, label);
        }
    }

    #[test]
    fn single_class_gives_constant_model() {
        let x = one_feature(&[1.0, 2.0, 3.0]);
        let m = train(&x, &[true; 3], &[1.0; 3], &GbdtParams::default(), names(1), None).unwrap();
        assert!(m.trees.is_empty());
        let p = m.predict_proba(&[2.0]).unwrap();
        assert!(p > 0.999 && p < 1.0);
    }

    #[test]
    fn zero_trees_base_zero_is_half() {
        let m = GbdtModel {
            trees: vec![],
            base_score: 0.0,
            schema: names(2),
            params: GbdtParams::default(),
        };
        assert_eq!(m.predict_proba(&[0.0, 0.0]).unwrap(), 0.5);
        assert!(matches!(m.predict_proba(&[0.0]), Err(Error::Schema(_))));
    }

    #[test]
    fn one_leaf_tree_scaled_by_learning_rate() {
        let m = GbdtModel {
            trees: vec![Tree::leaf(2.0)],
            base_score: 0.0,
            schema: names(1),
            params: GbdtParams {
                learning_rate: 0.1,
                ..Default::default()
            },
        };
        assert_eq!(m.predict_proba(&[5.0]).unwrap(), sigmoid(0.2));
    }

    #[test]
    fn hand_traced_routing() {
        let tree = Tree {
            nodes: vec![
                Node::Split {
                    feature: 1,
                    threshold: 10.0,
                    left: 1,
                    right: 2,
                    gain: 1.0,
                },
                Node::Leaf { weight: -3.0 },
                Node::Leaf { weight: 4.0 },
            ],
        };
        let m = GbdtModel {
            trees: vec![tree],
            base_score: 0.5,
            schema: names(2),
            params: GbdtParams {
                learning_rate: 0.5,
                ..Default::default()
            },
        };
        assert_eq!(m.predict_proba(&[0.0, 9.99]).unwrap(), sigmoid(0.5 - 1.5));
        assert_eq!(m.predict_proba(&[0.0, 10.0]).unwrap(), sigmoid(0.5 + 2.0));
    }

    #[test]
    fn importance_from_gains() {
        let split = |feature, gain| Node::Split {
            feature,
            threshold: 0.0,
            left: 1,
            right: 2,
            gain,
        };
        let leaves = [Node::Leaf { weight: 0.0 }, Node::Leaf { weight: 0.0 }];
        let t1 = Tree {
            nodes: [vec![split(0, 6.0)], leaves.to_vec()].concat(),
        };
        let t2 = Tree {
            nodes: [vec![split(1, 2.0)], leaves.to_vec()].concat(),
        };
        let m = GbdtModel {
            trees: vec![t1, t2],
            base_score: 0.0,
            schema: names(2),
            params: GbdtParams::default(),
        };
        assert_eq!(m.feature_importance(), vec![0.75, 0.25]);

        let only3 = GbdtModel {
            trees: vec![Tree {
                nodes: [vec![split(3, 1.5)], leaves.to_vec()].concat(),
            }],
            base_score: 0.0,
            schema: names(5),
            params: GbdtParams::default(),
        };
        assert_eq!(only3.feature_importance(), vec![0.0, 0.0, 0.0, 1.0, 0.0]);

        let none = GbdtModel {
            trees: vec![Tree::leaf(1.0)],
            base_score: 0.0,
            schema: names(3),
            params: GbdtParams::default(),
        };
        assert_eq!(none.feature_importance(), vec![0.0; 3]);
    }

    #[test]
    fn leaf_clip() {
        assert_eq!(leaf_weight(-100.0, 1.0, 0.4), 0.4);
        assert_eq!(leaf_weight(-100.0, 1.0, 0.0), 50.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = one_feature(&[1.0, f64::NAN]);
        assert!(matches!(
            train(&x, &[true, false], &[1.0, 1.0], &GbdtParams::default(), names(1), None),
            Err(Error::Domain(_))
        ));
        let x = one_feature(&[1.0, 2.0]);
        assert!(train(&x, &[true, false], &[1.0, 0.0], &GbdtParams::default(), names(1), None).is_err());
        let bad = GbdtParams {
            subsample: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            train(&x, &[true, false], &[1.0, 1.0], &bad, names(1), None),
            Err(Error::InvalidConfig { .. })
        ));
    }
}
