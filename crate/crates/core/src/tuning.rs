//! k-fold plans and exhaustive grid search on total misclassification cost.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{total_cost, CostParams, ThresholdRule};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::{accuracy, confusion};
use crate::gbdt::GbdtParams;
use crate::mlp::{Activation, MlpParams, Optimizer};
use crate::model::{ModelFamily, TrainedModel};
use crate::pipeline::{fit, score, CostRecipe, ModelParams};

/// Assignment of every record to one of `k` folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub stratified: bool,
    pub seed: u64,
    /// Record ids in dataset order.
    pub record_ids: Vec<String>,
    /// Fold index per record, aligned with `record_ids`.
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, record_id: &str) -> Option<usize> {
        self.record_ids
            .iter()
            .position(|id| id == record_id)
            .map(|i| self.assignments[i])
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }

    /// `(training indices, held-out indices)` for `fold`.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignments.len()).partition(|&i| self.assignments[i] != fold)
    }

    fn check_matches(&self, ds: &Dataset) -> Result<()> {
        let same = self.record_ids.len() == ds.len()
            && self
                .record_ids
                .iter()
                .zip(&ds.records)
                .all(|(a, r)| *a == r.record_id);
        if same {
            Ok(())
        } else {
            Err(Error::Mismatch("fold plan was built for a different dataset".into()))
        }
    }
}

/// Stratified plan.
pub fn make_folds(ds: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    make_folds_with(ds, k, seed, true)
}

/// Shuffles (each class separately when stratified) and deals records to
/// folds round-robin, so fold sizes, and per-class counts, differ by at most
/// one.
pub fn make_folds_with(ds: &Dataset, k: usize, seed: u64, stratified: bool) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::config("k", "must be >= 2"));
    }
    if k > ds.len() {
        return Err(Error::config(
            "k",
            format!("{k} folds requested for {} records", ds.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = if stratified {
        let labels = ds.labels()?;
        let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| labels[i]);
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        pos.into_iter().chain(neg).collect()
    } else {
        let mut all: Vec<usize> = (0..ds.len()).collect();
        all.shuffle(&mut rng);
        all
    };
    let mut assignments = vec![0; ds.len()];
    for (slot, &i) in order.iter().enumerate() {
        assignments[i] = slot % k;
    }
    Ok(FoldPlan {
        k,
        stratified,
        seed,
        record_ids: ds.records.iter().map(|r| r.record_id.clone()).collect(),
        assignments,
    })
}

/// Candidate lists for GBDT hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtGrid {
    pub max_depth: Vec<usize>,
    pub min_child_weight: Vec<f64>,
    pub n_rounds: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub gamma: Vec<f64>,
    pub subsample: Vec<f64>,
    pub colsample: Vec<f64>,
    pub max_delta_step: Vec<f64>,
    pub early_stop_rounds: Vec<usize>,
    pub seed: u64,
}

impl Default for GbdtGrid {
    fn default() -> Self {
        let d = GbdtParams::default();
        GbdtGrid {
            max_depth: vec![d.max_depth],
            min_child_weight: vec![d.min_child_weight],
            n_rounds: vec![d.n_rounds],
            learning_rate: vec![d.learning_rate],
            gamma: vec![d.gamma],
            subsample: vec![d.subsample],
            colsample: vec![d.colsample],
            max_delta_step: vec![d.max_delta_step],
            early_stop_rounds: vec![d.early_stop_rounds],
            seed: d.seed,
        }
    }
}

impl GbdtGrid {
    /// The full tree search space: depth 2-9, minimum child weight 1-4,
    /// learning rate 0.1, 60 boosting rounds, patience 100, delta step
    /// {0.4, 0.6, 0.8, 1}, row/column subsample {0.9, 0.95, 1}, gamma
    /// {0, 0.001}.
    pub fn full() -> Self {
        GbdtGrid {
            max_depth: (2..=9).collect(),
            min_child_weight: vec![1.0, 2.0, 3.0, 4.0],
            n_rounds: vec![60],
            learning_rate: vec![0.1],
            gamma: vec![0.0, 0.001],
            subsample: vec![0.9, 0.95, 1.0],
            colsample: vec![0.9, 0.95, 1.0],
            max_delta_step: vec![0.4, 0.6, 0.8, 1.0],
            early_stop_rounds: vec![100],
            seed: 0,
        }
    }

    fn dims(&self) -> [usize; 9] {
        [
            self.max_depth.len(),
            self.min_child_weight.len(),
            self.n_rounds.len(),
            self.learning_rate.len(),
            self.gamma.len(),
            self.subsample.len(),
            self.colsample.len(),
            self.max_delta_step.len(),
            self.early_stop_rounds.len(),
        ]
    }

    fn at(&self, ix: &[usize]) -> GbdtParams {
        GbdtParams {
            max_depth: self.max_depth[ix[0]],
            min_child_weight: self.min_child_weight[ix[1]],
            n_rounds: self.n_rounds[ix[2]],
            learning_rate: self.learning_rate[ix[3]],
            gamma: self.gamma[ix[4]],
            subsample: self.subsample[ix[5]],
            colsample: self.colsample[ix[6]],
            max_delta_step: self.max_delta_step[ix[7]],
            early_stop_rounds: self.early_stop_rounds[ix[8]],
            seed: self.seed,
        }
    }
}

/// Candidate lists for network hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpGrid {
    pub hidden_layers: Vec<Vec<usize>>,
    pub activation: Vec<Activation>,
    pub optimizer: Vec<Optimizer>,
    pub learning_rate: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub epochs: Vec<usize>,
    pub l2: Vec<f64>,
    pub seed: u64,
}

impl Default for MlpGrid {
    fn default() -> Self {
        let d = MlpParams::default();
        MlpGrid {
            hidden_layers: vec![d.hidden_layers],
            activation: vec![d.activation],
            optimizer: vec![d.optimizer],
            learning_rate: vec![d.learning_rate],
            batch_size: vec![d.batch_size],
            epochs: vec![d.epochs],
            l2: vec![d.l2],
            seed: d.seed,
        }
    }
}

impl MlpGrid {
    /// The full network search space (batch 2-8, epochs 1-9, three
    /// optimisers, three activations, learning rate 0.1, L2 on/off) plus an
    /// explicit architecture list.
    pub fn full() -> Self {
        MlpGrid {
            hidden_layers: vec![vec![8], vec![8, 8], vec![4, 4, 6, 8]],
            activation: vec![Activation::Relu, Activation::Sigmoid, Activation::Tanh],
            optimizer: vec![Optimizer::Adam, Optimizer::Sgd, Optimizer::Rmsprop],
            learning_rate: vec![0.1],
            batch_size: vec![2, 4, 6, 8],
            epochs: (1..=9).collect(),
            l2: vec![0.0, 1e-4],
            seed: 0,
        }
    }

    fn dims(&self) -> [usize; 7] {
        [
            self.hidden_layers.len(),
            self.activation.len(),
            self.optimizer.len(),
            self.learning_rate.len(),
            self.batch_size.len(),
            self.epochs.len(),
            self.l2.len(),
        ]
    }

    fn at(&self, ix: &[usize]) -> MlpParams {
        MlpParams {
            hidden_layers: self.hidden_layers[ix[0]].clone(),
            activation: self.activation[ix[1]],
            optimizer: self.optimizer[ix[2]],
            learning_rate: self.learning_rate[ix[3]],
            batch_size: self.batch_size[ix[4]],
            epochs: self.epochs[ix[5]],
            l2: self.l2[ix[6]],
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SearchSpace {
    Gbdt(GbdtGrid),
    Mlp(MlpGrid),
}

impl SearchSpace {
    pub fn family(&self) -> ModelFamily {
        match self {
            SearchSpace::Gbdt(_) => ModelFamily::Gbdt,
            SearchSpace::Mlp(_) => ModelFamily::Mlp,
        }
    }

    fn dims(&self) -> Vec<usize> {
        match self {
            SearchSpace::Gbdt(g) => g.dims().to_vec(),
            SearchSpace::Mlp(g) => g.dims().to_vec(),
        }
    }

    /// Cartesian product size.
    pub fn size(&self) -> usize {
        self.dims().iter().product()
    }

    /// Every combination; the last-listed hyperparameter varies fastest.
    pub fn combinations(&self) -> Result<Vec<ModelParams>> {
        let dims = self.dims();
        if dims.contains(&0) {
            return Err(Error::config("search_space", "every hyperparameter needs at least one candidate"));
        }
        let total: usize = dims.iter().product();
        let mut out = Vec::with_capacity(total);
        let mut ix = vec![0usize; dims.len()];
        for _ in 0..total {
            out.push(match self {
                SearchSpace::Gbdt(g) => ModelParams::Gbdt(g.at(&ix)),
                SearchSpace::Mlp(g) => ModelParams::Mlp(g.at(&ix)),
            });
            for d in (0..dims.len()).rev() {
                ix[d] += 1;
                if ix[d] < dims[d] {
                    break;
                }
                ix[d] = 0;
            }
        }
        Ok(out)
    }
}

mod lossy_float {
    //! Serialises non-finite costs as strings so failed trials survive JSON.
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn from_repr(r: Repr) -> Result<f64, String> {
        match r {
            Repr::Num(v) => Ok(v),
            Repr::Text(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(format!("bad number `{other}`")),
            },
        }
    }

    fn text(v: f64) -> &'static str {
        if v.is_nan() {
            "nan"
        } else if v > 0.0 {
            "inf"
        } else {
            "-inf"
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(text(*v))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?).map_err(serde::de::Error::custom)
    }

    pub mod vec {
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                if x.is_finite() {
                    seq.serialize_element(x)?;
                } else {
                    seq.serialize_element(super::text(*x))?;
                }
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<super::Repr>::deserialize(d)?
                .into_iter()
                .map(|r| super::from_repr(r).map_err(serde::de::Error::custom))
                .collect()
        }
    }
}

/// Cross-validated outcome of one hyperparameter combination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub params: ModelParams,
    /// Total cost on each held-out fold, BS.
    #[serde(with = "lossy_float::vec")]
    pub fold_costs: Vec<f64>,
    pub fold_accuracies: Vec<f64>,
    #[serde(with = "lossy_float")]
    pub mean_cost: f64,
    pub mean_accuracy: f64,
    /// Set when any fold failed; the trial then carries infinite cost.
    pub error: Option<String>,
}

impl TrialResult {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

fn rank_order(a: &TrialResult, b: &TrialResult) -> std::cmp::Ordering {
    a.mean_cost
        .total_cmp(&b.mean_cost)
        .then_with(|| b.mean_accuracy.total_cmp(&a.mean_accuracy))
        .then_with(|| a.params.canonical().cmp(&b.params.canonical()))
}

/// Grid search with the standard [`fit`] for every fold.
pub fn grid_search(
    ds: &Dataset,
    space: &SearchSpace,
    cost: &CostParams,
    recipe: &CostRecipe,
    plan: &FoldPlan,
) -> Result<Vec<TrialResult>> {
    let candidates = space.combinations()?;
    grid_search_with(ds, &candidates, cost, recipe.threshold, plan, |_, train, params| {
        fit(train, params, cost, recipe)
    })
}

/// Evaluates every candidate on every fold with a caller-supplied trainer
/// `fit(fold, training_set, params)` and returns trials ranked by ascending
/// mean cost, then descending mean accuracy, then canonical parameter text.
///
/// Trials and folds run on the rayon pool; results do not depend on the
/// degree of parallelism.
pub fn grid_search_with<F>(
    ds: &Dataset,
    candidates: &[ModelParams],
    cost: &CostParams,
    rule: ThresholdRule,
    plan: &FoldPlan,
    fit: F,
) -> Result<Vec<TrialResult>>
where
    F: Fn(usize, &Dataset, &ModelParams) -> Result<TrainedModel> + Sync,
{
    if candidates.is_empty() {
        return Err(Error::Empty("search space has no combinations".into()));
    }
    cost.validate()?;
    plan.check_matches(ds)?;
    let labels = ds.labels()?;
    let splits: Vec<(Dataset, Dataset, Vec<bool>)> = (0..plan.k)
        .map(|f| {
            let (train, test) = plan.split(f);
            let test_labels = test.iter().map(|&i| labels[i]).collect();
            (ds.subset(&train), ds.subset(&test), test_labels)
        })
        .collect();

    let units: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|t| (0..plan.k).map(move |f| (t, f)))
        .collect();
    let outcomes: Vec<Result<(f64, f64)>> = units
        .par_iter()
        .map(|&(t, f)| {
            let (train, test, test_labels) = &splits[f];
            let model = fit(f, train, &candidates[t])?;
            let scored = score(&model, &test.records, cost, rule)?;
            let decisions: Vec<bool> = scored.iter().map(|s| s.decision).collect();
            let costs: Vec<_> = scored.iter().map(|s| s.costs).collect();
            let c = total_cost(test_labels, &decisions, &costs)?;
            let acc = accuracy(&confusion(test_labels, &decisions)?)?;
            Ok((c, acc))
        })
        .collect();

    let mut by_trial: HashMap<usize, Vec<Result<(f64, f64)>>> = HashMap::new();
    for ((t, _), out) in units.iter().zip(outcomes) {
        by_trial.entry(*t).or_default().push(out);
    }
    let mut trials: Vec<TrialResult> = (0..candidates.len())
        .map(|t| {
            let folds = by_trial.remove(&t).unwrap_or_default();
            let error = folds.iter().find_map(|r| r.as_ref().err().map(|e| e.to_string()));
            let (fold_costs, fold_accuracies): (Vec<f64>, Vec<f64>) = if error.is_some() {
                (vec![f64::INFINITY; plan.k], vec![0.0; plan.k])
            } else {
                folds.into_iter().map(|r| r.expect("checked")).unzip()
            };
            let k = plan.k as f64;
            TrialResult {
                params: candidates[t].clone(),
                mean_cost: fold_costs.iter().sum::<f64>() / k,
                mean_accuracy: fold_accuracies.iter().sum::<f64>() / k,
                fold_costs,
                fold_accuracies,
                error,
            }
        })
        .collect();
    trials.sort_by(rank_order);
    Ok(trials)
}

/// Sweep outcome: the chosen parameters plus every trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub best: ModelParams,
    pub best_mean_cost: f64,
    pub best_mean_accuracy: f64,
    pub total_trials: usize,
    pub failed_trials: usize,
    pub trials: Vec<TrialResult>,
}

impl Selection {
    /// One row per trial, in rank order.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# trials={} failed={} best_mean_cost={:.2}",
            self.total_trials, self.failed_trials, self.best_mean_cost
        );
        let _ = writeln!(s, "{:>5} {:>14} {:>9}  {:<6} params", "rank", "mean_cost", "mean_acc", "status");
        for (i, t) in self.trials.iter().enumerate() {
            let status = if t.failed() { "failed" } else { "ok" };
            let _ = writeln!(
                s,
                "{:>5} {:>14.2} {:>9.4}  {:<6} {}",
                i + 1,
                t.mean_cost,
                t.mean_accuracy,
                status,
                t.params.canonical()
            );
        }
        s
    }
}

/// Head of the ranking; errors when the ranking is empty or every trial
/// failed.
pub fn select_best(ranking: &[TrialResult]) -> Result<Selection> {
    let head = ranking
        .first()
        .ok_or_else(|| Error::Empty("no trials to select from".into()))?;
    if head.failed() {
        return Err(Error::Training(format!(
            "all {} trials failed; first error: {}",
            ranking.len(),
            head.error.as_deref().unwrap_or("unknown")
        )));
    }
    Ok(Selection {
        best: head.params.clone(),
        best_mean_cost: head.mean_cost,
        best_mean_accuracy: head.mean_accuracy,
        total_trials: ranking.len(),
        failed_trials: ranking.iter().filter(|t| t.failed()).count(),
        trials: ranking.to_vec(),
    })
}
