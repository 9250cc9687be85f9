//! Fitting and scoring under a cost recipe.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{cost_weights, instance_costs, CostParams, InstanceCosts, ThresholdRule};
use crate::data::{CladRecord, Dataset};
use crate::error::{Error, Result};
use crate::gbdt::{self, GbdtParams, Validation};
use crate::mlp::{self, MlpParams};
use crate::model::{Learner, ModelFamily, TrainedModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum ModelParams {
    Gbdt(GbdtParams),
    Mlp(MlpParams),
}

impl ModelParams {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelParams::Gbdt(_) => ModelFamily::Gbdt,
            ModelParams::Mlp(_) => ModelFamily::Mlp,
        }
    }

    /// Canonical compact JSON; used for deterministic ordering.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("params serialize")
    }
}

/// The two cost-sensitivity knobs.
///
/// With `weighted_training` the learner sees per-instance weights `c_fn`
/// (positives) / `c_fp` (negatives); its output is mapped back to a
/// cost-neutral probability before `threshold` is applied, so the cost
/// asymmetry is counted once.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostRecipe {
    pub weighted_training: bool,
    pub threshold: ThresholdRule,
}

impl Default for CostRecipe {
    fn default() -> Self {
        CostRecipe {
            weighted_training: true,
            threshold: ThresholdRule::Bayes,
        }
    }
}

impl CostRecipe {
    /// Unit weights and a 0.5 cut-off.
    pub fn cost_blind() -> Self {
        CostRecipe {
            weighted_training: false,
            threshold: ThresholdRule::Fixed(0.5),
        }
    }
}

/// Share of a GBDT training set held back for early stopping.
const EARLY_STOP_FRACTION: f64 = 0.1;

/// Trains a model on a labelled dataset.
///
/// GBDT runs whose `early_stop_rounds` is below `n_rounds` hold back a
/// seeded 10% of the rows to monitor total cost; otherwise all rows train.
pub fn fit(ds: &Dataset, params: &ModelParams, cost: &CostParams, recipe: &CostRecipe) -> Result<TrainedModel> {
    cost.validate()?;
    if ds.is_empty() {
        return Err(Error::Empty("no training records".into()));
    }
    let labels = ds.labels()?;
    let costs = ds
        .records
        .iter()
        .map(|r| instance_costs(r, cost))
        .collect::<Result<Vec<_>>>()?;
    let weights = if recipe.weighted_training {
        cost_weights(&labels, &costs)?
    } else {
        vec![1.0; ds.len()]
    };
    let training_costs = recipe.weighted_training.then_some(*cost);

    let learner = match params {
        ModelParams::Gbdt(p) => Learner::Gbdt(fit_gbdt(ds, &labels, &weights, &costs, p, recipe)?),
        ModelParams::Mlp(p) => Learner::Mlp(mlp::train(
            &ds.feature_matrix(),
            &labels,
            &weights,
            p,
            ds.schema.clone(),
        )?),
    };
    Ok(TrainedModel {
        learner,
        training_costs,
    })
}

fn fit_gbdt(
    ds: &Dataset,
    labels: &[bool],
    weights: &[f64],
    costs: &[InstanceCosts],
    params: &GbdtParams,
    recipe: &CostRecipe,
) -> Result<gbdt::GbdtModel> {
    let x = ds.feature_matrix();
    let n = ds.len();
    let n_valid = (n as f64 * EARLY_STOP_FRACTION).round() as usize;
    if params.early_stop_rounds >= params.n_rounds || n_valid == 0 || n_valid == n {
        return gbdt::train(&x, labels, weights, params, ds.schema.clone(), None);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(params.seed ^ 0x5eed_e5a1));
    let (valid_idx, train_idx) = order.split_at(n_valid);
    let pick = |idx: &[usize]| -> (Vec<bool>, Vec<f64>, Vec<InstanceCosts>) {
        (
            idx.iter().map(|&i| labels[i]).collect(),
            idx.iter().map(|&i| weights[i]).collect(),
            idx.iter().map(|&i| costs[i]).collect(),
        )
    };
    let train_ds = ds.subset(train_idx);
    let valid_ds = ds.subset(valid_idx);
    let (ty, tw, _) = pick(train_idx);
    let (vy, _, vc) = pick(valid_idx);
    let vx = valid_ds.feature_matrix();
    let validation = Validation {
        x: &vx,
        labels: &vy,
        costs: &vc,
        training_costs: recipe.weighted_training.then_some(vc.as_slice()),
        rule: recipe.threshold,
    };
    gbdt::train(
        &train_ds.feature_matrix(),
        &ty,
        &tw,
        params,
        ds.schema.clone(),
        Some(&validation),
    )
}

/// One case scored under a set of cost parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredCase {
    pub record_id: String,
    /// Cost-neutral probability of a positive outcome.
    pub probability: f64,
    pub threshold: f64,
    /// `probability > threshold`.
    pub decision: bool,
    pub costs: InstanceCosts,
}

pub fn score_record(
    model: &TrainedModel,
    rec: &CladRecord,
    cost: &CostParams,
    rule: ThresholdRule,
) -> Result<ScoredCase> {
    let probability = model.probability(rec)?;
    let costs = instance_costs(rec, cost)?;
    let threshold = rule.threshold(&costs)?;
    Ok(ScoredCase {
        record_id: rec.record_id.clone(),
        probability,
        threshold,
        decision: probability > threshold,
        costs,
    })
}

pub fn score(
    model: &TrainedModel,
    records: &[CladRecord],
    cost: &CostParams,
    rule: ThresholdRule,
) -> Result<Vec<ScoredCase>> {
    cost.validate()?;
    records
        .iter()
        .map(|r| score_record(model, r, cost, rule))
        .collect()
}
