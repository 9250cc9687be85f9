use std::collections::HashSet;
use std::sync::Mutex;

use clad_core::cost::{CostParams, ThresholdRule};
use clad_core::data::{generate_synthetic, Dataset, SyntheticConfig};
use clad_core::gbdt::{GbdtModel, GbdtParams};
use clad_core::model::{Learner, TrainedModel};
use clad_core::pipeline::{fit, CostRecipe, ModelParams};
use clad_core::tuning::*;
use proptest::prelude::*;

fn synthetic(n: usize, seed: u64) -> Dataset {
    generate_synthetic(&SyntheticConfig { n_records: n, seed, ..Default::default() }).unwrap()
}

fn check_fold_laws(ds: &Dataset, plan: &FoldPlan) {
    let k = plan.k;
    let n = ds.len();
    let labels = ds.labels().unwrap();
    let mut seen = vec![0usize; n];
    for f in 0..k {
        let (train, test) = plan.split(f);
        assert_eq!(train.len() + test.len(), n);
        let test_set: HashSet<usize> = test.iter().copied().collect();
        assert!(train.iter().all(|i| !test_set.contains(i)));
        for &i in &test {
            seen[i] += 1;
        }
    }
    assert!(seen.iter().all(|&c| c == 1), "folds must partition the records");
    let sizes = plan.fold_sizes();
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);

    if plan.stratified {
        let global = labels.iter().filter(|&&y| y).count() as f64 / n as f64;
        let mut pos = vec![0usize; k];
        for (i, &f) in plan.assignments.iter().enumerate() {
            pos[f] += usize::from(labels[i]);
        }
        assert!(pos.iter().max().unwrap() - pos.iter().min().unwrap() <= 1);
        for f in 0..k {
            if sizes[f] >= 100 {
                let share = pos[f] as f64 / sizes[f] as f64;
                assert!((share - global).abs() <= 0.02, "fold {f}: {share} vs {global}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn fold_laws(n in 2usize..1500, k in 2usize..=10, seed in any::<u64>(), stratified in any::<bool>()) {
        prop_assume!(k <= n);
        let ds = synthetic(n, seed % 1000);
        let plan = make_folds_with(&ds, k, seed, stratified).unwrap();
        check_fold_laws(&ds, &plan);
        prop_assert_eq!(make_folds_with(&ds, k, seed, stratified).unwrap(), plan);
    }
}

fn constant(p: f64) -> TrainedModel {
    GbdtModel {
        trees: vec![],
        base_score: (p / (1.0 - p)).ln(),
        schema: clad_core::data::FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        params: GbdtParams::default(),
    }
    .into()
}

#[test]
fn no_fold_leaks_into_its_training_set() {
    let ds = synthetic(300, 2);
    let plan = make_folds(&ds, 5, 2).unwrap();
    let candidates: Vec<ModelParams> = (2..4)
        .map(|d| ModelParams::Gbdt(GbdtParams { max_depth: d, n_rounds: 3, ..Default::default() }))
        .collect();
    let calls = Mutex::new(0usize);
    let cost = CostParams::default();
    grid_search_with(&ds, &candidates, &cost, ThresholdRule::Bayes, &plan, |fold, train, params| {
        let (_, test) = plan.split(fold);
        let held: HashSet<&str> = test.iter().map(|&i| ds.records[i].record_id.as_str()).collect();
        assert!(train.records.iter().all(|r| !held.contains(r.record_id.as_str())));
        assert_eq!(train.len() + held.len(), ds.len());
        *calls.lock().unwrap() += 1;
        let m = fit(train, params, &cost, &CostRecipe::default())?;
        if let Learner::Mlp(mlp) = &m.learner {
            assert_eq!(mlp.standardizer, clad_core::mlp::Standardizer::fit(&train.feature_matrix()));
        }
        Ok(m)
    })
    .unwrap();
    assert_eq!(*calls.lock().unwrap(), candidates.len() * plan.k);
}

#[test]
fn ranking_laws() {
    let ds = synthetic(400, 3);
    let plan = make_folds(&ds, 4, 3).unwrap();
    let cost = CostParams::default();
    let grid = GbdtGrid { max_depth: vec![2, 3, 2], n_rounds: vec![5], ..Default::default() };
    let space = SearchSpace::Gbdt(grid);
    assert_eq!(space.size(), 3);
    let ranking = grid_search(&ds, &space, &cost, &CostRecipe::default(), &plan).unwrap();
    assert_eq!(ranking.len(), space.size());
    for t in &ranking {
        assert_eq!(t.fold_costs.len(), plan.k);
        let mean = t.fold_costs.iter().sum::<f64>() / plan.k as f64;
        assert!((mean - t.mean_cost).abs() < 1e-9 * mean.max(1.0));
        assert!(ranking[0].mean_cost <= t.mean_cost);
    }
    // the duplicated depth-2 combination ties with itself
    let dupes: Vec<&TrialResult> = ranking.iter().filter(|t| t.params == ranking.iter().find(|r| matches!(&r.params, ModelParams::Gbdt(g) if g.max_depth == 2)).unwrap().params).collect();
    assert_eq!(dupes.len(), 2);
    assert_eq!(dupes[0].mean_cost, dupes[1].mean_cost);

    let single = SearchSpace::Gbdt(GbdtGrid { n_rounds: vec![5], ..Default::default() });
    let one = grid_search(&ds, &single, &cost, &CostRecipe::default(), &plan).unwrap();
    assert_eq!(one.len(), 1);
}

/// A constant "deny everyone" model against one that always approves: with
/// false positives far dearer, denial is cheaper on every fold.
#[test]
fn dominating_candidate_ranks_first() {
    let ds = synthetic(300, 4);
    let plan = make_folds(&ds, 3, 4).unwrap();
    let deny = ModelParams::Gbdt(GbdtParams { max_depth: 1, ..Default::default() });
    let give = ModelParams::Gbdt(GbdtParams { max_depth: 2, ..Default::default() });
    let candidates = vec![give.clone(), deny.clone()];
    let ranking = grid_search_with(&ds, &candidates, &CostParams::default(), ThresholdRule::Fixed(0.5), &plan, |_, _, p| {
        Ok(if *p == deny { constant(0.01) } else { constant(0.99) })
    })
    .unwrap();
    assert_eq!(ranking[0].params, deny);
    for f in 0..plan.k {
        assert!(ranking[0].fold_costs[f] < ranking[1].fold_costs[f]);
    }
}

#[test]
fn failed_trials_are_kept_with_infinite_cost() {
    let ds = synthetic(200, 5);
    let plan = make_folds(&ds, 2, 5).unwrap();
    let ok = ModelParams::Gbdt(GbdtParams { max_depth: 1, ..Default::default() });
    let bad = ModelParams::Gbdt(GbdtParams { max_depth: 0, ..Default::default() });
    let ranking = grid_search_with(&ds, &[bad.clone(), ok.clone()], &CostParams::default(), ThresholdRule::Bayes, &plan, |_, train, p| {
        fit(train, p, &CostParams::default(), &CostRecipe::default())
    })
    .unwrap();
    assert_eq!(ranking.len(), 2);
    assert_eq!(ranking[0].params, ok);
    assert!(ranking[1].failed() && ranking[1].mean_cost.is_infinite());
    let sel = select_best(&ranking).unwrap();
    assert_eq!(sel.failed_trials, 1);
    assert!(select_best(&ranking[1..]).is_err());
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let ds = synthetic(300, 6);
    let plan = make_folds(&ds, 3, 6).unwrap();
    let space = SearchSpace::Gbdt(GbdtGrid { max_depth: vec![2, 3], n_rounds: vec![4], subsample: vec![0.8], ..Default::default() });
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            grid_search(&ds, &space, &CostParams::default(), &CostRecipe::default(), &plan).unwrap()
        })
    };
    assert_eq!(run(1), run(4));
}
