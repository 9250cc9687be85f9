use clad_core::cost::{costs_for, total_cost, CostParams};
use clad_core::data::{generate_synthetic, SyntheticConfig};
use clad_core::evaluation::*;
use proptest::prelude::*;

/// Kappa straight from two rating vectors, without going through a matrix.
fn kappa_from_ratings(a: &[bool], b: &[bool]) -> (f64, f64) {
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let pa = a.iter().filter(|&&x| x).count() as f64 / n;
    let pb = b.iter().filter(|&&x| x).count() as f64 / n;
    let chance = pa * pb + (1.0 - pa) * (1.0 - pb);
    ((agree - chance) / (1.0 - chance), chance)
}

fn expand(cm: &ConfusionMatrix) -> (Vec<bool>, Vec<bool>) {
    // (committee, model)
    let mut c = Vec::new();
    let mut m = Vec::new();
    for (count, cv, mv) in [(cm.tp, true, true), (cm.fp, true, false), (cm.fn_, false, true), (cm.tn, false, false)] {
        for _ in 0..count {
            c.push(cv);
            m.push(mv);
        }
    }
    (c, m)
}

#[test]
fn october_matrix_is_the_unique_reconstruction() {
    // committee gave 116 / denied 37, model gave 120 / denied 33
    let mut hits = Vec::new();
    for tp in 83u64..=116 {
        let cm = ConfusionMatrix::new(tp, 116 - tp, 120 - tp, tp - 83);
        let (c, m) = expand(&cm);
        assert_eq!(c.iter().filter(|&&v| v).count(), 116);
        assert_eq!(m.iter().filter(|&&v| v).count(), 120);
        let (k, _) = kappa_from_ratings(&c, &m);
        if (k * 100.0).round() == 81.0 {
            hits.push(cm);
        }
    }
    assert_eq!(hits, vec![ConfusionMatrix::new(113, 3, 7, 30)]);

    let r = cohen_kappa(&hits[0]).unwrap();
    let (k, pe) = kappa_from_ratings(&expand(&hits[0]).0, &expand(&hits[0]).1);
    assert!((r.kappa - k).abs() < 1e-12 && (r.pe - pe).abs() < 1e-12);
    assert!((r.kappa - 0.8149).abs() <= 0.0005);
    assert!((r.pe - 0.6468).abs() <= 0.0002);
    assert!((r.p0 - 143.0 / 153.0).abs() < 1e-15);
    assert_eq!(r.band, AgreementBand::AlmostPerfect);
    assert!(r.to_string().contains("kappa = 0.81"));
}

#[test]
fn kappa_examples() {
    assert!(cohen_kappa(&ConfusionMatrix::new(9, 21, 21, 49)).unwrap().kappa.abs() < 1e-12);
    assert_eq!(cohen_kappa(&ConfusionMatrix::new(5, 0, 0, 7)).unwrap().kappa, 1.0);
    assert!(matches!(cohen_kappa(&ConfusionMatrix::new(10, 0, 0, 0)), Err(clad_core::Error::UndefinedKappa(_))));
    assert!(cohen_kappa(&ConfusionMatrix::new(0, 0, 0, 0)).is_err());
    let committee = [true, true, false];
    let model = [true, false, true];
    assert_eq!(rater_matrix(&committee, &model).unwrap(), ConfusionMatrix::new(1, 1, 1, 0));
}

#[test]
fn reported_arithmetic() {
    assert_eq!(accuracy(&ConfusionMatrix::new(7153, 208, 301, 2338)).unwrap(), 0.9491);
    assert_eq!(accuracy(&ConfusionMatrix::new(7230, 216, 225, 2329)).unwrap(), 0.9559);
}

#[test]
fn october_disagreements() {
    let ds = generate_synthetic(&SyntheticConfig { n_records: 153, seed: 10, ..Default::default() }).unwrap();
    let (committee, model) = expand(&ConfusionMatrix::new(113, 3, 7, 30));
    let cases: Vec<ReviewedCase> = ds
        .records
        .iter()
        .zip(committee.iter().zip(&model))
        .map(|(r, (&c, &m))| ReviewedCase {
            record: r.clone(),
            probability: if m { 0.95 } else { 0.4 },
            threshold: 0.87,
            model_decision: m,
            committee_decision: c,
        })
        .collect();
    let rep = disagreement_report(&cases);
    assert_eq!(rep.false_positives.len(), 3);
    assert_eq!(rep.false_negatives.len(), 7);
    let json = serde_json::to_value(&rep.false_negatives[0]).unwrap();
    assert!(json.get("rating").is_some() && json.get("limit_before").is_some());
    assert!(disagreement_report(&cases[..113]).is_empty());
}

fn matrix() -> impl Strategy<Value = ConfusionMatrix> {
    (0u64..500, 0u64..500, 0u64..500, 0u64..500).prop_map(|(a, b, c, d)| ConfusionMatrix::new(a, b, c, d))
}

proptest! {
    #[test]
    fn kappa_laws(cm in matrix()) {
        match cohen_kappa(&cm) {
            Ok(r) => {
                prop_assert!((-1.0..=1.0 + 1e-12).contains(&r.kappa));
                prop_assert!((r.pe - (r.p1 + r.p2)).abs() < 1e-15);
                for p in [r.p0, r.p1, r.p2, r.pe] {
                    prop_assert!((0.0..=1.0).contains(&p));
                }
                prop_assert_eq!(r.kappa == 1.0, cm.fp == 0 && cm.fn_ == 0);
                let t = cohen_kappa(&cm.transpose()).unwrap();
                prop_assert!((t.kappa - r.kappa).abs() < 1e-12);
                let (c, m) = expand(&cm);
                let (k, _) = kappa_from_ratings(&c, &m);
                prop_assert!((k - r.kappa).abs() < 1e-9);
            }
            Err(_) => prop_assert!(cm.n() == 0 || cm.fp + cm.fn_ == 0 && (cm.tp == 0 || cm.tn == 0)),
        }
    }

    #[test]
    fn matrix_text_round_trip(cm in matrix()) {
        let text = format!("{},{},{},{}", cm.tp, cm.fp, cm.fn_, cm.tn);
        prop_assert_eq!(text.parse::<ConfusionMatrix>().unwrap(), cm);
    }

    #[test]
    fn aggregate_matches_instance_wise(rows in prop::collection::vec((any::<bool>(), any::<bool>(), 1i64..1_000_000, 0.0f64..1.0), 1..80)) {
        let p = CostParams::default();
        let y: Vec<bool> = rows.iter().map(|r| r.0).collect();
        let d: Vec<bool> = rows.iter().map(|r| r.1).collect();
        let costs: Vec<_> = rows.iter().map(|r| {
            let limit = r.2 as f64 / 100.0;
            costs_for(limit, (limit * r.3 * 100.0).floor() / 100.0, &p).unwrap()
        }).collect();
        let cm = confusion(&y, &d).unwrap();
        let correct = y.iter().zip(&d).filter(|(a, b)| a == b).count() as f64;
        prop_assert!((accuracy(&cm).unwrap() - correct / y.len() as f64).abs() < 1e-15);
        let fp_cost: f64 = (0..y.len()).filter(|&i| d[i] && !y[i]).map(|i| costs[i].c_fp).sum();
        let fn_cost: f64 = (0..y.len()).filter(|&i| !d[i] && y[i]).map(|i| costs[i].c_fn).sum();
        let total = total_cost(&y, &d, &costs).unwrap();
        prop_assert!((total - fp_cost - fn_cost).abs() <= 1e-9 * total.max(1.0));
        prop_assert_eq!(cm.n() as usize, y.len());
    }
}
