//! Adjustment arithmetic and the instance-dependent cost model.
//!
//! For case `i` with limit before adjustment `Cl_b`, outstanding balance `ob`
//! and committee adjustment rate `alpha`:
//!
//! ```text
//! Cl_a = Cl_b (1 + alpha)                      rounded to the cent
//! c_fp = Cl_a              (full_limit)        granting to a defaulter
//!      = Cl_a - ob         (incremental_exposure)
//! c_fn = mr (Cl_a - Cl_b) + admin_cost         denying a good client
//! C    = sum_i y_i (1 - c_i) c_fn_i + c_i (1 - y_i) c_fp_i
//! ```
//!
//! Correct decisions cost nothing. Money is rounded half-up to two decimals
//! only where it leaves the engine; sums accumulate in full precision.

use serde::{Deserialize, Serialize};

use crate::data::CladRecord;
use crate::error::{Error, Result};

/// Which exposure a false positive is charged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpVariant {
    /// The whole adjusted limit is lost.
    #[default]
    FullLimit,
    /// Only the adjusted limit above the current balance is lost.
    IncrementalExposure,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostParams {
    /// Adjustment rate applied to every positive outcome, e.g. 0.2.
    pub alpha: f64,
    /// Minimum payment rate.
    pub mr: f64,
    /// Administrative cost of a denial, BS.
    pub admin_cost: f64,
    pub fp_variant: FpVariant,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            alpha: 0.2,
            mr: 0.05,
            admin_cost: 250.0,
            fp_variant: FpVariant::FullLimit,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::config("alpha", "must be a finite rate >= 0"));
        }
        if !(self.mr > 0.0 && self.mr < 1.0) {
            return Err(Error::config("mr", "must lie in (0, 1)"));
        }
        if !(self.admin_cost.is_finite() && self.admin_cost >= 0.0) {
            return Err(Error::config("admin_cost", "must be >= 0"));
        }
        Ok(())
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        CostParams { alpha, ..self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceCosts {
    pub c_fp: f64,
    pub c_fn: f64,
    /// Set when the incremental exposure was negative and clamped to zero.
    #[serde(default)]
    pub clamped: bool,
}

impl InstanceCosts {
    pub fn new(c_fp: f64, c_fn: f64) -> Self {
        InstanceCosts {
            c_fp,
            c_fn,
            clamped: false,
        }
    }
}

/// Rounds half away from zero to the cent.
///
/// The value is first snapped to a micro-unit grid so that binary
/// representation error (1.005 stored as 1.00499...) does not decide the
/// rounding direction.
pub fn round_money(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let micros = (x * 1e6).round() as i128;
    let cents = if micros >= 0 {
        (micros + 5_000) / 10_000
    } else {
        -((-micros + 5_000) / 10_000)
    };
    cents as f64 / 100.0
}

/// Formats money as a two-decimal string.
pub fn format_money(x: f64) -> String {
    format!("{:.2}", round_money(x))
}

/// `Cl_b (1 + alpha)`, rounded to the cent.
pub fn adjusted_limit(limit_before: f64, alpha: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::Domain(format!("adjustment rate must be >= 0, got {alpha}")));
    }
    if !(limit_before.is_finite() && limit_before > 0.0) {
        return Err(Error::Domain(format!(
            "limit before adjustment must be > 0, got {limit_before}"
        )));
    }
    Ok(round_money(limit_before * (1.0 + alpha)))
}

pub fn instance_costs(rec: &CladRecord, params: &CostParams) -> Result<InstanceCosts> {
    costs_for(rec.limit_before, rec.outstanding_balance, params)
}

/// Instance costs from the two money fields they depend on.
pub fn costs_for(limit_before: f64, outstanding_balance: f64, params: &CostParams) -> Result<InstanceCosts> {
    let adjusted = adjusted_limit(limit_before, params.alpha)?;
    let c_fn = params.mr * (adjusted - limit_before) + params.admin_cost;
    let (c_fp, clamped) = match params.fp_variant {
        FpVariant::FullLimit => (adjusted, false),
        FpVariant::IncrementalExposure => {
            let exposure = adjusted - outstanding_balance;
            if exposure < 0.0 {
                (0.0, true)
            } else {
                (exposure, false)
            }
        }
    };
    Ok(InstanceCosts {
        c_fp,
        c_fn: c_fn.max(0.0),
        clamped,
    })
}

/// Total misclassification cost over paired labels and decisions.
pub fn total_cost(labels: &[bool], decisions: &[bool], costs: &[InstanceCosts]) -> Result<f64> {
    if labels.len() != decisions.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: decisions.len(),
        });
    }
    if labels.len() != costs.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: costs.len(),
        });
    }
    Ok(labels
        .iter()
        .zip(decisions)
        .zip(costs)
        .map(|((&y, &c), k)| instance_cost(y, c, k))
        .sum())
}

/// Cost of one decision given the true outcome.
#[inline]
pub fn instance_cost(label: bool, decision: bool, costs: &InstanceCosts) -> f64 {
    match (label, decision) {
        (true, false) => costs.c_fn,
        (false, true) => costs.c_fp,
        _ => 0.0,
    }
}

/// Probability cut-off `c_fp / (c_fp + c_fn)` above which adjusting has the
/// lower expected cost.
pub fn bayes_threshold(costs: &InstanceCosts) -> Result<f64> {
    let total = costs.c_fp + costs.c_fn;
    if !(total > 0.0) {
        return Err(Error::DegenerateCost);
    }
    Ok(costs.c_fp / total)
}

/// Adjust iff `p > t`; a tie denies.
pub fn bayes_decision(probability: f64, costs: &InstanceCosts) -> Result<bool> {
    Ok(probability > bayes_threshold(costs)?)
}

/// How a probability becomes a decision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum ThresholdRule {
    /// Per-instance cost-minimising threshold.
    Bayes,
    /// The same threshold for every case.
    Fixed(f64),
}

impl ThresholdRule {
    pub fn threshold(&self, costs: &InstanceCosts) -> Result<f64> {
        match self {
            ThresholdRule::Bayes => bayes_threshold(costs),
            ThresholdRule::Fixed(t) => Ok(*t),
        }
    }
}

/// Per-instance training weights: `c_fn` for positives, `c_fp` for
/// negatives, scaled to mean 1.
pub fn cost_weights(labels: &[bool], costs: &[InstanceCosts]) -> Result<Vec<f64>> {
    if labels.len() != costs.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: costs.len(),
        });
    }
    let raw: Vec<f64> = labels
        .iter()
        .zip(costs)
        .map(|(&y, k)| if y { k.c_fn } else { k.c_fp })
        .collect();
    if let Some(i) = raw.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::Domain(format!(
            "cost weight for instance {i} is {}; weighted training needs positive costs",
            raw[i]
        )));
    }
    let mean = raw.iter().sum::<f64>() / raw.len().max(1) as f64;
    Ok(raw.into_iter().map(|w| w / mean).collect())
}

/// Undoes the prior shift of a model trained on [`cost_weights`].
///
/// A learner fitted with class weights `c_fn` (positives) and `c_fp`
/// (negatives) estimates `q = c_fn p / (c_fn p + c_fp (1 - p))`. Inverting
/// gives the cost-neutral probability `p`; thresholding `p` at the Bayes
/// cut-off for the same costs is then equivalent to `q > 0.5`.
pub fn neutral_probability(weighted: f64, training_costs: &InstanceCosts) -> f64 {
    let num = weighted * training_costs.c_fp;
    let den = num + (1.0 - weighted) * training_costs.c_fn;
    if den > 0.0 {
        num / den
    } else {
        weighted
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CladRecord, CreditRating};

    fn rec(limit: f64, balance: f64) -> CladRecord {
        CladRecord {
            record_id: "r".into(),
            limit_before: limit,
            outstanding_balance: balance,
            rating: CreditRating::BB,
            account_age_years: 3.0,
            extra: [0.0; 9],
            label: None,
        }
    }

    fn params(alpha: f64, mr: f64, admin: f64, fp_variant: FpVariant) -> CostParams {
        CostParams {
            alpha,
            mr,
            admin_cost: admin,
            fp_variant,
        }
    }

    #[test]
    fn adjusted_limit_examples() {
        assert_eq!(adjusted_limit(1000.0, 0.0).unwrap(), 1000.0);
        assert_eq!(adjusted_limit(1000.0, 0.25).unwrap(), 1250.0);
        // 1463.72 * 1.1 = 1610.092
        assert_eq!(adjusted_limit(1463.72, 0.10).unwrap(), 1610.09);
        assert!(matches!(adjusted_limit(1000.0, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_money(1.005), 1.01);
        assert_eq!(round_money(2.675), 2.68);
        assert_eq!(round_money(-1.005), -1.01);
        assert_eq!(round_money(1610.092), 1610.09);
        assert_eq!(format_money(25328.149999999965), "25328.15");
    }

    #[test]
    fn instance_cost_examples() {
        let k = instance_costs(&rec(1000.0, 0.0), &params(0.2, 0.05, 10.0, FpVariant::FullLimit)).unwrap();
        assert_eq!(k.c_fp, 1200.0);
        assert!((k.c_fn - 20.0).abs() < 1e-12);

        let k = instance_costs(&rec(1000.0, 300.0), &params(0.0, 0.3, 0.0, FpVariant::FullLimit)).unwrap();
        assert_eq!(k.c_fn, 0.0);

        let k = instance_costs(
            &rec(1000.0, 400.0),
            &params(0.2, 0.05, 10.0, FpVariant::IncrementalExposure),
        )
        .unwrap();
        assert_eq!(k.c_fp, 800.0);
        assert!(!k.clamped);
    }

    #[test]
    fn incremental_exposure_clamps_and_flags() {
        let k = costs_for(1000.0, 1500.0, &params(0.2, 0.05, 0.0, FpVariant::IncrementalExposure)).unwrap();
        assert_eq!(k.c_fp, 0.0);
        assert!(k.clamped);
    }

    #[test]
    fn total_cost_examples() {
        let costs = [InstanceCosts::new(10.0, 50.0), InstanceCosts::new(1200.0, 7.0)];
        assert_eq!(total_cost(&[true, false], &[true, false], &costs).unwrap(), 0.0);
        assert_eq!(total_cost(&[true, false], &[false, true], &costs).unwrap(), 1250.0);
        assert_eq!(total_cost(&[], &[], &[]).unwrap(), 0.0);
        assert!(matches!(
            total_cost(&[true], &[true, false], &costs),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(bayes_threshold(&InstanceCosts::new(5.0, 5.0)).unwrap(), 0.5);
        let t = bayes_threshold(&InstanceCosts::new(1200.0, 60.0)).unwrap();
        assert!((t - 1200.0 / 1260.0).abs() < 1e-15);
        assert!((t - 0.952_380_952_380_952_4).abs() < 1e-12);
        assert_eq!(bayes_threshold(&InstanceCosts::new(0.0, 3.0)).unwrap(), 0.0);
        assert!(matches!(
            bayes_threshold(&InstanceCosts::new(0.0, 0.0)),
            Err(Error::DegenerateCost)
        ));
    }

    #[test]
    fn tie_denies() {
        let k = InstanceCosts::new(5.0, 5.0);
        assert!(!bayes_decision(0.5, &k).unwrap());
        assert!(bayes_decision(0.5000001, &k).unwrap());
    }

    #[test]
    fn weights_have_unit_mean() {
        let costs = [InstanceCosts::new(100.0, 10.0), InstanceCosts::new(300.0, 30.0)];
        let w = cost_weights(&[true, false], &costs).unwrap();
        assert!((w.iter().sum::<f64>() / 2.0 - 1.0).abs() < 1e-12);
        assert!((w[1] / w[0] - 30.0).abs() < 1e-12);
        assert!(cost_weights(&[true], &[InstanceCosts::new(1.0, 0.0)]).is_err());
    }

    #[test]
    fn neutral_probability_matches_half_threshold() {
        let k = InstanceCosts::new(1756.0, 265.0);
        let t = bayes_threshold(&k).unwrap();
        for q in [0.1, 0.3, 0.49, 0.51, 0.7, 0.99] {
            let p = neutral_probability(q, &k);
            assert_eq!(p > t, q > 0.5, "q={q}");
        }
        assert!((neutral_probability(0.5, &k) - t).abs() < 1e-12);
    }
}
