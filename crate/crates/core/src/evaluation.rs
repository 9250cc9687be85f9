//! Confusion matrices, accuracy, cost reports and two-rater agreement.
//!
//! Model-versus-truth matrices use the usual convention: a false positive is
//! an adjustment the model gave to a case whose true outcome was negative.
//! Committee-versus-model matrices ([`rater_matrix`]) follow the review
//! convention instead: FP counts cases the committee gave but the model did
//! not, FN cases the model gave but the committee did not.
//!
//! Cohen's kappa is computed in its standard form:
//!
//! ```text
//! P0 = (TP + TN) / N
//! P1 = (TP + FN)(TP + FP) / N^2      both raters give
//! P2 = (TN + FN)(TN + FP) / N^2      both raters deny
//! Pe = P1 + P2
//! kappa = (P0 - Pe) / (1 - Pe)
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cost::{format_money, round_money, total_cost, CostParams};
use crate::data::{CladRecord, CreditRating, Dataset};
use crate::error::{Error, Result};
use crate::pipeline::ScoredCase;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Swaps the roles of the two raters.
    pub fn transpose(&self) -> Self {
        ConfusionMatrix {
            fp: self.fn_,
            fn_: self.fp,
            ..*self
        }
    }
}

/// Parses the 4-field record `tp,fp,fn,tn`.
impl FromStr for ConfusionMatrix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let fields: Vec<&str> = s.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::Domain(format!(
                "confusion matrix needs 4 comma-separated counts tp,fp,fn,tn; got `{s}`"
            )));
        }
        let mut v = [0u64; 4];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse()
                .map_err(|_| Error::Domain(format!("`{f}` is not a non-negative count")))?;
        }
        Ok(ConfusionMatrix::new(v[0], v[1], v[2], v[3]))
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tp={} fp={} fn={} tn={}", self.tp, self.fp, self.fn_, self.tn)
    }
}

fn check_pair(a: &[bool], b: &[bool]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("no decisions to compare".into()));
    }
    Ok(())
}

pub fn confusion(truth: &[bool], predicted: &[bool]) -> Result<ConfusionMatrix> {
    check_pair(truth, predicted)?;
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in truth.iter().zip(predicted) {
        match (t, p) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Committee-versus-model matrix: FP = committee gave, model did not;
/// FN = model gave, committee did not.
pub fn rater_matrix(committee: &[bool], model: &[bool]) -> Result<ConfusionMatrix> {
    confusion(model, committee)
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.n();
    if n == 0 {
        return Err(Error::Empty("accuracy of an empty matrix".into()));
    }
    Ok((cm.tp + cm.tn) as f64 / n as f64)
}

/// Interpretation bands, half-open `[lower, upper)` except the top band,
/// which includes 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementBand {
    Poor,
    Slight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl AgreementBand {
    pub fn of(kappa: f64) -> Self {
        match kappa {
            k if k < 0.0 => AgreementBand::Poor,
            k if k < 0.2 => AgreementBand::Slight,
            k if k < 0.4 => AgreementBand::Fair,
            k if k < 0.6 => AgreementBand::Moderate,
            k if k < 0.8 => AgreementBand::Substantial,
            _ => AgreementBand::AlmostPerfect,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AgreementBand::Poor => "poor",
            AgreementBand::Slight => "slight",
            AgreementBand::Fair => "fair",
            AgreementBand::Moderate => "moderate",
            AgreementBand::Substantial => "substantial",
            AgreementBand::AlmostPerfect => "almost perfect",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub matrix: ConfusionMatrix,
    pub n: u64,
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub pe: f64,
    pub kappa: f64,
    pub band: AgreementBand,
}

impl fmt::Display for AgreementReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "matrix  {}  (N = {})", self.matrix, self.n)?;
        writeln!(f, "P0      {:.4}", self.p0)?;
        writeln!(f, "P1      {:.4}", self.p1)?;
        writeln!(f, "P2      {:.4}", self.p2)?;
        writeln!(f, "Pe      {:.4}", self.pe)?;
        write!(f, "kappa = {:.2} ({:.4}, {})", self.kappa, self.kappa, self.band.label())
    }
}

pub fn cohen_kappa(cm: &ConfusionMatrix) -> Result<AgreementReport> {
    let n = cm.n();
    if n == 0 {
        return Err(Error::UndefinedKappa("no rated cases".into()));
    }
    let nf = n as f64;
    let n2 = nf * nf;
    let p0 = (cm.tp + cm.tn) as f64 / nf;
    let p1 = ((cm.tp + cm.fn_) as f64 * (cm.tp + cm.fp) as f64) / n2;
    let p2 = ((cm.tn + cm.fn_) as f64 * (cm.tn + cm.fp) as f64) / n2;
    let pe = p1 + p2;
    let both_one_sided = (cm.tp + cm.fn_ == n && cm.tp + cm.fp == n) || (cm.tn + cm.fn_ == n && cm.tn + cm.fp == n);
    if both_one_sided || pe >= 1.0 {
        return Err(Error::UndefinedKappa(
            "both raters gave the same single outcome to every case, so chance agreement is 1".into(),
        ));
    }
    let kappa = (p0 - pe) / (1.0 - pe);
    Ok(AgreementReport {
        matrix: *cm,
        n,
        p0,
        p1,
        p2,
        pe,
        kappa,
        band: AgreementBand::of(kappa),
    })
}

/// A case carrying both the committee's and the model's outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewedCase {
    pub record: CladRecord,
    pub probability: f64,
    pub threshold: f64,
    pub model_decision: bool,
    pub committee_decision: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisagreementKind {
    /// Committee gave, model did not.
    Fp,
    /// Model gave, committee did not.
    Fn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisagreementEntry {
    pub record_id: String,
    pub kind: DisagreementKind,
    pub probability: f64,
    pub threshold: f64,
    /// `|probability - threshold|`.
    pub margin: f64,
    pub rating: CreditRating,
    pub limit_before: f64,
    pub record: CladRecord,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DisagreementReport {
    pub false_positives: Vec<DisagreementEntry>,
    pub false_negatives: Vec<DisagreementEntry>,
}

impl DisagreementReport {
    pub fn len(&self) -> usize {
        self.false_positives.len() + self.false_negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Lists disagreements, widest margin first (ties by record id).
pub fn disagreement_report(cases: &[ReviewedCase]) -> DisagreementReport {
    let mut report = DisagreementReport::default();
    for c in cases {
        let kind = match (c.committee_decision, c.model_decision) {
            (true, false) => DisagreementKind::Fp,
            (false, true) => DisagreementKind::Fn,
            _ => continue,
        };
        let entry = DisagreementEntry {
            record_id: c.record.record_id.clone(),
            kind,
            probability: c.probability,
            threshold: c.threshold,
            margin: (c.probability - c.threshold).abs(),
            rating: c.record.rating,
            limit_before: c.record.limit_before,
            record: c.record.clone(),
        };
        match kind {
            DisagreementKind::Fp => report.false_positives.push(entry),
            DisagreementKind::Fn => report.false_negatives.push(entry),
        }
    }
    let order = |a: &DisagreementEntry, b: &DisagreementEntry| {
        b.margin.total_cmp(&a.margin).then_with(|| a.record_id.cmp(&b.record_id))
    };
    report.false_positives.sort_by(order);
    report.false_negatives.sort_by(order);
    report
}

/// Model performance on a labelled dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub dataset_fingerprint: String,
    pub cost_params: CostParams,
    pub matrix: ConfusionMatrix,
    pub accuracy: f64,
    /// Total misclassification cost, BS.
    pub total_cost: f64,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model       {}", self.label)?;
        writeln!(f, "dataset     {}", self.dataset_fingerprint)?;
        writeln!(f, "matrix      {}", self.matrix)?;
        writeln!(f, "accuracy    {:.4}", self.accuracy)?;
        write!(f, "total_cost  {} BS", format_money(self.total_cost))
    }
}

/// Scores against the labels of `ds`; `scored` must be aligned with its
/// records.
pub fn evaluate(label: &str, ds: &Dataset, scored: &[ScoredCase], cost_params: &CostParams) -> Result<EvalReport> {
    let labels = ds.labels()?;
    if scored.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: scored.len(),
        });
    }
    if let Some((r, s)) = ds.records.iter().zip(scored).find(|(r, s)| r.record_id != s.record_id) {
        return Err(Error::Mismatch(format!(
            "scored case `{}` is not aligned with record `{}`",
            s.record_id, r.record_id
        )));
    }
    let decisions: Vec<bool> = scored.iter().map(|s| s.decision).collect();
    let costs: Vec<_> = scored.iter().map(|s| s.costs).collect();
    let matrix = confusion(&labels, &decisions)?;
    Ok(EvalReport {
        label: label.to_string(),
        dataset_fingerprint: ds.fingerprint(),
        cost_params: *cost_params,
        matrix,
        accuracy: accuracy(&matrix)?,
        total_cost: total_cost(&labels, &decisions, &costs)?,
    })
}

/// Differences `a - b`; cost delta is rounded to the cent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub a: String,
    pub b: String,
    pub accuracy_delta: f64,
    pub cost_delta: f64,
    pub fp_delta: i64,
    pub fn_delta: i64,
    pub cheaper: String,
    pub more_accurate: String,
}

impl fmt::Display for ModelComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "comparison    {} - {}", self.a, self.b)?;
        writeln!(f, "accuracy      {:+.4}", self.accuracy_delta)?;
        writeln!(f, "total_cost    {} BS", format_money(self.cost_delta))?;
        writeln!(f, "fp            {:+}", self.fp_delta)?;
        writeln!(f, "fn            {:+}", self.fn_delta)?;
        writeln!(f, "cheaper       {}", self.cheaper)?;
        write!(f, "more_accurate {}", self.more_accurate)
    }
}

pub fn compare_models(a: &EvalReport, b: &EvalReport) -> Result<ModelComparison> {
    if a.dataset_fingerprint != b.dataset_fingerprint {
        return Err(Error::Mismatch(format!(
            "reports cover different datasets ({} vs {})",
            a.dataset_fingerprint, b.dataset_fingerprint
        )));
    }
    if a.cost_params != b.cost_params {
        return Err(Error::Mismatch("reports use different cost parameters".into()));
    }
    let pick = |a_wins: bool, tie: bool| {
        if tie {
            "tie".to_string()
        } else if a_wins {
            a.label.clone()
        } else {
            b.label.clone()
        }
    };
    Ok(ModelComparison {
        a: a.label.clone(),
        b: b.label.clone(),
        accuracy_delta: a.accuracy - b.accuracy,
        cost_delta: round_money(a.total_cost - b.total_cost),
        fp_delta: a.matrix.fp as i64 - b.matrix.fp as i64,
        fn_delta: a.matrix.fn_ as i64 - b.matrix.fn_ as i64,
        cheaper: pick(a.total_cost < b.total_cost, a.total_cost == b.total_cost),
        more_accurate: pick(a.accuracy > b.accuracy, a.accuracy == b.accuracy),
    })
}
