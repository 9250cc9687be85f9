//! Case schema, CSV ingestion and the synthetic case generator.
//!
//! A case file is UTF-8 CSV with a header row naming `record_id`, the 13
//! feature columns in [`FEATURE_NAMES`] and an optional `label` column
//! (`1` = adjustment given, `0` = denied, empty = not yet decided). Money
//! columns are written with two fractional digits; ratings use the agency
//! letter grades. Demographic attributes are never part of the schema and any
//! unknown column is rejected.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::cost::round_money;
use crate::error::{Error, Result};

pub const N_FEATURES: usize = 13;

/// Feature columns in model order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "limit_before",
    "outstanding_balance",
    "rating",
    "account_age_years",
    "avg_monthly_spend",
    "avg_monthly_payment",
    "payment_ratio",
    "late_payments_12m",
    "months_since_last_adjustment",
    "cash_advance_ratio",
    "products_held",
    "avg_utilization_6m",
    "monthly_deposits",
];

/// Names of the nine performance features after the four named ones.
pub const EXTRA_FEATURE_NAMES: [&str; 9] = [
    "avg_monthly_spend",
    "avg_monthly_payment",
    "payment_ratio",
    "late_payments_12m",
    "months_since_last_adjustment",
    "cash_advance_ratio",
    "products_held",
    "avg_utilization_6m",
    "monthly_deposits",
];

const MONEY_COLUMNS: [usize; 5] = [0, 1, 4, 5, 12];
const RATING_COLUMN: usize = 2;

pub const ID_COLUMN: &str = "record_id";
pub const LABEL_COLUMN: &str = "label";

/// Agency credit grade, ordinal from `D` (0) to `AAA` (9).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CreditRating {
    D,
    C,
    CC,
    CCC,
    B,
    BB,
    BBB,
    A,
    AA,
    AAA,
}

impl CreditRating {
    pub const ALL: [CreditRating; 10] = [
        CreditRating::D,
        CreditRating::C,
        CreditRating::CC,
        CreditRating::CCC,
        CreditRating::B,
        CreditRating::BB,
        CreditRating::BBB,
        CreditRating::A,
        CreditRating::AA,
        CreditRating::AAA,
    ];

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn from_ordinal(ordinal: u8) -> Option<Self> {
        Self::ALL.get(ordinal as usize).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CreditRating::D => "D",
            CreditRating::C => "C",
            CreditRating::CC => "CC",
            CreditRating::CCC => "CCC",
            CreditRating::B => "B",
            CreditRating::BB => "BB",
            CreditRating::BBB => "BBB",
            CreditRating::A => "A",
            CreditRating::AA => "AA",
            CreditRating::AAA => "AAA",
        }
    }
}

impl fmt::Display for CreditRating {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CreditRating {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown credit rating `{s}`"))
    }
}

impl Serialize for CreditRating {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for CreditRating {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One limit-adjustment case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CladRecord {
    pub record_id: String,
    /// Credit limit before adjustment, BS.
    pub limit_before: f64,
    /// Amount currently drawn on the card, BS.
    pub outstanding_balance: f64,
    pub rating: CreditRating,
    pub account_age_years: f64,
    /// Values for [`EXTRA_FEATURE_NAMES`], in order.
    pub extra: [f64; 9],
    /// `Some(true)` when the adjustment was given.
    pub label: Option<bool>,
}

impl CladRecord {
    /// Feature vector in [`FEATURE_NAMES`] order; the rating is its ordinal.
    pub fn features(&self) -> [f64; N_FEATURES] {
        let mut out = [0.0; N_FEATURES];
        out[0] = self.limit_before;
        out[1] = self.outstanding_balance;
        out[2] = f64::from(self.rating.ordinal());
        out[3] = self.account_age_years;
        out[4..].copy_from_slice(&self.extra);
        out
    }

    pub fn utilization(&self) -> f64 {
        self.outstanding_balance / self.limit_before
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.record_id.trim().is_empty() {
            return Err("record_id is empty".into());
        }
        if !(self.limit_before.is_finite() && self.limit_before > 0.0) {
            return Err(format!("limit_before must be > 0, got {}", self.limit_before));
        }
        if !(self.outstanding_balance.is_finite() && self.outstanding_balance >= 0.0) {
            return Err(format!(
                "outstanding_balance must be >= 0, got {}",
                self.outstanding_balance
            ));
        }
        if self.outstanding_balance > self.limit_before {
            return Err(format!(
                "outstanding_balance {} exceeds limit_before {}",
                self.outstanding_balance, self.limit_before
            ));
        }
        if !(0.0..=100.0).contains(&self.account_age_years) {
            return Err(format!(
                "account_age_years must be within [0, 100], got {}",
                self.account_age_years
            ));
        }
        if let Some(i) = self.extra.iter().position(|v| !v.is_finite()) {
            return Err(format!("{} is not finite", EXTRA_FEATURE_NAMES[i]));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic { seed: u64 },
    Ingested { path: String },
    Derived,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: Vec<String>,
    pub records: Vec<CladRecord>,
    pub provenance: Provenance,
}

fn default_schema() -> Vec<String> {
    FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

impl Dataset {
    /// Builds a dataset, checking every record invariant and id uniqueness.
    pub fn new(records: Vec<CladRecord>, provenance: Provenance) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            rec.validate().map_err(|reason| Error::Invariant { row: i + 1, reason })?;
            if !seen.insert(rec.record_id.as_str()) {
                return Err(Error::Invariant {
                    row: i + 1,
                    reason: format!("duplicate record_id `{}`", rec.record_id),
                });
            }
        }
        Ok(Dataset {
            schema: default_schema(),
            records,
            provenance,
        })
    }

    pub fn empty(provenance: Provenance) -> Self {
        Dataset {
            schema: default_schema(),
            records: Vec::new(),
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// All labels, or an error naming the first unlabeled record.
    pub fn labels(&self) -> Result<Vec<bool>> {
        self.records
            .iter()
            .map(|r| {
                r.label
                    .ok_or_else(|| Error::Domain(format!("record `{}` has no label", r.record_id)))
            })
            .collect()
    }

    pub fn feature_matrix(&self) -> FeatureMatrix {
        let mut values = Vec::with_capacity(self.len() * N_FEATURES);
        for rec in &self.records {
            values.extend_from_slice(&rec.features());
        }
        FeatureMatrix {
            n_rows: self.len(),
            n_cols: N_FEATURES,
            values,
        }
    }

    /// Records at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            provenance: Provenance::Derived,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![ID_COLUMN.to_string()];
        header.extend(self.schema.iter().cloned());
        header.push(LABEL_COLUMN.to_string());
        w.write_record(&header)?;
        for rec in &self.records {
            let mut row = Vec::with_capacity(N_FEATURES + 2);
            row.push(rec.record_id.clone());
            for (j, v) in rec.features().iter().enumerate() {
                row.push(format_cell(j, *v, rec.rating));
            }
            row.push(match rec.label {
                Some(true) => "1".into(),
                Some(false) => "0".into(),
                None => String::new(),
            });
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Hex SHA-256 of the canonical CSV serialization.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv_string().as_bytes()))
    }
}

fn format_cell(column: usize, value: f64, rating: CreditRating) -> String {
    if column == RATING_COLUMN {
        rating.to_string()
    } else if MONEY_COLUMNS.contains(&column) {
        format!("{value:.2}")
    } else {
        format!("{value}")
    }
}

/// Dense row-major feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            if r.len() != n_cols {
                return Err(Error::LengthMismatch {
                    left: n_cols,
                    right: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Ok(FeatureMatrix {
            n_rows: rows.len(),
            n_cols,
            values,
        })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }
}

/// Loads a case file.
///
/// With `has_labels` the `label` column is required and must hold 0 or 1 on
/// every row; without it any label column is ignored.
pub fn ingest(path: impl AsRef<Path>, has_labels: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_csv(
        file,
        has_labels,
        Provenance::Ingested {
            path: path.display().to_string(),
        },
    )
}

/// Parses case CSV from any reader. Row numbers in errors are 1-based data
/// rows (the header is not counted).
pub fn read_csv<R: Read>(reader: R, has_labels: bool, provenance: Provenance) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();

    let position = |name: &str| header.iter().position(|h| h == name);
    let id_col = position(ID_COLUMN)
        .ok_or_else(|| Error::Schema(format!("missing column `{ID_COLUMN}`")))?;
    let mut feature_cols = [0usize; N_FEATURES];
    for (j, name) in FEATURE_NAMES.iter().enumerate() {
        feature_cols[j] =
            position(name).ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
    }
    let label_col = position(LABEL_COLUMN);
    if has_labels && label_col.is_none() {
        return Err(Error::Schema(format!("missing column `{LABEL_COLUMN}`")));
    }
    for h in header.iter() {
        if h != ID_COLUMN && h != LABEL_COLUMN && !FEATURE_NAMES.contains(&h) {
            return Err(Error::Schema(format!("unexpected column `{h}`")));
        }
    }

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let cell = |col: usize| row.get(col).unwrap_or("").trim();

        let mut features = [0.0; N_FEATURES];
        let mut rating = CreditRating::D;
        for (j, &col) in feature_cols.iter().enumerate() {
            let text = cell(col);
            if j == RATING_COLUMN {
                rating = text.parse().map_err(|reason| Error::Parse {
                    row: row_no,
                    column: FEATURE_NAMES[j].into(),
                    reason,
                })?;
            } else {
                features[j] = text.parse::<f64>().map_err(|_| Error::Parse {
                    row: row_no,
                    column: FEATURE_NAMES[j].into(),
                    reason: format!("`{text}` is not a number"),
                })?;
            }
        }
        let label = match (has_labels, label_col) {
            (true, Some(col)) => match cell(col) {
                "1" => Some(true),
                "0" => Some(false),
                other => {
                    return Err(Error::Parse {
                        row: row_no,
                        column: LABEL_COLUMN.into(),
                        reason: format!("label must be 0 or 1, got `{other}`"),
                    })
                }
            },
            _ => None,
        };
        let mut extra = [0.0; 9];
        extra.copy_from_slice(&features[4..]);
        let rec = CladRecord {
            record_id: cell(id_col).to_string(),
            limit_before: features[0],
            outstanding_balance: features[1],
            rating,
            account_age_years: features[3],
            extra,
            label,
        };
        rec.validate()
            .map_err(|reason| Error::Invariant { row: row_no, reason })?;
        records.push(rec);
    }
    Dataset::new(records, provenance)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub positives: usize,
    pub positive_ratio: f64,
    pub mean_limit: f64,
    pub median_rating: CreditRating,
    pub min_account_age: f64,
    pub max_account_age: f64,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "count            {}", self.count)?;
        writeln!(f, "positives        {}", self.positives)?;
        writeln!(f, "positive_ratio   {:.4}", self.positive_ratio)?;
        writeln!(f, "mean_limit       {:.2}", self.mean_limit)?;
        writeln!(f, "median_rating    {}", self.median_rating)?;
        writeln!(f, "min_account_age  {}", self.min_account_age)?;
        write!(f, "max_account_age  {}", self.max_account_age)
    }
}

/// Summary statistics. The median rating takes the lower of the two middle
/// values when the count is even.
pub fn summarize(ds: &Dataset) -> Result<Summary> {
    if ds.is_empty() {
        return Err(Error::Empty("cannot summarize an empty dataset".into()));
    }
    let labels = ds.labels()?;
    let n = ds.len();
    let positives = labels.iter().filter(|&&y| y).count();
    let mean_limit = ds.records.iter().map(|r| r.limit_before).sum::<f64>() / n as f64;
    let mut ratings: Vec<CreditRating> = ds.records.iter().map(|r| r.rating).collect();
    ratings.sort_unstable();
    let median_rating = ratings[(n - 1) / 2];
    let (min_age, max_age) = ds.records.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |acc, r| {
        (acc.0.min(r.account_age_years), acc.1.max(r.account_age_years))
    });
    Ok(Summary {
        count: n,
        positives,
        positive_ratio: positives as f64 / n as f64,
        mean_limit,
        median_rating,
        min_account_age: min_age,
        max_account_age: max_age,
    })
}

/// Generator settings. Defaults describe the reference portfolio:
/// 10,000 cases, 74.54% positive, mean limit 1,463.72 BS, accounts 2 to 22
/// years old, median rating BB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_records: usize,
    pub positive_ratio: f64,
    pub mean_limit: f64,
    pub account_age_range: (f64, f64),
    pub median_rating: CreditRating,
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_records: 10_000,
            positive_ratio: 0.7454,
            mean_limit: 1463.72,
            account_age_range: (2.0, 22.0),
            median_rating: CreditRating::BB,
            label_noise: 0.05,
            seed: 42,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.positive_ratio > 0.0 && self.positive_ratio < 1.0) {
            return Err(Error::config("positive_ratio", "must lie in (0, 1)"));
        }
        if !(self.mean_limit.is_finite() && self.mean_limit > 0.0) {
            return Err(Error::config("mean_limit", "must be > 0"));
        }
        let (lo, hi) = self.account_age_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi && hi <= 100.0) {
            return Err(Error::config(
                "account_age_range",
                "must satisfy 0 <= min <= max <= 100",
            ));
        }
        if !(0.0..=0.5).contains(&self.label_noise) {
            return Err(Error::config("label_noise", "must lie in [0, 0.5]"));
        }
        let clean = self.clean_positive_ratio();
        if !(0.0..=1.0).contains(&clean) {
            return Err(Error::config(
                "positive_ratio",
                format!(
                    "unreachable with label_noise {}: needs a noise-free ratio of {clean:.4}",
                    self.label_noise
                ),
            ));
        }
        Ok(())
    }

    /// Noise-free positive share that yields `positive_ratio` after flipping
    /// each label with probability `label_noise`.
    fn clean_positive_ratio(&self) -> f64 {
        let e = self.label_noise;
        if (1.0 - 2.0 * e).abs() < f64::EPSILON {
            self.positive_ratio
        } else {
            (self.positive_ratio - e) / (1.0 - 2.0 * e)
        }
    }
}

/// Noise-free labelling rule used by the generator.
///
/// ```text
/// score = 0.55 (rating - 4.5) + 0.12 (age - 12) - 4.0 (utilization - 0.4)
/// label = score > cutoff
/// ```
///
/// The cutoff is the score quantile that leaves the noise-free positive share
/// of the generated cases above it. The other ten columns carry no signal
/// beyond their correlation with these three.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentRule {
    pub cutoff: f64,
}

impl LatentRule {
    pub const RATING: f64 = 0.55;
    pub const ACCOUNT_AGE: f64 = 0.12;
    pub const UTILIZATION: f64 = -4.0;

    pub fn score(&self, rec: &CladRecord) -> f64 {
        Self::RATING * (f64::from(rec.rating.ordinal()) - 4.5)
            + Self::ACCOUNT_AGE * (rec.account_age_years - 12.0)
            + Self::UTILIZATION * (rec.utilization() - 0.4)
    }

    pub fn label(&self, rec: &CladRecord) -> bool {
        self.score(rec) > self.cutoff
    }
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    generate_synthetic_with_rule(config).map(|(ds, _)| ds)
}

/// Generates a dataset and returns the rule that produced its noise-free
/// labels.
pub fn generate_synthetic_with_rule(config: &SyntheticConfig) -> Result<(Dataset, LatentRule)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rating_weights = rating_distribution(config.median_rating);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let utilization = Beta::new(2.0, 3.0).expect("beta(2,3)");
    let spend_share = Beta::new(2.0, 5.0).expect("beta(2,5)");
    let pay_ratio = Beta::new(5.0, 2.0).expect("beta(5,2)");
    let cash_adv = Beta::new(1.0, 9.0).expect("beta(1,9)");
    const LIMIT_SIGMA: f64 = 0.55;

    let (age_lo, age_hi) = config.account_age_range;
    let mut records = Vec::with_capacity(config.n_records);
    for i in 0..config.n_records {
        let rating = sample_rating(&mut rng, &rating_weights);
        let age = if age_hi > age_lo {
            round_to(rng.random_range(age_lo..=age_hi), 2).clamp(age_lo, age_hi)
        } else {
            age_lo
        };
        let z: f64 = normal.sample(&mut rng);
        let limit = round_money(
            config.mean_limit * (LIMIT_SIGMA * z - LIMIT_SIGMA * LIMIT_SIGMA / 2.0).exp(),
        )
        .max(1.0);
        let util: f64 = utilization.sample(&mut rng);
        let balance = round_money(util * limit).min(limit);
        let spend = round_money(limit * spend_share.sample(&mut rng));
        let payment_ratio = round_to(pay_ratio.sample(&mut rng), 4);
        let payment = round_money(spend * payment_ratio);
        let late_p = 0.02 + 0.03 * f64::from(9 - rating.ordinal()) / 9.0;
        let late = (0..12).filter(|_| rng.random_bool(late_p)).count() as f64;
        let months_since_adj = f64::from(rng.random_range(0u32..=60));
        let cash_advance = round_to(cash_adv.sample(&mut rng), 4);
        let products = f64::from(rng.random_range(1u32..=6));
        let util_6m = round_to((util + 0.02 * normal.sample(&mut rng)).clamp(0.0, 1.0), 4);
        let deposits = round_money(limit * 0.8 * (0.5 * normal.sample(&mut rng)).exp());

        records.push(CladRecord {
            record_id: format!("clad-{}-{:05}", config.seed, i + 1),
            limit_before: limit,
            outstanding_balance: balance,
            rating,
            account_age_years: age,
            extra: [
                spend,
                payment,
                payment_ratio,
                late,
                months_since_adj,
                cash_advance,
                products,
                util_6m,
                deposits,
            ],
            label: None,
        });
    }

    let mut rule = LatentRule {
        cutoff: f64::NEG_INFINITY,
    };
    let scores: Vec<f64> = records.iter().map(|r| rule.score(r)).collect();
    let n = records.len();
    let n_clean_pos = (config.clean_positive_ratio() * n as f64).round() as usize;
    let n_clean_neg = n - n_clean_pos.min(n);
    if n_clean_neg > 0 {
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        rule.cutoff = sorted[n_clean_neg - 1];
    }
    for (rec, s) in records.iter_mut().zip(&scores) {
        let clean = *s > rule.cutoff;
        let flip = rng.random_bool(config.label_noise);
        rec.label = Some(clean ^ flip);
    }

    let ds = Dataset::new(records, Provenance::Synthetic { seed: config.seed })?;
    Ok((ds, rule))
}

/// Probability per grade: 42% of mass below the median grade, 33% above,
/// the rest on it, decaying geometrically away from the median.
fn rating_distribution(median: CreditRating) -> [f64; 10] {
    const DECAY: f64 = 0.6;
    let m = median.ordinal() as usize;
    let below = if m > 0 { 0.42 } else { 0.0 };
    let above = if m < 9 { 0.33 } else { 0.0 };
    let mut w = [0.0; 10];
    w[m] = 1.0 - below - above;
    let spread = |range: &mut dyn Iterator<Item = usize>, mass: f64, w: &mut [f64; 10]| {
        let idx: Vec<usize> = range.collect();
        let raw: Vec<f64> = idx
            .iter()
            .map(|&k| DECAY.powi((k as i32 - m as i32).abs()))
            .collect();
        let total: f64 = raw.iter().sum();
        for (&k, r) in idx.iter().zip(raw) {
            w[k] = mass * r / total;
        }
    };
    spread(&mut (0..m), below, &mut w);
    spread(&mut (m + 1..10), above, &mut w);
    w
}

fn sample_rating(rng: &mut ChaCha8Rng, weights: &[f64; 10]) -> CreditRating {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return CreditRating::ALL[k];
        }
    }
    CreditRating::ALL[weights.iter().rposition(|&w| w > 0.0).unwrap_or(9)]
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}
