#![allow(dead_code)]

use clad_core::data::{CladRecord, CreditRating, Dataset, Provenance};
use proptest::prelude::*;

/// Money with whole cents, so text round-trips are exact.
pub fn money(lo_cents: i64, hi_cents: i64) -> impl Strategy<Value = f64> {
    (lo_cents..=hi_cents).prop_map(|c| c as f64 / 100.0)
}

pub fn rating() -> impl Strategy<Value = CreditRating> {
    (0u8..10).prop_map(|o| CreditRating::from_ordinal(o).unwrap())
}

pub fn record(id: usize) -> impl Strategy<Value = CladRecord> {
    (
        money(100, 1_000_000),
        0.0f64..=1.0,
        rating(),
        0.0f64..=100.0,
        prop::array::uniform9(-1e6f64..1e6),
        prop::option::of(any::<bool>()),
    )
        .prop_map(move |(limit, share, rating, age, mut extra, label)| {
            // spend, payment and deposits are money columns
            for j in [0, 1, 8] {
                extra[j] = (extra[j] * 100.0).round() / 100.0;
            }
            let balance = ((limit * share * 100.0).floor() / 100.0).min(limit);
            CladRecord {
                record_id: format!("r{id:04}"),
                limit_before: limit,
                outstanding_balance: balance,
                rating,
                account_age_years: age,
                extra,
                label,
            }
        })
}

pub fn labelled_dataset(max: usize) -> impl Strategy<Value = Dataset> {
    (1..=max).prop_flat_map(|n| {
        (0..n)
            .map(|i| {
                record(i).prop_map(|mut r| {
                    r.label.get_or_insert(false);
                    r
                })
            })
            .collect::<Vec<_>>()
            .prop_map(|recs| Dataset::new(recs, Provenance::Derived).unwrap())
    })
}
