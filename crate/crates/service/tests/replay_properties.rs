//! Session state is a pure fold over its log: whatever sequence of requests
//! the live service accepted, replaying the log reproduces it.

mod common;

use clad_service::api::AgreementView;
use clad_service::service::DecideRequest;
use clad_service::session::Session;
use common::*;
use proptest::prelude::*;

fn ops() -> impl Strategy<Value = Vec<(usize, bool)>> {
    prop::collection::vec((0usize..30, any::<bool>()), 0..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn replay_matches_live(ops in ops(), close_at in prop::option::of(0usize..60)) {
        let dir = tempfile::tempdir().unwrap();
        seed_store(dir.path());
        let svc = service(dir.path(), None, None);
        let id = svc
            .open_session(serde_json::from_value(serde_json::json!({
                "alpha": 0.3, "model": "stump", "case_ids": ids(105..135)
            })).unwrap())
            .unwrap();
        for (n, (i, yes)) in ops.iter().enumerate() {
            if close_at == Some(n) {
                let _ = svc.close(&id);
            }
            // Rejected requests must leave no trace in the log.
            let _ = svc.record_decision(&id, DecideRequest {
                record_id: format!("c{:03}", 105 + i),
                committee_decision: *yes,
                note: Some(format!("op {n}")),
            });
        }
        let live = svc.with_session(&id, |s| Ok(s.clone())).unwrap();
        let replayed = Session::replay(svc.store().read_log(&id).unwrap()).unwrap();
        prop_assert_eq!(&live, &replayed);
        let render = |s: &Session| s.agreement().ok().map(|a| serde_json::to_vec(&AgreementView::from(a)).unwrap());
        prop_assert_eq!(render(&live), render(&replayed));
    }
}
