//! Release acceptance checks. Everything lives in the `acceptance` test
//! target; run it with `cargo test -p clad-acceptance -- --nocapture`.
