//! Holds the `acceptance` test target only. It lives in its own package so
//! that, under `cargo test --workspace`, it runs after every other target:
//! some of its criteria are known to fail and would otherwise stop the run.
