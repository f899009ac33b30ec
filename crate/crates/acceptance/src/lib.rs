//! Acceptance suite for `voxfcm`. The checks live in `tests/acceptance.rs`
//! and run with `cargo test -p voxfcm-validation`; pass criterion numbers
//! after `--` to run a subset.
