//! Criterion benchmarks for the averaging primitives live under `benches/`.
//! This crate intentionally exports nothing.
