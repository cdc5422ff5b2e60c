//! Empty library crate; the criterion benchmarks live in `benches/hdclt.rs`.
