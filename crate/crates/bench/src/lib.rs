//! Criterion benchmarks for the core engines; see `benches/`.
