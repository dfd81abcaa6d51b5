//! Criterion benchmarks for lossrate-core live in `benches/`.
