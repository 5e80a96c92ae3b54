//! Criterion benchmarks for the hot loops in `chc-core`; see `benches/`.
