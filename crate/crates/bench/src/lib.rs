//! Criterion benchmarks for the `fednl` kernels live in `benches/`.
