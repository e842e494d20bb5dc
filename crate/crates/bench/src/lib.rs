//! Criterion benchmarks for the wiring kernels live under `benches/`.
