//! Criterion benchmarks for the signal path and the network; see `benches/`.
