//! Criterion benchmarks for the trajectory metrics and the solver backbones.
//! See `benches/`.
