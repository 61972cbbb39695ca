//! Criterion benchmarks for the `fieldpipe` hot paths; see `benches/`.
