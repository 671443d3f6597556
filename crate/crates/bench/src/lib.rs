//! Criterion benchmarks for `ptpbe-core`. See `benches/solver.rs`.
