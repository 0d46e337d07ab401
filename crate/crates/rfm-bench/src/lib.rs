//! Benchmark-only package; see `benches/core.rs`.
