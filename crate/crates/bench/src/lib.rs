//! Benchmark-only crate; the criterion targets live under benches/.
