//! Criterion benches for rpca-core live in benches/.
