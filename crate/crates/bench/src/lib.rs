//! Criterion benchmarks for the channel model, the beamforming solver, the
//! rotation-block gradient and a short alternating-optimization run. See
//! `benches/core.rs`; run with `cargo bench -p polara-bench`.
