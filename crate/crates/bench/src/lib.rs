//! Benchmarks live in `benches/`; the robustness sweep is the `robustness`
//! binary.
