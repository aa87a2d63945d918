pub mod eval;
pub mod plot;
pub mod predict;
pub mod synth;
pub mod train;

/// Per-image prediction files inside a prediction directory.
pub const EDGE_FILE: &str = "edge.png";
pub const UNCERTAINTY_FILE: &str = "uncertainty.png";
/// Variance mapped to the full 16-bit range; `σ̂²` of a binary label never exceeds it.
pub const UNCERTAINTY_FULL_SCALE: f64 = 0.25;
