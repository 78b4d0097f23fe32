pub mod datasets;
pub mod diagnostics;
pub mod exact;
pub mod models;
pub mod numeric;
pub mod partition;
pub mod sampler;
pub mod synth;
