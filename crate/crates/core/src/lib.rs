pub mod dataio;
pub mod dynamics;
pub mod json;
pub mod metrics;
pub mod netgen;
pub mod pipeline;
