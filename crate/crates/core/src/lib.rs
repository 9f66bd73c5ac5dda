pub mod answerer;
pub mod datagen;
pub mod dsl;
pub mod experiment;
pub mod metrics;
pub mod mode;
pub mod qa;
pub mod rng;
pub mod scm;
pub mod worlds;

pub use mode::GeneralizationMode;
