pub mod benchmark;
pub mod classifier;
pub mod cli;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod explainer;
pub mod metamorphic;
pub mod ranking;
pub mod schema;
pub mod vector;
