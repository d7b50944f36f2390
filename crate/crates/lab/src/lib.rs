//! Experiment driver around the simulator, classifiers and inference service.

pub mod cli;
pub mod desk;
pub mod manifest;
pub mod pipeline;
pub mod sweep;
pub mod tables;
