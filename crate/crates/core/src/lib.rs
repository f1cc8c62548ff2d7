//! Core algorithms for the aegis content pipeline.

pub mod generator;
pub mod integrator;
pub mod orchestrator;
pub mod planner;
pub mod provenance;
pub mod raster;
pub mod reviewer;
pub mod robustness;
pub mod rng;
pub mod watermark;
