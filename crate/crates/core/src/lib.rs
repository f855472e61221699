//! Fog-to-cloud orchestration simulator with an airport proximity workload.

pub mod analytics;
pub mod placement;
pub mod positioning;
pub mod qos;
pub mod recommender;
pub mod rng;
pub mod simnet;
pub mod topology;
pub mod workload;
pub mod harness;
