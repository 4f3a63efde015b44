//! Weight sharing for CNN accelerators: network definitions, DRAM traffic
//! and energy modelling, k-means weight clustering, a reference inference
//! engine and detection metrics.

pub mod cluster;
pub mod detmetrics;
pub mod energy;
pub mod engine;
pub mod netdef;
pub mod traffic;
