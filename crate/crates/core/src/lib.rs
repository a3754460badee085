//! Hybrid feedback navigation for a point robot among disjoint spherical
//! obstacles in `R^n`, with a headless simulator.

pub mod controller;
pub mod diffdrive;
pub mod executor;
pub mod geometry;
pub mod metrics;
pub mod par;
pub mod scenario;
pub mod sensor;
pub mod suite;
pub mod world;

pub use controller::{Controller, ControllerConfig, HybridState, Mode, VirtualDestinations};
pub use geometry::VecN;
pub use world::{ObstacleSpec, Params, Workspace};
