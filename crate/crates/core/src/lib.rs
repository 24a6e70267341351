//! Discrete-event simulation of a fog-assisted IoT cell with joint radio and
//! compute allocation, an actor-critic allocator, two single-dimension
//! learning baselines and an exhaustive oracle for small static instances.

pub mod agent;
pub mod alloc;
pub mod error;
pub mod experiment;
pub mod model;
pub mod nn;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
