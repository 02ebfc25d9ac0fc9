//! Command-line front end for the adaptive flow integrator: scenario
//! definitions, experiment drivers, flat-file configuration, CSV emission.

pub mod config;
pub mod drivers;
pub mod report;
pub mod scenario;
