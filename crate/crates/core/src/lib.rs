//! Attitude control simulation, analysis and calibration library.

pub mod attmath;
pub mod environment;
pub mod plant;
pub mod obsreward;
pub mod control;
pub mod safety;
pub mod telemetry;
pub mod calib;
pub mod simloop;
pub mod config;
