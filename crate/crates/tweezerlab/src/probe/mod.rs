//! The virtual experiment: a trapped ion probing the focal light field.
//!
//! A [`VirtualLab`] owns the displayed phase mask, a hidden aberration the
//! correction algorithm is supposed to discover, the trap and camera
//! configuration, and the atomic parameters. Measurements average the
//! focal amplitude over the ion's thermal position distribution, convert
//! it to a Rabi frequency with one scalar calibration, evaluate the
//! scattering rate (closed-form four-level or full ten-level), and draw
//! Poisson counts from a per-measurement derived seed so scans are
//! reproducible regardless of thread count.

pub mod chain;
pub mod lab;
pub mod rabi;
pub mod scan;

pub use chain::{chain_equilibrium, chain_length_scale};
pub use lab::{
    thermal_spread, CameraModel, FluorescenceModel, IonState, PositionCalibration, TrapConfig,
    VirtualLab,
};
pub use rabi::{extract_rabi_profile, RabiPoint, RabiProfile, RabiSweepData};
pub use scan::{cpt_map, map_beam, BeamMapScan, CptAxis, CptMap, MapPoint};
