//! Scenario files and the runners behind the command-line interface.
//!
//! A scenario is one JSON document describing the whole virtual
//! experiment. Its SHA-256 hash stamps every artifact, and all randomness
//! descends from its single root seed, so a scenario file plus a command
//! name reproduces every output byte for byte.

pub mod config;

pub use config::{
    AberrationSection, AberrationTerm, AtomsSection, CameraSection, CorrectionSection, CptSection,
    ForcesSection, GeometrySection, GratingSection, IonSection, MapSection, ModelKind,
    PowerSection, RabiSection, Scenario, TrainSection, TrapSection, TwoTweezerSection,
    ZeemanSection, ZernikeSection,
};
