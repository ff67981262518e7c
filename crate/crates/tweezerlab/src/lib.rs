//! A desk-scale virtual laboratory for spatial-light-modulator (SLM) generated
//! optical tweezers aligned onto a single trapped ¹⁷⁴Yb⁺ ion.
//!
//! The crate models the full chain of a tweezer-alignment experiment:
//!
//! * [`physics`] — four-level and ten-level atomic models of ¹⁷⁴Yb⁺ driven on
//!   the 369 nm cooling and 935 nm repump/tweezer transitions, with Lindblad
//!   steady-state solvers and closed-form scattering rates.
//! * [`optics`] — phase masks, blazed gratings, scalar Fourier-optics
//!   propagation from the objective pupil to the focal plane, and 2-D
//!   Gaussian / 1-D skew-Gaussian beam fits.
//! * [`zernike`] — Noll-indexed Zernike basis on the pupil disk: evaluation,
//!   least-squares decomposition, order-filtered reconstruction.
//! * [`correction`] — sensorless zone-interference aberration correction,
//!   checkerboard two-tweezer splitting, and a weighted Gerchberg–Saxton
//!   multi-spot solver.
//! * [`probe`] — the virtual experiment: a trapped ion as a sub-wavelength
//!   intensity probe, with thermal position averaging, Poisson photon
//!   counting, fluorescence/CPT maps, and Rabi-profile extraction.
//! * [`mechanics`] — static force balance between the Paul trap, the tweezer
//!   dipole force, and Doppler radiation pressure; predicts the apparent
//!   beam-center bias versus axial confinement.
//! * [`scenario`] — JSON scenario configs, deterministic seeded execution,
//!   and CSV/mask artifact emission for every pipeline.
//!
//! Conventions used throughout:
//!
//! * All frequencies are angular (rad/s) unless a name says otherwise;
//!   configuration files accept values in MHz meaning ×2π MHz.
//! * All lengths are metres. Phase-mask pixels store radians in `[0, 2π)`.
//! * Mask geometry lives in the objective **pupil** plane: the relay telescope
//!   between the SLM panel and the objective is absorbed into the pixel
//!   pitch, so propagation is a single scaled Fourier transform.
//! * Determinism: every stochastic quantity derives from one `u64` scenario
//!   seed through a splitmix-style expansion ([`seed`]); identical scenario +
//!   seed produces byte-identical output files at any thread count.

pub mod constants;
pub mod correction;
pub mod error;
pub mod io;
pub mod mechanics;
pub mod optics;
pub mod physics;
pub mod probe;
pub mod scenario;
pub mod seed;
pub mod zernike;

pub use error::{Error, Result};
