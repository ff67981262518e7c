//! Phase-mask generation and scalar Fourier propagation to the focal plane.
//!
//! Masks live in the pupil plane of the focusing doublet. The relay
//! telescope between the physical modulator panel and that pupil is
//! absorbed into the pixel pitch, so a full-panel mask spans the 50.8 mm
//! pupil diameter directly and no separate magnification bookkeeping is
//! needed downstream. Desk-scale geometries keep the same physical extent
//! at reduced resolution so tests stay fast.
//!
//! Propagation is scalar: the focal field is the scaled Fourier transform
//! of `e^{iφ} · Gaussian(w_in) · aperture`, zero-padded until the focal
//! sampling resolves the diffraction-limited waist.

pub mod gaussian_fit;
pub mod geometry;
pub mod lm;
pub mod patterns;
pub mod propagate;
pub mod skew_fit;

pub use gaussian_fit::{fit_gaussian_2d, GaussianFit2D};
pub use geometry::{canonical_phase, MaskGeometry, PhaseMask};
pub use lm::{golden_max, levenberg_marquardt, LmOptions, LmOutcome};
pub use patterns::{blazed_grating, compose_pattern, inject_aberration, GratingSpec};
pub use propagate::{
    focal_field_at, focal_field_grid, input_field, propagate_to_focus, ComplexField, OpticalTrain,
    PadFactor,
};
pub use skew_fit::{fit_skew_gaussian_1d, SkewGaussianFit};
