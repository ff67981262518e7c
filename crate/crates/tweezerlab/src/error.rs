//! Crate-wide error type.

use thiserror::Error;

/// Unified error for every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    // ---- physics ----
    /// Hamiltonian and jump operators act on different Hilbert-space dimensions.
    #[error("dimension mismatch: Hamiltonian is {dim_h}x{dim_h} but a jump operator is {dim_jump}x{dim_jump}")]
    DimensionMismatch { dim_h: usize, dim_jump: usize },
    /// A decay channel was built with a non-positive rate.
    #[error("decay channel rate must be positive, got {rate}")]
    NegativeRate { rate: f64 },
    /// Branching fractions of one upper manifold do not sum to 1.
    #[error("branching fractions for {manifold} sum to {sum}, expected 1")]
    BranchingSum { manifold: &'static str, sum: f64 },
    /// Summed sublevel decay rates disagree with linewidth × branching.
    #[error("decay sum rule violated for upper sublevel {sublevel}: expected {expected}, got {actual}")]
    SumRuleViolation {
        sublevel: &'static str,
        expected: f64,
        actual: f64,
    },
    /// Both drives are off, so no scattering rate is defined.
    #[error("undriven system: both Rabi frequencies are zero")]
    UndrivenSystem,
    /// The Liouvillian null space has dimension > 1: a decoupled (dark)
    /// manifold makes the steady state non-unique.
    #[error("degenerate steady state: Liouvillian null space has dimension {null_dim}")]
    DegenerateSteadyState { null_dim: usize },
    /// The steady-state linear solve failed outright.
    #[error("steady-state solve failed: {reason}")]
    SteadyStateSolve { reason: String },
    /// A state failed the Hermiticity / trace / positivity checks.
    #[error("non-physical density operator: {detail}")]
    NonPhysicalState { detail: String },
    /// A polarization or quantization-axis vector has (near-)zero length.
    #[error("zero-length vector where a unit vector is required: {which}")]
    ZeroVector { which: &'static str },
    /// A required coupling-table entry is absent.
    #[error("missing coupling-table entry for {transition} m2_upper={m2_upper} m2_lower={m2_lower}")]
    MissingCoupling {
        transition: &'static str,
        m2_upper: i8,
        m2_lower: i8,
    },

    // ---- optics ----
    /// Two masks with different geometries were combined.
    #[error("mask geometry mismatch: {a} vs {b}")]
    GeometryMismatch { a: String, b: String },
    /// Grating period below the two-pixel Nyquist limit.
    #[error("grating period {period_m} m is below the Nyquist limit {nyquist_m} m for pitch {pitch_m} m")]
    AliasError {
        period_m: f64,
        nyquist_m: f64,
        pitch_m: f64,
    },
    /// Focal-plane sample spacing too coarse for the expected spot.
    #[error("undersampled focal field: sample spacing {dx_m} m exceeds the limit {limit_m} m; increase zero padding")]
    SamplingError { dx_m: f64, limit_m: f64 },
    /// A requested focal-plane target lies outside the addressable band.
    #[error("target at ({y_m}, {z_m}) m is outside the addressable focal band ±{band_m} m")]
    TargetOutOfBand { y_m: f64, z_m: f64, band_m: f64 },

    // ---- fitting ----
    /// Iterative fit failed to converge.
    #[error("fit did not converge after {iterations} iterations (last relative cost change {last_change:.3e})")]
    NoConvergence {
        iterations: usize,
        last_change: f64,
    },
    /// Map has no peak above its background estimate.
    #[error("degenerate map: maximum {max} does not exceed the offset estimate {offset}")]
    DegenerateMap { max: f64, offset: f64 },
    /// Linear system rank-deficient for the requested basis size.
    #[error("rank-deficient fit: rank {rank} < {cols} basis columns")]
    RankDeficient { rank: usize, cols: usize },
    /// Not enough samples for the requested fit.
    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },
    /// Invalid Zernike index.
    #[error("invalid Zernike index j={j} (valid: j >= 1)")]
    InvalidZernikeIndex { j: usize },

    // ---- correction / partition ----
    /// Zone count exceeds the pixel count of the mask.
    #[error("zone count {zones} exceeds pixel count {pixels}")]
    TooManyZones { zones: usize, pixels: usize },
    /// The probe zone index is invalid or equals the reference zone.
    #[error("invalid probe zone {zone}: {reason}")]
    InvalidZone { zone: usize, reason: String },
    /// A phase sweep produced no usable interference fringe.
    #[error("low fringe contrast in zone {zone}: amplitude {amplitude:.3} counts below threshold {threshold:.3}")]
    LowContrast {
        zone: usize,
        amplitude: f64,
        threshold: f64,
    },

    // ---- mechanics ----
    /// No sign change of the total force on the search bracket.
    #[error("no force-balance bracket found on [{lo_m}, {hi_m}] m")]
    NoBracket { lo_m: f64, hi_m: f64 },

    // ---- scenario / io ----
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// Scenario file failed to parse; serde reports line/column and the
    /// offending field (unknown keys are rejected).
    #[error("scenario parse error: {0}")]
    ScenarioParse(#[from] serde_json::Error),
    /// A scenario value is outside its valid domain.
    #[error("invalid scenario value for `{field}`: {reason}")]
    ScenarioValue { field: String, reason: String },
    /// A TWZM mask file is malformed.
    #[error("bad TWZM file {path}: {reason}")]
    BadMaskFile { path: String, reason: String },
    /// `validate` found failing invariants.
    #[error("{failed} of {total} validation checks failed")]
    ValidationFailed { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
