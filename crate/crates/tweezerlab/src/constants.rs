//! Physical constants (SI) and the default ¹⁷⁴Yb⁺ parameter set.

/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K).
pub const KB: f64 = 1.380_649e-23;
/// Bohr magneton (J/T).
pub const MU_B: f64 = 9.274_010_078_3e-24;
/// Elementary charge (C).
pub const E_CHARGE: f64 = 1.602_176_634e-19;
/// Vacuum permittivity (F/m).
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Atomic mass unit (kg).
pub const AMU: f64 = 1.660_539_066_6e-27;
/// 2π, for converting ordinary frequencies to angular ones.
pub const TAU: f64 = std::f64::consts::TAU;

/// Mass of ¹⁷⁴Yb⁺ (kg).
pub const YB174_MASS: f64 = 173.938_866 * AMU;

/// Natural linewidth of the P₁/₂ level, Γ_P = 2π × 21 MHz (rad/s).
pub const GAMMA_P: f64 = TAU * 21.0e6;
/// Natural linewidth of the [3/2]₁/₂ level, Γ₃/₂ = 2π × 4.2 MHz (rad/s).
pub const GAMMA_32: f64 = TAU * 4.2e6;

/// Branching fraction P₁/₂ → S₁/₂.
pub const B_S_P: f64 = 0.995;
/// Branching fraction P₁/₂ → D₃/₂.
pub const B_D_P: f64 = 0.005;
/// Branching fraction [3/2]₁/₂ → S₁/₂.
pub const B_S_32: f64 = 0.982;
/// Branching fraction [3/2]₁/₂ → D₃/₂.
pub const B_D_32: f64 = 0.018;

/// Cooling / detection transition wavelength S₁/₂ ↔ P₁/₂ (m).
pub const LAMBDA_369: f64 = 369.5e-9;
/// Repump / tweezer transition wavelength D₃/₂ ↔ [3/2]₁/₂ (m).
pub const LAMBDA_935: f64 = 935.2e-9;

/// Landé g-factor of S₁/₂ (pure electron spin).
pub const G_S: f64 = 2.0;
/// Landé g-factor of P₁/₂.
pub const G_P: f64 = 2.0 / 3.0;
/// Landé g-factor of D₃/₂.
pub const G_D: f64 = 0.8;
/// Landé g-factor of the [3/2]₁/₂ level (LS-coupling estimate).
pub const G_32: f64 = 1.33;

/// Photon-counting convention for the detected fluorescence channel:
/// the reported scattering rate is `KAPPA_SCATTER × Γ_P × ρ_PP`, i.e. every
/// P-level decay is counted as one detected-channel photon. The value 1 (as
/// opposed to the 369 nm branching fraction 0.995) is pinned by the
/// analytic-versus-Liouvillian oracle in the test suite: the closed-form
/// four-level rate equals `Γ_P ρ_PP` to machine precision, and only that
/// convention keeps the analytic and numeric rates consistent.
pub const KAPPA_SCATTER: f64 = 1.0;
