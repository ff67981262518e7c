//! Atomic physics of the driven ¹⁷⁴Yb⁺ ion.
//!
//! Two internal-level models are provided:
//!
//! * a four-level cascade `(S, P, D, 3/2)` — the S₁/₂, P₁/₂, D₃/₂ and
//!   [3/2]₁/₂ manifolds collapsed to one state each — with a closed-form
//!   steady-state scattering rate, and
//! * the full ten-sublevel Zeeman-resolved model, which exhibits coherent
//!   population trapping (CPT) in the D₃/₂ manifold.
//!
//! Both are driven by two lasers: the 369 nm Doppler/detection beam
//! (S ↔ P) and the 935 nm repump/tweezer beam (D ↔ [3/2]). The ion is
//! treated as a stationary point source; only steady states are computed.

pub mod four_level;
pub mod lindblad;
pub mod ten_level;

pub use four_level::{
    four_level_populations, hamiltonian_4level, jump_operators_4level, scattering_rate_4level,
    scattering_rate_4level_analytic, FourLevelParams, Populations4,
};
pub use lindblad::{liouvillian, steady_state, DensityOperator};
pub use ten_level::{
    coupling_table_369, coupling_table_935, fluorescence_10level, hamiltonian_10level,
    jump_operators_10level, polarization_overlap, CouplingTable, LaserDrive, TenLevelParams,
    ZeemanEnvironment, LEVEL_COUNT,
};
