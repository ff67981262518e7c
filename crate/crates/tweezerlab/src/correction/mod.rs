//! Measurement-based wavefront correction and multi-spot mask synthesis.
//!
//! The correction algorithm divides the modulator into zones, steers the
//! tweezer onto the ion with a target grating, and sweeps the global phase
//! of one probe zone at a time while the reference zone stays fixed and
//! every other zone shows a background grating that dumps its light far
//! from the ion. The fluorescence fringe recorded during the sweep peaks
//! at the phase that cancels the zone's wavefront error; stitching the
//! per-zone phases yields a piecewise-constant correction pattern.
//!
//! Also here: a checkerboard pupil split that drives two tweezers from
//! one modulator, and a weighted iterative-projection spot designer for
//! arbitrary focal patterns.

mod checkerboard;
mod gs;
mod run;
mod sweep;
mod zones;

pub use checkerboard::checkerboard_split;
pub use gs::{gerchberg_saxton, SpotDesign, SpotTarget};
pub use run::{
    circular_residual_rms, correction_ladder, residual_wavefront_rms, run_correction,
    run_correction_with, zone_phase_stats, CorrectionPattern, CorrectionRun, LadderPoint,
    RunOptions,
};
pub use sweep::{
    half_turnover_omega, probe_zone_sweep, sweep_display_mask, ProbeSweepRecord, SweepContext,
};
pub use zones::{partition_zones, ZonePartition};
