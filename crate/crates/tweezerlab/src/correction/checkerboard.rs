//! Checkerboard pupil split: two gratings interleaved cell by cell so one
//! modulator drives two tweezers at once.

use crate::error::{Error, Result};
use crate::optics::PhaseMask;

/// Interleaves two phase masks on a checkerboard of `cell_px`-sized square
/// cells: even-parity cells take `grating_a`, odd-parity cells take
/// `grating_b`. A shared correction pattern composes on top unchanged.
pub fn checkerboard_split(
    grating_a: &PhaseMask,
    grating_b: &PhaseMask,
    cell_px: usize,
) -> Result<PhaseMask> {
    grating_a.geometry().ensure_matches(&grating_b.geometry())?;
    if cell_px == 0 {
        return Err(Error::ScenarioValue {
            field: "cell_px".into(),
            reason: "checkerboard cell size must be at least 1 pixel".into(),
        });
    }
    let geometry = grating_a.geometry();
    Ok(PhaseMask::from_fn(geometry, |r, c| {
        if (r / cell_px + c / cell_px) % 2 == 0 {
            grating_a.phase(r, c)
        } else {
            grating_b.phase(r, c)
        }
    }))
}
