//! Mask geometry and the canonical phase-mask container.

use ndarray::Array2;

use crate::constants::TAU;
use crate::error::{Error, Result};

/// Pixel grid of a phase mask in the pupil plane.
///
/// `pitch_m` is the pupil-plane pixel pitch: the physical modulator pitch
/// times the relay magnification, so extents here compare directly against
/// the aperture radius of the optical train.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskGeometry {
    pub width_px: usize,
    pub height_px: usize,
    pub pitch_m: f64,
}

/// Full-panel pupil width (m): 2 × 25.4 mm aperture radius.
const PUPIL_WIDTH_M: f64 = 50.8e-3;

impl MaskGeometry {
    /// Arbitrary geometry (used by mask-file ingestion).
    pub fn new(width_px: usize, height_px: usize, pitch_m: f64) -> MaskGeometry {
        MaskGeometry {
            width_px,
            height_px,
            pitch_m,
        }
    }

    /// Full-resolution panel: 1280×1024 pixels spanning 50.8×40.64 mm in
    /// the pupil plane.
    pub fn full() -> MaskGeometry {
        MaskGeometry::new(1280, 1024, PUPIL_WIDTH_M / 1280.0)
    }

    /// Desk-scale square panel: 128×128 pixels at the same 50.8 mm extent,
    /// whose inscribed disk is exactly the default aperture.
    pub fn desk() -> MaskGeometry {
        MaskGeometry::new(128, 128, PUPIL_WIDTH_M / 128.0)
    }

    /// Coarser desk-scale panel (64×64) for the heavier closed-loop tests.
    pub fn desk_64() -> MaskGeometry {
        MaskGeometry::new(64, 64, PUPIL_WIDTH_M / 64.0)
    }

    pub fn pixel_count(&self) -> usize {
        self.width_px * self.height_px
    }

    /// Physical width (m).
    pub fn width_m(&self) -> f64 {
        self.width_px as f64 * self.pitch_m
    }

    /// Physical height (m).
    pub fn height_m(&self) -> f64 {
        self.height_px as f64 * self.pitch_m
    }

    /// Horizontal coordinate (m) of pixel column `col`, centered so column
    /// `width/2` sits at 0 — the same convention the FFT uses.
    pub fn y_of_col(&self, col: usize) -> f64 {
        (col as f64 - self.width_px as f64 / 2.0) * self.pitch_m
    }

    /// Vertical coordinate (m) of pixel row `row`.
    pub fn z_of_row(&self, row: usize) -> f64 {
        (row as f64 - self.height_px as f64 / 2.0) * self.pitch_m
    }

    /// Radius (m) of the inscribed disk, the domain of aberration bases.
    pub fn inscribed_radius_m(&self) -> f64 {
        0.5 * self.width_m().min(self.height_m())
    }

    fn describe(&self) -> String {
        format!(
            "{}x{} px @ {:.4e} m",
            self.width_px, self.height_px, self.pitch_m
        )
    }

    /// Errors unless `self` and `other` are identical.
    pub fn ensure_matches(&self, other: &MaskGeometry) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GeometryMismatch {
                a: self.describe(),
                b: other.describe(),
            })
        }
    }
}

/// Wraps an angle into the canonical [0, 2π) interval.
pub fn canonical_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    // rem_euclid of a tiny negative rounds up to exactly 2π; fold it back.
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// A phase pattern over a mask geometry, stored row-major (row = z index,
/// column = y index) with every phase canonicalized into [0, 2π).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMask {
    geometry: MaskGeometry,
    phases: Array2<f64>,
}

impl PhaseMask {
    /// All-zero mask.
    pub fn zeros(geometry: MaskGeometry) -> PhaseMask {
        PhaseMask {
            geometry,
            phases: Array2::zeros((geometry.height_px, geometry.width_px)),
        }
    }

    /// Builds a mask from a phase function of (row, col); the result is
    /// canonicalized.
    pub fn from_fn<F: FnMut(usize, usize) -> f64>(geometry: MaskGeometry, mut f: F) -> PhaseMask {
        let phases = Array2::from_shape_fn((geometry.height_px, geometry.width_px), |(r, c)| {
            canonical_phase(f(r, c))
        });
        PhaseMask { geometry, phases }
    }

    /// Wraps an existing grid (shape must match), canonicalizing phases.
    pub fn from_grid(geometry: MaskGeometry, grid: Array2<f64>) -> Result<PhaseMask> {
        if grid.dim() != (geometry.height_px, geometry.width_px) {
            return Err(Error::GeometryMismatch {
                a: geometry.describe(),
                b: format!("{}x{} grid", grid.dim().1, grid.dim().0),
            });
        }
        Ok(PhaseMask {
            geometry,
            phases: grid.mapv(canonical_phase),
        })
    }

    pub fn geometry(&self) -> MaskGeometry {
        self.geometry
    }

    pub fn phases(&self) -> &Array2<f64> {
        &self.phases
    }

    pub fn phase(&self, row: usize, col: usize) -> f64 {
        self.phases[(row, col)]
    }

    /// Pixelwise sum mod 2π.
    pub fn add(&self, other: &PhaseMask) -> Result<PhaseMask> {
        self.geometry.ensure_matches(&other.geometry)?;
        Ok(PhaseMask {
            geometry: self.geometry,
            phases: ndarray::Zip::from(&self.phases)
                .and(&other.phases)
                .map_collect(|&a, &b| canonical_phase(a + b)),
        })
    }

    /// Pixelwise difference mod 2π.
    pub fn subtract(&self, other: &PhaseMask) -> Result<PhaseMask> {
        self.geometry.ensure_matches(&other.geometry)?;
        Ok(PhaseMask {
            geometry: self.geometry,
            phases: ndarray::Zip::from(&self.phases)
                .and(&other.phases)
                .map_collect(|&a, &b| canonical_phase(a - b)),
        })
    }
}
