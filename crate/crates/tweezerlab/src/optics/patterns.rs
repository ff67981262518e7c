//! Stock phase patterns: blazed gratings, pattern composition, and
//! synthetic aberrations expanded from a disk-polynomial basis.

use super::geometry::{MaskGeometry, PhaseMask};
use crate::constants::TAU;
use crate::error::{Error, Result};
use crate::zernike::ZernikeCoefficients;

/// Linear phase ramp mod 2π steering the first diffraction order along
/// `direction`. An infinite period is the flat mask.
///
/// The first-order focal displacement is λf/period along `direction`.
pub fn blazed_grating(
    period_m: f64,
    direction: [f64; 2],
    geometry: MaskGeometry,
) -> Result<PhaseMask> {
    if period_m.is_infinite() {
        return Ok(PhaseMask::zeros(geometry));
    }
    let nyquist = 2.0 * geometry.pitch_m;
    if !(period_m >= nyquist) {
        return Err(Error::AliasError {
            period_m,
            nyquist_m: nyquist,
            pitch_m: geometry.pitch_m,
        });
    }
    let norm = (direction[0] * direction[0] + direction[1] * direction[1]).sqrt();
    if norm < 1e-300 {
        return Err(Error::ZeroVector {
            which: "grating direction",
        });
    }
    let (dy, dz) = (direction[0] / norm, direction[1] / norm);
    let k = TAU / period_m;
    Ok(PhaseMask::from_fn(geometry, |r, c| {
        k * (geometry.y_of_col(c) * dy + geometry.z_of_row(r) * dz)
    }))
}

/// Parameters of a steering grating: period and blaze direction. Keeping
/// the parameters (rather than only the rendered mask) lets procedures
/// derive the focal spot and a matched background grating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GratingSpec {
    /// Grating period on the pupil (m); `INFINITY` means no grating.
    pub period_m: f64,
    /// Blaze direction in the pupil plane, (y, z) components (normalized
    /// internally).
    pub direction: [f64; 2],
}

impl Default for GratingSpec {
    fn default() -> Self {
        Self {
            period_m: 4.0e-3,
            direction: [1.0, 0.0],
        }
    }
}

impl GratingSpec {
    /// Render the grating on a mask geometry.
    pub fn mask(&self, geometry: MaskGeometry) -> Result<PhaseMask> {
        blazed_grating(self.period_m, self.direction, geometry)
    }

    /// Matched background grating: perpendicular direction, half the
    /// period, so rejected light lands far from the first-order spot.
    pub fn background(&self) -> GratingSpec {
        GratingSpec {
            period_m: self.period_m / 2.0,
            direction: [-self.direction[1], self.direction[0]],
        }
    }

    /// First-order focal displacement (y, z) in meters: λf/period along
    /// the blaze direction.
    pub fn focal_spot(&self, wavelength: f64, focal_length: f64) -> (f64, f64) {
        if self.period_m.is_infinite() {
            return (0.0, 0.0);
        }
        let norm =
            (self.direction[0] * self.direction[0] + self.direction[1] * self.direction[1]).sqrt();
        let disp = wavelength * focal_length / self.period_m;
        (
            disp * self.direction[0] / norm,
            disp * self.direction[1] / norm,
        )
    }
}

/// The complete pattern rendered on the modulator: manufacturer flatness
/// map + steering grating + measured correction, summed pixelwise mod 2π.
pub fn compose_pattern(
    flatness: &PhaseMask,
    grating: &PhaseMask,
    correction: &PhaseMask,
) -> Result<PhaseMask> {
    flatness.add(grating)?.add(correction)
}

/// Ground-truth synthetic aberration: Σ cⱼ Zⱼ evaluated on the inscribed
/// unit disk of the geometry, zero outside the disk.
pub fn inject_aberration(coeffs: &ZernikeCoefficients, geometry: MaskGeometry) -> PhaseMask {
    let radius = geometry.inscribed_radius_m();
    PhaseMask::from_fn(geometry, |r, c| {
        let y = geometry.y_of_col(c);
        let z = geometry.z_of_row(r);
        let rho = (y * y + z * z).sqrt() / radius;
        if rho > 1.0 {
            return 0.0;
        }
        coeffs.eval(rho, z.atan2(y))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn infinite_period_gives_flat_mask() {
        let mask = blazed_grating(f64::INFINITY, [0.0, 1.0], MaskGeometry::desk()).unwrap();
        assert!(mask.phases().iter().all(|&p| p == 0.0));
    }

    #[test]
    fn sub_nyquist_period_is_rejected() {
        let g = MaskGeometry::desk();
        let err = blazed_grating(1.5 * g.pitch_m, [0.0, 1.0], g).unwrap_err();
        assert!(matches!(err, Error::AliasError { .. }));
        assert!(blazed_grating(2.0 * g.pitch_m, [0.0, 1.0], g).is_ok());
    }

    #[test]
    fn phase_advances_one_cycle_per_period() {
        let g = MaskGeometry::desk();
        let period = 8.0 * g.pitch_m;
        let mask = blazed_grating(period, [1.0, 0.0], g).unwrap();
        // Along the grating direction the phase repeats every 8 columns
        // (compared as angles: 0 and values just below 2π coincide).
        for c in 0..g.width_px - 8 {
            let diff = mask.phase(10, c) - mask.phase(10, c + 8);
            let wrapped = (diff + std::f64::consts::PI).rem_euclid(crate::constants::TAU)
                - std::f64::consts::PI;
            assert!(wrapped.abs() < 1e-9, "col {c}: angular gap {wrapped:e}");
        }
        // And is constant transverse to it.
        for r in 1..g.height_px {
            assert_eq!(mask.phase(r, 17), mask.phase(0, 17));
        }
    }

    #[test]
    fn composition_is_order_independent() {
        let g = MaskGeometry::desk_64();
        let a = blazed_grating(10.0 * g.pitch_m, [1.0, 0.0], g).unwrap();
        let b = blazed_grating(6.0 * g.pitch_m, [0.0, 1.0], g).unwrap();
        let c = PhaseMask::from_fn(g, |r, _| 0.2 + 0.001 * r as f64);
        let abc = compose_pattern(&a, &b, &c).unwrap();
        let cba = compose_pattern(&c, &b, &a).unwrap();
        for (p, q) in abc.phases().iter().zip(cba.phases().iter()) {
            let d = (p - q).rem_euclid(TAU);
            assert!(d < 1e-9 || TAU - d < 1e-9);
        }
    }

    #[test]
    fn zero_flatness_and_correction_leave_grating_unchanged() {
        let g = MaskGeometry::desk();
        let grating = blazed_grating(12.0 * g.pitch_m, [1.0, 0.0], g).unwrap();
        let zero = PhaseMask::zeros(g);
        let composed = compose_pattern(&zero, &grating, &zero).unwrap();
        assert_eq!(composed, grating);
    }

    #[test]
    fn injected_aberration_vanishes_outside_the_disk() {
        let coeffs = ZernikeCoefficients::from_pairs(&[(4, 1.0)]).unwrap();
        let mask = inject_aberration(&coeffs, MaskGeometry::desk());
        // Corner pixel lies outside the inscribed disk.
        assert_eq!(mask.phase(0, 0), 0.0);
        // Center pixel carries the defocus value √3(2·0−1) = −√3, wrapped.
        assert_relative_eq!(
            mask.phase(64, 64),
            TAU - 3f64.sqrt(),
            max_relative = 1e-12
        );
    }
}
