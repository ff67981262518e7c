//! Weighted iterative spot design: phase-only masks for arbitrary sets of
//! focal spots, with per-spot weight feedback for uniformity.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constants::TAU;
use crate::error::{Error, Result};
use crate::optics::{input_field, MaskGeometry, OpticalTrain, PhaseMask};

/// One requested focal spot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpotTarget {
    pub y_m: f64,
    pub z_m: f64,
    /// Relative target intensity (> 0).
    pub weight: f64,
}

/// Result of the spot-design iteration.
#[derive(Debug, Clone)]
pub struct SpotDesign {
    pub mask: PhaseMask,
    /// Focal intensity delivered at each target.
    pub spot_intensities: Vec<f64>,
    /// (max − min)/(max + min) of the weight-normalized intensities.
    pub uniformity_error: f64,
    /// True when zero iterations were requested: the mask is the untouched
    /// random start.
    pub random_start: bool,
}

/// Designs a phase-only mask whose focal field concentrates light at the
/// requested spots with the requested weight ratios.
///
/// Each iteration projects between the two constraint sets: the focal
/// field is evaluated at the targets, per-spot gains are nudged toward
/// uniformity (deviation feedback on the weighted amplitudes), and the
/// pupil phase is rebuilt from the back-propagated superposition while the
/// pupil amplitude stays fixed at the beam profile. The random start
/// breaks the symmetry between equivalent solutions, so runs are seeded.
pub fn gerchberg_saxton(
    targets: &[SpotTarget],
    iterations: usize,
    geometry: MaskGeometry,
    train: &OpticalTrain,
    seed: u64,
) -> Result<SpotDesign> {
    if targets.is_empty() {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    let band = train.focal_band(geometry.pitch_m);
    for t in targets {
        if !(t.weight > 0.0) {
            return Err(Error::ScenarioValue {
                field: "targets.weight".into(),
                reason: format!("spot weight must be positive, got {}", t.weight),
            });
        }
        if t.y_m.abs() > band || t.z_m.abs() > band {
            return Err(Error::TargetOutOfBand {
                y_m: t.y_m,
                z_m: t.z_m,
                band_m: band,
            });
        }
    }
    train.validate()?;

    // Fixed pupil amplitude profile and per-pixel coordinates.
    let amp = input_field(&PhaseMask::zeros(geometry), train);
    let lf = train.wavelength * train.focal_length;
    let scale = Complex64::new(geometry.pitch_m * geometry.pitch_m, 0.0) / Complex64::new(0.0, lf);

    // Per-target pupil phase ramps, separable in rows and columns.
    let col_ph: Vec<Vec<Complex64>> = targets
        .iter()
        .map(|t| {
            (0..geometry.width_px)
                .map(|c| Complex64::from_polar(1.0, -TAU * t.y_m * geometry.y_of_col(c) / lf))
                .collect()
        })
        .collect();
    let row_ph: Vec<Vec<Complex64>> = targets
        .iter()
        .map(|t| {
            (0..geometry.height_px)
                .map(|r| Complex64::from_polar(1.0, -TAU * t.z_m * geometry.z_of_row(r) / lf))
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phase =
        Array2::from_shape_fn((geometry.height_px, geometry.width_px), |_| {
            rng.random::<f64>() * TAU
        });

    let forward = |phase: &Array2<f64>| -> Vec<Complex64> {
        targets
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let mut acc = Complex64::ZERO;
                for r in 0..geometry.height_px {
                    let mut row_acc = Complex64::ZERO;
                    for c in 0..geometry.width_px {
                        let a = amp[(r, c)].norm();
                        if a == 0.0 {
                            continue;
                        }
                        row_acc += Complex64::from_polar(a, phase[(r, c)]) * col_ph[i][c];
                    }
                    acc += row_acc * row_ph[i][r];
                }
                scale * acc
            })
            .collect()
    };

    let t_amp: Vec<f64> = targets.iter().map(|t| t.weight.sqrt()).collect();
    let mut gains: Vec<f64> = vec![1.0; targets.len()];
    for _ in 0..iterations {
        let v = forward(&phase);
        // Weighted-amplitude feedback: boost spots lagging their share.
        let s: Vec<f64> = v
            .iter()
            .zip(t_amp.iter())
            .map(|(f, &t)| f.norm() / t)
            .collect();
        let s_mean = s.iter().sum::<f64>() / s.len() as f64;
        // Damped feedback: with few spots the phase-only projection
        // amplifies gain imbalances strongly (roughly quartic for a spot
        // pair), so an undamped multiplicative step locks into a period-2
        // oscillation instead of converging.
        for (g, &si) in gains.iter_mut().zip(s.iter()) {
            if si > 0.0 {
                *g *= (s_mean / si).powf(0.2);
            }
        }
        let g_mean = gains.iter().sum::<f64>() / gains.len() as f64;
        for g in gains.iter_mut() {
            *g /= g_mean;
        }
        // Back-propagate the gain-adjusted target superposition and keep
        // only its phase.
        for r in 0..geometry.height_px {
            for c in 0..geometry.width_px {
                let mut acc = Complex64::ZERO;
                for i in 0..targets.len() {
                    let spot_phase = v[i].arg();
                    acc += Complex64::from_polar(gains[i] * t_amp[i], spot_phase)
                        * (col_ph[i][c] * row_ph[i][r]).conj();
                }
                phase[(r, c)] = acc.arg();
            }
        }
    }

    let v = forward(&phase);
    let spot_intensities: Vec<f64> = v.iter().map(|f| f.norm_sqr()).collect();
    let normalized: Vec<f64> = spot_intensities
        .iter()
        .zip(targets.iter())
        .map(|(&i, t)| i / t.weight)
        .collect();
    let max = normalized.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = normalized.iter().cloned().fold(f64::INFINITY, f64::min);
    let uniformity_error = if max + min > 0.0 {
        (max - min) / (max + min)
    } else {
        0.0
    };

    let mask = PhaseMask::from_grid(geometry, phase)?;
    Ok(SpotDesign {
        mask,
        spot_intensities,
        uniformity_error,
        random_start: iterations == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{propagate_to_focus, GratingSpec, PadFactor};

    fn train() -> OpticalTrain {
        OpticalTrain::default()
    }

    #[test]
    fn single_target_reduces_to_a_blazed_grating() {
        let g = MaskGeometry::desk_64();
        let spec = GratingSpec {
            period_m: 4.0e-3,
            direction: [1.0, 0.0],
        };
        let spot = spec.focal_spot(train().wavelength, train().focal_length);
        let design = gerchberg_saxton(
            &[SpotTarget {
                y_m: spot.0,
                z_m: spot.1,
                weight: 1.0,
            }],
            30,
            g,
            &train(),
            7,
        )
        .unwrap();
        assert!(!design.random_start);

        let reference = spec.mask(g).unwrap();
        let f_gs = propagate_to_focus(&design.mask, &train(), PadFactor::Auto).unwrap();
        let f_bl = propagate_to_focus(&reference, &train(), PadFactor::Auto).unwrap();
        let (a, b) = (f_gs.intensity_grid(), f_bl.intensity_grid());
        let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        let corr = dot / (na * nb);
        assert!(corr > 0.95, "focal correlation {corr} too low");
    }

    #[test]
    fn two_equal_spots_become_uniform_within_five_percent() {
        let g = MaskGeometry::desk_64();
        let targets = [
            SpotTarget {
                y_m: 12.0e-6,
                z_m: 0.0,
                weight: 1.0,
            },
            SpotTarget {
                y_m: -12.0e-6,
                z_m: 8.0e-6,
                weight: 1.0,
            },
        ];
        let design = gerchberg_saxton(&targets, 50, g, &train(), 3).unwrap();
        assert!(
            design.uniformity_error < 0.05,
            "uniformity error {}",
            design.uniformity_error
        );
        assert!(design.spot_intensities.iter().all(|&i| i > 0.0));
    }

    #[test]
    fn weighted_spots_follow_the_requested_ratio() {
        let g = MaskGeometry::desk_64();
        let targets = [
            SpotTarget {
                y_m: 10.0e-6,
                z_m: 0.0,
                weight: 2.0,
            },
            SpotTarget {
                y_m: -10.0e-6,
                z_m: 0.0,
                weight: 1.0,
            },
        ];
        let design = gerchberg_saxton(&targets, 60, g, &train(), 11).unwrap();
        let ratio = design.spot_intensities[0] / design.spot_intensities[1];
        assert!(
            (ratio - 2.0).abs() < 0.2,
            "intensity ratio {ratio} should be ≈ 2"
        );
    }

    #[test]
    fn zero_iterations_flags_the_random_start() {
        let g = MaskGeometry::desk_64();
        let t = [SpotTarget {
            y_m: 0.0,
            z_m: 0.0,
            weight: 1.0,
        }];
        let design = gerchberg_saxton(&t, 0, g, &train(), 1).unwrap();
        assert!(design.random_start);
        // Different seeds give different random masks.
        let other = gerchberg_saxton(&t, 0, g, &train(), 2).unwrap();
        assert_ne!(
            design.mask.phase(3, 3),
            other.mask.phase(3, 3),
            "random starts should differ by seed"
        );
    }

    #[test]
    fn out_of_band_and_degenerate_targets_are_rejected() {
        let g = MaskGeometry::desk_64();
        let band = train().focal_band(g.pitch_m);
        assert!(matches!(
            gerchberg_saxton(
                &[SpotTarget {
                    y_m: band * 1.5,
                    z_m: 0.0,
                    weight: 1.0
                }],
                5,
                g,
                &train(),
                0,
            ),
            Err(Error::TargetOutOfBand { .. })
        ));
        assert!(matches!(
            gerchberg_saxton(&[], 5, g, &train(), 0),
            Err(Error::TooFewSamples { .. })
        ));
        assert!(matches!(
            gerchberg_saxton(
                &[SpotTarget {
                    y_m: 0.0,
                    z_m: 0.0,
                    weight: 0.0
                }],
                5,
                g,
                &train(),
                0,
            ),
            Err(Error::ScenarioValue { .. })
        ));
    }
}
