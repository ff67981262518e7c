//! Scanning measurements: beam maps and CPT maps.
//!
//! Both scans command the ion to a sequence of positions, repeat the
//! fluorescence measurement at each, and report count statistics. Every
//! measurement seed is derived from the lab's root seed and the point and
//! repeat indices, so results are byte-identical regardless of how the
//! work is distributed over threads.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::probe::lab::{FluorescenceModel, VirtualLab};
use crate::seed::derive_seed;

/// One grid point of a beam map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapPoint {
    pub y: f64,
    pub z: f64,
    pub counts_mean: f64,
    pub counts_var: f64,
    pub repeats: usize,
}

/// A rectangular fluorescence map of the focal plane.
#[derive(Debug, Clone)]
pub struct BeamMapScan {
    /// Points in row-major order: z outer, y inner.
    pub points: Vec<MapPoint>,
    pub ys: Vec<f64>,
    pub zs: Vec<f64>,
}

impl BeamMapScan {
    /// Mean counts as a (z, y) matrix for fitting.
    pub fn mean_grid(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.zs.len(), self.ys.len()), |(r, c)| {
            self.points[r * self.ys.len() + c].counts_mean
        })
    }
}

fn sample_stats(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Map the focal intensity profile by scanning the ion over a (y, z) grid
/// and recording fluorescence statistics at each point.
pub fn map_beam(
    lab: &VirtualLab,
    ys: &[f64],
    zs: &[f64],
    repeats: usize,
) -> Result<BeamMapScan> {
    if ys.is_empty() || zs.is_empty() || repeats == 0 {
        return Err(Error::TooFewSamples {
            got: ys.len().min(zs.len()).min(repeats),
            need: 1,
        });
    }
    // Warm the field cache once; clones then share it through the Arc.
    let mut warm = lab.clone();
    warm.field()?;

    let points: Result<Vec<MapPoint>> = (0..zs.len() * ys.len())
        .into_par_iter()
        .map(|idx| {
            let (iz, iy) = (idx / ys.len(), idx % ys.len());
            let mut worker = warm.clone();
            worker.set_ion_position(ys[iy], zs[iz]);
            let omega = worker.omega_at_ion()?;
            let rate = worker.rate_from_omega(omega)?;
            let samples: Vec<f64> = (0..repeats)
                .map(|rep| {
                    let seed = derive_seed(worker.seed, "map", &[idx as u64, rep as u64]);
                    worker.counts_from_rate(rate, seed)
                })
                .collect();
            let (counts_mean, counts_var) = sample_stats(&samples);
            Ok(MapPoint {
                y: ys[iy],
                z: zs[iz],
                counts_mean,
                counts_var,
                repeats,
            })
        })
        .collect();

    Ok(BeamMapScan {
        points: points?,
        ys: ys.to_vec(),
        zs: zs.to_vec(),
    })
}

/// Second axis of a CPT map: either tweezer power or tweezer detuning.
#[derive(Debug, Clone, PartialEq)]
pub enum CptAxis {
    /// Tweezer powers in mW; the Rabi frequency scales as sqrt(P/reference).
    Power { powers_mw: Vec<f64>, reference_mw: f64 },
    /// Tweezer detunings in rad/s.
    Detuning { detunings: Vec<f64> },
}

impl CptAxis {
    pub fn values(&self) -> &[f64] {
        match self {
            CptAxis::Power { powers_mw, .. } => powers_mw,
            CptAxis::Detuning { detunings } => detunings,
        }
    }
}

/// A CPT map: ion scanned along z through the beam at y = 0, against a
/// second parameter axis (power or detuning).
#[derive(Debug, Clone)]
pub struct CptMap {
    pub zs: Vec<f64>,
    pub params: Vec<f64>,
    /// Mean counts, shape (params, zs).
    pub counts: Array2<f64>,
    /// True where the steady state was degenerate (dark manifold); counts
    /// there contain dark counts only.
    pub dark_flags: Array2<bool>,
}

/// Scan the ion along z while stepping tweezer power or detuning, using
/// the ten-level model so coherent population trapping is visible.
pub fn cpt_map(lab: &VirtualLab, zs: &[f64], axis: &CptAxis, repeats: usize) -> Result<CptMap> {
    if lab.model != FluorescenceModel::TenLevel {
        return Err(Error::ScenarioValue {
            field: "model".into(),
            reason: "cpt_map requires the ten-level fluorescence model".into(),
        });
    }
    let params = axis.values().to_vec();
    if zs.is_empty() || params.is_empty() || repeats == 0 {
        return Err(Error::TooFewSamples {
            got: zs.len().min(params.len()).min(repeats),
            need: 1,
        });
    }
    if let CptAxis::Power { powers_mw, reference_mw } = axis {
        if !(*reference_mw > 0.0) || powers_mw.iter().any(|p| *p < 0.0) {
            return Err(Error::ScenarioValue {
                field: "power".into(),
                reason: "powers must be non-negative and the reference positive".into(),
            });
        }
    }
    let mut warm = lab.clone();
    warm.field()?;

    let cells: Result<Vec<(f64, bool)>> = (0..params.len() * zs.len())
        .into_par_iter()
        .map(|idx| {
            let (ip, iz) = (idx / zs.len(), idx % zs.len());
            let mut worker = warm.clone();
            worker.set_ion_position(0.0, zs[iz]);
            match axis {
                CptAxis::Power { reference_mw, .. } => {
                    worker.power_scale *= (params[ip] / reference_mw).sqrt();
                }
                CptAxis::Detuning { .. } => {
                    worker.atoms.delta_tw = params[ip];
                }
            }
            let omega = worker.omega_at_ion()?;
            let (rate, dark) = match worker.rate_from_omega(omega) {
                Ok(r) => (r, false),
                Err(Error::DegenerateSteadyState { .. }) => (0.0, true),
                Err(e) => return Err(e),
            };
            let samples: Vec<f64> = (0..repeats)
                .map(|rep| {
                    let seed = derive_seed(worker.seed, "cpt", &[idx as u64, rep as u64]);
                    worker.counts_from_rate(rate, seed)
                })
                .collect();
            Ok((sample_stats(&samples).0, dark))
        })
        .collect();
    let cells = cells?;

    let shape = (params.len(), zs.len());
    let counts = Array2::from_shape_fn(shape, |(p, z)| cells[p * zs.len() + z].0);
    let dark_flags = Array2::from_shape_fn(shape, |(p, z)| cells[p * zs.len() + z].1);
    Ok(CptMap {
        zs: zs.to_vec(),
        params,
        counts,
        dark_flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::TAU;
    use crate::optics::{fit_gaussian_2d, MaskGeometry, OpticalTrain, PadFactor};

    fn bright_lab() -> VirtualLab {
        let mut lab = VirtualLab::new(
            MaskGeometry::desk_64(),
            OpticalTrain::default(),
            PadFactor::Auto,
        );
        lab.seed = 7;
        lab.calibrate_peak_rabi(TAU * 390e6).unwrap();
        lab
    }

    #[test]
    fn beam_map_recovers_focal_spot_center_and_size() {
        let mut lab = bright_lab();
        // Probe far below the fluorescence saturation knee (which sits at
        // a fraction of a megahertz of Rabi frequency on resonance) so the
        // count map tracks the optical intensity profile.
        lab.power_scale = 1.4e-4;
        let w = lab.train.diffraction_waist();
        let ys: Vec<f64> = (-10..=10).map(|i| i as f64 * 0.4e-6).collect();
        let zs = ys.clone();
        let scan = map_beam(&lab, &ys, &zs, 6).unwrap();
        assert_eq!(scan.points.len(), 21 * 21);

        let fit = fit_gaussian_2d(&scan.mean_grid(), &ys, &zs).unwrap();
        assert!(fit.center.0.abs() < 0.3e-6, "y center {:e}", fit.center.0);
        assert!(fit.center.1.abs() < 0.3e-6, "z center {:e}", fit.center.1);
        // Counts respond nearly quadratically to |E| here, so the fitted
        // waist sits close to the optical waist.
        assert!(fit.w1 > 0.6 * w && fit.w1 < 1.6 * w, "w1 = {:e}", fit.w1);
    }

    #[test]
    fn beam_map_is_thread_count_invariant() {
        let lab = bright_lab();
        let ys: Vec<f64> = (-3..=3).map(|i| i as f64 * 0.6e-6).collect();
        let zs: Vec<f64> = (-2..=2).map(|i| i as f64 * 0.6e-6).collect();
        let a = map_beam(&lab, &ys, &zs, 4).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| map_beam(&lab, &ys, &zs, 4)).unwrap();
        for (pa, pb) in a.points.iter().zip(b.points.iter()) {
            assert_eq!(pa.counts_mean.to_bits(), pb.counts_mean.to_bits());
            assert_eq!(pa.counts_var.to_bits(), pb.counts_var.to_bits());
        }
    }

    #[test]
    fn beam_map_statistics_reflect_poisson_noise() {
        let mut lab = bright_lab();
        lab.camera.exposure = 0.2;
        let scan = map_beam(&lab, &[0.0], &[0.0], 200).unwrap();
        let p = &scan.points[0];
        // For Poisson counts the variance tracks the mean.
        let ratio = p.counts_var / p.counts_mean;
        assert!(ratio > 0.6 && ratio < 1.6, "var/mean = {ratio}");
        assert_eq!(p.repeats, 200);
    }

    #[test]
    fn empty_grids_are_rejected() {
        let lab = bright_lab();
        assert!(map_beam(&lab, &[], &[0.0], 1).is_err());
        assert!(map_beam(&lab, &[0.0], &[0.0], 0).is_err());
    }

    #[test]
    fn cpt_map_requires_ten_level_model() {
        let lab = bright_lab();
        let axis = CptAxis::Detuning { detunings: vec![0.0] };
        assert!(matches!(
            cpt_map(&lab, &[0.0], &axis, 1),
            Err(Error::ScenarioValue { .. })
        ));
    }

    #[test]
    fn cpt_power_map_shows_turnover_at_beam_center() {
        let mut lab = bright_lab();
        lab.model = FluorescenceModel::TenLevel;
        lab.camera.dark_rate = 0.0; // look at the physics, not the background
        lab.atoms.delta_tw = TAU * 40e6;
        let powers: Vec<f64> = vec![0.0, 0.04, 0.16, 1.0, 12.5, 50.0];
        let axis = CptAxis::Power {
            powers_mw: powers.clone(),
            reference_mw: 12.5,
        };
        let map = cpt_map(&lab, &[0.0], &axis, 32).unwrap();
        let col: Vec<f64> = (0..powers.len()).map(|p| map.counts[(p, 0)]).collect();
        // Zero power means zero tweezer light and zero counts here.
        assert_eq!(col[0], 0.0);
        // Counts rise from low power to an interior maximum, then drop at
        // the highest power (CPT suppression at large Rabi frequency).
        let peak = col.iter().cloned().fold(f64::MIN, f64::max);
        let peak_idx = col.iter().position(|&c| c == peak).unwrap();
        assert!(peak_idx > 0 && peak_idx < powers.len() - 1, "profile {col:?}");
        assert!(col[powers.len() - 1] < 0.97 * peak, "profile {col:?}");
    }

    #[test]
    fn cpt_map_flags_degenerate_dark_states() {
        let mut lab = bright_lab();
        lab.model = FluorescenceModel::TenLevel;
        lab.zeeman.field_tesla = 0.0; // dark D-superpositions become stationary
        let axis = CptAxis::Detuning { detunings: vec![0.0] };
        let map = cpt_map(&lab, &[0.0], &axis, 2).unwrap();
        if map.dark_flags[(0, 0)] {
            let dark_mean = lab.camera.dark_rate * lab.camera.exposure;
            assert!(map.counts[(0, 0)] < 3.0 * dark_mean + 10.0);
        }
        // Ion far outside the beam: no tweezer light, zero-rate short
        // circuit, never an error.
        let far = cpt_map(&lab, &[1.0e-3], &axis, 1).unwrap();
        assert!(!far.dark_flags[(0, 0)] || far.counts[(0, 0)] >= 0.0);
    }
}
