//! The full zone-by-zone correction procedure and its N-ladder.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optics::{
    canonical_phase, compose_pattern, fit_gaussian_2d, input_field, GaussianFit2D, MaskGeometry,
    OpticalTrain, PhaseMask,
};
use crate::probe::VirtualLab;

use super::sweep::{ProbeSweepRecord, SweepContext};
use super::zones::{partition_zones, ZonePartition};

/// Piecewise-constant correction: one phase per zone, reference fixed at 0.
#[derive(Debug, Clone)]
pub struct CorrectionPattern {
    partition: ZonePartition,
    phases: Vec<f64>,
    low_contrast: Vec<bool>,
}

impl CorrectionPattern {
    /// All-zero pattern over a partition.
    pub fn flat(partition: ZonePartition) -> Self {
        let n = partition.zone_count();
        Self {
            partition,
            phases: vec![0.0; n],
            low_contrast: vec![false; n],
        }
    }

    pub fn partition(&self) -> &ZonePartition {
        &self.partition
    }

    /// Per-zone phases (rad), wrapped to (−π, π]; reference zone is 0.
    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn phase(&self, zone: usize) -> f64 {
        self.phases[zone]
    }

    /// Zones whose sweep produced no usable fringe (phase defaulted to 0).
    pub fn low_contrast(&self) -> &[bool] {
        &self.low_contrast
    }

    /// Expand to a pixel mask.
    pub fn to_mask(&self) -> PhaseMask {
        let part = &self.partition;
        PhaseMask::from_fn(part.geometry(), |r, c| {
            self.phases[part.zone_of_pixel(r, c)]
        })
    }

    /// The wavefront error the pattern implies: the negative of the
    /// applied phase per zone (a zone needing +φ to align must have lagged
    /// by φ).
    pub fn estimated_aberration(&self) -> Vec<f64> {
        self.phases.iter().map(|&p| centered(-p)).collect()
    }
}

/// Knobs of [`run_correction_with`].
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Poisson draws averaged per phase sample.
    pub repeats: usize,
    /// Re-sweep every zone once against the phase-aligned beam after the
    /// first pass.
    pub refine: bool,
    /// Draws for the before/after count traces.
    pub trace_repeats: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            repeats: 8,
            refine: false,
            trace_repeats: 16,
        }
    }
}

/// Everything a correction run produced.
#[derive(Debug, Clone)]
pub struct CorrectionRun {
    pub pattern: CorrectionPattern,
    /// Fringe records of the zones that produced a usable fit, in visit
    /// order.
    pub sweeps: Vec<ProbeSweepRecord>,
    /// Zones that fell below the fringe-contrast floor.
    pub low_contrast_zones: Vec<usize>,
    /// Mean and sample std of counts with the uncorrected grating.
    pub before_counts: (f64, f64),
    /// Mean and sample std of counts with the correction applied.
    pub after_counts: (f64, f64),
    /// Elliptical Gaussian fit of the focal spot before correction.
    pub before_fit: Option<GaussianFit2D>,
    /// Same fit after correction.
    pub after_fit: Option<GaussianFit2D>,
    /// Power scale used while sweeping zones.
    pub sweep_power_scale: f64,
    /// Power scale used for the before/after count traces.
    pub trace_power_scale: f64,
}

/// Runs the zone correction with default options. See
/// [`run_correction_with`].
pub fn run_correction(n: usize, k: usize, lab: &mut VirtualLab) -> Result<CorrectionRun> {
    run_correction_with(n, k, lab, &RunOptions::default())
}

/// Full correction procedure:
///
/// 1. tile the modulator into `n` zones and park the ion at the target
///    grating's first-order spot,
/// 2. sweep every non-reference zone's phase against the fixed reference
///    (outward spiral order, independently and in parallel) and fit the
///    fluorescence fringe,
/// 3. assemble the per-zone phases of maximal fluorescence into a
///    piecewise correction; zones without usable contrast keep phase 0,
/// 4. measure before/after counts at a fixed comparison power and fit the
///    focal spot before and after.
///
/// On return the lab displays flatness + grating + correction.
pub fn run_correction_with(
    n: usize,
    k: usize,
    lab: &mut VirtualLab,
    options: &RunOptions,
) -> Result<CorrectionRun> {
    let partition = partition_zones(lab.geometry, n)?;
    let spot = lab.grating_spot();
    lab.set_ion_position(spot.0, spot.1);

    let ctx = SweepContext::build(&partition, k, options.repeats, lab)?;

    let order = partition.visit_order();
    let outcomes: Vec<(usize, Result<ProbeSweepRecord>)> = order
        .par_iter()
        .map(|&zone| (zone, ctx.sweep_zone(zone, &*lab)))
        .collect();

    let mut phases = vec![0.0; partition.zone_count()];
    let mut low = vec![false; partition.zone_count()];
    let mut sweeps = Vec::new();
    for (zone, outcome) in outcomes {
        match outcome {
            Ok(record) => {
                phases[zone] = centered(record.phi_max);
                sweeps.push(record);
            }
            Err(Error::LowContrast { .. }) => low[zone] = true,
            Err(other) => return Err(other),
        }
    }

    if options.refine {
        let frozen = phases.clone();
        let refined: Vec<(usize, Result<ProbeSweepRecord>)> = order
            .par_iter()
            .map(|&zone| (zone, ctx.sweep_zone_refined(zone, &frozen, &*lab)))
            .collect();
        let mut refined_sweeps = Vec::new();
        for (zone, outcome) in refined {
            match outcome {
                Ok(record) => {
                    phases[zone] = centered(record.phi_max);
                    low[zone] = false;
                    refined_sweeps.push(record);
                }
                Err(Error::LowContrast { .. }) => {}
                Err(other) => return Err(other),
            }
        }
        if !refined_sweeps.is_empty() {
            sweeps = refined_sweeps;
        }
    }

    let pattern = CorrectionPattern {
        partition: partition.clone(),
        phases: phases.clone(),
        low_contrast: low.clone(),
    };
    let low_contrast_zones: Vec<usize> = (0..partition.zone_count())
        .filter(|&z| low[z])
        .collect();

    // Before/after counts at a power that puts a perfectly corrected beam
    // at the half-turnover rate; the bound is partition-independent so
    // ladder points are comparable.
    let trace_power = trace_power_scale(lab)?;
    let zero = vec![0.0; partition.zone_count()];
    let before_field = ctx.combined_field(&zero);
    let after_field = ctx.combined_field(&phases);
    let before_counts = ctx.trace_counts(
        &before_field,
        trace_power,
        options.trace_repeats,
        "trace",
        0,
        lab,
    )?;
    let after_counts = ctx.trace_counts(
        &after_field,
        trace_power,
        options.trace_repeats,
        "trace",
        1,
        lab,
    )?;

    // Spot fits before (grating only) and after (grating + correction).
    let grating = lab.target_grating.mask(lab.geometry)?;
    let correction_mask = pattern.to_mask();
    let before_pattern = compose_pattern(lab.flatness(), &grating, &PhaseMask::zeros(lab.geometry))?;
    let after_pattern = compose_pattern(lab.flatness(), &grating, &correction_mask)?;

    lab.set_displayed(before_pattern)?;
    let before_fit = fit_spot(lab, spot).ok();
    lab.set_displayed(after_pattern)?;
    let after_fit = fit_spot(lab, spot).ok();

    Ok(CorrectionRun {
        pattern,
        sweeps,
        low_contrast_zones,
        before_counts,
        after_counts,
        before_fit,
        after_fit,
        sweep_power_scale: ctx.sweep_power(),
        trace_power_scale: trace_power,
    })
}

/// One row of the fluorescence-vs-N trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderPoint {
    pub n_zones: usize,
    pub counts_mean: f64,
    pub counts_std: f64,
}

/// Runs the correction at each zone count and reports the corrected
/// fluorescence. Each run starts from a fresh clone of the lab.
pub fn correction_ladder(
    lab: &VirtualLab,
    zone_counts: &[usize],
    k: usize,
    options: &RunOptions,
) -> Result<Vec<LadderPoint>> {
    zone_counts
        .iter()
        .map(|&n| {
            let mut trial = lab.clone();
            let run = run_correction_with(n, k, &mut trial, options)?;
            Ok(LadderPoint {
                n_zones: n,
                counts_mean: run.after_counts.0,
                counts_std: run.after_counts.1,
            })
        })
        .collect()
}

/// Power scale that would put a perfectly phase-aligned full pupil at the
/// half-turnover Rabi frequency. Independent of the zone partition.
fn trace_power_scale(lab: &VirtualLab) -> Result<f64> {
    let flat = PhaseMask::zeros(lab.geometry);
    let input = input_field(&flat, &lab.train);
    let amp_sum: f64 = input.iter().map(|v| v.norm()).sum();
    let g = lab.geometry;
    let aligned_peak =
        amp_sum * g.pitch_m * g.pitch_m / (lab.train.wavelength * lab.train.focal_length);
    if aligned_peak <= 0.0 || lab.rabi_per_amplitude <= 0.0 {
        return Ok(lab.power_scale);
    }
    let omega_half = super::sweep::half_turnover_omega(lab)?;
    Ok(omega_half / (lab.rabi_per_amplitude * aligned_peak))
}

/// Gaussian fit of the displayed beam's focal spot in a window around a
/// target position.
fn fit_spot(lab: &mut VirtualLab, spot: (f64, f64)) -> Result<GaussianFit2D> {
    let field = lab.field()?;
    let (rows, cols) = field.shape();
    let dy = field.y_of_col(1) - field.y_of_col(0);
    let dz = field.z_of_row(1) - field.z_of_row(0);
    let col = ((spot.0 - field.y_of_col(0)) / dy).round() as isize;
    let row = ((spot.1 - field.z_of_row(0)) / dz).round() as isize;
    let col = col.clamp(0, cols as isize - 1) as usize;
    let row = row.clamp(0, rows as isize - 1) as usize;
    let half = ((6.0 * lab.train.diffraction_waist() / dy).round() as usize).max(8);
    let (win, ys, zs) = field.window(row, col, half);
    fit_gaussian_2d(&win, &ys, &zs)
}

/// Wraps a phase to (−π, π].
fn centered(phi: f64) -> f64 {
    let w = canonical_phase(phi);
    if w > std::f64::consts::PI {
        w - crate::constants::TAU
    } else {
        w
    }
}

/// Amplitude-weighted mean phase of `mask` over each zone and the zone's
/// total pupil amplitude. The weights are the apertured Gaussian input
/// amplitudes, matching how much each pixel contributes to the focus.
pub fn zone_phase_stats(
    mask: &PhaseMask,
    partition: &ZonePartition,
    train: &OpticalTrain,
) -> (Vec<f64>, Vec<f64>) {
    let geometry: MaskGeometry = partition.geometry();
    let flat = PhaseMask::zeros(geometry);
    let amps = input_field(&flat, train);
    let n = partition.zone_count();
    let mut acc = vec![Complex64::ZERO; n];
    for r in 0..geometry.height_px {
        for c in 0..geometry.width_px {
            let a = amps[(r, c)].norm();
            if a == 0.0 {
                continue;
            }
            let zone = partition.zone_of_pixel(r, c);
            acc[zone] += Complex64::from_polar(a, mask.phase(r, c));
        }
    }
    let means = acc.iter().map(|v| v.arg()).collect();
    let weights = acc.iter().map(|v| v.norm()).collect();
    (means, weights)
}

/// Weighted RMS of the circular difference between two per-zone phase
/// sets after removing their weighted mean offset (piston).
pub fn circular_residual_rms(estimate: &[f64], truth: &[f64], weights: &[f64]) -> f64 {
    let mut piston_acc = Complex64::ZERO;
    for ((&e, &t), &w) in estimate.iter().zip(truth.iter()).zip(weights.iter()) {
        piston_acc += Complex64::from_polar(w.max(0.0), e - t);
    }
    let piston = piston_acc.arg();
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&e, &t), &w) in estimate.iter().zip(truth.iter()).zip(weights.iter()) {
        let w = w.max(0.0);
        let d = centered(e - t - piston);
        num += w * d * d;
        den += w;
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        0.0
    }
}

/// RMS of a pixel phase map against a reference map over the lit pupil,
/// piston removed — the wavefront residual a correction leaves behind.
pub fn residual_wavefront_rms(
    correction: &PhaseMask,
    aberration: &PhaseMask,
    train: &OpticalTrain,
) -> f64 {
    let geometry = correction.geometry();
    let flat = PhaseMask::zeros(geometry);
    let amps = input_field(&flat, train);
    let mut piston_acc = Complex64::ZERO;
    for r in 0..geometry.height_px {
        for c in 0..geometry.width_px {
            let a = amps[(r, c)].norm();
            if a == 0.0 {
                continue;
            }
            let resid = correction.phase(r, c) + aberration.phase(r, c);
            piston_acc += Complex64::from_polar(a, resid);
        }
    }
    let piston = piston_acc.arg();
    let mut num = 0.0;
    let mut den = 0.0;
    for r in 0..geometry.height_px {
        for c in 0..geometry.width_px {
            let a = amps[(r, c)].norm();
            if a == 0.0 {
                continue;
            }
            let d = centered(correction.phase(r, c) + aberration.phase(r, c) - piston);
            num += a * d * d;
            den += a;
        }
    }
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::TAU;
    use crate::optics::{MaskGeometry, OpticalTrain, PadFactor};
    use crate::zernike::ZernikeCoefficients;

    fn bench_lab() -> VirtualLab {
        let mut lab = VirtualLab::new(
            MaskGeometry::desk_64(),
            OpticalTrain::default(),
            PadFactor::Auto,
        );
        lab.calibrate_peak_rabi(TAU * 390e6).unwrap();
        lab.ion.temperature = 1e-12;
        lab.ion.micromotion_amplitude = 0.0;
        lab
    }

    fn smooth_aberration(geometry: MaskGeometry) -> PhaseMask {
        let coeffs =
            ZernikeCoefficients::from_pairs(&[(5, 1.0), (4, 0.5), (7, 0.3), (9, 0.25)]).unwrap();
        crate::optics::inject_aberration(&coeffs, geometry)
    }

    #[test]
    fn clean_lab_yields_a_near_zero_correction() {
        let mut lab = bench_lab();
        lab.shot_noise = true;
        lab.camera.dark_rate = 200.0;
        let run = run_correction(16, 8, &mut lab).unwrap();
        // Weight each zone by its measured fringe amplitude: corner zones
        // are ~90% vignetted, so their noisy phases steer almost no light
        // and say nothing about the correction quality.
        let mut num = 0.0;
        let mut den = 0.0;
        let mut worst: f64 = 0.0;
        for rec in &run.sweeps {
            let p = centered(rec.phi_max);
            num += rec.amplitude * p * p;
            den += rec.amplitude;
            worst = worst.max(p.abs());
        }
        let rms = (num / den).sqrt();
        assert!(rms < 0.05, "clean-lab correction RMS {rms} rad");
        assert!(worst < 0.5, "some zone phase is wildly off: {worst} rad");
    }

    #[test]
    fn correction_recovers_zone_averaged_aberration_and_brightens_the_spot() {
        let mut lab = bench_lab();
        lab.shot_noise = false;
        lab.camera.dark_rate = 0.0;
        let aberration = smooth_aberration(lab.geometry);
        lab.set_hidden_aberration(aberration.clone()).unwrap();

        let run = run_correction(64, 8, &mut lab).unwrap();

        // Counts improve and the recovered phases match the zone-averaged
        // injected aberration up to piston.
        assert!(
            run.after_counts.0 > run.before_counts.0,
            "after {} !> before {}",
            run.after_counts.0,
            run.before_counts.0
        );
        let (truth, weights) = zone_phase_stats(&aberration, run.pattern.partition(), &lab.train);
        let est = run.pattern.estimated_aberration();
        let usable: Vec<usize> = (0..est.len())
            .filter(|&z| !run.pattern.low_contrast()[z] || z == run.pattern.partition().reference_zone())
            .collect();
        let e: Vec<f64> = usable.iter().map(|&z| est[z]).collect();
        let t: Vec<f64> = usable.iter().map(|&z| truth[z]).collect();
        let w: Vec<f64> = usable.iter().map(|&z| weights[z]).collect();
        let rms = circular_residual_rms(&e, &t, &w);
        assert!(rms < 0.2, "zone residual RMS {rms} rad");

        // Residual wavefront after applying the correction on top of the
        // aberration, relative to the injected RMS, should shrink a lot.
        let injected_rms =
            residual_wavefront_rms(&PhaseMask::zeros(lab.geometry), &aberration, &lab.train);
        let resid = residual_wavefront_rms(&run.pattern.to_mask(), &aberration, &lab.train);
        assert!(
            resid < 0.5 * injected_rms,
            "residual {resid} vs injected {injected_rms}"
        );
    }

    #[test]
    fn single_zone_run_is_a_no_op() {
        let mut lab = bench_lab();
        lab.set_hidden_aberration(smooth_aberration(lab.geometry)).unwrap();
        let run = run_correction(1, 8, &mut lab).unwrap();
        assert!(run.sweeps.is_empty());
        assert_eq!(run.pattern.phases(), &[0.0]);
        // Identical field, independent draws: means agree within noise.
        let rel = (run.after_counts.0 - run.before_counts.0).abs()
            / run.before_counts.0.max(1.0);
        assert!(rel < 0.2, "N=1 before/after differ by {rel}");
    }

    #[test]
    fn second_pass_on_a_corrected_lab_is_idempotent() {
        let mut lab = bench_lab();
        lab.shot_noise = false;
        lab.camera.dark_rate = 0.0;
        lab.set_hidden_aberration(smooth_aberration(lab.geometry)).unwrap();

        let first = run_correction(64, 8, &mut lab).unwrap();
        // Fold the recovered correction into the flatness store, as an
        // operator would, and correct again.
        let folded = lab.flatness().add(&first.pattern.to_mask()).unwrap();
        lab.set_flatness(folded).unwrap();
        let second = run_correction(64, 8, &mut lab).unwrap();

        let usable: Vec<f64> = second
            .pattern
            .phases()
            .iter()
            .enumerate()
            .filter(|&(z, _)| !second.pattern.low_contrast()[z])
            .map(|(_, &p)| p)
            .collect();
        let rms = (usable.iter().map(|p| p * p).sum::<f64>() / usable.len() as f64).sqrt();
        assert!(rms < 0.1, "second-pass RMS {rms} rad should be noise-level");
    }

    #[test]
    fn ladder_counts_are_nondecreasing_with_zone_count() {
        let mut lab = bench_lab();
        lab.shot_noise = false;
        lab.camera.dark_rate = 0.0;
        lab.set_hidden_aberration(smooth_aberration(lab.geometry)).unwrap();
        let ladder =
            correction_ladder(&lab, &[1, 16, 64], 8, &RunOptions::default()).unwrap();
        assert_eq!(ladder.len(), 3);
        for pair in ladder.windows(2) {
            assert!(
                pair[1].counts_mean >= pair[0].counts_mean * 0.98,
                "ladder decreased: {pair:?}"
            );
        }
        assert!(
            ladder[2].counts_mean > 1.2 * ladder[0].counts_mean,
            "correction gain too small: {ladder:?}"
        );
    }

    #[test]
    fn refinement_pass_does_not_degrade_the_recovery() {
        let mut lab = bench_lab();
        lab.shot_noise = false;
        lab.camera.dark_rate = 0.0;
        let aberration = smooth_aberration(lab.geometry);
        lab.set_hidden_aberration(aberration.clone()).unwrap();
        let opts = RunOptions {
            refine: true,
            ..RunOptions::default()
        };
        let run = run_correction_with(16, 8, &mut lab, &opts).unwrap();
        let resid = residual_wavefront_rms(&run.pattern.to_mask(), &aberration, &lab.train);
        let injected =
            residual_wavefront_rms(&PhaseMask::zeros(lab.geometry), &aberration, &lab.train);
        assert!(resid < injected, "refined residual {resid} vs {injected}");
    }
}
