//! Interference phase sweeps of one probe zone against the reference.
//!
//! The sweep never propagates the full mask per phase step. Instead the
//! per-zone focal fields are cached once (they are exact direct Fourier
//! sums, so they recombine linearly into the full field) and a phase step
//! on the probe zone is a complex rotation of its cached field. This is
//! mathematically identical to re-displaying the composite mask each step.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::constants::TAU;
use crate::error::{Error, Result};
use crate::optics::{golden_max, PhaseMask};
use crate::probe::VirtualLab;
use crate::seed::derive_seed;

use super::zones::ZonePartition;

/// One zone's recorded interference fringe and its cosine fit.
#[derive(Debug, Clone)]
pub struct ProbeSweepRecord {
    pub zone: usize,
    /// Probe phases, strictly increasing in [0, 2π).
    pub phases: Vec<f64>,
    /// Mean detector counts per phase (averaged over repeats).
    pub counts: Vec<f64>,
    /// Fitted fringe amplitude (≥ 0).
    pub amplitude: f64,
    /// Fitted fringe offset.
    pub offset: f64,
    /// Phase of maximal fluorescence, in [0, 2π).
    pub phi_max: f64,
    /// Covariance of the fitted (offset, cos, sin) coefficients.
    pub covariance: [[f64; 3]; 3],
}

/// Tweezer Rabi frequency at which the scattering rate reaches half its
/// maximum on the rising side, found numerically so it is valid for both
/// fluorescence models (the ten-level rate turns over at high power).
pub fn half_turnover_omega(lab: &VirtualLab) -> Result<f64> {
    let lo = TAU * 0.01e6;
    let hi = TAU * 600e6;
    let rate_at = |ln_omega: f64| -> f64 {
        lab.rate_from_omega(ln_omega.exp()).unwrap_or(0.0)
    };
    // Coarse grid for the global maximum, then a golden refine.
    let n = 48;
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..n {
        let l = lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64;
        let r = rate_at(l);
        if r > best {
            best = r;
            best_i = i;
        }
    }
    let step = (hi.ln() - lo.ln()) / (n - 1) as f64;
    let l_peak = lo.ln() + step * best_i as f64;
    let l_max = golden_max(rate_at, l_peak - step, l_peak + step, 1e-6);
    let r_max = rate_at(l_max);
    if !(r_max > 0.0) {
        return Err(Error::UndrivenSystem);
    }
    // Bisect the rising side for half of the maximum.
    let (mut a, mut b) = (lo.ln(), l_max);
    if rate_at(a) >= 0.5 * r_max {
        return Ok(a.exp());
    }
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if rate_at(m) < 0.5 * r_max {
            a = m;
        } else {
            b = m;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// Cached per-zone focal fields and sweep settings for one correction run.
///
/// All fields are sampled on the ion's thermal quadrature grid (z-major),
/// so fringe measurements only rotate and sum cached complex numbers.
#[derive(Debug, Clone)]
pub struct SweepContext {
    partition: ZonePartition,
    k: usize,
    repeats: usize,
    /// Absolute quadrature coordinates and per-axis weights.
    ys: Vec<f64>,
    zs: Vec<f64>,
    wy: Vec<f64>,
    wz: Vec<f64>,
    /// Per-zone focal field with the target grating on the zone.
    zone_target: Vec<Array2<Complex64>>,
    /// Per-zone focal field with the background grating on the zone.
    zone_background: Vec<Array2<Complex64>>,
    /// Σ over non-reference zones of the background fields.
    background_total: Array2<Complex64>,
    /// Power scale used during sweeps (keeps the fringe maximum at the
    /// half-turnover rate so counts stay monotone in intensity).
    sweep_power: f64,
}

impl SweepContext {
    /// Builds the zone caches for the lab's current grating, flatness,
    /// hidden aberration, and ion state.
    pub fn build(
        partition: &ZonePartition,
        k: usize,
        repeats: usize,
        lab: &VirtualLab,
    ) -> Result<Self> {
        if k < 4 {
            return Err(Error::TooFewSamples { got: k, need: 4 });
        }
        if repeats == 0 {
            return Err(Error::TooFewSamples { got: 0, need: 1 });
        }
        partition.geometry().ensure_matches(&lab.geometry)?;

        let target = lab
            .flatness()
            .add(&lab.target_grating.mask(lab.geometry)?)?;
        let background = lab
            .flatness()
            .add(&lab.target_grating.background().mask(lab.geometry)?)?;

        let (y_axis, z_axis) = lab.thermal_axes();
        let (y0, z0) = lab.ion.position;
        let ys: Vec<f64> = y_axis.iter().map(|&(d, _)| y0 + d).collect();
        let wy: Vec<f64> = y_axis.iter().map(|&(_, w)| w).collect();
        let zs: Vec<f64> = z_axis.iter().map(|&(d, _)| z0 + d).collect();
        let wz: Vec<f64> = z_axis.iter().map(|&(_, w)| w).collect();

        let n = partition.zone_count();
        let fields: Vec<(Array2<Complex64>, Array2<Complex64>)> = (0..n)
            .into_par_iter()
            .map(|zone| -> Result<_> {
                let (rows, cols) = partition.zone_rect(zone)?;
                let b = lab.zone_field_samples(&target, rows.clone(), cols.clone(), &ys, &zs)?;
                let g = lab.zone_field_samples(&background, rows, cols, &ys, &zs)?;
                Ok((b, g))
            })
            .collect::<Result<_>>()?;
        let (zone_target, zone_background): (Vec<_>, Vec<_>) = fields.into_iter().unzip();

        let reference = partition.reference_zone();
        let mut background_total = Array2::<Complex64>::zeros((zs.len(), ys.len()));
        for (zone, g) in zone_background.iter().enumerate() {
            if zone != reference {
                background_total = background_total + g;
            }
        }

        let mut ctx = Self {
            partition: partition.clone(),
            k,
            repeats,
            ys,
            zs,
            wy,
            wz,
            zone_target,
            zone_background,
            background_total,
            sweep_power: lab.power_scale,
        };

        // Auto-power: bound the brightest sweep configuration and put it at
        // the half-turnover Rabi frequency.
        let mut bound: f64 = 0.0;
        for zone in 0..n {
            if zone == reference {
                continue;
            }
            let base = ctx.sweep_base(zone);
            let b = &ctx.zone_target[zone];
            let amp = ctx.weighted_amplitude_of(|q| base[q].norm() + b[q].norm());
            bound = bound.max(amp);
        }
        if bound > 0.0 && lab.rabi_per_amplitude > 0.0 {
            let omega_half = half_turnover_omega(lab)?;
            ctx.sweep_power = omega_half / (lab.rabi_per_amplitude * bound);
        }
        Ok(ctx)
    }

    pub fn partition(&self) -> &ZonePartition {
        &self.partition
    }

    pub fn sweep_power(&self) -> f64 {
        self.sweep_power
    }

    /// Cached target-grating focal field of one zone on the quadrature grid.
    pub fn zone_target_field(&self, zone: usize) -> &Array2<Complex64> {
        &self.zone_target[zone]
    }

    /// Thermally weighted average of a per-quadrature-point amplitude.
    fn weighted_amplitude_of<F: Fn((usize, usize)) -> f64>(&self, f: F) -> f64 {
        let mut sum = 0.0;
        for (iz, &wz) in self.wz.iter().enumerate() {
            for (iy, &wy) in self.wy.iter().enumerate() {
                sum += wz * wy * f((iz, iy));
            }
        }
        sum
    }

    /// Base field during a sweep of `zone`: reference with target grating,
    /// all other zones with the background grating.
    fn sweep_base(&self, zone: usize) -> Array2<Complex64> {
        let reference = self.partition.reference_zone();
        let mut base = self.zone_target[reference].clone() + &self.background_total;
        base = base - &self.zone_background[zone];
        base
    }

    /// Scattering rate for a composite field at sweep power.
    fn rate_of(&self, field: &Array2<Complex64>, lab: &VirtualLab) -> Result<f64> {
        let amp = self.weighted_amplitude_of(|q| field[q].norm());
        let omega = lab.rabi_per_amplitude * self.sweep_power * amp;
        lab.rate_from_omega(omega)
    }

    fn fringe(
        &self,
        zone: usize,
        base: &Array2<Complex64>,
        domain: &str,
        lab: &VirtualLab,
    ) -> Result<ProbeSweepRecord> {
        let b = &self.zone_target[zone];
        let phases: Vec<f64> = (0..self.k).map(|j| TAU * j as f64 / self.k as f64).collect();
        let mut counts = Vec::with_capacity(self.k);
        for (j, &phi) in phases.iter().enumerate() {
            let rot = Complex64::from_polar(1.0, phi);
            let field = Array2::from_shape_fn(base.dim(), |q| base[q] + rot * b[q]);
            let rate = self.rate_of(&field, lab)?;
            let mut acc = 0.0;
            for rep in 0..self.repeats {
                let seed = derive_seed(lab.seed, domain, &[zone as u64, j as u64, rep as u64]);
                acc += lab.counts_from_rate(rate, seed);
            }
            counts.push(acc / self.repeats as f64);
        }
        fit_fringe(zone, phases, counts, self.repeats)
    }

    /// Sweeps `zone` against the fixed reference (background everywhere
    /// else) and fits the fringe.
    pub fn sweep_zone(&self, zone: usize, lab: &VirtualLab) -> Result<ProbeSweepRecord> {
        self.ensure_probe_zone(zone)?;
        let base = self.sweep_base(zone);
        self.fringe(zone, &base, "sweep", lab)
    }

    /// Refinement sweep: every other zone shows the target grating with its
    /// previously fitted phase, so the probe zone interferes with the
    /// nearly corrected beam instead of the bare reference.
    pub fn sweep_zone_refined(
        &self,
        zone: usize,
        phases: &[f64],
        lab: &VirtualLab,
    ) -> Result<ProbeSweepRecord> {
        self.ensure_probe_zone(zone)?;
        let mut base = Array2::<Complex64>::zeros(self.zone_target[zone].dim());
        for (w, field) in self.zone_target.iter().enumerate() {
            if w == zone {
                continue;
            }
            let rot = Complex64::from_polar(1.0, phases[w]);
            base = base + &field.mapv(|v| rot * v);
        }
        self.fringe(zone, &base, "refine", lab)
    }

    fn ensure_probe_zone(&self, zone: usize) -> Result<()> {
        if zone >= self.partition.zone_count() {
            return Err(Error::InvalidZone {
                zone,
                reason: format!("only {} zones exist", self.partition.zone_count()),
            });
        }
        if zone == self.partition.reference_zone() {
            return Err(Error::InvalidZone {
                zone,
                reason: "cannot sweep the reference zone against itself".into(),
            });
        }
        Ok(())
    }

    /// Mean and sample std of repeated count measurements of a composite
    /// field at an explicit power scale (used for before/after traces).
    pub fn trace_counts(
        &self,
        field: &Array2<Complex64>,
        power: f64,
        repeats: usize,
        domain: &str,
        index: u64,
        lab: &VirtualLab,
    ) -> Result<(f64, f64)> {
        let amp = self.weighted_amplitude_of(|q| field[q].norm());
        let omega = lab.rabi_per_amplitude * power * amp;
        let rate = lab.rate_from_omega(omega)?;
        let draws: Vec<f64> = (0..repeats)
            .map(|rep| {
                let seed = derive_seed(lab.seed, domain, &[index, rep as u64]);
                lab.counts_from_rate(rate, seed)
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / repeats.max(1) as f64;
        let var = if repeats > 1 {
            draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (repeats - 1) as f64
        } else {
            0.0
        };
        Ok((mean, var.sqrt()))
    }

    /// Coherent sum of the per-zone target fields with per-zone phases.
    pub fn combined_field(&self, phases: &[f64]) -> Array2<Complex64> {
        let mut total = Array2::<Complex64>::zeros(self.zone_target[0].dim());
        for (zone, field) in self.zone_target.iter().enumerate() {
            let rot = Complex64::from_polar(1.0, phases[zone]);
            total = total + &field.mapv(|v| rot * v);
        }
        total
    }
}

/// Least-squares cosine fit at equally spaced phases. The quadrature of
/// the regressors is exact there (the normal matrix is diagonal), so the
/// fit reduces to discrete Fourier sums.
fn fit_fringe(
    zone: usize,
    phases: Vec<f64>,
    counts: Vec<f64>,
    repeats: usize,
) -> Result<ProbeSweepRecord> {
    let k = phases.len();
    let kf = k as f64;
    let mut c0 = 0.0;
    let mut cc = 0.0;
    let mut cs = 0.0;
    for (&phi, &y) in phases.iter().zip(counts.iter()) {
        c0 += y;
        cc += y * phi.cos();
        cs += y * phi.sin();
    }
    let offset = c0 / kf;
    let bc = 2.0 * cc / kf;
    let bs = 2.0 * cs / kf;
    let amplitude = bc.hypot(bs);
    let phi_max = bs.atan2(bc).rem_euclid(TAU);

    let mut ssr = 0.0;
    for (&phi, &y) in phases.iter().zip(counts.iter()) {
        let m = offset + bc * phi.cos() + bs * phi.sin();
        ssr += (y - m) * (y - m);
    }
    let sigma2 = if k > 3 { ssr / (k - 3) as f64 } else { 0.0 };
    let mut covariance = [[0.0; 3]; 3];
    covariance[0][0] = sigma2 / kf;
    covariance[1][1] = 2.0 * sigma2 / kf;
    covariance[2][2] = 2.0 * sigma2 / kf;

    // Shot-noise floor on the fitted amplitude: each counts entry is a mean
    // of `repeats` Poisson draws with variance ≈ offset/repeats, and the
    // cosine coefficient averages them with variance 2/k of that.
    let threshold = 3.0 * (2.0 * offset.max(1.0) / (kf * repeats as f64)).sqrt();
    if amplitude < threshold {
        return Err(Error::LowContrast {
            zone,
            amplitude,
            threshold,
        });
    }

    Ok(ProbeSweepRecord {
        zone,
        phases,
        counts,
        amplitude,
        offset,
        phi_max,
        covariance,
    })
}

/// Probes one zone: target grating on reference and probe zone, background
/// grating elsewhere, fluorescence recorded at `k` equally spaced probe
/// phases, cosine-fitted. Builds a fresh cache; correction runs reuse a
/// shared [`SweepContext`] instead.
pub fn probe_zone_sweep(
    partition: &ZonePartition,
    zone: usize,
    k: usize,
    lab: &VirtualLab,
) -> Result<ProbeSweepRecord> {
    let ctx = SweepContext::build(partition, k, 8, lab)?;
    ctx.sweep_zone(zone, lab)
}

/// The mask a sweep of `zone` at probe phase `phi` would display: target
/// grating on the reference and probe zones (plus `phi` on the probe),
/// background grating everywhere else. Used by tests to verify that the
/// cached recombination matches an honest full-mask propagation.
pub fn sweep_display_mask(
    partition: &ZonePartition,
    zone: usize,
    phi: f64,
    lab: &VirtualLab,
) -> Result<PhaseMask> {
    let geometry = lab.geometry;
    let target = lab.flatness().add(&lab.target_grating.mask(geometry)?)?;
    let background = lab
        .flatness()
        .add(&lab.target_grating.background().mask(geometry)?)?;
    let reference = partition.reference_zone();
    let part = partition.clone();
    Ok(PhaseMask::from_fn(geometry, |r, c| {
        let owner = part.zone_of_pixel(r, c);
        if owner == reference {
            target.phase(r, c)
        } else if owner == zone {
            target.phase(r, c) + phi
        } else {
            background.phase(r, c)
        }
    }))
}
