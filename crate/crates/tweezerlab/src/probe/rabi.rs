//! Invert CPT detuning sweeps into a tweezer Rabi-frequency profile.
//!
//! For each ion position z, a sweep of the repump detuning produces a
//! fluorescence profile whose shape (width, CPT contrast) encodes the
//! local tweezer Rabi frequency. The extractor fits each slice with
//! `counts = a * rate(omega, delta) + b`, sharing the background b across
//! slices, where `rate` is the ten-level steady-state scattering rate.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optics::golden_max;
use crate::physics::{fluorescence_10level, FourLevelParams, TenLevelParams, ZeemanEnvironment};

/// Measured input: counts on a (position, detuning) grid.
#[derive(Debug, Clone)]
pub struct RabiSweepData {
    /// Ion positions along z (m).
    pub z_positions: Vec<f64>,
    /// Repump/tweezer detunings (rad/s).
    pub detunings: Vec<f64>,
    /// Mean counts, shape (z_positions, detunings).
    pub counts: Array2<f64>,
}

/// Extraction result for one position.
#[derive(Debug, Clone, Copy)]
pub struct RabiPoint {
    pub z: f64,
    /// Fitted tweezer Rabi frequency (rad/s); 0 when `low_signal` is set.
    pub omega: f64,
    /// One-sigma uncertainty from the fit curvature (rad/s).
    pub omega_err: f64,
    /// Fitted amplitude scale a (counts per photon/s).
    pub amplitude: f64,
    /// Set when the slice carries too little signal to constrain omega.
    pub low_signal: bool,
}

/// Full extracted profile.
#[derive(Debug, Clone)]
pub struct RabiProfile {
    pub points: Vec<RabiPoint>,
    /// Shared fitted background counts.
    pub background: f64,
    /// Set when any slice's cost is flat around its optimum, i.e. the
    /// data cannot distinguish nearby Rabi frequencies (weak-drive
    /// degeneracy between amplitude and omega).
    pub identifiability_warning: bool,
}

/// Tuning knobs for the extraction.
#[derive(Debug, Clone, Copy)]
pub struct RabiExtractOptions {
    /// Search bracket for omega (rad/s), log-spaced.
    pub bracket: (f64, f64),
    /// Rate-table resolution in omega.
    pub grid_points: usize,
    /// Resolution of the shared-background scan.
    pub background_steps: usize,
}

impl Default for RabiExtractOptions {
    fn default() -> Self {
        Self {
            bracket: (crate::constants::TAU * 1e6, crate::constants::TAU * 600e6),
            grid_points: 40,
            background_steps: 13,
        }
    }
}

/// Ten-level scattering-rate table over (detuning, omega) used as the fit
/// model. Public so synthetic data for round-trip tests can be generated
/// from exactly the model the extractor assumes.
#[derive(Debug, Clone)]
pub struct RateTable {
    pub log_omegas: Vec<f64>,
    pub detunings: Vec<f64>,
    /// Shape (detunings, omegas).
    pub rates: Array2<f64>,
}

impl RateTable {
    /// Solve the ten-level model over a log-spaced omega grid for each
    /// detuning.
    pub fn build(
        atoms: &FourLevelParams,
        zeeman: &ZeemanEnvironment,
        detunings: &[f64],
        bracket: (f64, f64),
        grid_points: usize,
    ) -> Result<RateTable> {
        if !(bracket.0 > 0.0) || !(bracket.1 > bracket.0) {
            return Err(Error::ScenarioValue {
                field: "bracket".into(),
                reason: "need 0 < lo < hi for the omega search bracket".into(),
            });
        }
        if grid_points < 4 {
            return Err(Error::TooFewSamples {
                got: grid_points,
                need: 4,
            });
        }
        let (lo, hi) = (bracket.0.ln(), bracket.1.ln());
        let log_omegas: Vec<f64> = (0..grid_points)
            .map(|k| lo + (hi - lo) * k as f64 / (grid_points - 1) as f64)
            .collect();
        let flat: Result<Vec<f64>> = (0..detunings.len() * grid_points)
            .into_par_iter()
            .map(|idx| {
                let (j, k) = (idx / grid_points, idx % grid_points);
                let rates = FourLevelParams {
                    omega_tw: log_omegas[k].exp(),
                    delta_tw: detunings[j],
                    ..*atoms
                };
                fluorescence_10level(&TenLevelParams::from_rates(rates, *zeeman))
            })
            .collect();
        let rates = Array2::from_shape_vec((detunings.len(), grid_points), flat?)
            .expect("shape matches construction");
        Ok(RateTable {
            log_omegas,
            detunings: detunings.to_vec(),
            rates,
        })
    }

    /// Rate at arbitrary omega by linear interpolation in ln(omega);
    /// clamped at the bracket edges.
    pub fn rate(&self, detuning_index: usize, omega: f64) -> f64 {
        let lx = omega.max(f64::MIN_POSITIVE).ln();
        let grid = &self.log_omegas;
        if lx <= grid[0] {
            return self.rates[(detuning_index, 0)];
        }
        if lx >= grid[grid.len() - 1] {
            return self.rates[(detuning_index, grid.len() - 1)];
        }
        let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
        let k = (((lx - grid[0]) / step).floor() as usize).min(grid.len() - 2);
        let t = (lx - grid[k]) / step;
        let a = self.rates[(detuning_index, k)];
        let b = self.rates[(detuning_index, k + 1)];
        a + t * (b - a)
    }

    /// Model rate profile across all detunings at a given omega.
    pub fn profile(&self, omega: f64) -> Vec<f64> {
        (0..self.detunings.len()).map(|j| self.rate(j, omega)).collect()
    }
}

/// Best non-negative amplitude and residual cost for one slice at fixed
/// background and omega.
fn slice_fit(counts: &[f64], model: &[f64], background: f64) -> (f64, f64) {
    let num: f64 = counts
        .iter()
        .zip(model)
        .map(|(c, r)| (c - background) * r)
        .sum();
    let den: f64 = model.iter().map(|r| r * r).sum();
    let a = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
    let cost: f64 = counts
        .iter()
        .zip(model)
        .map(|(c, r)| {
            let e = c - background - a * r;
            e * e
        })
        .sum();
    (a, cost)
}

struct SliceResult {
    omega: f64,
    cost: f64,
    amplitude: f64,
    at_edge: bool,
}

/// Optimal omega for one slice at fixed background: coarse grid argmin
/// followed by golden refinement between the neighbouring grid points.
fn optimize_slice(table: &RateTable, counts: &[f64], background: f64) -> SliceResult {
    let grid = &table.log_omegas;
    let mut best_k = 0;
    let mut best_cost = f64::INFINITY;
    for k in 0..grid.len() {
        let model = table.profile(grid[k].exp());
        let (_, cost) = slice_fit(counts, &model, background);
        if cost < best_cost {
            best_cost = cost;
            best_k = k;
        }
    }
    let lo = grid[best_k.saturating_sub(1)];
    let hi = grid[(best_k + 1).min(grid.len() - 1)];
    let neg_cost = |lx: f64| {
        let model = table.profile(lx.exp());
        -slice_fit(counts, &model, background).1
    };
    let lx = if hi > lo { golden_max(neg_cost, lo, hi, 1e-7) } else { lo };
    let omega = lx.exp();
    let model = table.profile(omega);
    let (amplitude, cost) = slice_fit(counts, &model, background);
    SliceResult {
        omega,
        cost,
        amplitude,
        at_edge: best_k == 0 || best_k == grid.len() - 1,
    }
}

fn total_cost(table: &RateTable, data: &RabiSweepData, background: f64) -> f64 {
    (0..data.z_positions.len())
        .map(|i| {
            let row: Vec<f64> = data.counts.row(i).to_vec();
            optimize_slice(table, &row, background).cost
        })
        .sum()
}

/// Extract the tweezer Rabi frequency at each position from CPT
/// detuning-sweep data, sharing one fitted background across positions.
pub fn extract_rabi_profile(
    data: &RabiSweepData,
    atoms: &FourLevelParams,
    zeeman: &ZeemanEnvironment,
    options: &RabiExtractOptions,
) -> Result<RabiProfile> {
    let (nz, nd) = (data.z_positions.len(), data.detunings.len());
    if data.counts.dim() != (nz, nd) {
        return Err(Error::GeometryMismatch {
            a: format!("counts {:?}", data.counts.dim()),
            b: format!("axes ({nz}, {nd})"),
        });
    }
    if nd < 3 || nz == 0 {
        return Err(Error::TooFewSamples {
            got: nd.min(nz.max(1)),
            need: 3,
        });
    }
    let table = RateTable::build(atoms, zeeman, &data.detunings, options.bracket, options.grid_points)?;

    // Shared background: coarse scan over [0, min counts], refined by
    // golden section around the best coarse value.
    let min_count = data.counts.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
    let steps = options.background_steps.max(2);
    let mut best_b = 0.0;
    let mut best_total = f64::INFINITY;
    for s in 0..steps {
        let b = min_count * s as f64 / (steps - 1) as f64;
        let c = total_cost(&table, data, b);
        if c < best_total {
            best_total = c;
            best_b = b;
        }
    }
    let background = if min_count > 0.0 {
        let half = min_count / (steps - 1) as f64;
        let lo = (best_b - half).max(0.0);
        let hi = (best_b + half).min(min_count);
        golden_max(|b| -total_cost(&table, data, b), lo, hi, 1e-3 * min_count.max(1.0))
    } else {
        0.0
    };

    // Per-slice fits at the shared background, with curvature-based errors.
    let mut points = Vec::with_capacity(nz);
    let mut any_degenerate = false;
    for i in 0..nz {
        let row: Vec<f64> = data.counts.row(i).to_vec();
        let fit = optimize_slice(&table, &row, background);
        let model = table.profile(fit.omega);
        let contrast = {
            let hi = model.iter().cloned().fold(f64::MIN, f64::max);
            let lo = model.iter().cloned().fold(f64::MAX, f64::min);
            fit.amplitude * (hi - lo)
        };
        let sigma_r_sq = fit.cost / (nd.saturating_sub(2).max(1)) as f64;
        // The detuning contrast must clear the fit's own residual scatter
        // (and at least one count) to constrain omega at all.
        let noise_floor = (3.0 * sigma_r_sq.sqrt()).max(1.0);
        let low_signal = contrast < noise_floor || fit.amplitude <= 0.0;
        let dl = 0.02; // curvature probe step in ln(omega)
        let lx = fit.omega.ln();
        let cost_at = |l: f64| {
            let m = table.profile(l.exp());
            slice_fit(&row, &m, background).1
        };
        let curv = cost_at(lx + dl) + cost_at(lx - dl) - 2.0 * fit.cost;
        // Distinguishability: a slice only constrains omega if being wrong
        // by a factor of two raises the misfit beyond the residual scatter
        // (with a numerical floor for noise-free data). In the weak-drive
        // limit the profile shape is omega-independent — only a·omega²
        // matters — so this separation collapses and omega is degenerate
        // with the amplitude.
        let signal_energy: f64 = row
            .iter()
            .map(|c| {
                let d = c - background;
                d * d
            })
            .sum();
        let separation = {
            let up = table.profile((fit.omega * 2.0).min(options.bracket.1));
            let down = table.profile((fit.omega * 0.5).max(options.bracket.0));
            let cost_up = slice_fit(&row, &up, background).1;
            let cost_down = slice_fit(&row, &down, background).1;
            cost_up.min(cost_down) - fit.cost
        };
        let unresolvable = separation <= (9.0 * sigma_r_sq).max(1e-10 * signal_energy);
        let (omega_err, degenerate) = if curv > 0.0 {
            let sigma_ln = dl * (2.0 * sigma_r_sq.max(1e-12) / curv).sqrt();
            (
                fit.omega * sigma_ln,
                sigma_ln > 1.0 || fit.at_edge || unresolvable,
            )
        } else {
            (options.bracket.1, true)
        };
        if degenerate && !low_signal {
            any_degenerate = true;
        }
        points.push(RabiPoint {
            z: data.z_positions[i],
            omega: if low_signal { 0.0 } else { fit.omega },
            omega_err: if low_signal { options.bracket.1 } else { omega_err },
            amplitude: fit.amplitude,
            low_signal,
        });
    }

    Ok(RabiProfile {
        points,
        background,
        identifiability_warning: any_degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::TAU;
    use approx::assert_relative_eq;

    fn detunings() -> Vec<f64> {
        vec![-300e6, -150e6, -60e6, 0.0, 60e6, 150e6, 300e6]
            .into_iter()
            .map(|f| TAU * f)
            .collect()
    }

    fn synthetic(omegas: &[f64], a: f64, b: f64) -> (RabiSweepData, FourLevelParams, ZeemanEnvironment) {
        let atoms = FourLevelParams::default();
        let zeeman = ZeemanEnvironment::default();
        let dets = detunings();
        let mut counts = Array2::zeros((omegas.len(), dets.len()));
        for (i, &om) in omegas.iter().enumerate() {
            for (j, &d) in dets.iter().enumerate() {
                let rates = FourLevelParams {
                    omega_tw: om,
                    delta_tw: d,
                    ..atoms
                };
                let r = if om > 0.0 {
                    fluorescence_10level(&TenLevelParams::from_rates(rates, zeeman)).unwrap()
                } else {
                    0.0
                };
                counts[(i, j)] = a * r + b;
            }
        }
        let zs: Vec<f64> = (0..omegas.len()).map(|i| i as f64 * 1e-6).collect();
        (
            RabiSweepData {
                z_positions: zs,
                detunings: dets,
                counts,
            },
            atoms,
            zeeman,
        )
    }

    #[test]
    fn round_trip_recovers_off_grid_rabi_frequencies() {
        let truth = [TAU * 333e6, TAU * 97e6, TAU * 21e6];
        let (data, atoms, zeeman) = synthetic(&truth, 2.3e-4, 17.0);
        let prof = extract_rabi_profile(&data, &atoms, &zeeman, &RabiExtractOptions::default())
            .unwrap();
        assert_relative_eq!(prof.background, 17.0, max_relative = 0.3);
        for (p, t) in prof.points.iter().zip(truth.iter()) {
            assert!(!p.low_signal, "slice at z={:e} flagged low", p.z);
            assert_relative_eq!(p.omega, t, max_relative = 0.05);
        }
        assert!(
            !prof.identifiability_warning,
            "unexpected warning; points: {:#?}",
            prof.points
        );
    }

    #[test]
    fn zero_signal_slice_is_flagged_and_reported_as_zero() {
        let truth = [TAU * 200e6, 0.0];
        let (data, atoms, zeeman) = synthetic(&truth, 2.3e-4, 20.0);
        let prof = extract_rabi_profile(&data, &atoms, &zeeman, &RabiExtractOptions::default())
            .unwrap();
        assert!(!prof.points[0].low_signal);
        assert!(prof.points[1].low_signal);
        assert_eq!(prof.points[1].omega, 0.0);
        assert!(prof.points[1].omega_err >= TAU * 500e6);
    }

    #[test]
    fn weak_drive_degeneracy_raises_identifiability_warning() {
        // In the weak-drive limit the rate profile shape is independent of
        // omega (rate scales as a * omega^2), so omega and amplitude are
        // degenerate: expect a warning or an edge-pinned, flagged point.
        let truth = [TAU * 0.2e6];
        let (data, atoms, zeeman) = synthetic(&truth, 2.3e-1, 5.0);
        let prof = extract_rabi_profile(&data, &atoms, &zeeman, &RabiExtractOptions::default())
            .unwrap();
        let p = &prof.points[0];
        let recovered_ok = (p.omega - truth[0]).abs() < 0.3 * truth[0];
        assert!(
            prof.identifiability_warning
                || p.low_signal
                || p.omega_err > 0.5 * p.omega
                || recovered_ok,
            "weak-drive slice should not look confidently wrong: {p:?}"
        );
    }

    #[test]
    fn shape_mismatch_and_short_axes_are_rejected() {
        let (mut data, atoms, zeeman) = synthetic(&[TAU * 50e6], 1e-4, 10.0);
        data.z_positions.push(1e-6);
        assert!(matches!(
            extract_rabi_profile(&data, &atoms, &zeeman, &RabiExtractOptions::default()),
            Err(Error::GeometryMismatch { .. })
        ));

        let short = RabiSweepData {
            z_positions: vec![0.0],
            detunings: vec![0.0, 1.0],
            counts: Array2::zeros((1, 2)),
        };
        assert!(matches!(
            extract_rabi_profile(&short, &atoms, &zeeman, &RabiExtractOptions::default()),
            Err(Error::TooFewSamples { .. })
        ));
    }
}
