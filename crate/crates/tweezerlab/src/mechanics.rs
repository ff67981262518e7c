//! Static axial force balance for a trapped ion inside a resonant tweezer.
//!
//! Three forces act on the ion along the trap axis `z`:
//!
//! * the Paul trap restoring force `F_P = −m ω_z² z`,
//! * the tweezer dipole force `F_tw = −d/dz [ħ Ω_tw(z)²/Δ_tw · ρ_D(z)]`,
//!   where `Ω_tw(z) = Ω₀ exp(−(z−z_tw)²/w₀²)` is the Gaussian drive profile
//!   and `ρ_D` the steady-state D₃/₂ population of the four-level model,
//! * the Doppler-beam radiation pressure `F_D = ħ k Γ_P ρ_P(z)` directed
//!   along `+z`, with `k = 2π/λ` at 369 nm.
//!
//! Solving `F_P + F_tw + F_D = 0` for the ion position, then scanning the
//! tweezer center `z_tw`, produces the *apparent* beam map a fluorescence
//! scan would record. Radiation pressure drags the ion along with the
//! tweezer, so the apparent beam center `z₀` shifts from the true center by
//! `F_D/(m ω_z²)`; the shift falls off as `ω_z⁻²` with stiffer confinement.
//!
//! The Doppler beam is treated as spatially uniform over the scan range:
//! its intensity enters only through the drive `Ω_D`, while all position
//! dependence comes from the tweezer profile feeding the repump transition.

use rayon::prelude::*;

use crate::constants::{HBAR, LAMBDA_369, TAU, YB174_MASS};
use crate::error::{Error, Result};
use crate::optics::lm::golden_max;
use crate::physics::{
    four_level_populations, scattering_rate_4level_analytic, FourLevelParams, Populations4,
};

/// Apparent-center bias reproduced by [`ForceBalanceConfig::default`]:
/// 1.8 μm at an axial confinement of 2π × 38 kHz.
pub const BIAS_SHIFT_M: f64 = 1.8e-6;
/// Axial trap frequency at which [`BIAS_SHIFT_M`] is anchored.
pub const BIAS_OMEGA_Z: f64 = TAU * 38.0e3;

/// Gaussian tweezer beam: peak Rabi drive on the 935 nm transition and the
/// spatial profile it traces along the trap axis.
#[derive(Debug, Clone, Copy)]
pub struct TweezerBeam {
    /// Peak Rabi frequency Ω₀ at the tweezer center (rad/s, ≥ 0).
    pub omega0: f64,
    /// 1/e² intensity waist w₀ of the profile `Ω₀ e^{−(z−z_tw)²/w₀²}` (m).
    pub waist_m: f64,
    /// Tweezer center position z_tw on the trap axis (m).
    pub center_m: f64,
    /// Tweezer detuning Δ_tw (rad/s); must be nonzero for the dipole force.
    pub delta: f64,
}

impl Default for TweezerBeam {
    fn default() -> Self {
        TweezerBeam {
            omega0: TAU * 10.0e6,
            waist_m: 2.3e-6,
            center_m: 0.0,
            delta: -TAU * 40.0e6,
        }
    }
}

/// Doppler cooling beam driving the 369 nm transition; spatially uniform.
#[derive(Debug, Clone, Copy)]
pub struct DopplerBeam {
    /// Rabi frequency Ω_D (rad/s, ≥ 0).
    pub omega: f64,
    /// Detuning Δ_D (rad/s).
    pub delta: f64,
    /// Wavelength carried by each scattered photon's recoil (m).
    pub wavelength_m: f64,
}

impl Default for DopplerBeam {
    fn default() -> Self {
        let atoms = FourLevelParams::default();
        DopplerBeam {
            omega: atoms.omega_d,
            delta: atoms.delta_d,
            wavelength_m: LAMBDA_369,
        }
    }
}

/// Full configuration of the axial force-balance model.
///
/// The atomic steady state at ion position `z` is evaluated with the
/// four-level parameters in `atoms`, overriding its drives with the Doppler
/// beam and the local tweezer Rabi frequency `Ω_tw(z)`.
#[derive(Debug, Clone, Copy)]
pub struct ForceBalanceConfig {
    /// Axial secular frequency ω_z of the Paul trap (rad/s, > 0).
    pub omega_z: f64,
    /// Ion mass (kg).
    pub mass_kg: f64,
    pub tweezer: TweezerBeam,
    pub doppler: DopplerBeam,
    /// Linewidths and branching fractions of the four-level model; its
    /// drive fields are ignored in favor of `tweezer` and `doppler`.
    pub atoms: FourLevelParams,
    /// When `false` the optical forces are switched off (the steady state
    /// and scattering rate are still evaluated); the ion then sits at the
    /// bare trap equilibrium. Used to separate mapping bias from the
    /// underlying beam profile.
    pub optical_forces: bool,
}

impl Default for ForceBalanceConfig {
    /// Lab defaults: ω_z = 2π × 120 kHz, ¹⁷⁴Yb⁺ mass, a 2.3 μm waist
    /// tweezer driven at Ω₀ = 2π × 10 MHz and Δ_tw = −2π × 40 MHz, with the
    /// Doppler drive tuned (see [`doppler_drive_for_bias`]) so the apparent
    /// beam center shifts by [`BIAS_SHIFT_M`] at ω_z = [`BIAS_OMEGA_Z`].
    fn default() -> Self {
        let mut cfg = ForceBalanceConfig {
            omega_z: TAU * 120.0e3,
            mass_kg: YB174_MASS,
            tweezer: TweezerBeam::default(),
            doppler: DopplerBeam::default(),
            atoms: FourLevelParams::default(),
            optical_forces: true,
        };
        cfg.doppler.omega = doppler_drive_for_bias(BIAS_SHIFT_M, BIAS_OMEGA_Z, &cfg)
            .expect("lab default bias point is reachable");
        cfg
    }
}

impl ForceBalanceConfig {
    /// Checks positivity/finiteness of the mechanical and beam parameters
    /// and the four-level branching normalization.
    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("omega_z", self.omega_z, self.omega_z > 0.0),
            ("mass_kg", self.mass_kg, self.mass_kg > 0.0),
            ("tweezer.waist_m", self.tweezer.waist_m, self.tweezer.waist_m > 0.0),
            ("tweezer.omega0", self.tweezer.omega0, self.tweezer.omega0 >= 0.0),
            ("tweezer.center_m", self.tweezer.center_m, true),
            ("tweezer.delta", self.tweezer.delta, true),
            ("doppler.omega", self.doppler.omega, self.doppler.omega >= 0.0),
            ("doppler.delta", self.doppler.delta, true),
            (
                "doppler.wavelength_m",
                self.doppler.wavelength_m,
                self.doppler.wavelength_m > 0.0,
            ),
        ];
        for (field, value, in_range) in checks {
            if !value.is_finite() || !in_range {
                return Err(Error::ScenarioValue {
                    field: field.to_string(),
                    reason: format!("value {value} is not a finite number in range"),
                });
            }
        }
        self.atoms.validate()
    }

    /// Local tweezer Rabi frequency `Ω₀ e^{−(z−z_tw)²/w₀²}` at ion
    /// position `z`.
    pub fn rabi_at(&self, z_m: f64) -> f64 {
        let u = (z_m - self.tweezer.center_m) / self.tweezer.waist_m;
        self.tweezer.omega0 * (-u * u).exp()
    }

    /// Four-level parameter set seen by an ion at position `z`.
    pub fn params_at(&self, z_m: f64) -> FourLevelParams {
        FourLevelParams {
            omega_d: self.doppler.omega,
            delta_d: self.doppler.delta,
            omega_tw: self.rabi_at(z_m),
            delta_tw: self.tweezer.delta,
            ..self.atoms
        }
    }

    /// Steady-state level populations at ion position `z`.
    pub fn populations_at(&self, z_m: f64) -> Result<Populations4> {
        four_level_populations(&self.params_at(z_m))
    }

    /// Steady-state 369 nm scattering rate for an ion at position `z`
    /// (photons/s); zero where no light reaches the ion.
    pub fn scattering_rate_at(&self, z_m: f64) -> Result<f64> {
        let p = self.params_at(z_m);
        if p.omega_d == 0.0 && p.omega_tw == 0.0 {
            return Ok(0.0);
        }
        scattering_rate_4level_analytic(&p)
    }

    /// Copy of this configuration with the tweezer moved to `z_tw`.
    pub fn with_tweezer_center(&self, z_tw_m: f64) -> Self {
        let mut cfg = *self;
        cfg.tweezer.center_m = z_tw_m;
        cfg
    }
}

/// Doppler Rabi drive Ω_D that makes the apparent beam center shift by
/// `shift_m` at axial confinement `omega_ref` (with the ion sitting at the
/// tweezer center).
///
/// At the apparent-map peak the ion rests exactly at the tweezer center, so
/// the trap must balance the full radiation pressure there:
/// `m ω² · shift = ħ k Γ_P ρ_P(center)`, fixing the target P population.
/// Writing the steady state through the two saturation fractions
/// `q₁ = Ω_D²/(4Δ_D² + Γ_P² + Ω_D²)` and
/// `q₂ = Ω₀²/(4Δ_tw² + Γ₃/₂² + Ω₀²)` gives
/// `ρ_P = q₁ / (1 + q₁·(1 + leak·(1+q₂)/q₂))` with
/// `leak = Γ_{D,P}/Γ_{S,3/2}`, which inverts in closed form for `q₁` and
/// hence Ω_D.
///
/// Errors with [`Error::ScenarioValue`] when the requested bias exceeds
/// what radiation pressure can supply at any drive strength.
pub fn doppler_drive_for_bias(
    shift_m: f64,
    omega_ref: f64,
    cfg: &ForceBalanceConfig,
) -> Result<f64> {
    if !(shift_m > 0.0) || !shift_m.is_finite() || !(omega_ref > 0.0) || !omega_ref.is_finite() {
        return Err(Error::ScenarioValue {
            field: "bias target".to_string(),
            reason: format!("shift {shift_m} m at omega {omega_ref} rad/s is not positive"),
        });
    }
    if cfg.tweezer.omega0 <= 0.0 {
        return Err(Error::ScenarioValue {
            field: "tweezer.omega0".to_string(),
            reason: "bias tuning needs a nonzero tweezer drive to repump the ion".to_string(),
        });
    }
    let a = &cfg.atoms;
    let k = TAU / cfg.doppler.wavelength_m;
    let rho_target = shift_m * cfg.mass_kg * omega_ref * omega_ref / (HBAR * k * a.gamma_p);
    let o2 = cfg.tweezer.omega0 * cfg.tweezer.omega0;
    let q2 = o2 / (4.0 * cfg.tweezer.delta * cfg.tweezer.delta + a.gamma_32 * a.gamma_32 + o2);
    let leak = (a.gamma_p * a.b_d_p) / (a.gamma_32 * a.b_s_32);
    let lfac = leak * (1.0 + q2) / q2;
    let denom = 1.0 - rho_target * (1.0 + lfac);
    if denom <= 0.0 {
        return Err(Error::ScenarioValue {
            field: "bias target".to_string(),
            reason: format!(
                "population {rho_target:.4} needed for a {:.3} um bias is beyond saturation",
                shift_m * 1e6
            ),
        });
    }
    let q1 = rho_target / denom;
    if q1 >= 1.0 {
        return Err(Error::ScenarioValue {
            field: "bias target".to_string(),
            reason: format!("saturation fraction {q1:.4} is not reachable"),
        });
    }
    let d = &cfg.doppler;
    Ok((q1 * (4.0 * d.delta * d.delta + a.gamma_p * a.gamma_p) / (1.0 - q1)).sqrt())
}

/// Paul-trap restoring force `−m ω_z² z` (N).
pub fn trap_force(z_m: f64, cfg: &ForceBalanceConfig) -> f64 {
    -cfg.mass_kg * cfg.omega_z * cfg.omega_z * z_m
}

/// Radiation-pressure magnitude `ħ k Γ_P ρ_P` for a given P population (N).
pub fn radiation_pressure(rho_pp: f64, cfg: &ForceBalanceConfig) -> f64 {
    HBAR * (TAU / cfg.doppler.wavelength_m) * cfg.atoms.gamma_p * rho_pp
}

/// Dipole potential `ħ Ω_tw(z)²/Δ_tw · ρ_D(z)` (J). Zero wherever no light
/// reaches the ion.
fn dipole_potential(z_m: f64, cfg: &ForceBalanceConfig) -> Result<f64> {
    let p = cfg.params_at(z_m);
    if p.omega_tw == 0.0 {
        return Ok(0.0);
    }
    if p.omega_d == 0.0 && p.omega_tw == 0.0 {
        return Ok(0.0);
    }
    let rho_d = four_level_populations(&p)?.d;
    Ok(HBAR * p.omega_tw * p.omega_tw / p.delta_tw * rho_d)
}

/// Central difference `f'(z)` with one Richardson extrapolation step:
/// `(4 D(h/2) − D(h))/3` with `D(h) = (f(z+h) − f(z−h))/(2h)`.
fn central_derivative<F>(f: F, z: f64, h: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let d = |hh: f64| -> Result<f64> { Ok((f(z + hh)? - f(z - hh)?) / (2.0 * hh)) };
    let coarse = d(h)?;
    let fine = d(h / 2.0)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Tweezer dipole force `−d/dz [ħ Ω_tw(z)²/Δ_tw · ρ_D(z)]` (N), evaluated
/// by Richardson-extrapolated central differences with step w₀/200.
///
/// Errors when Δ_tw = 0 while the tweezer is driven (the dipole potential
/// diverges on resonance); identically zero when Ω₀ = 0 or optical forces
/// are disabled.
pub fn tweezer_force(z_m: f64, cfg: &ForceBalanceConfig) -> Result<f64> {
    if !cfg.optical_forces || cfg.tweezer.omega0 == 0.0 {
        return Ok(0.0);
    }
    if cfg.tweezer.delta == 0.0 {
        return Err(Error::ScenarioValue {
            field: "tweezer.delta".to_string(),
            reason: "the dipole force needs a nonzero tweezer detuning".to_string(),
        });
    }
    let h = cfg.tweezer.waist_m / 200.0;
    Ok(-central_derivative(|z| dipole_potential(z, cfg), z_m, h)?)
}

/// Doppler radiation-pressure force along `+z` (N): `ħ k Γ_P ρ_P(z)`.
pub fn doppler_force(z_m: f64, cfg: &ForceBalanceConfig) -> Result<f64> {
    if !cfg.optical_forces || cfg.doppler.omega == 0.0 {
        return Ok(0.0);
    }
    Ok(radiation_pressure(cfg.populations_at(z_m)?.p, cfg))
}

/// Sum of the trap, dipole, and radiation-pressure forces at `z` (N).
pub fn total_force(z_m: f64, cfg: &ForceBalanceConfig) -> Result<f64> {
    Ok(trap_force(z_m, cfg) + tweezer_force(z_m, cfg)? + doppler_force(z_m, cfg)?)
}

/// Equilibrium of the force balance at one tweezer position.
#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    /// Selected equilibrium: the root continuously connected to the bare
    /// trap equilibrium as the tweezer approaches from far below.
    pub z_m: f64,
    /// Every root of the total force in the search window, ascending.
    pub all_roots: Vec<f64>,
    /// `true` when more than one root exists (bistable force balance); the
    /// selected branch is then history-dependent in a real experiment and
    /// pinned here by the approach-from-below convention.
    pub multistable: bool,
}

/// Displacement bound used to size root-search windows: the largest
/// possible optical force over the trap spring constant, plus slack.
fn search_margin(cfg: &ForceBalanceConfig) -> f64 {
    let w = cfg.tweezer.waist_m;
    let mut f_max = radiation_pressure(0.5, cfg);
    if cfg.tweezer.omega0 > 0.0 && cfg.tweezer.delta != 0.0 {
        // |d/dz (ħΩ²/Δ)| ≤ 2ħΩ₀²/(|Δ| w₀), and ρ_D ≤ 1.
        f_max += 2.0 * HBAR * cfg.tweezer.omega0 * cfg.tweezer.omega0
            / (cfg.tweezer.delta.abs() * w);
    }
    4.0 * w + f_max / (cfg.mass_kg * cfg.omega_z * cfg.omega_z)
}

/// All sign-change roots of the total force for the given tweezer center,
/// bisected to 1e-10 m, ascending.
fn scan_roots(z_tw_m: f64, cfg: &ForceBalanceConfig) -> Result<Vec<f64>> {
    let cfg = cfg.with_tweezer_center(z_tw_m);
    let margin = search_margin(&cfg);
    let lo = z_tw_m.min(0.0) - margin;
    let hi = z_tw_m.max(0.0) + margin;
    let step = 0.15 * cfg.tweezer.waist_m;
    let n = (((hi - lo) / step).ceil() as usize).clamp(64, 8192);
    let mut roots = Vec::new();
    let mut prev_z = lo;
    let mut prev_f = total_force(lo, &cfg)?;
    for i in 1..=n {
        let z = lo + (hi - lo) * i as f64 / n as f64;
        let f = total_force(z, &cfg)?;
        if prev_f == 0.0 {
            roots.push(prev_z);
        } else if prev_f.signum() != f.signum() && f != 0.0 {
            let (mut a, mut b, mut fa) = (prev_z, z, prev_f);
            while b - a > 1e-10 {
                let mid = 0.5 * (a + b);
                let fm = total_force(mid, &cfg)?;
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                } else if fm.signum() == fa.signum() {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev_z = z;
        prev_f = f;
    }
    if prev_f == 0.0 {
        roots.push(prev_z);
    }
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if roots.is_empty() {
        return Err(Error::NoBracket { lo_m: lo, hi_m: hi });
    }
    Ok(roots)
}

/// Ion equilibrium for a tweezer at `z_tw`: solves
/// `F_P(z) + F_tw(z) + F_D(z) = 0` by bracketed bisection to 1e-10 m.
///
/// When the balance is multistable the returned branch is selected by
/// continuation: the tweezer is marched in from 8 waists below `z_tw`
/// (where the optics cannot hold the ion) while tracking the root nearest
/// the previous one, which reproduces the deterministic approach-direction
/// convention of a slow experimental scan. All roots at the final position
/// are reported alongside the selection.
pub fn equilibrium_position(z_tw_m: f64, cfg: &ForceBalanceConfig) -> Result<EquilibriumResult> {
    cfg.validate()?;
    if !z_tw_m.is_finite() {
        return Err(Error::ScenarioValue {
            field: "z_tw_m".to_string(),
            reason: "tweezer position must be finite".to_string(),
        });
    }
    let w = cfg.tweezer.waist_m;
    let steps = 160;
    let start = z_tw_m - 8.0 * w;
    let first = scan_roots(start, cfg)?;
    // Branch seed: the root closest to the bare trap equilibrium.
    let mut z_prev = first
        .iter()
        .copied()
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .expect("scan_roots never returns an empty list");
    let mut roots = first;
    for k in 1..=steps {
        let z_tw_k = start + (z_tw_m - start) * k as f64 / steps as f64;
        roots = scan_roots(z_tw_k, cfg)?;
        z_prev = roots
            .iter()
            .copied()
            .min_by(|a, b| (a - z_prev).abs().total_cmp(&(b - z_prev).abs()))
            .expect("scan_roots never returns an empty list");
    }
    Ok(EquilibriumResult {
        z_m: z_prev,
        multistable: roots.len() > 1,
        all_roots: roots,
    })
}

/// One sample of the apparent beam map.
#[derive(Debug, Clone, Copy)]
pub struct ApparentMapPoint {
    /// Tweezer center position for this sample (m).
    pub z_tw_m: f64,
    /// Steady-state 369 nm scattering rate at the ion equilibrium
    /// (photons/s).
    pub rate: f64,
    /// Ion equilibrium position (m).
    pub z_ion_m: f64,
    /// Whether the force balance had multiple roots here.
    pub multistable: bool,
}

/// Scattering rate and ion equilibrium on the continuation branch for a
/// single tweezer position.
fn branch_rate(z_tw_m: f64, cfg: &ForceBalanceConfig) -> Result<ApparentMapPoint> {
    let eq = equilibrium_position(z_tw_m, cfg)?;
    let rate = cfg.with_tweezer_center(z_tw_m).scattering_rate_at(eq.z_m)?;
    Ok(ApparentMapPoint {
        z_tw_m,
        rate,
        z_ion_m: eq.z_m,
        multistable: eq.multistable,
    })
}

/// Apparent beam map: the fluorescence rate an experiment records while
/// scanning the tweezer across the ion, with the ion relaxing to its force
/// equilibrium at every step.
///
/// The sweep must span at least ±4 waists so the map contains the full
/// apparent profile; points evaluate independently (in parallel), each on
/// the deterministic continuation branch of [`equilibrium_position`].
pub fn apparent_map(
    z_tw_m: &[f64],
    cfg: &ForceBalanceConfig,
) -> Result<Vec<ApparentMapPoint>> {
    cfg.validate()?;
    if z_tw_m.is_empty() {
        return Err(Error::TooFewSamples { got: 0, need: 2 });
    }
    let lo = z_tw_m.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = z_tw_m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::ScenarioValue {
            field: "z_tw_m".to_string(),
            reason: "sweep positions must be finite".to_string(),
        });
    }
    if hi - lo < 8.0 * cfg.tweezer.waist_m {
        return Err(Error::ScenarioValue {
            field: "z_tw_m".to_string(),
            reason: format!(
                "sweep span {:.3} um is narrower than 8 waists ({:.3} um)",
                (hi - lo) * 1e6,
                8.0 * cfg.tweezer.waist_m * 1e6
            ),
        });
    }
    z_tw_m
        .par_iter()
        .map(|&zt| branch_rate(zt, cfg))
        .collect()
}

/// Apparent beam center versus axial confinement.
#[derive(Debug, Clone, Copy)]
pub struct PeakShiftPoint {
    /// Axial trap frequency (rad/s).
    pub omega_z: f64,
    /// Tweezer position z₀ of maximum apparent fluorescence (m).
    pub z0_m: f64,
}

/// Tweezer position of maximum apparent scattering rate for each axial
/// confinement in `omega_z`.
///
/// Processes frequencies in descending order, re-centering each search
/// window on the previous peak: the bias grows as confinement weakens, and
/// walking down in ω_z keeps the argmax search on the same branch even
/// when weak traps develop bistable stretches elsewhere in the map. Each
/// peak is located by a 161-point grid scan over ±4 waists followed by
/// golden-section refinement to 1e-10 m. Results follow the input order.
pub fn peak_shift_vs_omega(
    omega_z: &[f64],
    cfg: &ForceBalanceConfig,
) -> Result<Vec<PeakShiftPoint>> {
    cfg.validate()?;
    if omega_z.is_empty() {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    for &o in omega_z {
        if !(o > 0.0) || !o.is_finite() {
            return Err(Error::ScenarioValue {
                field: "omega_z".to_string(),
                reason: format!("trap frequency {o} rad/s is not positive"),
            });
        }
    }
    let mut order: Vec<usize> = (0..omega_z.len()).collect();
    order.sort_by(|&a, &b| omega_z[b].total_cmp(&omega_z[a]));

    let w = cfg.tweezer.waist_m;
    let mut center = 0.0;
    let mut out = vec![
        PeakShiftPoint {
            omega_z: 0.0,
            z0_m: 0.0,
        };
        omega_z.len()
    ];
    for &idx in &order {
        let mut cfg_o = *cfg;
        cfg_o.omega_z = omega_z[idx];
        let n = 161;
        let grid: Vec<f64> = (0..n)
            .map(|i| center - 4.0 * w + 8.0 * w * i as f64 / (n - 1) as f64)
            .collect();
        let rates: Vec<f64> = grid
            .par_iter()
            .map(|&zt| branch_rate(zt, &cfg_o).map(|p| p.rate))
            .collect::<Result<_>>()?;
        let best = rates
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("grid is non-empty");
        let lo = grid[best.saturating_sub(1)];
        let hi = grid[(best + 1).min(n - 1)];
        let mut first_err = None;
        let z0 = golden_max(
            |zt| match branch_rate(zt, &cfg_o) {
                Ok(p) => p.rate,
                Err(e) => {
                    first_err.get_or_insert(e);
                    f64::NEG_INFINITY
                }
            },
            lo,
            hi,
            1e-10,
        );
        if let Some(e) = first_err {
            return Err(e);
        }
        out[idx] = PeakShiftPoint {
            omega_z: omega_z[idx],
            z0_m: z0,
        };
        center = z0;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::GAMMA_P;
    use crate::optics::fit_skew_gaussian_1d;
    use approx::assert_relative_eq;

    #[test]
    fn trap_force_matches_the_textbook_arithmetic() {
        let cfg = ForceBalanceConfig {
            omega_z: TAU * 120.0e3,
            ..Default::default()
        };
        assert_eq!(trap_force(0.0, &cfg), 0.0);
        let f = trap_force(1.0e-6, &cfg);
        assert_relative_eq!(f, -1.64e-19, max_relative = 0.01);
        for z in [-2.0e-6, -0.3e-6, 0.7e-6, 1.9e-6] {
            assert_eq!(trap_force(-z, &cfg), -trap_force(z, &cfg));
        }
    }

    #[test]
    fn radiation_pressure_matches_the_recoil_arithmetic() {
        let cfg = ForceBalanceConfig::default();
        // ħ k Γ_P × 0.1 at 369 nm and Γ_P = 2π×21 MHz.
        assert_relative_eq!(radiation_pressure(0.1, &cfg), 2.37e-20, max_relative = 0.01);
        assert_eq!(radiation_pressure(0.0, &cfg), 0.0);
    }

    #[test]
    fn finite_difference_matches_the_analytic_gaussian_gradient() {
        // Frozen D population: the potential reduces to a pure Gaussian,
        // whose derivative is known in closed form.
        let cfg = ForceBalanceConfig::default();
        let rho0 = 0.21;
        let u = |z: f64| -> Result<f64> {
            let o = cfg.rabi_at(z);
            Ok(HBAR * o * o / cfg.tweezer.delta * rho0)
        };
        let w = cfg.tweezer.waist_m;
        let c = cfg.tweezer.center_m;
        let h = w / 200.0;
        for dz in [-1.7, -0.9, -0.3, 0.4, 1.1, 2.2] {
            let z = c + dz * w;
            let o = cfg.rabi_at(z);
            let analytic =
                HBAR * o * o / cfg.tweezer.delta * rho0 * (-4.0 * (z - c) / (w * w));
            let numeric = central_derivative(u, z, h).unwrap();
            assert_relative_eq!(numeric, analytic, max_relative = 1e-6);
        }
        // Red detuning: −dU/dz points toward the tweezer center.
        assert!(-central_derivative(u, c - 0.5 * w, h).unwrap() > 0.0);
        assert!(-central_derivative(u, c + 0.5 * w, h).unwrap() < 0.0);
    }

    #[test]
    fn dipole_force_vanishes_at_the_tweezer_center() {
        let cfg = ForceBalanceConfig::default();
        let w = cfg.tweezer.waist_m;
        let peak = (-40..=40)
            .map(|i| {
                tweezer_force(cfg.tweezer.center_m + i as f64 * w / 20.0, &cfg)
                    .unwrap()
                    .abs()
            })
            .fold(0.0, f64::max);
        let at_center = tweezer_force(cfg.tweezer.center_m, &cfg).unwrap().abs();
        assert!(peak > 0.0);
        assert!(
            at_center < 1e-3 * peak,
            "center force {at_center:.3e} vs peak {peak:.3e}"
        );
    }

    #[test]
    fn resonant_tweezer_rejects_the_dipole_force() {
        let mut cfg = ForceBalanceConfig::default();
        cfg.tweezer.delta = 0.0;
        assert!(matches!(
            tweezer_force(0.0, &cfg),
            Err(Error::ScenarioValue { .. })
        ));
        // With the drive off the dipole force is exactly zero regardless.
        cfg.tweezer.omega0 = 0.0;
        assert_eq!(tweezer_force(0.0, &cfg).unwrap(), 0.0);
    }

    /// Tweezer so much wider than the scan range that every optical
    /// quantity is position-independent.
    fn broad_beam_config() -> ForceBalanceConfig {
        let mut cfg = ForceBalanceConfig::default();
        cfg.tweezer.waist_m = 1.0;
        cfg.omega_z = TAU * 120.0e3;
        cfg
    }

    #[test]
    fn broad_beam_radiation_pressure_is_a_plateau() {
        let cfg = broad_beam_config();
        let f0 = doppler_force(0.0, &cfg).unwrap();
        assert!(f0 > 0.0);
        for z in [-5.0e-6, -1.0e-6, 2.0e-6, 5.0e-6] {
            assert_relative_eq!(doppler_force(z, &cfg).unwrap(), f0, max_relative = 1e-9);
        }
        assert_relative_eq!(
            f0,
            radiation_pressure(cfg.populations_at(0.0).unwrap().p, &cfg),
            max_relative = 1e-12
        );
    }

    #[test]
    fn dark_configuration_rests_at_the_trap_center() {
        let mut cfg = ForceBalanceConfig::default();
        cfg.tweezer.omega0 = 0.0;
        cfg.doppler.omega = 0.0;
        let eq = equilibrium_position(3.0e-6, &cfg).unwrap();
        assert!(eq.z_m.abs() < 1e-10);
        assert!(!eq.multistable);
    }

    #[test]
    fn constant_push_displaces_by_force_over_spring_constant() {
        let cfg = broad_beam_config();
        let eq = equilibrium_position(0.0, &cfg).unwrap();
        let f0 = doppler_force(eq.z_m, &cfg).unwrap();
        let expected = f0 / (cfg.mass_kg * cfg.omega_z * cfg.omega_z);
        // The root is bisected to 1e-10 m; compare at that resolution.
        assert_relative_eq!(eq.z_m, expected, epsilon = 1e-9);
    }

    #[test]
    fn displacement_falls_off_as_inverse_square_confinement() {
        let mut stiff = ForceBalanceConfig::default();
        stiff.omega_z = TAU * 400.0e3;
        let mut soft = ForceBalanceConfig::default();
        soft.omega_z = TAU * 200.0e3;
        let z_stiff = equilibrium_position(0.0, &stiff).unwrap().z_m;
        let z_soft = equilibrium_position(0.0, &soft).unwrap().z_m;
        assert!(z_stiff > 0.0 && z_soft > 0.0);
        assert_relative_eq!(z_soft / z_stiff, 4.0, max_relative = 0.02);
    }

    #[test]
    fn default_tuning_reproduces_the_measured_bias_point() {
        let cfg = ForceBalanceConfig::default();
        let shift = peak_shift_vs_omega(&[BIAS_OMEGA_Z], &cfg).unwrap()[0].z0_m;
        assert_relative_eq!(shift, BIAS_SHIFT_M, max_relative = 0.01);
    }

    #[test]
    fn peak_shift_follows_an_inverse_square_power_law() {
        let cfg = ForceBalanceConfig::default();
        let omegas: Vec<f64> = (0..6)
            .map(|i| TAU * 38.0e3 * (150.0f64 / 38.0).powf(i as f64 / 5.0))
            .collect();
        let points = peak_shift_vs_omega(&omegas, &cfg).unwrap();
        // Log-log least squares for the exponent.
        let n = points.len() as f64;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for p in &points {
            assert!(p.z0_m > 0.0);
            let x = p.omega_z.ln();
            let y = p.z0_m.ln();
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(
            (slope + 2.0).abs() < 0.1,
            "power-law exponent {slope:.4} should be -2"
        );
    }

    #[test]
    fn forces_off_map_is_symmetric_about_the_true_center() {
        let mut cfg = ForceBalanceConfig::default();
        cfg.optical_forces = false;
        // Weak probe keeps the rate profile close to a Gaussian shape.
        cfg.tweezer.omega0 = TAU * 1.5e6;
        let w = cfg.tweezer.waist_m;
        let sweep: Vec<f64> = (0..81).map(|i| -4.0 * w + 8.0 * w * i as f64 / 80.0).collect();
        let map = apparent_map(&sweep, &cfg).unwrap();
        for p in &map {
            assert!(p.z_ion_m.abs() < 1e-10, "ion must stay at the trap center");
        }
        let rates: Vec<f64> = map.iter().map(|p| p.rate).collect();
        let fit = fit_skew_gaussian_1d(&rates, &sweep).unwrap();
        assert!(
            fit.mode.abs() < 1e-3 * w,
            "apparent center {:.3e} m should be the true center",
            fit.mode
        );
        assert!(fit.alpha.abs() < 0.05, "skewness {:.3} should vanish", fit.alpha);

        let z0 = peak_shift_vs_omega(&[TAU * 60.0e3, TAU * 200.0e3], &cfg).unwrap();
        for p in z0 {
            assert!(p.z0_m.abs() < 1e-3 * w);
        }
    }

    #[test]
    fn tracked_branch_is_continuous_when_monostable() {
        let cfg = ForceBalanceConfig {
            omega_z: BIAS_OMEGA_Z,
            ..Default::default()
        };
        let w = cfg.tweezer.waist_m;
        let sweep: Vec<f64> = (0..161)
            .map(|i| -4.0 * w + 8.0 * w * i as f64 / 160.0)
            .collect();
        let map = apparent_map(&sweep, &cfg).unwrap();
        // Monostable ⇒ continuous: the branch slope can grow near a
        // marginal point, but it can never hop basins (a hysteresis jump
        // is several waists wide). Steep-but-continuous stretches must
        // also interpolate: the midpoint root lies between its neighbors.
        for pair in map.windows(2) {
            if !pair[0].multistable && !pair[1].multistable {
                let jump = (pair[1].z_ion_m - pair[0].z_ion_m).abs();
                assert!(
                    jump < 0.5 * w,
                    "branch jump {:.3e} m between z_tw {:.3e} and {:.3e}",
                    jump,
                    pair[0].z_tw_m,
                    pair[1].z_tw_m
                );
                if jump > 0.1 * w {
                    let mid = 0.5 * (pair[0].z_tw_m + pair[1].z_tw_m);
                    let z_mid = equilibrium_position(mid, &cfg).unwrap().z_m;
                    let lo = pair[0].z_ion_m.min(pair[1].z_ion_m) - 1e-9;
                    let hi = pair[0].z_ion_m.max(pair[1].z_ion_m) + 1e-9;
                    assert!(
                        (lo..=hi).contains(&z_mid),
                        "midpoint root {z_mid:.3e} escapes [{lo:.3e}, {hi:.3e}]"
                    );
                }
            }
        }
    }

    #[test]
    fn weak_confinement_reports_multistability() {
        let cfg = ForceBalanceConfig {
            omega_z: TAU * 12.0e3,
            ..Default::default()
        };
        let w = cfg.tweezer.waist_m;
        let mut seen = false;
        for i in 0..40 {
            let z_tw = -4.0 * w + 12.0 * w * i as f64 / 39.0;
            let eq = equilibrium_position(z_tw, &cfg).unwrap();
            assert!(eq.all_roots.contains(&eq.z_m));
            assert!(eq.all_roots.windows(2).all(|p| p[0] < p[1]));
            seen |= eq.multistable;
        }
        assert!(seen, "a 2π×12 kHz trap should be bistable somewhere in the scan");
    }

    #[test]
    fn bias_tuner_recovers_the_default_drive_and_rejects_impossible_targets() {
        let cfg = ForceBalanceConfig::default();
        let drive = doppler_drive_for_bias(BIAS_SHIFT_M, BIAS_OMEGA_Z, &cfg).unwrap();
        assert_relative_eq!(drive, cfg.doppler.omega, max_relative = 1e-12);
        assert!(drive > 0.0 && drive < 2.0 * GAMMA_P);
        assert!(matches!(
            doppler_drive_for_bias(1.0, BIAS_OMEGA_Z, &cfg),
            Err(Error::ScenarioValue { .. })
        ));
        let mut dark = cfg;
        dark.tweezer.omega0 = 0.0;
        assert!(doppler_drive_for_bias(BIAS_SHIFT_M, BIAS_OMEGA_Z, &dark).is_err());
    }

    #[test]
    fn sweeps_narrower_than_eight_waists_are_rejected() {
        let cfg = ForceBalanceConfig::default();
        let err = apparent_map(&[0.0, 1.0e-6], &cfg);
        assert!(matches!(err, Err(Error::ScenarioValue { .. })));
        assert!(matches!(
            apparent_map(&[], &cfg),
            Err(Error::TooFewSamples { .. })
        ));
    }
}
