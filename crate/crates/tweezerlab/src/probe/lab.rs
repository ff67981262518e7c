//! Virtual lab state: trap, ion, camera, atomic model, and the light field.

use std::ops::Range;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, Matrix2, Vector2};
use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::constants::{KB, TAU, YB174_MASS};
use crate::error::{Error, Result};
use crate::optics::{
    propagate_to_focus, ComplexField, GratingSpec, MaskGeometry, OpticalTrain, PadFactor,
    PhaseMask,
};
use crate::physics::{
    fluorescence_10level, scattering_rate_4level_analytic, FourLevelParams, TenLevelParams,
    ZeemanEnvironment,
};
use crate::seed::derive_seed;

/// Harmonic trap frequencies and the species mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapConfig {
    /// Secular frequency along the optical axis x (rad/s).
    pub omega_x: f64,
    /// Secular frequency along y (rad/s).
    pub omega_y: f64,
    /// Axial secular frequency along z (rad/s).
    pub omega_z: f64,
    /// Ion mass (kg).
    pub mass: f64,
    /// Trap drive frequency (rad/s); metadata used for micromotion scaling.
    pub rf_frequency: f64,
}

impl Default for TrapConfig {
    fn default() -> Self {
        Self {
            omega_x: crate::constants::TAU * 400e3,
            omega_y: crate::constants::TAU * 400e3,
            omega_z: crate::constants::TAU * 120e3,
            mass: YB174_MASS,
            rf_frequency: crate::constants::TAU * 20e6,
        }
    }
}

/// Ion motional state: mean position in the focal plane and thermal spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonState {
    /// Mean position (y, z) in the focal plane (m).
    pub position: (f64, f64),
    /// Motional temperature (K).
    pub temperature: f64,
    /// Residual micromotion oscillation amplitude (m), added in quadrature.
    pub micromotion_amplitude: f64,
}

impl Default for IonState {
    fn default() -> Self {
        Self {
            position: (0.0, 0.0),
            temperature: 1e-3,
            micromotion_amplitude: 0.05e-6,
        }
    }
}

/// Photon collection and counting parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    /// Fraction of scattered photons that reach the detector.
    pub collection_efficiency: f64,
    /// Counting window per measurement (s).
    pub exposure: f64,
    /// Detector dark/background rate (counts/s).
    pub dark_rate: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            collection_efficiency: 1e-3,
            exposure: 0.1,
            dark_rate: 200.0,
        }
    }
}

/// Linear map from electrode voltages to focal-plane displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionCalibration {
    /// 2x2 gain matrix (m/V), rows (y, z), columns (v1, v2).
    pub gain: [[f64; 2]; 2],
}

impl Default for PositionCalibration {
    fn default() -> Self {
        Self {
            gain: [[1e-6, 0.0], [0.0, 1e-6]],
        }
    }
}

/// Convert a voltage pair to a focal-plane displacement (y, z).
///
/// Fails with [`Error::RankDeficient`] when the gain matrix is singular,
/// since a singular calibration cannot be inverted for position feedback.
pub fn voltage_to_position(cal: &PositionCalibration, volts: (f64, f64)) -> Result<(f64, f64)> {
    let g = Matrix2::new(cal.gain[0][0], cal.gain[0][1], cal.gain[1][0], cal.gain[1][1]);
    let scale = g.abs().max();
    if g.determinant().abs() <= 1e-12 * scale * scale {
        return Err(Error::RankDeficient { rank: 1, cols: 2 });
    }
    let p = g * Vector2::new(volts.0, volts.1);
    Ok((p.x, p.y))
}

/// One-sigma thermal position spread along an axis of frequency `omega`,
/// with the micromotion RMS contribution added in quadrature.
pub fn thermal_spread(trap: &TrapConfig, ion: &IonState, omega: f64) -> f64 {
    let sigma_sq = KB * ion.temperature / (trap.mass * omega * omega);
    let mm = ion.micromotion_amplitude / std::f64::consts::SQRT_2;
    (sigma_sq + mm * mm).sqrt()
}

/// Which scattering-rate model converts Rabi frequency to fluorescence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluorescenceModel {
    /// Closed-form four-level rate; fast, no Zeeman structure.
    FourLevelAnalytic,
    /// Full ten-level steady state with Zeeman structure and polarization.
    TenLevel,
}

/// Nodes and normalized weights of a 9-point Gauss-Hermite rule, arranged
/// for averaging over a unit-variance normal: sum w_i f(sqrt(2) x_i).
fn gauss_hermite_9() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = 9;
        // Golub-Welsch: eigen-decompose the symmetric Jacobi matrix whose
        // off-diagonal entries are sqrt(k/2) for the Hermite recurrence.
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let b = (k as f64 / 2.0).sqrt();
            jac[(k - 1, k)] = b;
            jac[(k, k - 1)] = b;
        }
        let eig = jac.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let node = eig.eigenvalues[i];
                let first = eig.eigenvectors[(0, i)];
                (node, first * first)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        (nodes, weights)
    })
}

/// The complete virtual experiment.
///
/// `displayed` is the mask the operator thinks is on the modulator;
/// `aberration` is the hidden phase error the optics secretly add. All
/// propagation uses their sum, so measurement-based correction loops see
/// the same physics a real bench would.
#[derive(Debug, Clone)]
pub struct VirtualLab {
    pub geometry: MaskGeometry,
    pub train: OpticalTrain,
    pub pad: PadFactor,
    pub trap: TrapConfig,
    pub ion: IonState,
    pub camera: CameraModel,
    pub position_cal: PositionCalibration,
    /// Probe-laser and repump parameters; `omega_tw` is ignored (the light
    /// field sets it) but `omega_d`, `delta_d`, `delta_tw` and the decay
    /// rates are read from here.
    pub atoms: FourLevelParams,
    pub zeeman: ZeemanEnvironment,
    pub model: FluorescenceModel,
    /// Rabi frequency per unit focal amplitude (rad/s per field unit).
    pub rabi_per_amplitude: f64,
    /// Extra amplitude scale applied on top of the calibration (power knob).
    pub power_scale: f64,
    /// Root seed from which every measurement seed is derived.
    pub seed: u64,
    /// When false, `counts_from_rate` returns the Poisson mean instead of a
    /// draw — useful for noise-free characterization runs.
    pub shot_noise: bool,
    /// Steering grating used by alignment and correction procedures.
    pub target_grating: GratingSpec,
    displayed: PhaseMask,
    aberration: PhaseMask,
    flatness: PhaseMask,
    field: Option<Arc<ComplexField>>,
}

impl VirtualLab {
    /// Build a lab with a flat displayed mask and no hidden aberration.
    pub fn new(geometry: MaskGeometry, train: OpticalTrain, pad: PadFactor) -> Self {
        Self {
            geometry,
            train,
            pad,
            trap: TrapConfig::default(),
            ion: IonState::default(),
            camera: CameraModel::default(),
            position_cal: PositionCalibration::default(),
            atoms: FourLevelParams::default(),
            zeeman: ZeemanEnvironment::default(),
            model: FluorescenceModel::FourLevelAnalytic,
            rabi_per_amplitude: 1.0,
            power_scale: 1.0,
            seed: 0,
            shot_noise: true,
            target_grating: GratingSpec::default(),
            displayed: PhaseMask::zeros(geometry),
            aberration: PhaseMask::zeros(geometry),
            flatness: PhaseMask::zeros(geometry),
            field: None,
        }
    }

    /// Desk-scale lab (128x128 mask) with default optics.
    pub fn desk() -> Self {
        Self::new(MaskGeometry::desk(), OpticalTrain::default(), PadFactor::Auto)
    }

    /// The mask the operator displays. Setting it invalidates the cached field.
    pub fn displayed(&self) -> &PhaseMask {
        &self.displayed
    }

    pub fn set_displayed(&mut self, mask: PhaseMask) -> Result<()> {
        mask.geometry().ensure_matches(&self.geometry)?;
        self.displayed = mask;
        self.field = None;
        Ok(())
    }

    /// The hidden aberration added by the virtual optics.
    pub fn hidden_aberration(&self) -> &PhaseMask {
        &self.aberration
    }

    pub fn set_hidden_aberration(&mut self, mask: PhaseMask) -> Result<()> {
        mask.geometry().ensure_matches(&self.geometry)?;
        self.aberration = mask;
        self.field = None;
        Ok(())
    }

    /// Stored flatness correction, composed under every `display_pattern`.
    pub fn flatness(&self) -> &PhaseMask {
        &self.flatness
    }

    /// Install a flatness correction. Takes effect at the next
    /// `display_pattern` call; `set_displayed` bypasses it.
    pub fn set_flatness(&mut self, mask: PhaseMask) -> Result<()> {
        mask.geometry().ensure_matches(&self.geometry)?;
        self.flatness = mask;
        Ok(())
    }

    /// Display `pattern` composed on top of the stored flatness correction.
    pub fn display_pattern(&mut self, pattern: &PhaseMask) -> Result<()> {
        let composed = self.flatness.add(pattern)?;
        self.set_displayed(composed)
    }

    /// The mask the light actually experiences.
    pub fn effective_mask(&self) -> PhaseMask {
        self.displayed.add(&self.aberration).expect("geometries match by construction")
    }

    /// Focal field for the current effective mask, cached until a mask changes.
    pub fn field(&mut self) -> Result<Arc<ComplexField>> {
        if self.field.is_none() {
            let field = propagate_to_focus(&self.effective_mask(), &self.train, self.pad)?;
            self.field = Some(Arc::new(field));
        }
        Ok(self.field.clone().expect("just populated"))
    }

    /// Move the ion to a commanded focal-plane position.
    pub fn set_ion_position(&mut self, y: f64, z: f64) {
        self.ion.position = (y, z);
    }

    /// First-order focal spot of the configured steering grating.
    pub fn grating_spot(&self) -> (f64, f64) {
        self.target_grating
            .focal_spot(self.train.wavelength, self.train.focal_length)
    }

    /// Move the ion using electrode voltages via the position calibration.
    pub fn steer_ion(&mut self, volts: (f64, f64)) -> Result<()> {
        let (y, z) = voltage_to_position(&self.position_cal, volts)?;
        self.ion.position = (y, z);
        Ok(())
    }

    /// Thermal offsets (dy, dz, weight) for the 9x9 Gauss-Hermite average
    /// over the ion's position distribution. Weights sum to one.
    pub fn thermal_offsets(&self) -> Vec<(f64, f64, f64)> {
        let (nodes, weights) = gauss_hermite_9();
        let sig_y = thermal_spread(&self.trap, &self.ion, self.trap.omega_y);
        let sig_z = thermal_spread(&self.trap, &self.ion, self.trap.omega_z);
        let mut out = Vec::with_capacity(nodes.len() * nodes.len());
        for (zi, wz) in nodes.iter().zip(weights.iter()) {
            for (yi, wy) in nodes.iter().zip(weights.iter()) {
                out.push((
                    std::f64::consts::SQRT_2 * sig_y * yi,
                    std::f64::consts::SQRT_2 * sig_z * zi,
                    wy * wz,
                ));
            }
        }
        out
    }

    /// Per-axis thermal quadrature: `(y_axis, z_axis)` where each entry is
    /// an `(offset_m, weight)` pair and each axis' weights sum to one. The
    /// tensor product of the two axes reproduces `thermal_offsets`.
    pub fn thermal_axes(&self) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
        let (nodes, weights) = gauss_hermite_9();
        let sig_y = thermal_spread(&self.trap, &self.ion, self.trap.omega_y);
        let sig_z = thermal_spread(&self.trap, &self.ion, self.trap.omega_z);
        let axis = |sig: f64| -> Vec<(f64, f64)> {
            nodes
                .iter()
                .zip(weights.iter())
                .map(|(&n, &w)| (std::f64::consts::SQRT_2 * sig * n, w))
                .collect()
        };
        (axis(sig_y), axis(sig_z))
    }

    /// Focal field contributed by the pupil pixels in `rows x cols` when
    /// `display` is on the modulator, sampled on the separable target grid
    /// (`zs.len() x ys.len()`). The hidden aberration is applied internally.
    ///
    /// Uses the same direct Fourier sum as the full-grid propagator, so
    /// summing the zone fields over any partition of the pupil reproduces
    /// the full focal field exactly (the sum is linear in the pixels).
    pub fn zone_field_samples(
        &self,
        display: &PhaseMask,
        rows: Range<usize>,
        cols: Range<usize>,
        ys: &[f64],
        zs: &[f64],
    ) -> Result<Array2<Complex64>> {
        display.geometry().ensure_matches(&self.geometry)?;
        self.train.validate()?;
        let g = self.geometry;
        let lf = self.train.wavelength * self.train.focal_length;
        let scale = Complex64::new(g.pitch_m * g.pitch_m, 0.0) / Complex64::new(0.0, lf);
        let a2 = self.train.aperture_radius * self.train.aperture_radius;
        let w2 = self.train.input_beam_waist * self.train.input_beam_waist;

        // Partial sums over the zone's columns for every target y.
        let mut partial = Array2::<Complex64>::zeros((ys.len(), rows.len()));
        for (iy, &u) in ys.iter().enumerate() {
            let col_ph: Vec<Complex64> = cols
                .clone()
                .map(|c| Complex64::from_polar(1.0, -TAU * u * g.y_of_col(c) / lf))
                .collect();
            for (ir, r) in rows.clone().enumerate() {
                let z = g.z_of_row(r);
                let mut acc = Complex64::ZERO;
                for (ic, c) in cols.clone().enumerate() {
                    let y = g.y_of_col(c);
                    let r2 = y * y + z * z;
                    if r2 > a2 {
                        continue;
                    }
                    let phase = display.phase(r, c) + self.aberration.phase(r, c);
                    acc += Complex64::from_polar((-r2 / w2).exp(), phase) * col_ph[ic];
                }
                partial[(iy, ir)] = acc;
            }
        }
        let mut out = Array2::<Complex64>::zeros((zs.len(), ys.len()));
        for (iz, &v) in zs.iter().enumerate() {
            let row_ph: Vec<Complex64> = rows
                .clone()
                .map(|r| Complex64::from_polar(1.0, -TAU * v * g.z_of_row(r) / lf))
                .collect();
            for iy in 0..ys.len() {
                let mut acc = Complex64::ZERO;
                for ir in 0..rows.len() {
                    acc += partial[(iy, ir)] * row_ph[ir];
                }
                out[(iz, iy)] = scale * acc;
            }
        }
        Ok(out)
    }

    /// Thermally averaged focal amplitude |E| at the ion.
    pub fn mean_amplitude(&mut self) -> Result<f64> {
        let field = self.field()?;
        Ok(self.mean_amplitude_of(&field))
    }

    /// Thermally averaged |E| of an externally supplied field at the current
    /// ion position (used by correction loops that synthesize fields).
    pub fn mean_amplitude_of(&self, field: &ComplexField) -> f64 {
        let (y0, z0) = self.ion.position;
        self.thermal_offsets()
            .iter()
            .map(|&(dy, dz, w)| w * field.amplitude_at(y0 + dy, z0 + dz))
            .sum()
    }

    /// Set `rabi_per_amplitude` so the grid peak of the current effective
    /// field corresponds to `omega_peak` (rad/s) at `power_scale = 1`.
    pub fn calibrate_peak_rabi(&mut self, omega_peak: f64) -> Result<()> {
        let field = self.field()?;
        let (r, c) = field.peak_index();
        let peak = field.samples()[(r, c)].norm();
        if peak <= 0.0 {
            return Err(Error::ScenarioValue {
                field: "rabi_per_amplitude".into(),
                reason: "cannot calibrate against an all-dark focal field".into(),
            });
        }
        self.rabi_per_amplitude = omega_peak / peak;
        Ok(())
    }

    /// Tweezer Rabi frequency at the ion (rad/s) for the current field.
    pub fn omega_at_ion(&mut self) -> Result<f64> {
        let amp = self.mean_amplitude()?;
        Ok(self.rabi_per_amplitude * self.power_scale * amp)
    }

    /// Scattering rate (photons/s) for a given tweezer Rabi frequency,
    /// dispatching on the configured fluorescence model.
    pub fn rate_from_omega(&self, omega_tw: f64) -> Result<f64> {
        let atoms = FourLevelParams {
            omega_tw,
            ..self.atoms
        };
        match self.model {
            FluorescenceModel::FourLevelAnalytic => scattering_rate_4level_analytic(&atoms),
            FluorescenceModel::TenLevel => {
                let params = TenLevelParams::from_rates(atoms, self.zeeman);
                fluorescence_10level(&params)
            }
        }
    }

    /// Expected detector counts (no shot noise) for the current state.
    pub fn expected_counts(&mut self) -> Result<f64> {
        let omega = self.omega_at_ion()?;
        let rate = self.rate_from_omega(omega)?;
        Ok(self.mean_counts_from_rate(rate))
    }

    /// Mean detector counts for a scattering rate, including dark counts.
    pub fn mean_counts_from_rate(&self, rate: f64) -> f64 {
        (rate * self.camera.collection_efficiency + self.camera.dark_rate) * self.camera.exposure
    }

    /// Draw one Poisson photon count for a scattering rate (or return the
    /// mean when shot noise is disabled).
    pub fn counts_from_rate(&self, rate: f64, seed: u64) -> f64 {
        let mean = self.mean_counts_from_rate(rate);
        if !self.shot_noise {
            return mean.max(0.0);
        }
        if mean <= 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let poisson = Poisson::new(mean).expect("positive finite mean");
        poisson.sample(&mut rng)
    }

    /// One full fluorescence measurement: thermally averaged amplitude,
    /// rate model, Poisson counts. `indices` namespaces the derived seed
    /// so repeated and scanned measurements stay independent.
    pub fn measure_fluorescence(&mut self, domain: &str, indices: &[u64]) -> Result<f64> {
        let omega = self.omega_at_ion()?;
        let rate = self.rate_from_omega(omega)?;
        let seed = derive_seed(self.seed, domain, indices);
        Ok(self.counts_from_rate(rate, seed))
    }
}
