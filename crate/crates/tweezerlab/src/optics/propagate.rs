//! Scalar Fourier propagation from the pupil-plane mask to the focal plane.
//!
//! The focal field is the centered discrete Fourier transform of
//! `e^{iφ} · exp(−r²/w_in²) · [r ≤ a]`, scaled by `pitch²/(iλf)` so that
//! power `Σ|E|²·dA` is conserved exactly (discrete Parseval). Zero padding
//! sets the focal sampling `dx = λf/(N·pitch)`; the pad factor is raised
//! automatically until `dx` resolves the diffraction-limited waist with at
//! least six samples.

use std::cell::RefCell;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::geometry::{MaskGeometry, PhaseMask};
use crate::constants::{LAMBDA_935, TAU};
use crate::error::{Error, Result};

/// The modeled optical train between the modulator pupil and the ion.
#[derive(Debug, Clone, Copy)]
pub struct OpticalTrain {
    /// Tweezer wavelength (m).
    pub wavelength: f64,
    /// Effective focal length of the doublet (m).
    pub focal_length: f64,
    /// Hard aperture radius in the pupil plane (m).
    pub aperture_radius: f64,
    /// 1/e² intensity radius of the input beam in the pupil plane (m).
    pub input_beam_waist: f64,
    /// Numerical aperture implied by aperture and focal length.
    pub numerical_aperture: f64,
    /// Fluorescence-imaging magnification (metadata for the camera model).
    pub magnification: f64,
}

impl Default for OpticalTrain {
    fn default() -> Self {
        OpticalTrain {
            wavelength: LAMBDA_935,
            focal_length: 80.7e-3,
            aperture_radius: 25.4e-3,
            input_beam_waist: 12.7e-3,
            numerical_aperture: 0.3,
            magnification: 8.54,
        }
    }
}

impl OpticalTrain {
    /// Checks positive lengths and NA consistency (within 1%) with
    /// `a/√(a² + f²)`.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("wavelength", self.wavelength),
            ("focal_length", self.focal_length),
            ("aperture_radius", self.aperture_radius),
            ("input_beam_waist", self.input_beam_waist),
            ("magnification", self.magnification),
        ] {
            if !(v > 0.0) {
                return Err(Error::ScenarioValue {
                    field: format!("optical_train.{name}"),
                    reason: format!("must be > 0, got {v}"),
                });
            }
        }
        let a = self.aperture_radius;
        let implied = a / (a * a + self.focal_length * self.focal_length).sqrt();
        if (implied - self.numerical_aperture).abs() > 0.01 * implied {
            return Err(Error::ScenarioValue {
                field: "optical_train.numerical_aperture".into(),
                reason: format!(
                    "NA {} inconsistent with aperture/focal length (implies {implied:.4})",
                    self.numerical_aperture
                ),
            });
        }
        Ok(())
    }

    /// Diffraction-limited focal waist `λf/(π·w_in)` of the untruncated
    /// Gaussian input (m); aperture truncation broadens it slightly.
    pub fn diffraction_waist(&self) -> f64 {
        self.wavelength * self.focal_length / (std::f64::consts::PI * self.input_beam_waist)
    }

    /// Half-width of the addressable focal band for a mask of pitch
    /// `pitch_m`: one grating Nyquist displacement, `λf/(2·pitch)`.
    pub fn focal_band(&self, pitch_m: f64) -> f64 {
        self.wavelength * self.focal_length / (2.0 * pitch_m)
    }
}

/// Zero-padding policy for propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadFactor {
    /// Smallest factor ≥ 4 whose focal sampling satisfies the waist/6
    /// guard (raised automatically per axis).
    Auto,
    /// Fixed factor; rejected if the sampling guard is violated.
    Exact(usize),
}

fn pad_factor_for(dim: usize, pitch: f64, train: &OpticalTrain, pad: PadFactor) -> Result<usize> {
    let limit = train.diffraction_waist() / 6.0;
    let dx_at = |factor: usize| {
        train.wavelength * train.focal_length / (factor as f64 * dim as f64 * pitch)
    };
    match pad {
        PadFactor::Auto => {
            for factor in 4..=64 {
                if dx_at(factor) <= limit {
                    return Ok(factor);
                }
            }
            Err(Error::SamplingError {
                dx_m: dx_at(64),
                limit_m: limit,
            })
        }
        PadFactor::Exact(factor) => {
            let factor = factor.max(1);
            let dx = dx_at(factor);
            if dx <= limit {
                Ok(factor)
            } else {
                Err(Error::SamplingError {
                    dx_m: dx,
                    limit_m: limit,
                })
            }
        }
    }
}

/// A sampled complex focal-plane field, centered on the zeroth order.
#[derive(Debug, Clone)]
pub struct ComplexField {
    samples: Array2<Complex64>,
    /// Column spacing along y (m/sample).
    pub dy: f64,
    /// Row spacing along z (m/sample).
    pub dz: f64,
    /// (y, z) coordinates (m) of sample (row 0, col 0).
    pub origin: (f64, f64),
}

impl ComplexField {
    pub fn samples(&self) -> &Array2<Complex64> {
        &self.samples
    }

    /// (rows, cols).
    pub fn shape(&self) -> (usize, usize) {
        self.samples.dim()
    }

    pub fn sample(&self, row: usize, col: usize) -> Complex64 {
        self.samples[(row, col)]
    }

    pub fn y_of_col(&self, col: usize) -> f64 {
        self.origin.0 + col as f64 * self.dy
    }

    pub fn z_of_row(&self, row: usize) -> f64 {
        self.origin.1 + row as f64 * self.dz
    }

    /// |E|² grid.
    pub fn intensity_grid(&self) -> Array2<f64> {
        self.samples.mapv(|e| e.norm_sqr())
    }

    /// Total power Σ|E|²·dy·dz.
    pub fn total_power(&self) -> f64 {
        self.samples.iter().map(|e| e.norm_sqr()).sum::<f64>() * self.dy * self.dz
    }

    /// Indices (row, col) of the intensity maximum.
    pub fn peak_index(&self) -> (usize, usize) {
        let mut best = (0usize, 0usize);
        let mut best_v = f64::NEG_INFINITY;
        for ((r, c), e) in self.samples.indexed_iter() {
            let v = e.norm_sqr();
            if v > best_v {
                best_v = v;
                best = (r, c);
            }
        }
        best
    }

    /// (y, z) position (m) of the intensity maximum.
    pub fn peak_position(&self) -> (f64, f64) {
        let (r, c) = self.peak_index();
        (self.y_of_col(c), self.z_of_row(r))
    }

    /// Field amplitude |E| at an arbitrary focal position by bilinear
    /// interpolation of the complex samples; zero outside the grid.
    pub fn amplitude_at(&self, y: f64, z: f64) -> f64 {
        let fc = (y - self.origin.0) / self.dy;
        let fr = (z - self.origin.1) / self.dz;
        let (rows, cols) = self.shape();
        if fc < 0.0 || fr < 0.0 || fc > (cols - 1) as f64 || fr > (rows - 1) as f64 {
            return 0.0;
        }
        let c0 = (fc.floor() as usize).min(cols - 2);
        let r0 = (fr.floor() as usize).min(rows - 2);
        let tc = fc - c0 as f64;
        let tr = fr - r0 as f64;
        let e = (self.samples[(r0, c0)] * (1.0 - tc) + self.samples[(r0, c0 + 1)] * tc)
            * (1.0 - tr)
            + (self.samples[(r0 + 1, c0)] * (1.0 - tc) + self.samples[(r0 + 1, c0 + 1)] * tc) * tr;
        e.norm()
    }

    /// Intensity window of half-width `half` samples around (row, col),
    /// clamped to the grid, with its y and z coordinate axes.
    pub fn window(
        &self,
        row: usize,
        col: usize,
        half: usize,
    ) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
        let (rows, cols) = self.shape();
        let r0 = row.saturating_sub(half);
        let r1 = (row + half + 1).min(rows);
        let c0 = col.saturating_sub(half);
        let c1 = (col + half + 1).min(cols);
        let win = Array2::from_shape_fn((r1 - r0, c1 - c0), |(r, c)| {
            self.samples[(r0 + r, c0 + c)].norm_sqr()
        });
        let ys = (c0..c1).map(|c| self.y_of_col(c)).collect();
        let zs = (r0..r1).map(|r| self.z_of_row(r)).collect();
        (win, ys, zs)
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// In-place 2D FFT (rows then columns). The inverse includes the 1/N
/// normalization so forward∘inverse is the identity.
pub(crate) fn fft2(a: &mut Array2<Complex64>, inverse: bool) {
    let (rows, cols) = a.dim();
    let row_fft = plan(cols, inverse);
    for mut row in a.rows_mut() {
        row_fft.process(row.as_slice_mut().expect("row-major layout"));
    }
    let col_fft = plan(rows, inverse);
    let mut scratch = vec![Complex64::ZERO; rows];
    for c in 0..cols {
        for r in 0..rows {
            scratch[r] = a[(r, c)];
        }
        col_fft.process(&mut scratch);
        for r in 0..rows {
            a[(r, c)] = scratch[r];
        }
    }
    if inverse {
        let norm = 1.0 / (rows * cols) as f64;
        a.mapv_inplace(|v| v * norm);
    }
}

/// The apertured input field `e^{iφ}·exp(−r²/w_in²)·[r ≤ a]` sampled on
/// the mask grid (no padding).
pub fn input_field(mask: &PhaseMask, train: &OpticalTrain) -> Array2<Complex64> {
    let g = mask.geometry();
    let a2 = train.aperture_radius * train.aperture_radius;
    let w2 = train.input_beam_waist * train.input_beam_waist;
    Array2::from_shape_fn((g.height_px, g.width_px), |(r, c)| {
        let y = g.y_of_col(c);
        let z = g.z_of_row(r);
        let r2 = y * y + z * z;
        if r2 > a2 {
            return Complex64::ZERO;
        }
        Complex64::from_polar((-r2 / w2).exp(), mask.phase(r, c))
    })
}

/// Propagates an arbitrary pupil-plane input grid (already apertured and
/// amplitude-weighted) to the focal plane. Shared by the mask propagator,
/// the checkerboard superposition test, and the spot-design iteration.
pub(crate) fn propagate_input(
    input: &Array2<Complex64>,
    geometry: MaskGeometry,
    train: &OpticalTrain,
    pad: PadFactor,
) -> Result<ComplexField> {
    train.validate()?;
    let factor_y = pad_factor_for(geometry.width_px, geometry.pitch_m, train, pad)?;
    let factor_z = pad_factor_for(geometry.height_px, geometry.pitch_m, train, pad)?;
    let nc = factor_y * geometry.width_px;
    let nr = factor_z * geometry.height_px;
    let off_c = (nc - geometry.width_px) / 2;
    let off_r = (nr - geometry.height_px) / 2;

    let mut grid = Array2::<Complex64>::zeros((nr, nc));
    for ((r, c), &v) in input.indexed_iter() {
        // Pre-phase (−1)^(row+col) evaluated at the padded indices turns
        // the plain FFT into a centered transform.
        let rr = r + off_r;
        let cc = c + off_c;
        let sign = if (rr + cc) % 2 == 0 { 1.0 } else { -1.0 };
        grid[(rr, cc)] = v * sign;
    }
    fft2(&mut grid, false);

    let lf = train.wavelength * train.focal_length;
    let scale = Complex64::new(geometry.pitch_m * geometry.pitch_m, 0.0)
        / Complex64::new(0.0, lf);
    let global = if ((nr + nc) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    for ((r, c), v) in grid.indexed_iter_mut() {
        let sign = if (r + c) % 2 == 0 { global } else { -global };
        *v *= scale * sign;
    }

    let dy = lf / (nc as f64 * geometry.pitch_m);
    let dz = lf / (nr as f64 * geometry.pitch_m);
    Ok(ComplexField {
        samples: grid,
        dy,
        dz,
        origin: (-(nc as f64 / 2.0) * dy, -(nr as f64 / 2.0) * dz),
    })
}

/// Propagates a phase mask through the train to the sampled focal field.
pub fn propagate_to_focus(
    mask: &PhaseMask,
    train: &OpticalTrain,
    pad: PadFactor,
) -> Result<ComplexField> {
    let input = input_field(mask, train);
    propagate_input(&input, mask.geometry(), train, pad)
}

/// Focal field at arbitrary positions by direct discrete Fourier sum over
/// the mask pixels — exact (matches the FFT at its grid points) and cheap
/// for small point sets.
pub fn focal_field_at(
    mask: &PhaseMask,
    train: &OpticalTrain,
    points: &[(f64, f64)],
) -> Result<Vec<Complex64>> {
    train.validate()?;
    let input = input_field(mask, train);
    let g = mask.geometry();
    let lf = train.wavelength * train.focal_length;
    let scale = Complex64::new(g.pitch_m * g.pitch_m, 0.0) / Complex64::new(0.0, lf);
    let mut out = Vec::with_capacity(points.len());
    for &(u, v) in points {
        let col_ph: Vec<Complex64> = (0..g.width_px)
            .map(|c| Complex64::from_polar(1.0, -TAU * u * g.y_of_col(c) / lf))
            .collect();
        let mut acc = Complex64::ZERO;
        for r in 0..g.height_px {
            let mut row_acc = Complex64::ZERO;
            for c in 0..g.width_px {
                let e = input[(r, c)];
                if e != Complex64::ZERO {
                    row_acc += e * col_ph[c];
                }
            }
            acc += row_acc * Complex64::from_polar(1.0, -TAU * v * g.z_of_row(r) / lf);
        }
        out.push(scale * acc);
    }
    Ok(out)
}

/// Direct-sum focal field on a separable (y, z) coordinate grid; returns a
/// `zs.len() × ys.len()` array. Much cheaper than point-by-point sums when
/// the targets form a tensor grid (thermal quadrature, beam maps).
pub fn focal_field_grid(
    mask: &PhaseMask,
    train: &OpticalTrain,
    ys: &[f64],
    zs: &[f64],
) -> Result<Array2<Complex64>> {
    train.validate()?;
    let input = input_field(mask, train);
    let g = mask.geometry();
    let lf = train.wavelength * train.focal_length;
    let scale = Complex64::new(g.pitch_m * g.pitch_m, 0.0) / Complex64::new(0.0, lf);

    // Partial sums over columns for every target y: X[(iy, r)].
    let mut partial = Array2::<Complex64>::zeros((ys.len(), g.height_px));
    for (iy, &u) in ys.iter().enumerate() {
        let col_ph: Vec<Complex64> = (0..g.width_px)
            .map(|c| Complex64::from_polar(1.0, -TAU * u * g.y_of_col(c) / lf))
            .collect();
        for r in 0..g.height_px {
            let mut acc = Complex64::ZERO;
            for c in 0..g.width_px {
                let e = input[(r, c)];
                if e != Complex64::ZERO {
                    acc += e * col_ph[c];
                }
            }
            partial[(iy, r)] = acc;
        }
    }
    let mut out = Array2::<Complex64>::zeros((zs.len(), ys.len()));
    for (iz, &v) in zs.iter().enumerate() {
        let row_ph: Vec<Complex64> = (0..g.height_px)
            .map(|r| Complex64::from_polar(1.0, -TAU * v * g.z_of_row(r) / lf))
            .collect();
        for (iy, _) in ys.iter().enumerate() {
            let mut acc = Complex64::ZERO;
            for r in 0..g.height_px {
                acc += partial[(iy, r)] * row_ph[r];
            }
            out[(iz, iy)] = scale * acc;
        }
    }
    Ok(out)
}
