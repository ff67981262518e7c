//! Zernike polynomial basis on the unit disk: Noll indexing with unit-RMS
//! normalization, least-squares decomposition of phase patterns, and
//! order-filtered reconstruction.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use crate::constants::TAU;
use crate::error::{Error, Result};
use crate::optics::geometry::{MaskGeometry, PhaseMask};

/// Maps a Noll index `j ≥ 1` to (radial order n, signed azimuthal m).
/// Positive m is a cosine term, negative a sine term (even/odd j).
pub fn noll_to_nm(j: usize) -> Result<(u32, i32)> {
    if j == 0 {
        return Err(Error::InvalidZernikeIndex { j });
    }
    let n = ((-1.0 + (8.0 * (j as f64 - 1.0) + 1.0).sqrt()) / 2.0).floor() as u32;
    let p = j - (n as usize * (n as usize + 1)) / 2; // 1-based within the order
    let k = n % 2;
    let m_abs = 2 * ((p as u32 + k) / 2) - k;
    let m = if m_abs == 0 {
        0
    } else if j % 2 == 0 {
        m_abs as i32
    } else {
        -(m_abs as i32)
    };
    Ok((n, m))
}

/// Number of Noll terms with radial order ≤ `order`.
pub fn terms_through_order(order: u32) -> usize {
    ((order as usize + 1) * (order as usize + 2)) / 2
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Radial polynomial R_n^{|m|}(ρ).
fn radial(n: u32, m_abs: u32, rho: f64) -> f64 {
    let mut sum = 0.0;
    for k in 0..=((n - m_abs) / 2) {
        let num = if k % 2 == 0 { 1.0 } else { -1.0 } * factorial(n - k);
        let den =
            factorial(k) * factorial((n + m_abs) / 2 - k) * factorial((n - m_abs) / 2 - k);
        sum += num / den * rho.powi((n - 2 * k) as i32);
    }
    sum
}

/// Evaluates the Noll-indexed polynomial Z_j at polar disk coordinates.
/// Normalization is unit-RMS over the disk: ⟨Z_j, Z_k⟩ = δ_jk with the
/// area-normalized inner product.
pub fn zernike_eval(j: usize, rho: f64, theta: f64) -> Result<f64> {
    let (n, m) = noll_to_nm(j)?;
    let m_abs = m.unsigned_abs();
    let norm = if m == 0 {
        ((n + 1) as f64).sqrt()
    } else {
        (2.0 * (n + 1) as f64).sqrt()
    };
    let angular = if m > 0 {
        (m_abs as f64 * theta).cos()
    } else if m < 0 {
        (m_abs as f64 * theta).sin()
    } else {
        1.0
    };
    Ok(norm * radial(n, m_abs, rho) * angular)
}

/// One fitted or specified basis term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZernikeTerm {
    pub j: usize,
    pub n: u32,
    pub m: i32,
    /// Coefficient (rad). With unit-RMS basis functions, the coefficient
    /// is the RMS wavefront contribution of the term.
    pub coeff: f64,
}

/// An ordered set of Zernike terms.
#[derive(Debug, Clone, Default)]
pub struct ZernikeCoefficients {
    terms: Vec<ZernikeTerm>,
}

impl ZernikeCoefficients {
    /// Builds from (index, coefficient) pairs, deriving (n, m).
    pub fn from_pairs(pairs: &[(usize, f64)]) -> Result<ZernikeCoefficients> {
        let mut terms = Vec::with_capacity(pairs.len());
        for &(j, coeff) in pairs {
            let (n, m) = noll_to_nm(j)?;
            terms.push(ZernikeTerm { j, n, m, coeff });
        }
        Ok(ZernikeCoefficients { terms })
    }

    pub fn terms(&self) -> &[ZernikeTerm] {
        &self.terms
    }

    pub fn coeff(&self, j: usize) -> f64 {
        self.terms
            .iter()
            .find(|t| t.j == j)
            .map(|t| t.coeff)
            .unwrap_or(0.0)
    }

    /// Σ c_j Z_j(ρ, θ).
    pub fn eval(&self, rho: f64, theta: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff * zernike_eval(t.j, rho, theta).expect("validated index"))
            .sum()
    }

    /// Wavefront variance over the disk excluding piston: Σ_{j≥2} c_j²
    /// (rad²) — exact by orthonormality.
    pub fn variance_excluding_piston(&self) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.j >= 2)
            .map(|t| t.coeff * t.coeff)
            .sum()
    }

    /// RMS wavefront excluding piston (rad).
    pub fn rms_excluding_piston(&self) -> f64 {
        self.variance_excluding_piston().sqrt()
    }

    /// Returns a copy rescaled so the piston-free RMS equals `target_rms`.
    pub fn scaled_to_rms(&self, target_rms: f64) -> ZernikeCoefficients {
        let rms = self.rms_excluding_piston();
        let scale = if rms > 0.0 { target_rms / rms } else { 0.0 };
        ZernikeCoefficients {
            terms: self
                .terms
                .iter()
                .map(|t| ZernikeTerm {
                    coeff: t.coeff * scale,
                    ..*t
                })
                .collect(),
        }
    }
}

/// Outcome of a least-squares decomposition.
#[derive(Debug, Clone)]
pub struct ZernikeFitOutcome {
    pub coeffs: ZernikeCoefficients,
    /// RMS of the fit residual over the samples (rad).
    pub residual_rms: f64,
}

/// Least-squares decomposition of `(ρ, θ, value)` samples onto all Noll
/// terms with radial order ≤ `max_order`. Values must already be
/// unwrapped; piston (j = 1) is included in the basis and reported like
/// any other term so callers can exclude it from summaries.
pub fn zernike_fit(samples: &[(f64, f64, f64)], max_order: u32) -> Result<ZernikeFitOutcome> {
    let cols = terms_through_order(max_order);
    if samples.len() < cols {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            need: cols,
        });
    }
    let mut design = DMatrix::zeros(samples.len(), cols);
    for (i, &(rho, theta, _)) in samples.iter().enumerate() {
        for j in 1..=cols {
            design[(i, j - 1)] = zernike_eval(j, rho, theta)?;
        }
    }
    let rhs = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.2));
    let svd = design.clone().svd(true, true);
    let sv_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = 1e-10 * sv_max.max(1e-300);
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    if rank < cols {
        return Err(Error::RankDeficient { rank, cols });
    }
    let sol = svd
        .solve(&rhs, eps)
        .map_err(|e| Error::SteadyStateSolve { reason: e.into() })?;
    let resid = &design * &sol - &rhs;
    let residual_rms = (resid.iter().map(|r| r * r).sum::<f64>() / samples.len() as f64).sqrt();

    let pairs: Vec<(usize, f64)> = (1..=cols).map(|j| (j, sol[j - 1])).collect();
    Ok(ZernikeFitOutcome {
        coeffs: ZernikeCoefficients::from_pairs(&pairs)?,
        residual_rms,
    })
}

/// Unwraps a grid of phases (rad, any branch) over the `valid` region by
/// breadth-first flood from the region's most central cell, adding the
/// multiple of 2π that minimizes each step against the already-unwrapped
/// neighbor. Invalid cells are passed through unchanged.
pub fn unwrap_grid(phases: &Array2<f64>, valid: &Array2<bool>) -> Array2<f64> {
    let (rows, cols) = phases.dim();
    assert_eq!(phases.dim(), valid.dim(), "mask shape mismatch");
    let mut out = phases.clone();
    let mut seen = Array2::from_elem((rows, cols), false);

    // Seed: valid cell closest to the grid center.
    let mut seed = None;
    let mut best = f64::INFINITY;
    for ((r, c), &v) in valid.indexed_iter() {
        if v {
            let dr = r as f64 - rows as f64 / 2.0;
            let dc = c as f64 - cols as f64 / 2.0;
            let d = dr * dr + dc * dc;
            if d < best {
                best = d;
                seed = Some((r, c));
            }
        }
    }
    let Some(seed) = seed else { return out };

    let mut queue = VecDeque::new();
    queue.push_back(seed);
    seen[seed] = true;
    while let Some((r, c)) = queue.pop_front() {
        let here = out[(r, c)];
        let mut neighbors = Vec::with_capacity(4);
        if r > 0 {
            neighbors.push((r - 1, c));
        }
        if r + 1 < rows {
            neighbors.push((r + 1, c));
        }
        if c > 0 {
            neighbors.push((r, c - 1));
        }
        if c + 1 < cols {
            neighbors.push((r, c + 1));
        }
        for (nr, nc) in neighbors {
            if seen[(nr, nc)] || !valid[(nr, nc)] {
                continue;
            }
            let raw = out[(nr, nc)];
            out[(nr, nc)] = raw - TAU * ((raw - here) / TAU).round();
            seen[(nr, nc)] = true;
            queue.push_back((nr, nc));
        }
    }
    out
}

/// Decomposes a phase mask over its inscribed disk: pixel phases are
/// unwrapped first, then fit through `max_order`.
pub fn fit_mask_zernike(mask: &PhaseMask, max_order: u32) -> Result<ZernikeFitOutcome> {
    let g = mask.geometry();
    let radius = g.inscribed_radius_m();
    let valid = Array2::from_shape_fn((g.height_px, g.width_px), |(r, c)| {
        let y = g.y_of_col(c);
        let z = g.z_of_row(r);
        (y * y + z * z).sqrt() <= radius
    });
    let unwrapped = unwrap_grid(mask.phases(), &valid);
    let mut samples = Vec::new();
    for ((r, c), &ok) in valid.indexed_iter() {
        if ok {
            let y = g.y_of_col(c);
            let z = g.z_of_row(r);
            let rho = (y * y + z * z).sqrt() / radius;
            samples.push((rho, z.atan2(y), unwrapped[(r, c)]));
        }
    }
    zernike_fit(&samples, max_order)
}

/// Partial reconstruction over the selected radial orders, rendered as a
/// phase mask on the inscribed disk (zero outside).
pub fn order_reconstruct(
    coeffs: &ZernikeCoefficients,
    orders: &[u32],
    geometry: MaskGeometry,
) -> PhaseMask {
    let radius = geometry.inscribed_radius_m();
    PhaseMask::from_fn(geometry, |r, c| {
        let y = geometry.y_of_col(c);
        let z = geometry.z_of_row(r);
        let rho = (y * y + z * z).sqrt() / radius;
        if rho > 1.0 {
            return 0.0;
        }
        let theta = z.atan2(y);
        coeffs
            .terms()
            .iter()
            .filter(|t| orders.contains(&t.n))
            .map(|t| t.coeff * zernike_eval(t.j, rho, theta).expect("validated index"))
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Gauss–Legendre nodes/weights on [0, 1] by Newton iteration on the
    /// shifted Legendre recurrence — exact disk quadrature for the
    /// orthonormality checks.
    fn gauss_legendre_unit(k: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            // Initial guess on [-1, 1].
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
            for _ in 0..100 {
                // Legendre P_k and derivative by recurrence.
                let (mut p0, mut p1) = (1.0f64, x);
                for n in 2..=k {
                    let p2 = ((2 * n - 1) as f64 * x * p1 - (n - 1) as f64 * p0) / n as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (mut p0, mut p1) = (1.0f64, x);
            for n in 2..=k {
                let p2 = ((2 * n - 1) as f64 * x * p1 - (n - 1) as f64 * p0) / n as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            out.push(((x + 1.0) / 2.0, w / 2.0));
        }
        out
    }

    /// Area-normalized disk inner product by exact quadrature: s = ρ²
    /// Gauss–Legendre × uniform azimuthal samples.
    fn disk_inner(fj: usize, fk: usize) -> f64 {
        let radial = gauss_legendre_unit(16);
        let m = 64usize;
        let mut acc = 0.0;
        for &(s, ws) in &radial {
            let rho = s.sqrt();
            for t in 0..m {
                let theta = TAU * t as f64 / m as f64;
                acc += ws / m as f64
                    * zernike_eval(fj, rho, theta).unwrap()
                    * zernike_eval(fk, rho, theta).unwrap();
            }
        }
        acc
    }

    #[test]
    fn noll_indices_match_the_standard_table() {
        let expect = [
            (1, (0, 0)),
            (2, (1, 1)),
            (3, (1, -1)),
            (4, (2, 0)),
            (5, (2, -2)),
            (6, (2, 2)),
            (7, (3, -1)),
            (8, (3, 1)),
            (9, (3, -3)),
            (10, (3, 3)),
            (11, (4, 0)),
            (12, (4, 2)),
            (13, (4, -2)),
            (14, (4, 4)),
            (15, (4, -4)),
        ];
        for (j, nm) in expect {
            let (n, m) = noll_to_nm(j).unwrap();
            assert_eq!((n as i32, m), (nm.0, nm.1), "j = {j}");
        }
        assert!(matches!(
            noll_to_nm(0),
            Err(Error::InvalidZernikeIndex { j: 0 })
        ));
    }

    #[test]
    fn closed_forms_hold_at_reference_points() {
        // Piston.
        assert_relative_eq!(zernike_eval(1, 0.37, 1.1).unwrap(), 1.0);
        // Defocus √3(2ρ²−1) at ρ = 0, 1/√2, 1.
        assert_relative_eq!(zernike_eval(4, 0.0, 0.0).unwrap(), -(3f64.sqrt()));
        assert!(zernike_eval(4, 1.0 / 2f64.sqrt(), 0.5).unwrap().abs() < 1e-12);
        assert_relative_eq!(zernike_eval(4, 1.0, 0.0).unwrap(), 3f64.sqrt());
        // Tilt 2ρcosθ.
        assert_relative_eq!(zernike_eval(2, 0.5, 0.0).unwrap(), 1.0);
        // Primary spherical √5(6ρ⁴−6ρ²+1) at ρ = 0.
        assert_relative_eq!(zernike_eval(11, 0.0, 0.0).unwrap(), 5f64.sqrt());
    }

    #[test]
    fn basis_is_orthonormal_through_j21() {
        for j in 1..=21 {
            for k in j..=21 {
                let g = disk_inner(j, k);
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!(
                    (g - expect).abs() < 1e-10,
                    "⟨Z{j}, Z{k}⟩ = {g}"
                );
            }
        }
    }

    fn disk_samples(coeffs: &ZernikeCoefficients, n: usize) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for i in 0..n {
            for k in 0..n {
                let y = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
                let z = -1.0 + 2.0 * k as f64 / (n - 1) as f64;
                let rho = (y * y + z * z).sqrt();
                if rho <= 1.0 {
                    let theta = z.atan2(y);
                    out.push((rho, theta, coeffs.eval(rho, theta)));
                }
            }
        }
        out
    }

    #[test]
    fn fit_recovers_synthetic_coefficients() {
        let truth =
            ZernikeCoefficients::from_pairs(&[(2, 0.3), (5, 1.2), (7, -0.4), (9, 0.25)]).unwrap();
        let samples = disk_samples(&truth, 41);
        let fit = zernike_fit(&samples, 3).unwrap();
        for j in 1..=10 {
            assert!(
                (fit.coeffs.coeff(j) - truth.coeff(j)).abs() < 1e-9,
                "j = {j}: {} vs {}",
                fit.coeffs.coeff(j),
                truth.coeff(j)
            );
        }
        assert!(fit.residual_rms < 1e-9);
    }

    #[test]
    fn fit_is_linear_in_the_pattern() {
        let a = ZernikeCoefficients::from_pairs(&[(4, 0.8), (6, -0.2)]).unwrap();
        let b = ZernikeCoefficients::from_pairs(&[(3, 0.5), (10, 0.9)]).unwrap();
        let sa = disk_samples(&a, 31);
        let sb = disk_samples(&b, 31);
        let sum: Vec<(f64, f64, f64)> = sa
            .iter()
            .zip(sb.iter())
            .map(|(&(r, t, va), &(_, _, vb))| (r, t, va + vb))
            .collect();
        let fa = zernike_fit(&sa, 3).unwrap();
        let fb = zernike_fit(&sb, 3).unwrap();
        let fsum = zernike_fit(&sum, 3).unwrap();
        for j in 1..=10 {
            assert!(
                (fsum.coeffs.coeff(j) - fa.coeffs.coeff(j) - fb.coeffs.coeff(j)).abs() < 1e-10
            );
        }
    }

    #[test]
    fn undersampled_fit_is_rank_deficient() {
        // 12 distinct points cannot support the 21-column order-5 basis —
        // reported as too few samples before the solve is attempted.
        let coeffs = ZernikeCoefficients::from_pairs(&[(4, 1.0)]).unwrap();
        let samples: Vec<(f64, f64, f64)> = (0..12)
            .map(|i| {
                let rho = 0.1 + 0.07 * i as f64;
                (rho, 0.4 * i as f64, coeffs.eval(rho, 0.4 * i as f64))
            })
            .collect();
        assert!(matches!(
            zernike_fit(&samples, 5),
            Err(Error::TooFewSamples { .. })
        ));
        // Degenerate geometry: plenty of samples but all on one radius —
        // radial orders become indistinguishable.
        let ring: Vec<(f64, f64, f64)> = (0..200)
            .map(|i| {
                let theta = TAU * i as f64 / 200.0;
                (0.7, theta, coeffs.eval(0.7, theta))
            })
            .collect();
        assert!(matches!(
            zernike_fit(&ring, 4),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn unwrap_restores_a_smooth_ramp() {
        let rows = 24;
        let cols = 30;
        let truth = Array2::from_shape_fn((rows, cols), |(r, c)| {
            0.9 * r as f64 + 0.35 * c as f64 - 8.0
        });
        let wrapped = truth.mapv(|v| v.rem_euclid(TAU));
        let valid = Array2::from_elem((rows, cols), true);
        let unwrapped = unwrap_grid(&wrapped, &valid);
        // Agreement up to one global 2π multiple.
        let offset = unwrapped[(0, 0)] - truth[(0, 0)];
        assert_relative_eq!(offset / TAU, (offset / TAU).round(), epsilon = 1e-9);
        for (u, t) in unwrapped.iter().zip(truth.iter()) {
            assert_relative_eq!(u - t, offset, epsilon = 1e-9);
        }
    }

    #[test]
    fn mask_round_trip_recovers_injected_pattern() {
        let truth = ZernikeCoefficients::from_pairs(&[(2, 0.4), (5, 0.9), (8, 0.3)]).unwrap();
        let mask = crate::optics::patterns::inject_aberration(&truth, MaskGeometry::desk_64());
        let fit = fit_mask_zernike(&mask, 3).unwrap();
        for j in 2..=10 {
            assert!(
                (fit.coeffs.coeff(j) - truth.coeff(j)).abs() < 1e-9,
                "j = {j}"
            );
        }
        assert!(fit.residual_rms < 1e-9);
    }

    #[test]
    fn order_filter_removes_excluded_orders() {
        let mix = ZernikeCoefficients::from_pairs(&[(4, 0.31), (9, 0.27)]).unwrap();
        let g = MaskGeometry::desk_64();
        let only2 = order_reconstruct(&mix, &[2], g);
        let refit = fit_mask_zernike(&only2, 3).unwrap();
        assert!((refit.coeffs.coeff(4) - 0.31).abs() < 1e-9);
        assert!(refit.coeffs.coeff(9).abs() < 1e-9);
        // The complementary selection keeps only the trefoil term.
        let only3 = order_reconstruct(&mix, &[3], g);
        let refit3 = fit_mask_zernike(&only3, 3).unwrap();
        assert!((refit3.coeffs.coeff(9) - 0.27).abs() < 1e-9);
        assert!(refit3.coeffs.coeff(4).abs() < 1e-9);
        for j in 2..=10 {
            if j != 9 {
                assert!(refit3.coeffs.coeff(j).abs() < 1e-9, "j = {j}");
            }
        }
    }

    #[test]
    fn coefficient_variance_matches_disk_variance() {
        let coeffs = ZernikeCoefficients::from_pairs(&[(2, 0.5), (4, -0.3), (11, 0.2)]).unwrap();
        // Quadrature variance of the piston-free pattern.
        let radial = gauss_legendre_unit(16);
        let m = 64usize;
        let mut mean = 0.0;
        let mut mean_sq = 0.0;
        for &(s, ws) in &radial {
            let rho = s.sqrt();
            for t in 0..m {
                let theta = TAU * t as f64 / m as f64;
                let v = coeffs.eval(rho, theta);
                mean += ws / m as f64 * v;
                mean_sq += ws / m as f64 * v * v;
            }
        }
        let var = mean_sq - mean * mean;
        assert_relative_eq!(
            var,
            coeffs.variance_excluding_piston(),
            max_relative = 1e-10
        );
        assert_relative_eq!(
            coeffs.scaled_to_rms(1.5).rms_excluding_piston(),
            1.5,
            max_relative = 1e-12
        );
    }
}
