//! Rotated elliptical 2D Gaussian fit for beam maps and focal intensity
//! windows.

use ndarray::Array2;

use super::lm::{levenberg_marquardt, LmOptions};
use crate::error::{Error, Result};

/// Fitted rotated elliptical Gaussian `b + A·exp(−2(y′²/w1² + z′²/w2²))`,
/// where (y′, z′) are coordinates rotated by `orientation` about `center`.
/// Waists are 1/e² intensity radii with `w1 ≥ w2`.
#[derive(Debug, Clone)]
pub struct GaussianFit2D {
    /// (y, z) center (m).
    pub center: (f64, f64),
    pub w1: f64,
    pub w2: f64,
    /// Angle of the w1 axis from +y, normalized to [0, π).
    pub orientation: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// Set when the fitted waists are equal within their uncertainty, so
    /// the orientation angle carries no information.
    pub orientation_unconstrained: bool,
    /// Final sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
}

fn model(p: &[f64], y: f64, z: f64) -> f64 {
    let (a, y0, z0, w1, w2, th, b) = (p[0], p[1], p[2], p[3], p[4], p[5], p[6]);
    let (s, c) = th.sin_cos();
    let yr = (y - y0) * c + (z - z0) * s;
    let zr = -(y - y0) * s + (z - z0) * c;
    b + a * (-2.0 * (yr * yr / (w1 * w1) + zr * zr / (w2 * w2))).exp()
}

/// Fits a rotated elliptical Gaussian with offset to an intensity (or
/// count) map. `ys` are the column coordinates, `zs` the row coordinates.
///
/// Initialization is by moments of the background-subtracted map;
/// refinement is damped least squares, converged at relative cost change
/// < 1e-10 and failed after 200 iterations.
pub fn fit_gaussian_2d(map: &Array2<f64>, ys: &[f64], zs: &[f64]) -> Result<GaussianFit2D> {
    let (rows, cols) = map.dim();
    if ys.len() != cols || zs.len() != rows {
        return Err(Error::GeometryMismatch {
            a: format!("{cols}x{rows} map"),
            b: format!("{}x{} coordinate axes", ys.len(), zs.len()),
        });
    }
    if rows < 6 || cols < 6 {
        return Err(Error::TooFewSamples {
            got: rows.min(cols),
            need: 6,
        });
    }

    // Background estimate: lower quartile (robust to the peak's extent).
    let mut sorted: Vec<f64> = map.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let offset0 = sorted[sorted.len() / 4];
    let max = sorted[sorted.len() - 1];
    if !(max > offset0) {
        return Err(Error::DegenerateMap {
            max,
            offset: offset0,
        });
    }

    // Moments of the positive part above background.
    let mut m0 = 0.0;
    let mut my = 0.0;
    let mut mz = 0.0;
    for ((r, c), &v) in map.indexed_iter() {
        let w = (v - offset0).max(0.0);
        m0 += w;
        my += w * ys[c];
        mz += w * zs[r];
    }
    let (yc, zc) = (my / m0, mz / m0);
    let mut syy = 0.0;
    let mut szz = 0.0;
    let mut syz = 0.0;
    for ((r, c), &v) in map.indexed_iter() {
        let w = (v - offset0).max(0.0);
        syy += w * (ys[c] - yc) * (ys[c] - yc);
        szz += w * (zs[r] - zc) * (zs[r] - zc);
        syz += w * (ys[c] - yc) * (zs[r] - zc);
    }
    syy /= m0;
    szz /= m0;
    syz /= m0;
    let theta0 = 0.5 * (2.0 * syz).atan2(syy - szz);
    let tr = syy + szz;
    let det = (syy - szz) * (syy - szz) + 4.0 * syz * syz;
    let l1 = 0.5 * (tr + det.sqrt());
    let l2 = 0.5 * (tr - det.sqrt());
    let dy_grid = if cols > 1 {
        ((ys[cols - 1] - ys[0]) / (cols - 1) as f64).abs()
    } else {
        1.0
    };
    // exp(−2r²/w²) has variance w²/4, so w = 2σ.
    let w10 = (2.0 * l1.max(0.0).sqrt()).max(dy_grid);
    let w20 = (2.0 * l2.max(0.0).sqrt()).max(dy_grid);

    let init = [max - offset0, yc, zc, w10, w20, theta0, offset0];
    let out = levenberg_marquardt(
        |p| {
            let mut resid = Vec::with_capacity(rows * cols);
            for ((r, c), &v) in map.indexed_iter() {
                resid.push(model(p, ys[c], zs[r]) - v);
            }
            resid
        },
        &init,
        &LmOptions::default(),
    );
    if !out.converged {
        return Err(Error::NoConvergence {
            iterations: out.iterations,
            last_change: out.last_change,
        });
    }

    let p = &out.params;
    let (mut w1, mut w2) = (p[3].abs(), p[4].abs());
    let mut theta = p[5];
    let mut swapped_cov = (3usize, 4usize);
    if w2 > w1 {
        std::mem::swap(&mut w1, &mut w2);
        theta += std::f64::consts::FRAC_PI_2;
        swapped_cov = (4, 3);
    }
    theta = theta.rem_euclid(std::f64::consts::PI);

    let sigma_w = out.covariance.as_ref().map(|cov| {
        (
            cov[(swapped_cov.0, swapped_cov.0)].abs().sqrt(),
            cov[(swapped_cov.1, swapped_cov.1)].abs().sqrt(),
        )
    });
    let orientation_unconstrained = match sigma_w {
        Some((s1, s2)) => w1 - w2 < 2.0 * (s1 + s2) || w1 - w2 < 0.01 * w1,
        None => w1 - w2 < 0.01 * w1,
    };

    Ok(GaussianFit2D {
        center: (p[1], p[2]),
        w1,
        w2,
        orientation: theta,
        amplitude: p[0],
        offset: p[6],
        orientation_unconstrained,
        cost: out.cost,
        iterations: out.iterations,
    })
}
