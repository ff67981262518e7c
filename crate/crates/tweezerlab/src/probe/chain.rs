//! Equilibrium positions of a linear ion chain in a harmonic axial well.
//!
//! Used to place tweezer spots on specific ions of a multi-ion crystal:
//! the chain sets the target coordinates, the hologram puts light there.

use nalgebra::{DMatrix, DVector};

use crate::constants::{EPSILON_0, E_CHARGE};
use crate::error::{Error, Result};

/// Characteristic length of the Coulomb chain,
/// `l = (e^2 / (4 pi eps0 m omega_z^2))^(1/3)`.
pub fn chain_length_scale(mass: f64, omega_z: f64) -> f64 {
    let coulomb = E_CHARGE * E_CHARGE / (4.0 * std::f64::consts::PI * EPSILON_0);
    (coulomb / (mass * omega_z * omega_z)).powf(1.0 / 3.0)
}

/// Equilibrium z-positions (m) of `n` singly charged ions of mass `mass`
/// in a harmonic well of axial frequency `omega_z` (rad/s), sorted
/// ascending. Solved by Newton iteration on the dimensionless force
/// balance `u_i - sum_{j<i} (u_i-u_j)^-2 + sum_{j>i} (u_j-u_i)^-2 = 0`.
pub fn chain_equilibrium(n: usize, mass: f64, omega_z: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    if !(mass > 0.0) || !(omega_z > 0.0) {
        return Err(Error::ScenarioValue {
            field: "chain_equilibrium".into(),
            reason: "mass and omega_z must be positive".into(),
        });
    }
    let scale = chain_length_scale(mass, omega_z);
    if n == 1 {
        return Ok(vec![0.0]);
    }

    // Evenly spread initial guess; Newton converges in a handful of steps.
    let mut u = DVector::from_fn(n, |i, _| {
        let span = 0.9 * (n as f64 - 1.0).powf(2.0 / 3.0);
        -span + 2.0 * span * i as f64 / (n as f64 - 1.0)
    });

    let max_iter = 200;
    let mut converged = false;
    let mut last_norm = f64::INFINITY;
    for _ in 0..max_iter {
        let mut g = DVector::zeros(n);
        let mut jac = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut gi = u[i];
            let mut jii = 1.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d = u[i] - u[j];
                let inv2 = 1.0 / (d * d);
                let inv3 = inv2 / d.abs();
                gi += if d > 0.0 { -inv2 } else { inv2 };
                jii += 2.0 * inv3;
                jac[(i, j)] = -2.0 * inv3;
            }
            g[i] = gi;
            jac[(i, i)] = jii;
        }
        last_norm = g.norm();
        if last_norm < 1e-13 * n as f64 {
            converged = true;
            break;
        }
        let step = jac
            .lu()
            .solve(&g)
            .ok_or(Error::RankDeficient { rank: 0, cols: n })?;
        // Damp steps that would reorder ions and break the sort invariant.
        let mut alpha = 1.0f64;
        loop {
            let trial = &u - alpha * &step;
            let ordered = (1..n).all(|i| trial[i] > trial[i - 1]);
            if ordered || alpha < 1e-6 {
                u = trial;
                break;
            }
            alpha *= 0.5;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: max_iter,
            last_change: last_norm,
        });
    }
    Ok(u.iter().map(|&ui| ui * scale).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{TAU, YB174_MASS};
    use approx::assert_relative_eq;

    #[test]
    fn length_scale_matches_reference_value() {
        // 174Yb+ at 2 pi x 120 kHz: l = 11.198 um.
        let l = chain_length_scale(YB174_MASS, TAU * 120e3);
        assert_relative_eq!(l, 11.198e-6, max_relative = 1e-3);
    }

    #[test]
    fn two_ions_sit_at_half_cube_root_two() {
        let l = chain_length_scale(YB174_MASS, TAU * 120e3);
        let z = chain_equilibrium(2, YB174_MASS, TAU * 120e3).unwrap();
        // Known closed form: u = ±(1/4)^(1/3) = ±0.62996.
        assert_relative_eq!(z[1] / l, 0.25f64.powf(1.0 / 3.0), epsilon = 1e-10);
        assert_relative_eq!(z[0], -z[1], epsilon = 1e-20);
    }

    #[test]
    fn three_ions_match_closed_form() {
        let l = chain_length_scale(YB174_MASS, TAU * 120e3);
        let z = chain_equilibrium(3, YB174_MASS, TAU * 120e3).unwrap();
        // Outer ions at ±(5/4)^(1/3), middle at zero.
        assert_relative_eq!(z[2] / l, 1.25f64.powf(1.0 / 3.0), epsilon = 1e-10);
        assert!(z[1].abs() < 1e-18);
    }

    #[test]
    fn five_ion_chain_matches_tabulated_positions() {
        let omega = TAU * 120e3;
        let l = chain_length_scale(YB174_MASS, omega);
        let z = chain_equilibrium(5, YB174_MASS, omega).unwrap();
        assert_eq!(z.len(), 5);
        // Standard dimensionless equilibria for n = 5.
        let expected = [-1.7429, -0.8221, 0.0, 0.8221, 1.7429];
        for (zi, ei) in z.iter().zip(expected.iter()) {
            assert_relative_eq!(zi / l, ei, max_relative = 1e-3);
        }
        // Nearest-neighbour separation is ~9.2 um at these parameters.
        assert_relative_eq!(z[3] - z[2], 9.206e-6, max_relative = 2e-3);
        // Force balance holds in physical units for each ion.
        let coulomb = E_CHARGE * E_CHARGE / (4.0 * std::f64::consts::PI * EPSILON_0);
        for i in 0..5 {
            let mut f = -YB174_MASS * omega * omega * z[i];
            for j in 0..5 {
                if j != i {
                    let d = z[i] - z[j];
                    f += coulomb * d.signum() / (d * d);
                }
            }
            assert!(f.abs() < 1e-22, "residual force on ion {i}: {f:e}");
        }
    }

    #[test]
    fn chain_is_sorted_and_symmetric() {
        let z = chain_equilibrium(7, YB174_MASS, TAU * 120e3).unwrap();
        for i in 1..z.len() {
            assert!(z[i] > z[i - 1]);
        }
        for i in 0..z.len() {
            assert_relative_eq!(z[i], -z[z.len() - 1 - i], epsilon = 1e-16, max_relative = 1e-10);
        }
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(chain_equilibrium(3, 0.0, TAU * 120e3).is_err());
        assert!(chain_equilibrium(3, YB174_MASS, -1.0).is_err());
        assert_eq!(chain_equilibrium(0, YB174_MASS, TAU * 120e3).unwrap().len(), 0);
        assert_eq!(chain_equilibrium(1, YB174_MASS, TAU * 120e3).unwrap(), vec![0.0]);
    }
}
