//! Lindblad superoperator construction and dense steady-state solving.
//!
//! Density operators are vectorized row-major: `vec(ρ)[i*d + j] = ρ[i, j]`.
//! With that convention the master equation
//! `ρ̇ = −i[H, ρ] + Σ c ρ c† − ½{c†c, ρ}` becomes `vec(ρ̇) = L · vec(ρ)` with
//!
//! `L = −i (H ⊗ I − I ⊗ Hᵀ) + Σ [ c ⊗ c* − ½ (c†c) ⊗ I − ½ I ⊗ (c†c)ᵀ ]`,
//!
//! where `A ⊗ B` acts as `(A ⊗ B)·vec(ρ) = vec(A ρ Bᵀ)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

type CMat = DMatrix<Complex64>;

/// A Hermitian, unit-trace, positive-semidefinite state of the ion's
/// internal levels, as produced by [`steady_state`].
#[derive(Debug, Clone)]
pub struct DensityOperator {
    matrix: CMat,
}

impl DensityOperator {
    /// Level count d.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Full matrix access.
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Real part of a diagonal element (a population).
    pub fn population(&self, level: usize) -> f64 {
        self.matrix[(level, level)].re
    }

    /// Sum of populations over a contiguous level range.
    pub fn population_sum(&self, levels: std::ops::Range<usize>) -> f64 {
        levels.map(|l| self.population(l)).sum()
    }

    /// Validates Hermiticity (1e-10), unit trace (1e-10) and positivity
    /// (eigenvalues ≥ −1e-9).
    pub fn check_physical(&self) -> Result<()> {
        let d = self.dim();
        let m = &self.matrix;
        let mut herm_err: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                herm_err = herm_err.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        if herm_err > 1e-10 {
            return Err(Error::NonPhysicalState {
                detail: format!("Hermiticity violation {herm_err:.3e}"),
            });
        }
        let trace: Complex64 = (0..d).map(|i| m[(i, i)]).sum();
        if (trace.re - 1.0).abs() > 1e-10 || trace.im.abs() > 1e-10 {
            return Err(Error::NonPhysicalState {
                detail: format!("trace {trace} differs from 1"),
            });
        }
        let min_eig = hermitian_min_eigenvalue(m);
        if min_eig < -1e-9 {
            return Err(Error::NonPhysicalState {
                detail: format!("negative eigenvalue {min_eig:.3e}"),
            });
        }
        Ok(())
    }
}

/// Smallest eigenvalue of a Hermitian complex matrix, computed through the
/// real symmetric embedding `[[Re, −Im], [Im, Re]]` (its spectrum is the
/// Hermitian spectrum, doubly degenerate).
fn hermitian_min_eigenvalue(m: &CMat) -> f64 {
    let d = m.nrows();
    let mut real = DMatrix::<f64>::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let v = m[(i, j)];
            real[(i, j)] = v.re;
            real[(i, j + d)] = -v.im;
            real[(i + d, j)] = v.im;
            real[(i + d, j + d)] = v.re;
        }
    }
    // Symmetrize away rounding asymmetry before the eigensolve.
    let sym = (&real + real.transpose()) * 0.5;
    let eigs = sym.symmetric_eigen().eigenvalues;
    eigs.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Builds the Lindblad superoperator for Hamiltonian `h` and jump operators
/// `jumps`, all `d×d`, as a dense `d²×d²` matrix in the row-major
/// vectorization convention.
pub fn liouvillian(h: &CMat, jumps: &[CMat]) -> Result<CMat> {
    let d = h.nrows();
    if h.ncols() != d {
        return Err(Error::SteadyStateSolve {
            reason: format!("Hamiltonian not square: {}x{}", h.nrows(), h.ncols()),
        });
    }
    for c in jumps {
        if c.nrows() != d || c.ncols() != d {
            return Err(Error::DimensionMismatch {
                dim_h: d,
                dim_jump: c.nrows(),
            });
        }
    }
    let n = d * d;
    let mut l = CMat::zeros(n, n);
    let minus_i = Complex64::new(0.0, -1.0);

    // Coherent part: −i (H ⊗ I − I ⊗ Hᵀ).
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                // (H ⊗ I): row (i,j), col (k,j) += H[i,k]
                l[(i * d + j, k * d + j)] += minus_i * h[(i, k)];
                // (I ⊗ Hᵀ): row (i,j), col (i,k) += Hᵀ[j,k] = H[k,j]
                l[(i * d + j, i * d + k)] -= minus_i * h[(k, j)];
            }
        }
    }

    // Dissipators.
    for c in jumps {
        let cdc = c.adjoint() * c;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for m in 0..d {
                        // c ρ c†  →  (c ⊗ c*)
                        let gain = c[(i, k)] * c[(j, m)].conj();
                        if gain != Complex64::ZERO {
                            l[(i * d + j, k * d + m)] += gain;
                        }
                    }
                    // −½ c†c ρ  →  −½ (c†c ⊗ I)
                    l[(i * d + j, k * d + j)] -= 0.5 * cdc[(i, k)];
                    // −½ ρ c†c  →  −½ (I ⊗ (c†c)ᵀ)
                    l[(i * d + j, i * d + k)] -= 0.5 * cdc[(k, j)];
                }
            }
        }
    }
    Ok(l)
}

/// Solves `L · vec(ρ) = 0` with the unit-trace constraint for the unique
/// steady state.
///
/// The row of `L` corresponding to the (0,0) matrix element is replaced by
/// the trace row (1 on every diagonal index), and the resulting linear
/// system is solved by dense LU. The residual `‖L·vec(ρ)‖ ≤ 1e-10·‖L‖` is
/// enforced; on failure the Liouvillian's null space is examined by SVD and
/// a null-space dimension > 1 (at relative tolerance 1e-8) is reported as
/// [`Error::DegenerateSteadyState`].
pub fn steady_state(l: &CMat) -> Result<DensityOperator> {
    let n = l.nrows();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n {
        return Err(Error::SteadyStateSolve {
            reason: format!("superoperator size {n} is not a perfect square"),
        });
    }
    let mut m = l.clone();
    for col in 0..n {
        m[(0, col)] = Complex64::ZERO;
    }
    for i in 0..d {
        m[(0, i * d + i)] = Complex64::ONE;
    }
    let mut b = DVector::<Complex64>::zeros(n);
    b[0] = Complex64::ONE;

    let solved = m.lu().solve(&b);
    let x = match solved {
        Some(x) => x,
        None => return Err(degeneracy_diagnostic(l, "singular trace-constrained system")),
    };

    // Residual against the *original* Liouvillian.
    let l_norm = l.norm();
    let resid = (l * &x).norm();
    if resid > 1e-10 * l_norm.max(1.0) {
        return Err(degeneracy_diagnostic(
            l,
            &format!("residual {resid:.3e} exceeds 1e-10·‖L‖"),
        ));
    }

    // Reshape (row-major) and Hermitize to scrub rounding noise.
    let mut rho = CMat::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            rho[(i, j)] = x[i * d + j];
        }
    }
    let rho = (rho.clone() + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let out = DensityOperator { matrix: rho };
    out.check_physical()?;
    Ok(out)
}

/// Classifies a failed solve: counts near-zero singular values of `L` and
/// reports degeneracy when more than one basis state is stationary.
fn degeneracy_diagnostic(l: &CMat, fallback: &str) -> Error {
    let svd = l.clone().svd(false, false);
    let smax = svd
        .singular_values
        .iter()
        .cloned()
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let null_dim = svd
        .singular_values
        .iter()
        .filter(|&&s| s <= 1e-8 * smax)
        .count();
    if null_dim > 1 {
        Error::DegenerateSteadyState { null_dim }
    } else {
        Error::SteadyStateSolve {
            reason: fallback.to_string(),
        }
    }
}

/// Verifies that `L` conserves trace: for every column, the sum over rows
/// that encode diagonal elements must vanish. Returns the largest violation.
pub fn trace_defect(l: &CMat) -> f64 {
    let n = l.nrows();
    let d = (n as f64).sqrt().round() as usize;
    let mut worst: f64 = 0.0;
    for col in 0..n {
        let s: Complex64 = (0..d).map(|i| l[(i * d + i, col)]).sum();
        worst = worst.max(s.norm());
    }
    worst
}
