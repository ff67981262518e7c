//! Ten-sublevel Zeeman-resolved model of ¹⁷⁴Yb⁺.
//!
//! Basis order (fixed for serialization and tests):
//!
//! | index | level            | m_J   |
//! |-------|------------------|-------|
//! | 0     | S₁/₂             | −1/2  |
//! | 1     | S₁/₂             | +1/2  |
//! | 2     | P₁/₂             | −1/2  |
//! | 3     | P₁/₂             | +1/2  |
//! | 4     | D₃/₂             | −3/2  |
//! | 5     | D₃/₂             | −1/2  |
//! | 6     | D₃/₂             | +1/2  |
//! | 7     | D₃/₂             | +3/2  |
//! | 8     | [3/2]₁/₂         | −1/2  |
//! | 9     | [3/2]₁/₂         | +1/2  |
//!
//! The quantization axis is the magnetic-field direction. Each laser's
//! polarization is decomposed onto the spherical basis of that axis; the
//! sublevel coupling `Ω^{u,l} = Ω · (ε·ξ_q*) · 𝒜_{u,l}` keeps only the
//! component with `q = m_u − m_l`. Spontaneous decay splits across sublevel
//! paths in proportion to `𝒜²`, normalized so every upper sublevel's total
//! out-rate equals linewidth × branching.
//!
//! With both beams polarized perpendicular to the field (the default
//! geometry), the tweezer drives a pure σ⁺/σ⁻ mix on D₃/₂ ↔ [3/2]₁/₂ and
//! the D manifold hosts two coherent dark superpositions: the origin of the
//! coherent-population-trapping (CPT) fluorescence turnover. A finite field
//! splits the dark states' components and limits the trapping.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::constants::{G_32, G_D, G_P, G_S, HBAR, KAPPA_SCATTER, MU_B};
use crate::error::{Error, Result};

use super::four_level::FourLevelParams;
use super::lindblad::{liouvillian, steady_state};

type CMat = DMatrix<Complex64>;

/// Number of sublevels in the model.
pub const LEVEL_COUNT: usize = 10;

/// Twice m_J for each basis state (integer-exact bookkeeping).
pub const M2: [i8; LEVEL_COUNT] = [-1, 1, -1, 1, -3, -1, 1, 3, -1, 1];

/// Sublevel index ranges of the four manifolds.
pub const S_RANGE: std::ops::Range<usize> = 0..2;
pub const P_RANGE: std::ops::Range<usize> = 2..4;
pub const D_RANGE: std::ops::Range<usize> = 4..8;
pub const F32_RANGE: std::ops::Range<usize> = 8..10;

/// One laser beam: Rabi frequency, detuning and lab-frame polarization.
#[derive(Debug, Clone, Copy)]
pub struct LaserDrive {
    /// Peak Rabi frequency Ω (rad/s, ≥ 0).
    pub rabi: f64,
    /// Detuning Δ (rad/s).
    pub detuning: f64,
    /// Complex polarization unit vector in the lab frame.
    pub polarization: [Complex64; 3],
    /// Wavelength (m); carried for photon-recoil bookkeeping.
    pub wavelength: f64,
}

impl LaserDrive {
    /// Linearly polarized beam along a real lab axis.
    pub fn linear(rabi: f64, detuning: f64, axis: [f64; 3], wavelength: f64) -> Self {
        LaserDrive {
            rabi,
            detuning,
            polarization: [
                Complex64::new(axis[0], 0.0),
                Complex64::new(axis[1], 0.0),
                Complex64::new(axis[2], 0.0),
            ],
            wavelength,
        }
    }

    /// Squared norm of the polarization vector.
    pub fn polarization_norm_sqr(&self) -> f64 {
        self.polarization.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Checks unit polarization (1e-12) and non-negative Rabi frequency.
    pub fn validate(&self) -> Result<()> {
        if (self.polarization_norm_sqr() - 1.0).abs() > 1e-12 {
            return Err(Error::ZeroVector {
                which: "laser polarization (must be unit norm)",
            });
        }
        if self.rabi < 0.0 {
            return Err(Error::NegativeRate { rate: self.rabi });
        }
        Ok(())
    }
}

/// Static magnetic environment: field, axis and per-manifold Landé factors.
#[derive(Debug, Clone, Copy)]
pub struct ZeemanEnvironment {
    /// Field magnitude (T). May be negative to flip the field along `axis`.
    pub field_tesla: f64,
    /// Field direction (unit vector, lab frame) — the quantization axis.
    pub axis: [f64; 3],
    /// Landé g-factors per manifold: indexed like [g_S, g_P, g_D, g_32].
    pub g_factors: [f64; 4],
}

impl Default for ZeemanEnvironment {
    fn default() -> Self {
        // 0.5 mT along x: a typical quantization field transverse to both
        // beam polarizations.
        ZeemanEnvironment {
            field_tesla: 0.5e-3,
            axis: [1.0, 0.0, 0.0],
            g_factors: [G_S, G_P, G_D, G_32],
        }
    }
}

impl ZeemanEnvironment {
    /// Zeeman angular-frequency shift `g μ_B m_J B / ħ` of basis state `i`.
    pub fn shift(&self, i: usize) -> f64 {
        let g = match i {
            0 | 1 => self.g_factors[0],
            2 | 3 => self.g_factors[1],
            4..=7 => self.g_factors[2],
            _ => self.g_factors[3],
        };
        g * MU_B * (M2[i] as f64 / 2.0) * self.field_tesla / HBAR
    }
}

/// Dimensionless sublevel coupling amplitudes 𝒜 of one J → J′ line, keyed
/// by `(2·m_upper, 2·m_lower)`.
#[derive(Debug, Clone)]
pub struct CouplingTable {
    /// Human-readable transition tag (for error messages).
    pub transition: &'static str,
    entries: Vec<(i8, i8, f64)>,
}

impl CouplingTable {
    /// Amplitude for the `(m2_upper, m2_lower)` path, or an error if the
    /// path is not listed.
    pub fn amplitude(&self, m2_upper: i8, m2_lower: i8) -> Result<f64> {
        self.entries
            .iter()
            .find(|&&(u, l, _)| u == m2_upper && l == m2_lower)
            .map(|&(_, _, a)| a)
            .ok_or(Error::MissingCoupling {
                transition: self.transition,
                m2_upper,
                m2_lower,
            })
    }

    /// Amplitude, treating unlisted (dipole-forbidden) paths as zero.
    pub fn amplitude_or_zero(&self, m2_upper: i8, m2_lower: i8) -> f64 {
        self.entries
            .iter()
            .find(|&&(u, l, _)| u == m2_upper && l == m2_lower)
            .map(|&(_, _, a)| a)
            .unwrap_or(0.0)
    }

    /// Σ 𝒜² over all listed upper states of one lower state.
    pub fn sum_sq_over_upper(&self, m2_lower: i8) -> f64 {
        self.entries
            .iter()
            .filter(|&&(_, l, _)| l == m2_lower)
            .map(|&(_, _, a)| a * a)
            .sum()
    }

    /// Σ 𝒜² over all listed lower states of one upper state.
    pub fn sum_sq_over_lower(&self, m2_upper: i8) -> f64 {
        self.entries
            .iter()
            .filter(|&&(u, _, _)| u == m2_upper)
            .map(|&(_, _, a)| a * a)
            .sum()
    }

    /// All entries `(m2_upper, m2_lower, 𝒜)`.
    pub fn entries(&self) -> &[(i8, i8, f64)] {
        &self.entries
    }
}

/// Coupling amplitudes of the J=1/2 ↔ J′=1/2 line (369 nm, S ↔ P):
/// `𝒜_{±1/2,∓1/2} = ∓1/3`, `𝒜_{±1/2,±1/2} = √3/3`.
pub fn coupling_table_369() -> CouplingTable {
    let s3 = 3f64.sqrt() / 3.0;
    CouplingTable {
        transition: "369nm (S1/2-P1/2)",
        entries: vec![
            // (2·m_upper, 2·m_lower, amplitude)
            (1, -1, -1.0 / 3.0),
            (-1, 1, 1.0 / 3.0),
            (1, 1, s3),
            (-1, -1, s3),
        ],
    }
}

/// Coupling amplitudes of the J=3/2 ↔ J′=1/2 line (935 nm, D ↔ [3/2]):
/// `𝒜_{±3/2,±1/2} = −1/√3`, `𝒜_{±1/2,±1/2} = √2/3`, `𝒜_{∓1/2,±1/2} = 1/3`
/// (lower, upper) in that labeling; stored here keyed (upper, lower).
pub fn coupling_table_935() -> CouplingTable {
    let inv_s3 = 1.0 / 3f64.sqrt();
    let s2_3 = 2f64.sqrt() / 3.0;
    CouplingTable {
        transition: "935nm (D3/2-[3/2]1/2)",
        entries: vec![
            (1, 3, -inv_s3),
            (-1, -3, -inv_s3),
            (1, 1, s2_3),
            (-1, -1, s2_3),
            (1, -1, 1.0 / 3.0),
            (-1, 1, 1.0 / 3.0),
        ],
    }
}

/// Spherical polarization overlap `c_q = ε · ξ_q*` evaluated in the frame
/// whose z′-axis is the quantization axis.
///
/// The frame is completed deterministically: the second axis is the
/// rejection of the lab z-axis (or x-axis when the quantization axis is
/// nearly parallel to z) onto the plane normal to z′. The spherical unit
/// vectors are `ξ_{±1} = ∓(x′ ± i y′)/√2`, `ξ_0 = z′`; completeness
/// `Σ_q |c_q|² = ‖ε‖²` holds for any frame choice.
pub fn polarization_overlap(
    epsilon: &[Complex64; 3],
    q: i8,
    quantization_axis: &[f64; 3],
) -> Result<Complex64> {
    let norm = (quantization_axis.iter().map(|a| a * a).sum::<f64>()).sqrt();
    if norm < 1e-300 {
        return Err(Error::ZeroVector {
            which: "quantization axis",
        });
    }
    let zp = [
        quantization_axis[0] / norm,
        quantization_axis[1] / norm,
        quantization_axis[2] / norm,
    ];
    // Helper vector: lab z unless nearly collinear with the axis.
    let helper = if zp[2].abs() > 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let dot = helper[0] * zp[0] + helper[1] * zp[1] + helper[2] * zp[2];
    let mut xp = [
        helper[0] - dot * zp[0],
        helper[1] - dot * zp[1],
        helper[2] - dot * zp[2],
    ];
    let xn = (xp.iter().map(|a| a * a).sum::<f64>()).sqrt();
    for v in &mut xp {
        *v /= xn;
    }
    let yp = [
        zp[1] * xp[2] - zp[2] * xp[1],
        zp[2] * xp[0] - zp[0] * xp[2],
        zp[0] * xp[1] - zp[1] * xp[0],
    ];
    // ξ_q in lab coordinates (complex).
    let xi: [Complex64; 3] = match q {
        0 => [
            Complex64::new(zp[0], 0.0),
            Complex64::new(zp[1], 0.0),
            Complex64::new(zp[2], 0.0),
        ],
        1 => [
            Complex64::new(-xp[0] / 2f64.sqrt(), -yp[0] / 2f64.sqrt()),
            Complex64::new(-xp[1] / 2f64.sqrt(), -yp[1] / 2f64.sqrt()),
            Complex64::new(-xp[2] / 2f64.sqrt(), -yp[2] / 2f64.sqrt()),
        ],
        -1 => [
            Complex64::new(xp[0] / 2f64.sqrt(), -yp[0] / 2f64.sqrt()),
            Complex64::new(xp[1] / 2f64.sqrt(), -yp[1] / 2f64.sqrt()),
            Complex64::new(xp[2] / 2f64.sqrt(), -yp[2] / 2f64.sqrt()),
        ],
        _ => {
            return Err(Error::MissingCoupling {
                transition: "polarization component",
                m2_upper: q,
                m2_lower: 0,
            })
        }
    };
    // ε · ξ_q* (plain dot product with the conjugated spherical vector).
    Ok(epsilon[0] * xi[0].conj() + epsilon[1] * xi[1].conj() + epsilon[2] * xi[2].conj())
}

/// Full parameter set of the ten-level model.
#[derive(Debug, Clone)]
pub struct TenLevelParams {
    /// 369 nm Doppler/detection drive.
    pub drive_doppler: LaserDrive,
    /// 935 nm tweezer drive.
    pub drive_tweezer: LaserDrive,
    /// Magnetic field and g-factors.
    pub zeeman: ZeemanEnvironment,
    /// Linewidths and branching fractions (shared with the 4-level model).
    pub rates: FourLevelParams,
}

impl TenLevelParams {
    /// Default geometry: B ∥ x, Doppler beam polarized along z, tweezer
    /// polarized along y — both beams drive pure σ⁺/σ⁻ mixes.
    pub fn with_defaults(
        omega_d: f64,
        delta_d: f64,
        omega_tw: f64,
        delta_tw: f64,
    ) -> TenLevelParams {
        use crate::constants::{LAMBDA_369, LAMBDA_935};
        TenLevelParams {
            drive_doppler: LaserDrive::linear(omega_d, delta_d, [0.0, 0.0, 1.0], LAMBDA_369),
            drive_tweezer: LaserDrive::linear(omega_tw, delta_tw, [0.0, 1.0, 0.0], LAMBDA_935),
            zeeman: ZeemanEnvironment::default(),
            rates: FourLevelParams {
                omega_d,
                delta_d,
                omega_tw,
                delta_tw,
                ..Default::default()
            },
        }
    }

    /// Build from shared four-level parameters and a Zeeman environment,
    /// keeping the default beam polarizations (Doppler ∥ z, tweezer ∥ y).
    pub fn from_rates(rates: FourLevelParams, zeeman: ZeemanEnvironment) -> TenLevelParams {
        use crate::constants::{LAMBDA_369, LAMBDA_935};
        TenLevelParams {
            drive_doppler: LaserDrive::linear(
                rates.omega_d,
                rates.delta_d,
                [0.0, 0.0, 1.0],
                LAMBDA_369,
            ),
            drive_tweezer: LaserDrive::linear(
                rates.omega_tw,
                rates.delta_tw,
                [0.0, 1.0, 0.0],
                LAMBDA_935,
            ),
            zeeman,
            rates,
        }
    }
}

/// Rotating-frame Hamiltonian of the ten-level model: detunings on the S
/// (369 nm frame) and D (935 nm frame) manifolds, Zeeman shifts on every
/// sublevel, and polarization-weighted sublevel Rabi couplings.
pub fn hamiltonian_10level(p: &TenLevelParams) -> Result<CMat> {
    p.drive_doppler.validate()?;
    p.drive_tweezer.validate()?;
    let mut h = CMat::zeros(LEVEL_COUNT, LEVEL_COUNT);

    for i in 0..LEVEL_COUNT {
        let mut diag = p.zeeman.shift(i);
        if S_RANGE.contains(&i) {
            diag += p.drive_doppler.detuning;
        }
        if D_RANGE.contains(&i) {
            diag += p.drive_tweezer.detuning;
        }
        h[(i, i)] = Complex64::new(diag, 0.0);
    }

    let axis = p.zeeman.axis;
    let t369 = coupling_table_369();
    let t935 = coupling_table_935();

    // S ↔ P couplings (369 nm).
    for l in S_RANGE {
        for u in P_RANGE {
            let q = (M2[u] - M2[l]) / 2;
            if q.abs() > 1 {
                continue;
            }
            let cq = polarization_overlap(&p.drive_doppler.polarization, q, &axis)?;
            let amp = t369.amplitude_or_zero(M2[u], M2[l]);
            let coupling = cq * amp * p.drive_doppler.rabi / 2.0;
            h[(u, l)] += coupling;
            h[(l, u)] += coupling.conj();
        }
    }
    // D ↔ [3/2] couplings (935 nm).
    for l in D_RANGE {
        for u in F32_RANGE {
            let q = (M2[u] - M2[l]) / 2;
            if q.abs() > 1 {
                continue;
            }
            let cq = polarization_overlap(&p.drive_tweezer.polarization, q, &axis)?;
            let amp = t935.amplitude_or_zero(M2[u], M2[l]);
            let coupling = cq * amp * p.drive_tweezer.rabi / 2.0;
            h[(u, l)] += coupling;
            h[(l, u)] += coupling.conj();
        }
    }
    Ok(h)
}

/// One decay family: all sublevel paths from an upper manifold into a lower
/// manifold, with rates `Γ · b · 𝒜²/Σ𝒜²` so each upper sublevel's total
/// out-rate into the family equals `Γ · b` exactly.
fn decay_family(
    upper: std::ops::Range<usize>,
    lower: std::ops::Range<usize>,
    table: &CouplingTable,
    total_rate: f64,
    branching: f64,
    ops: &mut Vec<CMat>,
) {
    for u in upper {
        let norm = table.sum_sq_over_lower(M2[u]);
        for l in lower.clone() {
            let a = table.amplitude_or_zero(M2[u], M2[l]);
            if a == 0.0 {
                continue;
            }
            let rate = total_rate * branching * a * a / norm;
            let mut c = CMat::zeros(LEVEL_COUNT, LEVEL_COUNT);
            c[(l, u)] = Complex64::new(rate.sqrt(), 0.0);
            ops.push(c);
        }
    }
}

/// All sublevel-resolved jump operators. Decay angular structure follows the
/// J quantum numbers: P₁/₂ → S₁/₂ and [3/2]₁/₂ → S₁/₂ are J=1/2 → J=1/2
/// lines (the 369 nm table); P₁/₂ → D₃/₂ and [3/2]₁/₂ → D₃/₂ are
/// J=1/2 → J=3/2 lines (the 935 nm table read upside down).
pub fn jump_operators_10level(rates: &FourLevelParams) -> Result<Vec<CMat>> {
    rates.validate()?;
    let t_half = coupling_table_369();
    let t_three_half = coupling_table_935();
    let mut ops = Vec::new();
    decay_family(
        P_RANGE,
        S_RANGE,
        &t_half,
        rates.gamma_p,
        rates.b_s_p,
        &mut ops,
    );
    decay_family(
        P_RANGE,
        D_RANGE,
        &t_three_half,
        rates.gamma_p,
        rates.b_d_p,
        &mut ops,
    );
    decay_family(
        F32_RANGE,
        S_RANGE,
        &t_half,
        rates.gamma_32,
        rates.b_s_32,
        &mut ops,
    );
    decay_family(
        F32_RANGE,
        D_RANGE,
        &t_three_half,
        rates.gamma_32,
        rates.b_d_32,
        &mut ops,
    );

    // Sum-rule audit: total out-rate of each upper sublevel must equal its
    // manifold linewidth within 1e-10 (relative).
    for (u, name, expect) in [
        (2usize, "P(-1/2)", rates.gamma_p),
        (3, "P(+1/2)", rates.gamma_p),
        (8, "[3/2](-1/2)", rates.gamma_32),
        (9, "[3/2](+1/2)", rates.gamma_32),
    ] {
        let total: f64 = ops
            .iter()
            .map(|c| (0..LEVEL_COUNT).map(|f| c[(f, u)].norm_sqr()).sum::<f64>())
            .sum();
        if (total - expect).abs() > 1e-10 * expect {
            return Err(Error::SumRuleViolation {
                sublevel: name,
                expected: expect,
                actual: total,
            });
        }
    }
    Ok(ops)
}

/// Steady-state fluorescence rate `κ Γ_P Σ_m ρ[P_m, P_m]` of the ten-level
/// model (photons/s on the 369 nm channel).
///
/// `Ω_tw = 0` short-circuits to 0: the D manifold is then fully decoupled
/// (every distribution over it is stationary, so the Liouvillian null space
/// is degenerate), and the ion is pumped dark within a few leak times — the
/// physical rate is zero rather than undefined.
pub fn fluorescence_10level(p: &TenLevelParams) -> Result<f64> {
    if p.drive_tweezer.rabi == 0.0 {
        return Ok(0.0);
    }
    let h = hamiltonian_10level(p)?;
    let jumps = jump_operators_10level(&p.rates)?;
    let l = liouvillian(&h, &jumps)?;
    let rho = steady_state(&l)?;
    Ok(KAPPA_SCATTER * p.rates.gamma_p * rho.population_sum(P_RANGE))
}
