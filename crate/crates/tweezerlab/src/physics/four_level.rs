//! Four-level cascade model of ¹⁷⁴Yb⁺: basis order `(S, P, D, 3/2)` =
//! `(0, 1, 2, 3)`.
//!
//! The 369 nm beam drives S ↔ P (Rabi Ω_D, detuning Δ_D) and the 935 nm
//! tweezer drives D ↔ [3/2] (Rabi Ω_tw, detuning Δ_tw). P decays to S and D
//! with branching `b_SP : b_DP`; [3/2] decays to S and D with branching
//! `b_S32 : b_D32`. Fluorescence is detected on the 369 nm channel with the
//! counting convention pinned in [`crate::constants::KAPPA_SCATTER`].

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::constants::{B_D_32, B_D_P, B_S_32, B_S_P, GAMMA_32, GAMMA_P, KAPPA_SCATTER};
use crate::error::{Error, Result};

use super::lindblad::{liouvillian, steady_state};

type CMat = DMatrix<Complex64>;

/// Level indices of the four-level basis.
pub const LEVEL_S: usize = 0;
pub const LEVEL_P: usize = 1;
pub const LEVEL_D: usize = 2;
pub const LEVEL_32: usize = 3;

/// Drives, linewidths and branching fractions of the four-level model.
/// All frequencies are angular (rad/s).
#[derive(Debug, Clone, Copy)]
pub struct FourLevelParams {
    /// 369 nm Rabi frequency Ω_D (≥ 0).
    pub omega_d: f64,
    /// 369 nm detuning Δ_D.
    pub delta_d: f64,
    /// 935 nm (tweezer) Rabi frequency Ω_tw (≥ 0).
    pub omega_tw: f64,
    /// 935 nm detuning Δ_tw.
    pub delta_tw: f64,
    /// P₁/₂ linewidth Γ_P.
    pub gamma_p: f64,
    /// [3/2]₁/₂ linewidth Γ₃/₂.
    pub gamma_32: f64,
    /// Branching P → S.
    pub b_s_p: f64,
    /// Branching P → D.
    pub b_d_p: f64,
    /// Branching [3/2] → S.
    pub b_s_32: f64,
    /// Branching [3/2] → D.
    pub b_d_32: f64,
}

impl Default for FourLevelParams {
    fn default() -> Self {
        FourLevelParams {
            omega_d: GAMMA_P / std::f64::consts::SQRT_2,
            delta_d: -GAMMA_P / 2.0,
            omega_tw: 0.0,
            delta_tw: 0.0,
            gamma_p: GAMMA_P,
            gamma_32: GAMMA_32,
            b_s_p: B_S_P,
            b_d_p: B_D_P,
            b_s_32: B_S_32,
            b_d_32: B_D_32,
        }
    }
}

impl FourLevelParams {
    /// Checks branching normalization (each upper manifold sums to 1 within
    /// 1e-12) and non-negative drives.
    pub fn validate(&self) -> Result<()> {
        let sp = self.b_s_p + self.b_d_p;
        if (sp - 1.0).abs() > 1e-12 {
            return Err(Error::BranchingSum {
                manifold: "P",
                sum: sp,
            });
        }
        let s32 = self.b_s_32 + self.b_d_32;
        if (s32 - 1.0).abs() > 1e-12 {
            return Err(Error::BranchingSum {
                manifold: "[3/2]",
                sum: s32,
            });
        }
        if self.omega_d < 0.0 || self.omega_tw < 0.0 {
            return Err(Error::NegativeRate {
                rate: self.omega_d.min(self.omega_tw),
            });
        }
        Ok(())
    }
}

/// Rotating-frame Hamiltonian of the four-level cascade:
/// `Δ_D |S⟩⟨S| + (Ω_D/2) σx(S,P) + Δ_tw |D⟩⟨D| + (Ω_tw/2) σx(D,3/2)`.
pub fn hamiltonian_4level(p: &FourLevelParams) -> CMat {
    let mut h = CMat::zeros(4, 4);
    h[(LEVEL_S, LEVEL_S)] = Complex64::new(p.delta_d, 0.0);
    h[(LEVEL_D, LEVEL_D)] = Complex64::new(p.delta_tw, 0.0);
    let half_d = Complex64::new(p.omega_d / 2.0, 0.0);
    h[(LEVEL_S, LEVEL_P)] = half_d;
    h[(LEVEL_P, LEVEL_S)] = half_d;
    let half_tw = Complex64::new(p.omega_tw / 2.0, 0.0);
    h[(LEVEL_D, LEVEL_32)] = half_tw;
    h[(LEVEL_32, LEVEL_D)] = half_tw;
    h
}

/// The four spontaneous-decay jump operators `√Γ_{f,u} |f⟩⟨u|` with
/// `f ∈ {S, D}` and `u ∈ {P, 3/2}`; rates are linewidth × branching.
pub fn jump_operators_4level(p: &FourLevelParams) -> Result<Vec<CMat>> {
    p.validate()?;
    let channels = [
        (LEVEL_S, LEVEL_P, p.gamma_p * p.b_s_p),
        (LEVEL_D, LEVEL_P, p.gamma_p * p.b_d_p),
        (LEVEL_S, LEVEL_32, p.gamma_32 * p.b_s_32),
        (LEVEL_D, LEVEL_32, p.gamma_32 * p.b_d_32),
    ];
    let mut ops = Vec::with_capacity(4);
    for (f, u, rate) in channels {
        if rate < 0.0 {
            return Err(Error::NegativeRate { rate });
        }
        let mut c = CMat::zeros(4, 4);
        c[(f, u)] = Complex64::new(rate.sqrt(), 0.0);
        ops.push(c);
    }
    Ok(ops)
}

/// Closed-form steady-state scattering rate on the 369 nm channel
/// (photons/s):
///
/// `Γ_sc = Γ_{S,3/2} Γ_P Ω_D² Ω_tw² / [ Γ_{S,3/2} Ω_tw² (Γ_P² + 2Ω_D² + 4Δ_D²)
///         + Γ_{D,P} Ω_D² (Γ₃/₂² + 2Ω_tw² + 4Δ_tw²) ]`
///
/// The second denominator term carries the *leak* rate Γ_{D,P} = b_{D,P} Γ_P
/// (flow into the D manifold), which balances the Γ_{S,3/2} return flow in
/// steady state. With that reading the expression equals `Γ_P ρ_PP` from the
/// numeric Liouvillian steady state to machine precision; the test suite
/// pins this equivalence over randomized parameters.
pub fn scattering_rate_4level_analytic(p: &FourLevelParams) -> Result<f64> {
    p.validate()?;
    if p.omega_d == 0.0 && p.omega_tw == 0.0 {
        return Err(Error::UndrivenSystem);
    }
    let g_s32 = p.gamma_32 * p.b_s_32;
    let g_dp = p.gamma_p * p.b_d_p;
    let od2 = p.omega_d * p.omega_d;
    let ot2 = p.omega_tw * p.omega_tw;
    let numer = g_s32 * p.gamma_p * od2 * ot2;
    let denom = g_s32 * ot2 * (p.gamma_p * p.gamma_p + 2.0 * od2 + 4.0 * p.delta_d * p.delta_d)
        + g_dp * od2 * (p.gamma_32 * p.gamma_32 + 2.0 * ot2 + 4.0 * p.delta_tw * p.delta_tw);
    if denom == 0.0 {
        return Err(Error::UndrivenSystem);
    }
    Ok(KAPPA_SCATTER * numer / denom)
}

/// Steady-state populations of the four levels.
#[derive(Debug, Clone, Copy)]
pub struct Populations4 {
    pub s: f64,
    pub p: f64,
    pub d: f64,
    pub f32_: f64,
}

/// Closed-form steady-state populations of the four-level cascade.
///
/// Writing the two driven two-level sections through their saturation
/// fractions `q₁ = Ω_D²/(4Δ_D² + Γ_P² + Ω_D²)` and
/// `q₂ = Ω_tw²/(4Δ_tw² + Γ₃/₂² + Ω_tw²)`, the steady-state flow balance
/// gives `ρ_PP = q₁ ρ_SS`, `ρ_{3/2,3/2} = q₂ ρ_DD`, and
/// `ρ_DD = ρ_PP Γ_{D,P} / (q₂ Γ_{S,3/2})` (P→D leak balanced by the repump
/// return through [3/2]). Edge cases: Ω_tw = 0 pumps everything into D;
/// Ω_D = 0 leaves everything in S; both zero is undriven.
pub fn four_level_populations(p: &FourLevelParams) -> Result<Populations4> {
    p.validate()?;
    if p.omega_d == 0.0 && p.omega_tw == 0.0 {
        return Err(Error::UndrivenSystem);
    }
    if p.omega_tw == 0.0 {
        // P leaks into D with no way back: the ion goes dark in D.
        return Ok(Populations4 {
            s: 0.0,
            p: 0.0,
            d: 1.0,
            f32_: 0.0,
        });
    }
    if p.omega_d == 0.0 {
        // Nothing feeds the D manifold; the repump empties it into S.
        return Ok(Populations4 {
            s: 1.0,
            p: 0.0,
            d: 0.0,
            f32_: 0.0,
        });
    }
    let q1 = p.omega_d * p.omega_d
        / (4.0 * p.delta_d * p.delta_d + p.gamma_p * p.gamma_p + p.omega_d * p.omega_d);
    let q2 = p.omega_tw * p.omega_tw
        / (4.0 * p.delta_tw * p.delta_tw + p.gamma_32 * p.gamma_32 + p.omega_tw * p.omega_tw);
    let leak_ratio = (p.gamma_p * p.b_d_p) / (p.gamma_32 * p.b_s_32);
    // ρ_SS [1 + q₁ + q₁·leak_ratio·(1 + q₂)/q₂] = 1
    let s = 1.0 / (1.0 + q1 + q1 * leak_ratio * (1.0 + q2) / q2);
    let pp = q1 * s;
    let d = pp * leak_ratio / q2;
    let f = q2 * d;
    Ok(Populations4 {
        s,
        p: pp,
        d,
        f32_: f,
    })
}

/// Numeric steady-state scattering rate `κ Γ_P ρ_PP` from the Liouvillian.
pub fn scattering_rate_4level(p: &FourLevelParams) -> Result<f64> {
    let h = hamiltonian_4level(p);
    let jumps = jump_operators_4level(p)?;
    let l = liouvillian(&h, &jumps)?;
    let rho = steady_state(&l)?;
    Ok(KAPPA_SCATTER * p.gamma_p * rho.population(LEVEL_P))
}
