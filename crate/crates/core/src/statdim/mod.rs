//! Statistical-dimension predictions.
//!
//! Closed-form curves `ψ₁`, `ψ₂` for ℓ1 recovery (plain or with an ℓ2-ball
//! prior, and with a nonnegativity prior), their deterministic error
//! brackets, the transition window, and Monte-Carlo estimators of
//! `J(τ) = E dist²(g, S(τ))` for arbitrary separable families (see [`mc`]).

pub mod mc;

pub use mc::{exact_j, mc_j, mc_j_gradient, mc_statdim_exact, minimize_j, McEstimate, MinimizeOptions};

use crate::error::{Error, Result};
use crate::numeric::{brent_root, gaussian_tail_moments};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PsiVariant {
    /// ℓ1 minimization, with or without the ℓ2-ball prior.
    Psi1,
    /// ℓ1 minimization with the nonnegativity prior.
    Psi2,
}

impl PsiVariant {
    /// Weight of the tail term: `1` for `ψ₁`, `½` for `ψ₂`.
    fn tail_weight(self) -> f64 {
        match self {
            PsiVariant::Psi1 => 1.0,
            PsiVariant::Psi2 => 0.5,
        }
    }
}

/// Which recovery program a closed-form bracket refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundVariant {
    L1Plain,
    L1L2Ball,
    L1Nonneg,
}

impl BoundVariant {
    pub fn psi(self) -> PsiVariant {
        match self {
            BoundVariant::L1Plain | BoundVariant::L1L2Ball => PsiVariant::Psi1,
            BoundVariant::L1Nonneg => PsiVariant::Psi2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimateMethod {
    ClosedFormPsi1,
    ClosedFormPsi2,
    McRecipe,
    McExact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Uncertainty {
    Bracket { lower: f64, upper: f64 },
    StdError { se: f64, samples: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatDimEstimate {
    pub value: f64,
    pub tau_star: Vec<f64>,
    pub method: EstimateMethod,
    pub uncertainty: Uncertainty,
}

impl StatDimEstimate {
    /// Standard error for Monte-Carlo estimates, zero otherwise.
    pub fn std_error(&self) -> f64 {
        match self.uncertainty {
            Uncertainty::StdError { se, .. } => se,
            Uncertainty::Bracket { .. } => 0.0,
        }
    }
}

/// `(ψ(ρ), τ*)` where `τ*` attains the infimum. `ρ = 0` gives `τ* = +∞`.
pub fn psi_value(rho: f64, variant: PsiVariant) -> Result<(f64, f64)> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho must lie in [0, 1], got {rho}")));
    }
    if rho == 0.0 {
        return Ok((0.0, f64::INFINITY));
    }
    if rho == 1.0 {
        return Ok((1.0, 0.0));
    }
    let tau = stationary_solve(rho, variant)?;
    Ok((psi_objective(rho, tau, variant)?, tau))
}

/// `ρ(1 + τ²) + w(1 − ρ)·∫_τ^∞ (u − τ)² φ(u) du` with `w` the variant's tail weight.
pub fn psi_objective(rho: f64, tau: f64, variant: PsiVariant) -> Result<f64> {
    let m = gaussian_tail_moments(tau)?;
    Ok(rho * (1.0 + tau * tau) + variant.tail_weight() * (1.0 - rho) * m.centered_second(tau))
}

/// `∫_τ^∞ (u/τ − 1) φ(u) du`, strictly decreasing from `+∞` to `0` on `τ > 0`.
pub fn stationary_rhs(tau: f64) -> Result<f64> {
    let m = gaussian_tail_moments(tau)?;
    Ok(m.centered_first(tau) / tau)
}

/// Left-hand side of the stationary equation: `ρ/(1−ρ)` for `ψ₁`,
/// `2ρ/(1−ρ)` for `ψ₂`.
pub fn stationary_lhs(rho: f64, variant: PsiVariant) -> f64 {
    rho / (1.0 - rho) / variant.tail_weight()
}

/// Unique root of the stationary equation on `τ > 0`.
pub fn stationary_solve(rho: f64, variant: PsiVariant) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "stationary equation needs 0 < rho < 1, got {rho}"
        )));
    }
    let target = stationary_lhs(rho, variant);
    let f = |t: f64| stationary_rhs(t).map(|r| r - target).unwrap_or(f64::NAN);

    let mut lo = 1e-8;
    let mut hi = 1.0;
    let mut tries = 0;
    while f(hi) > 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 64 {
            return Err(Error::InvalidArgument(format!("cannot bracket root for rho = {rho}")));
        }
    }
    tries = 0;
    while f(lo) < 0.0 {
        lo *= 0.5;
        tries += 1;
        if tries > 64 {
            return Err(Error::InvalidArgument(format!("cannot bracket root for rho = {rho}")));
        }
    }
    brent_root(f, lo, hi, 1e-12, 500)
}

/// Deterministic bracket on `δ` for `s`-sparse recovery in dimension `n`:
/// `upper = n·ψ(s/n)`, `lower = upper − 2√(n/s)` (less another `½` with the
/// ℓ2-ball prior), floored at zero.
pub fn statdim_bounds(s: usize, n: usize, variant: BoundVariant) -> Result<(f64, f64)> {
    if s == 0 || s > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= s <= n, got s = {s}, n = {n}"
        )));
    }
    let nf = n as f64;
    let (psi, _) = psi_value(s as f64 / nf, variant.psi())?;
    let upper = nf * psi;
    let mut lower = upper - 2.0 * (nf / s as f64).sqrt();
    if variant == BoundVariant::L1L2Ball {
        lower -= 0.5;
    }
    Ok((lower.max(0.0), upper))
}

/// Closed-form estimate `n·ψ(s/n)` with its deterministic bracket.
pub fn closed_form_estimate(s: usize, n: usize, variant: BoundVariant) -> Result<StatDimEstimate> {
    let (lower, upper) = statdim_bounds(s, n, variant)?;
    let (_, tau) = psi_value(s as f64 / n as f64, variant.psi())?;
    Ok(StatDimEstimate {
        value: upper,
        tau_star: vec![tau],
        method: match variant.psi() {
            PsiVariant::Psi1 => EstimateMethod::ClosedFormPsi1,
            PsiVariant::Psi2 => EstimateMethod::ClosedFormPsi2,
        },
        uncertainty: Uncertainty::Bracket { lower, upper },
    })
}

/// Range of `m` outside which recovery fails (below) or succeeds (above)
/// with probability at least `1 − ζ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionWindow {
    pub delta: f64,
    pub n: usize,
    pub zeta: f64,
    pub m_low: f64,
    pub m_high: f64,
}

impl TransitionWindow {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.m_high - self.m_low)
    }
}

/// `a_ζ = √(8·log(4/ζ))`.
pub fn window_constant(zeta: f64) -> f64 {
    (8.0 * (4.0 / zeta).ln()).max(0.0).sqrt()
}

pub fn transition_window(delta: f64, n: usize, zeta: f64) -> Result<TransitionWindow> {
    if !(zeta > 0.0 && zeta <= 4.0) {
        return Err(Error::InvalidArgument(format!("zeta must lie in (0, 4], got {zeta}")));
    }
    if !(delta >= 0.0 && delta <= n as f64) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in [0, n], got {delta} with n = {n}"
        )));
    }
    let half = window_constant(zeta) * (n as f64).sqrt();
    Ok(TransitionWindow {
        delta,
        n,
        zeta,
        m_low: delta - half,
        m_high: delta + half,
    })
}
