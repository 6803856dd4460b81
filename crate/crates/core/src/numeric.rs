//! Gaussian tail integrals and the scalar routines built around them:
//! adaptive Simpson quadrature, Brent root bracketing and golden-section
//! minimization.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// The folded normal density `φ(u) = √(2/π)·e^{−u²/2}` on `u ≥ 0`.
pub fn folded_density(u: f64) -> f64 {
    SQRT_2_OVER_PI * (-0.5 * u * u).exp()
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `P(Z > x)` for a standard normal `Z`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// `E[(Z − t)₊²] = (1 + t²)·P(Z > t) − t·pdf(t)`; zero at `t = +∞`.
pub fn positive_part_sq_mean(t: f64) -> f64 {
    if t == f64::INFINITY {
        return 0.0;
    }
    ((1.0 + t * t) * normal_sf(t) - t * normal_pdf(t)).max(0.0)
}

/// `E dist²(Z, [lo, hi])` for a standard normal `Z`; `lo` may be `−∞`.
pub fn expected_interval_dist_sq(lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return 1.0 + lo * lo;
    }
    positive_part_sq_mean(hi) + positive_part_sq_mean(-lo)
}

/// The integrals `∫_τ^∞ u^k φ(u) du` for `k = 0, 1, 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailMoments {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
}

impl TailMoments {
    /// `∫_τ^∞ (u − τ)² φ(u) du`.
    pub fn centered_second(&self, tau: f64) -> f64 {
        // (1 + τ²)·erfc(τ/√2) − τ·φ(τ), written via the moments.
        (self.m2 - 2.0 * tau * self.m1 + tau * tau * self.m0).max(0.0)
    }

    /// `∫_τ^∞ (u − τ) φ(u) du`.
    pub fn centered_first(&self, tau: f64) -> f64 {
        (self.m1 - tau * self.m0).max(0.0)
    }
}

/// Closed forms: `M0 = erfc(τ/√2)`, `M1 = φ(τ)`, `M2 = τ·φ(τ) + erfc(τ/√2)`.
pub fn gaussian_tail_moments(tau: f64) -> Result<TailMoments> {
    if !(tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be >= 0, got {tau}")));
    }
    if tau == f64::INFINITY {
        return Ok(TailMoments {
            m0: 0.0,
            m1: 0.0,
            m2: 0.0,
        });
    }
    let m0 = libm::erfc(tau * FRAC_1_SQRT_2);
    let m1 = folded_density(tau);
    let m2 = tau * m1 + m0;
    Ok(TailMoments { m0, m1, m2 })
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(&f, a, b, fa, fm, fb, whole, tol, max_depth)
}

/// `∫_lo^∞ f(u) φ(u) du` by adaptive Simpson, truncated where the density
/// is below double precision.
pub fn folded_tail_quadrature<F: Fn(f64) -> f64>(f: F, lo: f64, tol: f64) -> f64 {
    let hi = lo.max(0.0) + 40.0;
    // Split so that the bulk of the mass is resolved before the long tail.
    let mid = lo.max(0.0) + 8.0;
    let g = |u: f64| f(u) * folded_density(u);
    adaptive_simpson(g, lo, mid, 0.5 * tol, 50) + adaptive_simpson(g, mid, hi, 0.5 * tol, 50)
}

/// Brent's method on a bracketing interval `[a, b]` with `f(a)·f(b) ≤ 0`.
/// Stops when the bracket is narrower than `xtol` or `f` vanishes.
pub fn brent_root<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, xtol: f64, max_iter: usize) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::InvalidArgument(format!(
            "root not bracketed: f({a}) = {fa}, f({b}) = {fb}"
        )));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Err(Error::InvalidArgument(format!(
        "brent_root did not converge in {max_iter} iterations"
    )))
}

/// Golden-section search for the minimum of a unimodal `f` on `[a, b]`.
/// Returns `(argmin, min)`.
pub fn golden_section_min<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, xtol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > xtol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    // The endpoints are candidates too: constrained minima sit on the boundary.
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    for x in [a, b] {
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}
