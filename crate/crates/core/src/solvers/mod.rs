//! Recovery programs `min ‖x‖₁ s.t. Ax = y` with optional `‖x‖₂ ≤ r` and
//! `x ≥ 0`, solved by ADMM.
//!
//! The splitting has two blocks: the affine set `{x : Ax = y}` (projection
//! through a cached Cholesky factor of `AAᵀ`) and the composite term
//! `‖z‖₁ + I_ball(z) + I_{≥0}(z)`, whose proximal map is closed form:
//! soft-threshold (one-sided when nonnegative), then rescale onto the ball.
//! The ball projection preserves signs and zeros, which is why composing the
//! two maps gives the exact prox of the sum.
//!
//! Optionally the iteration is polished: once the support of the prox
//! iterate stops changing, the reduced system `A_S x_S = y` is solved
//! exactly and accepted if a dual certificate proves it optimal. Plain
//! ADMM only converges linearly on these LPs, and polishing shortcuts the
//! long tail whenever the solution is a vertex.

mod lp_oracle;

pub use lp_oracle::lp_oracle_small;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::geometry::Objective;

/// `‖x̂ − x*‖₂ ≤ SUCCESS_TOL` counts as exact recovery.
pub const SUCCESS_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    L2Ball { radius: f64 },
    Nonneg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryProblem {
    a: DMatrix<f64>,
    y: DVector<f64>,
    objective: Objective,
    constraints: Vec<Constraint>,
}

impl RecoveryProblem {
    pub fn new(a: DMatrix<f64>, y: Vec<f64>, constraints: Vec<Constraint>) -> Result<Self> {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return Err(Error::InvalidArgument(format!("sensing matrix is {m}x{n}")));
        }
        if m > n {
            return Err(Error::InvalidArgument(format!(
                "more measurements than unknowns ({m} > {n})"
            )));
        }
        if y.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: y.len(),
            });
        }
        if a.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite entry in A or y".into()));
        }
        let mut seen_ball = false;
        let mut seen_nonneg = false;
        for c in &constraints {
            match *c {
                Constraint::L2Ball { radius } => {
                    if !(radius > 0.0) || !radius.is_finite() {
                        return Err(Error::InvalidArgument(format!(
                            "l2 ball radius must be positive, got {radius}"
                        )));
                    }
                    if seen_ball {
                        return Err(Error::InvalidArgument("duplicate l2 ball".into()));
                    }
                    seen_ball = true;
                }
                Constraint::Nonneg => {
                    if seen_nonneg {
                        return Err(Error::InvalidArgument("duplicate nonneg".into()));
                    }
                    seen_nonneg = true;
                }
            }
        }
        Ok(Self {
            a,
            y: DVector::from_vec(y),
            objective: Objective::L1,
            constraints,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn measurements(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn nonneg(&self) -> bool {
        self.constraints.contains(&Constraint::Nonneg)
    }

    pub fn ball_radius(&self) -> Option<f64> {
        self.constraints.iter().find_map(|c| match *c {
            Constraint::L2Ball { radius } => Some(radius),
            Constraint::Nonneg => None,
        })
    }
}

/// Euclidean projection onto `{x : Ax = y}`:
/// `x ↦ x + Aᵀ(AAᵀ)⁻¹(y − Ax)`.
#[derive(Debug, Clone)]
pub struct AffineProjector {
    a: DMatrix<f64>,
    y: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl AffineProjector {
    pub fn new(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        if y.len() != a.nrows() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: y.len(),
            });
        }
        let gram = a * a.transpose();
        let chol = Cholesky::new(gram).ok_or_else(|| Error::IllPosed("A Aᵀ is not positive definite".into()))?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        // cond(AAᵀ) = (hi/lo)² up to a modest factor.
        if !(lo > 0.0) || hi / lo > 1e7 {
            return Err(Error::IllPosed(format!(
                "A has (numerically) deficient row rank: Cholesky diagonal spans [{lo:e}, {hi:e}]"
            )));
        }
        Ok(Self {
            a: a.clone(),
            y: y.clone(),
            chol,
        })
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = x.clone();
        let mut work = DVector::zeros(self.a.nrows());
        self.project_into(x, &mut out, &mut work);
        out
    }

    /// Allocation-free projection; `work` must have length `m`.
    pub fn project_into(&self, x: &DVector<f64>, out: &mut DVector<f64>, work: &mut DVector<f64>) {
        work.copy_from(&self.y);
        work.gemv(-1.0, &self.a, x, 1.0);
        self.chol.solve_mut(work);
        out.copy_from(x);
        out.gemv_tr(1.0, &self.a, work, 1.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmParams {
    /// Initial penalty parameter.
    pub rho: f64,
    pub max_iters: usize,
    /// Bound on both the primal residual `‖x − z‖₂` and the dual residual
    /// `ρ‖z − z_prev‖₂`.
    pub feas_tol: f64,
    /// Bound on the objective gap `|‖x‖₁ − ‖z‖₁|` at termination.
    pub obj_tol: f64,
    /// Rebalance `ρ` when one residual dominates the other by 10×.
    pub adaptive_rho: bool,
    /// Try to finish early through an exact support solve (see module docs).
    pub polish: bool,
}

impl Default for AdmmParams {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iters: 50_000,
            feas_tol: 1e-7,
            obj_tol: 1e-6,
            adaptive_rho: false,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    /// The affine iterate; it satisfies `Ax = y` to rounding and lies within
    /// the primal residual of the constraint set.
    pub x_hat: Vec<f64>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub status: SolveStatus,
    /// The returned point came from a certified support solve.
    pub polished: bool,
}

impl RecoveryResult {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn objective(&self) -> f64 {
        self.x_hat.iter().map(|v| v.abs()).sum()
    }
}

fn composite_prox(v: &DVector<f64>, threshold: f64, nonneg: bool, radius: Option<f64>, out: &mut DVector<f64>) {
    for (o, &x) in out.iter_mut().zip(v.iter()) {
        *o = if nonneg {
            (x - threshold).max(0.0)
        } else if x > threshold {
            x - threshold
        } else if x < -threshold {
            x + threshold
        } else {
            0.0
        };
    }
    if let Some(r) = radius {
        let norm = out.norm();
        if norm > r {
            *out *= r / norm;
        }
    }
}

const POLISH_EVERY: usize = 25;

/// Solves `A_S x_S = y` on the support `S` of `z` and checks optimality
/// through `λ` with `A_Sᵀλ = sign(x_S)` and `|A_jᵀλ| ≤ 1` off the support
/// (`A_jᵀλ ≤ 1` under nonnegativity). `w ≈ Aᵀλ` is the ADMM estimate of the
/// subgradient, used to pick `λ` when `|S| < m`. The ball enters only as a
/// feasibility check, so a certificate proves optimality for the relaxed
/// program and hence for the constrained one.
fn polish(
    problem: &RecoveryProblem,
    projector: &AffineProjector,
    z: &DVector<f64>,
    w: &DVector<f64>,
    feas_tol: f64,
) -> Option<(DVector<f64>, f64)> {
    let a = problem.a();
    let y = problem.y();
    let (m, n) = a.shape();
    let support: Vec<usize> = (0..n).filter(|&i| z[i] != 0.0).collect();
    let k = support.len();
    if k == 0 || k > m {
        return None;
    }
    let a_s = a.select_columns(&support);
    let qr = a_s.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let (lo, hi) = r.diagonal().iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| {
        (lo.min(d.abs()), hi.max(d.abs()))
    });
    if !(lo > 1e-10 * hi) {
        return None;
    }
    let x_s = r.solve_upper_triangular(&(q.transpose() * y))?;
    let scale = 1.0 + y.norm();
    if (&a_s * &x_s - y).norm() > 1e-10 * scale {
        return None;
    }
    let signs: DVector<f64> = DVector::from_iterator(k, support.iter().map(|&i| z[i].signum()));
    if x_s.iter().zip(signs.iter()).any(|(v, s)| v * s <= 0.0) {
        return None;
    }

    let mut lambda = a * w;
    projector.chol.solve_mut(&mut lambda);
    let gap = &signs - a_s.transpose() * &lambda;
    let t = r.transpose().solve_lower_triangular(&gap)?;
    lambda += q * t;
    let corr = a.transpose() * &lambda;
    let nonneg = problem.nonneg();
    let mut on_support = vec![false; n];
    for &i in &support {
        on_support[i] = true;
    }
    let violation = (0..n)
        .filter(|&j| !on_support[j])
        .map(|j| if nonneg { corr[j] - 1.0 } else { corr[j].abs() - 1.0 })
        .fold(0.0f64, f64::max);
    if violation > 1e-9 {
        return None;
    }

    let mut x = DVector::zeros(n);
    for (&i, &v) in support.iter().zip(x_s.iter()) {
        x[i] = v;
    }
    if let Some(radius) = problem.ball_radius() {
        if x.norm() > radius + feas_tol {
            return None;
        }
    }
    Some((x, violation))
}

/// Solves the recovery program with a fresh projector.
pub fn solve_recovery(problem: &RecoveryProblem, params: &AdmmParams) -> Result<RecoveryResult> {
    let projector = AffineProjector::new(&problem.a, &problem.y)?;
    solve_with_projector(problem, &projector, params)
}

/// Runs ADMM from `z = u = 0`.
pub fn solve_with_projector(
    problem: &RecoveryProblem,
    projector: &AffineProjector,
    params: &AdmmParams,
) -> Result<RecoveryResult> {
    if !(params.rho > 0.0) || !(params.feas_tol > 0.0) || params.max_iters == 0 {
        return Err(Error::InvalidArgument(format!("invalid ADMM parameters {params:?}")));
    }
    let n = problem.dim();
    let nonneg = problem.nonneg();
    let radius = problem.ball_radius();

    let mut rho = params.rho;
    let mut x = DVector::zeros(n);
    let mut z = DVector::zeros(n);
    let mut z_prev = DVector::zeros(n);
    let mut u = DVector::<f64>::zeros(n);
    let mut v = DVector::zeros(n);
    let mut work = DVector::zeros(problem.measurements());

    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut last_support: Vec<bool> = Vec::new();
    for it in 1..=params.max_iters {
        // x-update: project z − u onto the affine set.
        v.copy_from(&z);
        v -= &u;
        projector.project_into(&v, &mut x, &mut work);

        // z-update: composite prox at x + u.
        std::mem::swap(&mut z, &mut z_prev);
        v.copy_from(&x);
        v += &u;
        composite_prox(&v, 1.0 / rho, nonneg, radius, &mut z);

        // u-update and residuals.
        let mut p2 = 0.0;
        let mut d2 = 0.0;
        for i in 0..n {
            let r = x[i] - z[i];
            u[i] += r;
            p2 += r * r;
            let dz = z[i] - z_prev[i];
            d2 += dz * dz;
        }
        primal = p2.sqrt();
        dual = rho * d2.sqrt();

        let converged = primal <= params.feas_tol
            && dual <= params.feas_tol
            && (x.lp_norm(1) - z.lp_norm(1)).abs() <= params.obj_tol;
        let attempt_polish = params.polish && (converged || it % POLISH_EVERY == 0);
        if attempt_polish {
            let support: Vec<bool> = z.iter().map(|&v| v != 0.0).collect();
            if converged || support == last_support {
                let w = &u * rho;
                if let Some((xp, violation)) = polish(problem, projector, &z, &w, params.feas_tol) {
                    let residual = (problem.a() * &xp - problem.y()).norm();
                    return Ok(RecoveryResult {
                        x_hat: xp.as_slice().to_vec(),
                        iterations: it,
                        primal_residual: residual,
                        dual_residual: violation,
                        status: SolveStatus::Converged,
                        polished: true,
                    });
                }
            }
            last_support = support;
        }
        if converged {
            return Ok(RecoveryResult {
                x_hat: x.as_slice().to_vec(),
                iterations: it,
                primal_residual: primal,
                dual_residual: dual,
                status: SolveStatus::Converged,
                polished: false,
            });
        }

        if params.adaptive_rho && it % 10 == 0 {
            if primal > 10.0 * dual {
                rho *= 2.0;
                u *= 0.5;
            } else if dual > 10.0 * primal {
                rho *= 0.5;
                u *= 2.0;
            }
        }
    }
    Ok(RecoveryResult {
        x_hat: x.as_slice().to_vec(),
        iterations: params.max_iters,
        primal_residual: primal,
        dual_residual: dual,
        status: SolveStatus::MaxIters,
        polished: false,
    })
}

/// Exact recovery test `‖x̂ − x*‖₂ ≤ 10⁻⁴`; the boundary counts as success.
pub fn check_success(x_hat: &[f64], x_star: &[f64]) -> Result<bool> {
    if x_hat.len() != x_star.len() {
        return Err(Error::DimensionMismatch {
            expected: x_star.len(),
            got: x_hat.len(),
        });
    }
    let d2: f64 = x_hat.iter().zip(x_star).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(d2 <= SUCCESS_TOL * SUCCESS_TOL)
}
