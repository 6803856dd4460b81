//! Self-checks run by `phasekit verify`: every closed form and fast path is
//! compared against an independent slow computation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::geometry::{
    build_family, minkowski_projection, Objective, Prior, ProjectionOracle, SeparableFamily, SignalVariant,
    SparseSignal,
};
use crate::numeric::{folded_tail_quadrature, gaussian_tail_moments};
use crate::rng;
use crate::solvers::{lp_oracle_small, solve_recovery, AdmmParams, Constraint, RecoveryProblem};
use crate::statdim::{exact_j, mc_j, mc_j_gradient, psi_value, stationary_lhs, stationary_solve, PsiVariant};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

/// Random signal of length `n` with `s` nonzeros at random positions.
pub fn random_signal(rng: &mut ChaCha8Rng, n: usize, s: usize, variant: SignalVariant) -> Result<SparseSignal> {
    let mut values = vec![0.0; n];
    let mut placed = 0;
    while placed < s {
        let i = rng.random_range(0..n);
        if values[i] == 0.0 {
            let v: f64 = rng.sample(StandardNormal);
            values[i] = match variant {
                SignalVariant::Signed => v,
                SignalVariant::Nonnegative => v.abs(),
            };
            if values[i] != 0.0 {
                placed += 1;
            }
        }
    }
    SparseSignal::new(values, variant)
}

/// Random family over the prior combinations, with `n ≤ max_n`.
pub fn random_family(rng: &mut ChaCha8Rng, max_n: usize) -> Result<SeparableFamily> {
    let n = rng.random_range(1..=max_n);
    let s = rng.random_range(1..=n);
    let kind = rng.random_range(0..4);
    let variant = if kind >= 2 {
        SignalVariant::Nonnegative
    } else {
        SignalVariant::Signed
    };
    let signal = random_signal(rng, n, s, variant)?;
    let priors: &[Prior] = match kind {
        0 => &[],
        1 => &[Prior::L2Ball],
        2 => &[Prior::Nonneg],
        _ => &[Prior::L2Ball, Prior::Nonneg],
    };
    build_family(&signal, Objective::L1, priors)
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn check_tail_moments() -> CheckResult {
    let mut worst = 0.0f64;
    for i in 0..=80 {
        let tau = i as f64 * 0.1;
        let m = gaussian_tail_moments(tau).expect("tau >= 0");
        let q = [
            folded_tail_quadrature(|_| 1.0, tau, 1e-13),
            folded_tail_quadrature(|u| u, tau, 1e-13),
            folded_tail_quadrature(|u| u * u, tau, 1e-13),
        ];
        for (c, q) in [m.m0, m.m1, m.m2].iter().zip(q) {
            worst = worst.max((c - q).abs());
        }
    }
    CheckResult::new(
        "tail moments vs adaptive quadrature",
        worst <= 1e-10,
        format!("max abs error {worst:.3e} over tau in [0, 8]"),
    )
}

fn check_stationary() -> CheckResult {
    let mut worst = 0.0f64;
    for variant in [PsiVariant::Psi1, PsiVariant::Psi2] {
        for rho in [0.05, 0.125, 0.25, 0.5] {
            let tau = match stationary_solve(rho, variant) {
                Ok(t) => t,
                Err(e) => return CheckResult::new("stationary equation roots", false, e.to_string()),
            };
            let rhs = folded_tail_quadrature(|u| u / tau - 1.0, tau, 1e-14);
            worst = worst.max((stationary_lhs(rho, variant) - rhs).abs());
        }
    }
    CheckResult::new(
        "stationary equation roots",
        worst <= 1e-10,
        format!("max back-substituted residual {worst:.3e}"),
    )
}

fn check_psi_curves() -> CheckResult {
    let grid: Vec<f64> = (1..=99).map(|i| i as f64 / 100.0).collect();
    let endpoint = |rho: f64, v: PsiVariant| psi_value(rho, v).map(|r| r.0).ok();
    let mut ok = [PsiVariant::Psi1, PsiVariant::Psi2]
        .into_iter()
        .all(|v| endpoint(0.0, v) == Some(0.0) && endpoint(1.0, v) == Some(1.0));
    let mut prev = (0.0, 0.0);
    let mut min_gap = f64::INFINITY;
    for &rho in &grid {
        let (p1, _) = psi_value(rho, PsiVariant::Psi1).unwrap_or((f64::NAN, 0.0));
        let (p2, _) = psi_value(rho, PsiVariant::Psi2).unwrap_or((f64::NAN, 0.0));
        ok &= p2 <= p1 && p1 >= prev.0 && p2 >= prev.1;
        if rho <= 0.9 {
            min_gap = min_gap.min(p1 - p2);
        }
        prev = (p1, p2);
    }
    ok &= min_gap >= 1e-6;
    CheckResult::new(
        "psi curve ordering and monotonicity",
        ok,
        format!("min psi1 - psi2 on rho <= 0.9: {min_gap:.3e}"),
    )
}

fn check_projection_oracle(cases: usize) -> Result<CheckResult> {
    let mut rng = rng::stream(1, &[rng::TAG_VERIFY, 1]);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let family = random_family(&mut rng, 8)?;
        let tau: Vec<f64> = (0..family.num_scaled()).map(|_| rng.random_range(0.0..3.0)).collect();
        let g = gaussian_vec(&mut rng, family.dim(), 2.0);
        let (d, _) = family.dist_sq_and_project(&tau, &g)?;
        let sets = family.oracles(&tau)?;
        let refs: Vec<&dyn ProjectionOracle> = sets.iter().map(|s| s as &dyn ProjectionOracle).collect();
        let (oracle, _) = minkowski_projection(&refs, &g, 10_000, 1e-15)?;
        worst = worst.max((d - oracle).abs());
    }
    Ok(CheckResult::new(
        "separable distance vs alternating projections",
        worst <= 1e-8,
        format!("max abs difference {worst:.3e} over {cases} cases"),
    ))
}

fn check_gradients(cases: usize, samples: usize) -> Result<CheckResult> {
    let mut rng = rng::stream(1, &[rng::TAG_VERIFY, 2]);
    let h = 1e-4;
    let mut worst = 0.0f64;
    for case in 0..cases {
        let family = random_family(&mut rng, 24)?;
        let tau: Vec<f64> = (0..family.num_scaled()).map(|_| rng.random_range(0.1..3.0)).collect();
        let seed = 100 + case as u64;
        let (grad, _) = mc_j_gradient(&family, &tau, samples, seed)?;
        let mut fd = vec![0.0; tau.len()];
        for i in 0..tau.len() {
            let mut up = tau.clone();
            let mut down = tau.clone();
            up[i] += h;
            down[i] -= h;
            let jp = mc_j(&family, &up, samples, seed)?.mean;
            let jm = mc_j(&family, &down, samples, seed)?.mean;
            fd[i] = (jp - jm) / (2.0 * h);
        }
        let err: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        worst = worst.max(err / scale);
    }
    Ok(CheckResult::new(
        "MC gradient vs common-seed finite differences",
        worst <= 1e-2,
        format!("max relative error {worst:.3e} over {cases} cases at {samples} samples"),
    ))
}

fn check_mc_vs_exact(samples: usize) -> Result<CheckResult> {
    let mut rng = rng::stream(1, &[rng::TAG_VERIFY, 3]);
    let mut worst = 0.0f64;
    for case in 0..5 {
        let family = random_family(&mut rng, 32)?;
        let tau: Vec<f64> = (0..family.num_scaled()).map(|_| rng.random_range(0.0..2.5)).collect();
        let exact = exact_j(&family, &tau)?;
        let est = mc_j(&family, &tau, samples, 200 + case)?;
        worst = worst.max((est.mean - exact).abs() / est.std_error);
    }
    Ok(CheckResult::new(
        "MC J vs closed-form J",
        worst <= 4.0,
        format!("max deviation {worst:.2} standard errors over 5 families"),
    ))
}

fn check_admm_vs_lp(cases: usize) -> Result<CheckResult> {
    let mut rng = rng::stream(1, &[rng::TAG_VERIFY, 4]);
    let mut worst_obj = 0.0f64;
    let mut worst_feas = 0.0f64;
    let mut failures = 0;
    for case in 0..cases {
        let n = rng.random_range(2..=8);
        let m = rng.random_range(1..=n);
        let s = rng.random_range(1..=n);
        let nonneg = case % 2 == 1;
        let variant = if nonneg {
            SignalVariant::Nonnegative
        } else {
            SignalVariant::Signed
        };
        let x = random_signal(&mut rng, n, s, variant)?;
        let a = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = (&a * DVector::from_column_slice(x.values())).as_slice().to_vec();
        let constraints = if nonneg { vec![Constraint::Nonneg] } else { vec![] };
        let problem = RecoveryProblem::new(a, y, constraints)?;
        let result = solve_recovery(&problem, &AdmmParams::default())?;
        let (oracle, _) = lp_oracle_small(&problem)?;
        if !result.converged() {
            failures += 1;
            continue;
        }
        worst_obj = worst_obj.max((result.objective() - oracle).abs());
        let xh = DVector::from_column_slice(&result.x_hat);
        let mut feas = (problem.a() * &xh - problem.y()).norm();
        if nonneg {
            feas = feas.max(-xh.min());
        }
        worst_feas = worst_feas.max(feas);
    }
    Ok(CheckResult::new(
        "ADMM vs LP vertex enumeration",
        failures == 0 && worst_obj <= 1e-6 && worst_feas <= 1e-7,
        format!(
            "{cases} instances: max objective gap {worst_obj:.3e}, max infeasibility {worst_feas:.3e}, {failures} non-converged"
        ),
    ))
}

/// Runs every check. `fast` shrinks case counts and sample sizes.
pub fn run_checks(fast: bool) -> Vec<CheckResult> {
    let (oracle_cases, grad_cases, grad_samples, mc_samples, lp_cases) = if fast {
        (30, 3, 20_000, 20_000, 40)
    } else {
        (200, 20, 100_000, 100_000, 200)
    };
    let wrap = |name: &'static str, r: Result<CheckResult>| {
        r.unwrap_or_else(|e| CheckResult::new(name, false, format!("error: {e}")))
    };
    vec![
        check_tail_moments(),
        check_stationary(),
        check_psi_curves(),
        wrap(
            "separable distance vs alternating projections",
            check_projection_oracle(oracle_cases),
        ),
        wrap(
            "MC gradient vs common-seed finite differences",
            check_gradients(grad_cases, grad_samples),
        ),
        wrap("MC J vs closed-form J", check_mc_vs_exact(mc_samples)),
        wrap("ADMM vs LP vertex enumeration", check_admm_vs_lp(lp_cases)),
    ]
}
