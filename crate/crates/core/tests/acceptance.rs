//! Acceptance criteria. Run with `cargo test --release --test acceptance`;
//! pass criterion numbers (e.g. `-- 4 10`) to run a subset.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use phasekit_core::experiments::{
    find_crossing, run_grid, AdaptiveSweep, Crossing, ExperimentVariant, PhaseGridConfig, RunOptions,
};
use phasekit_core::geometry::{
    build_family, AtomVector, IntervalAtom, Objective, Prior, SeparableFamily, SetLabel, SignalVariant, SparseSignal,
};
use phasekit_core::numeric::gaussian_tail_moments;
use phasekit_core::solvers::{lp_oracle_small, solve_recovery, AdmmParams, Constraint, RecoveryProblem};
use phasekit_core::statdim::{
    mc_j, mc_j_gradient, mc_statdim_exact, minimize_j, psi_value, MinimizeOptions, PsiVariant,
};
use phasekit_core::verify::{random_family, random_signal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn unit_signal(n: usize, s: usize, variant: SignalVariant) -> SparseSignal {
    let v = (0..n).map(|i| if i < s { 1.0 } else { 0.0 }).collect();
    SparseSignal::new(v, variant).unwrap()
}

// ---------------------------------------------------------------- oracles

/// Plain adaptive Simpson, independent of the library's quadrature.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}

/// `∫_τ^∞ h(u)·√(2/π)·e^{−u²/2} du`, summed over unit panels up to τ + 40.
fn tail_integral(h: impl Fn(f64) -> f64, tau: f64) -> f64 {
    let w = |u: f64| h(u) * (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * u * u).exp();
    (0..40)
        .map(|j| simpson(&w, tau + j as f64, tau + j as f64 + 1.0, 1e-16))
        .sum()
}

// ---------------------------------------------------------------- criteria

fn c1_curves() -> Outcome {
    let mut prev = (0.0, 0.0);
    let mut min_gap = f64::INFINITY;
    for i in 1..=99 {
        let rho = i as f64 / 100.0;
        let (p1, _) = psi_value(rho, PsiVariant::Psi1).map_err(err)?;
        let (p2, _) = psi_value(rho, PsiVariant::Psi2).map_err(err)?;
        if p2 > p1 || p1 < prev.0 || p2 < prev.1 {
            return Err(format!(
                "ordering or monotonicity broken at rho = {rho}: psi1 {p1}, psi2 {p2}"
            ));
        }
        if rho <= 0.9 {
            min_gap = min_gap.min(p1 - p2);
        }
        prev = (p1, p2);
    }
    for v in [PsiVariant::Psi1, PsiVariant::Psi2] {
        let (at0, at1) = (psi_value(0.0, v).map_err(err)?.0, psi_value(1.0, v).map_err(err)?.0);
        if at0 != 0.0 || at1 != 1.0 {
            return Err(format!("{v:?} endpoints {at0}, {at1}"));
        }
    }
    ensure(
        min_gap >= 1e-6,
        format!("min psi1 - psi2 for rho <= 0.9 is {min_gap:.3e}; endpoints exact"),
    )
}

fn c2_tail_moments() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..=80 {
        let tau = i as f64 / 10.0;
        let m = gaussian_tail_moments(tau).map_err(err)?;
        let q = [
            tail_integral(|_| 1.0, tau),
            tail_integral(|u| u, tau),
            tail_integral(|u| u * u, tau),
        ];
        for (c, q) in [m.m0, m.m1, m.m2].into_iter().zip(q) {
            worst = worst.max((c - q).abs());
        }
    }
    ensure(worst <= 1e-10, format!("max abs error {worst:.2e}"))
}

fn c3_stationary() -> Outcome {
    let mut worst = 0.0f64;
    for (variant, weight) in [(PsiVariant::Psi1, 1.0), (PsiVariant::Psi2, 0.5)] {
        for rho in [0.05, 0.125, 0.25, 0.5] {
            let (_, tau) = psi_value(rho, variant).map_err(err)?;
            // d/dτ [ρ(1+τ²) + w(1−ρ)∫_τ^∞(u−τ)²φ] = 0, divided by 2τ.
            let residual = rho - weight * (1.0 - rho) * tail_integral(|u| u / tau - 1.0, tau);
            worst = worst.max(residual.abs());
        }
    }
    ensure(worst <= 1e-10, format!("max residual {worst:.2e}"))
}

fn c4_mc_consistency() -> Outcome {
    let (n, s) = (128, 16);
    let mut parts = vec![];
    let mut ok = true;
    for (variant, psi, priors) in [
        (SignalVariant::Nonnegative, PsiVariant::Psi2, &[Prior::Nonneg][..]),
        (SignalVariant::Signed, PsiVariant::Psi1, &[][..]),
    ] {
        let family = build_family(&unit_signal(n, s, variant), Objective::L1, priors).map_err(err)?;
        let (value, tau) = psi_value(s as f64 / n as f64, psi).map_err(err)?;
        let est = mc_j(&family, &[tau], 100_000, 4).map_err(err)?;
        let z = (est.mean - n as f64 * value) / est.std_error;
        ok &= z.abs() <= 3.0;
        parts.push(format!(
            "{psi:?}: {:.3} vs {:.3} ({z:+.2} se)",
            est.mean,
            n as f64 * value
        ));
    }
    ensure(ok, parts.join("; "))
}

fn c5_half_line() -> Outcome {
    let family = SeparableFamily::new(
        1,
        vec![],
        vec![AtomVector::new(
            SetLabel::NonnegNormalCone,
            vec![IntervalAtom::HalfLineBelow(0.0)],
        )],
    )
    .map_err(err)?;
    let est = mc_statdim_exact(&family, 1_000_000, 5).map_err(err)?;
    let se = est.std_error();
    ensure(
        (est.value - 0.5).abs() <= 3.0 * se,
        format!("{:.5} ± {se:.1e}", est.value),
    )
}

fn mc_options() -> MinimizeOptions {
    MinimizeOptions {
        closed_form_single: false,
        ..MinimizeOptions::default()
    }
}

fn c6_sandwich() -> Outcome {
    let (n, s) = (32, 4);
    let family = build_family(
        &unit_signal(n, s, SignalVariant::Nonnegative),
        Objective::L1,
        &[Prior::Nonneg],
    )
    .map_err(err)?;
    let recipe = minimize_j(&family, 100_000, 6, &mc_options()).map_err(err)?;
    let exact = mc_statdim_exact(&family, 100_000, 6).map_err(err)?;
    let gap = recipe.value - exact.value;
    let se = recipe.std_error().hypot(exact.std_error());
    let bound = 2.0 * (n as f64 / s as f64).sqrt() + 3.0 * se;
    ensure(
        gap >= 0.0 && gap <= bound,
        format!(
            "recipe {:.3}, exact {:.3}, gap {gap:.3} in [0, {bound:.3}]",
            recipe.value, exact.value
        ),
    )
}

fn c7_ball_scale_vanishes() -> Outcome {
    let n = 64;
    let mut parts = vec![];
    let mut ok = true;
    for s in [4, 16] {
        let signal = unit_signal(n, s, SignalVariant::Signed);
        let with_ball = build_family(&signal, Objective::L1, &[Prior::L2Ball]).map_err(err)?;
        let plain = build_family(&signal, Objective::L1, &[]).map_err(err)?;
        let i_ball = with_ball
            .scaled()
            .iter()
            .position(|set| set.label == SetLabel::L2Subdifferential)
            .ok_or("no l2 set in family")?;
        let j1 = minimize_j(&with_ball, 100_000, 7, &mc_options()).map_err(err)?;
        let j2 = minimize_j(&plain, 100_000, 7, &mc_options()).map_err(err)?;
        let (t_ball, t_l1) = (j1.tau_star[i_ball], j1.tau_star[1 - i_ball]);
        let diff = (j1.value - j2.value).abs();
        let limit = 3.0 * j1.std_error().hypot(j2.std_error()) + 1e-3 * n as f64;
        ok &= t_ball <= 1e-3 * (1.0 + t_l1) && diff <= limit;
        parts.push(format!(
            "s={s}: tau_ball {t_ball:.1e}, tau_l1 {t_l1:.3}, |J1-J2| {diff:.2e} <= {limit:.2e}"
        ));
    }
    ensure(ok, parts.join("; "))
}

fn c8_additivity() -> Outcome {
    let zero = IntervalAtom::Point(0.0);
    let below = IntervalAtom::HalfLineBelow(0.0);
    let label = || SetLabel::Custom("coordinate".into());
    // Polar of R₊e₁ + R₊e₂ written as the sum of the two polar half-lines.
    let half_lines = SeparableFamily::new(
        2,
        vec![],
        vec![
            AtomVector::new(label(), vec![below, zero]),
            AtomVector::new(label(), vec![zero, below]),
        ],
    )
    .map_err(err)?;
    // span(e₁, e₂, e₃) inside R⁵: its polar span(e₄, e₅) is the union of τ·[−1, 1]².
    let unit = IntervalAtom::boxed(-1.0, 1.0).map_err(err)?;
    let subspace = SeparableFamily::new(
        5,
        vec![AtomVector::new(label(), vec![zero, zero, zero, unit, unit])],
        vec![],
    )
    .map_err(err)?;
    let a = mc_statdim_exact(&half_lines, 200_000, 8).map_err(err)?;
    let b = mc_statdim_exact(&subspace, 200_000, 8).map_err(err)?;
    let (za, zb) = ((a.value - 1.0) / a.std_error(), (b.value - 3.0) / b.std_error());
    ensure(
        za.abs() <= 3.0 && zb.abs() <= 3.0,
        format!(
            "half-lines {:.4} ({za:+.2} se), subspace {:.4} ({zb:+.2} se)",
            a.value, b.value
        ),
    )
}

fn c9_solver() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut worst_obj, mut worst_feas) = (0.0f64, 0.0f64);
    for case in 0..200 {
        let n = rng.random_range(2..=8);
        let m = rng.random_range(1..=n);
        let s = rng.random_range(1..=n);
        let nonneg = case % 2 == 1;
        let variant = if nonneg {
            SignalVariant::Nonnegative
        } else {
            SignalVariant::Signed
        };
        let x = random_signal(&mut rng, n, s, variant).map_err(err)?;
        let a = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = (&a * DVector::from_column_slice(x.values())).as_slice().to_vec();
        let constraints = if nonneg { vec![Constraint::Nonneg] } else { vec![] };
        let problem = RecoveryProblem::new(a, y, constraints).map_err(err)?;
        let result = solve_recovery(&problem, &AdmmParams::default()).map_err(err)?;
        if !result.converged() {
            return Err(format!("instance {case} (m={m}, n={n}) did not converge"));
        }
        let (oracle, _) = lp_oracle_small(&problem).map_err(err)?;
        worst_obj = worst_obj.max((result.objective() - oracle).abs());
        let xh = DVector::from_column_slice(&result.x_hat);
        let mut feas = (problem.a() * &xh - problem.y()).norm();
        if nonneg {
            feas = feas.max(-xh.min());
        }
        worst_feas = worst_feas.max(feas);
    }
    ensure(
        worst_obj <= 1e-6 && worst_feas <= 1e-7,
        format!("200 instances: objective gap {worst_obj:.2e}, infeasibility {worst_feas:.2e}"),
    )
}

fn c10_phase_transition() -> Outcome {
    let s_values = vec![8, 16, 32, 64];
    let n = 128;
    let mut m50 = std::collections::HashMap::new();
    let mut lines = vec![];
    let mut ok = true;
    for variant in ExperimentVariant::ALL {
        let mut config = PhaseGridConfig::new(n, s_values.clone(), 50, variant, 2024);
        config.sweep = Some(AdaptiveSweep::default());
        let grid = run_grid(&config, &RunOptions::default()).map_err(err)?;
        let psi = variant.bound_variant().psi();
        let mut row = vec![];
        for &s in &s_values {
            let predicted = n as f64 * psi_value(s as f64 / n as f64, psi).map_err(err)?.0;
            let crossing = find_crossing(&grid, s).map_err(err)?;
            let Crossing::At(m) = crossing else {
                ok = false;
                row.push(format!("s={s}: {crossing:?}"));
                continue;
            };
            ok &= (m - predicted).abs() <= 10.0;
            m50.insert((variant, s), m);
            row.push(format!("s={s}: {m:.1} vs {predicted:.1}"));
        }
        lines.push(format!("{} [{}]", variant.name(), row.join(", ")));
    }
    let mut worst_pair = 0.0f64;
    for &s in &s_values {
        match (
            m50.get(&(ExperimentVariant::L1Plain, s)),
            m50.get(&(ExperimentVariant::L1L2Ball, s)),
        ) {
            (Some(a), Some(b)) => worst_pair = worst_pair.max((a - b).abs()),
            _ => ok = false,
        }
    }
    ok &= worst_pair <= 3.0;
    lines.push(format!("max |plain - l2ball| {worst_pair:.2}"));
    ensure(ok, lines.join("; "))
}

fn c11_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-4;
    let samples = 100_000;
    let mut worst = 0.0f64;
    for case in 0..20 {
        let family = random_family(&mut rng, 24).map_err(err)?;
        let tau: Vec<f64> = (0..family.num_scaled()).map(|_| rng.random_range(0.1..3.0)).collect();
        let seed = 1100 + case;
        let (grad, _) = mc_j_gradient(&family, &tau, samples, seed).map_err(err)?;
        let mut fd = vec![0.0; tau.len()];
        for i in 0..tau.len() {
            let (mut up, mut down) = (tau.clone(), tau.clone());
            up[i] += h;
            down[i] -= h;
            let jp = mc_j(&family, &up, samples, seed).map_err(err)?.mean;
            let jm = mc_j(&family, &down, samples, seed).map_err(err)?.mean;
            fd[i] = (jp - jm) / (2.0 * h);
        }
        let diff: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(if diff == 0.0 { 0.0 } else { diff / norm });
    }
    ensure(worst <= 1e-2, format!("max relative error {worst:.2e} over 20 cases"))
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn criteria() -> Vec<Criterion> {
    let secs = Duration::from_secs;
    vec![
        Criterion {
            id: 1,
            name: "psi curves ordered, monotone, exact endpoints",
            budget: secs(1),
            run: c1_curves,
        },
        Criterion {
            id: 2,
            name: "tail moments vs adaptive Simpson",
            budget: secs(1),
            run: c2_tail_moments,
        },
        Criterion {
            id: 3,
            name: "stationary equation residuals",
            budget: secs(1),
            run: c3_stationary,
        },
        Criterion {
            id: 4,
            name: "MC J at tau* vs n*psi",
            budget: secs(10),
            run: c4_mc_consistency,
        },
        Criterion {
            id: 5,
            name: "statistical dimension of a half-line",
            budget: secs(5),
            run: c5_half_line,
        },
        Criterion {
            id: 6,
            name: "recipe vs exact sandwich",
            budget: secs(30),
            run: c6_sandwich,
        },
        Criterion {
            id: 7,
            name: "l2-ball scale is zero at the optimum",
            budget: secs(60),
            run: c7_ball_scale_vanishes,
        },
        Criterion {
            id: 8,
            name: "additivity over orthogonal cones",
            budget: secs(10),
            run: c8_additivity,
        },
        Criterion {
            id: 9,
            name: "ADMM vs LP oracle",
            budget: secs(60),
            run: c9_solver,
        },
        Criterion {
            id: 10,
            name: "empirical phase transitions",
            budget: secs(15 * 60),
            run: c10_phase_transition,
        },
        Criterion {
            id: 11,
            name: "MC gradient vs finite differences",
            budget: secs(30),
            run: c11_gradients,
        },
    ]
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria() {
        if !selected.is_empty() && !selected.contains(&c.id) {
            continue;
        }
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let (passed, detail) = match outcome {
            Ok(d) if elapsed <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over time budget {:?}", c.budget)),
            Err(d) => (false, d),
        };
        failed += usize::from(!passed);
        println!(
            "{} criterion {:>2} ({:.2}s) {}: {detail}",
            if passed { "PASS" } else { "FAIL" },
            c.id,
            elapsed.as_secs_f64(),
            c.name
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
