use phasekit_core::geometry::{
    build_family, AtomVector, IntervalAtom, Objective, Prior, SeparableFamily, SetLabel, SignalVariant, SparseSignal,
};
use phasekit_core::statdim::{
    exact_j, mc_statdim_exact, minimize_j, psi_value, statdim_bounds, transition_window, BoundVariant, MinimizeOptions,
    PsiVariant,
};
use proptest::prelude::*;

fn unit_signal(n: usize, s: usize, variant: SignalVariant) -> SparseSignal {
    let v = (0..n).map(|i| if i < s { 1.0 } else { 0.0 }).collect();
    SparseSignal::new(v, variant).unwrap()
}

fn sampled() -> MinimizeOptions {
    MinimizeOptions {
        closed_form_single: false,
        ..MinimizeOptions::default()
    }
}

#[test]
fn recipe_on_nonneg_family_matches_psi2() {
    let (n, s) = (128, 16);
    let family = build_family(
        &unit_signal(n, s, SignalVariant::Nonnegative),
        Objective::L1,
        &[Prior::Nonneg],
    )
    .unwrap();
    let est = minimize_j(&family, 100_000, 21, &sampled()).unwrap();
    let (psi, tau) = psi_value(s as f64 / n as f64, PsiVariant::Psi2).unwrap();
    let se = est.std_error() / n as f64;
    assert!(
        (est.value / n as f64 - psi).abs() <= 3.0 * se + 1e-3,
        "{} vs {psi}",
        est.value / n as f64
    );
    assert!((est.tau_star[0] - tau).abs() <= 5e-2, "{:?} vs {tau}", est.tau_star);
}

#[test]
fn exact_never_exceeds_recipe() {
    for (n, s, priors, variant) in [
        (20, 3, &[][..], SignalVariant::Signed),
        (20, 3, &[Prior::Nonneg][..], SignalVariant::Nonnegative),
        (16, 5, &[Prior::L2Ball][..], SignalVariant::Signed),
    ] {
        let family = build_family(&unit_signal(n, s, variant), Objective::L1, priors).unwrap();
        let recipe = minimize_j(&family, 20_000, 22, &sampled()).unwrap();
        let exact = mc_statdim_exact(&family, 20_000, 22).unwrap();
        let se = recipe.std_error().hypot(exact.std_error());
        assert!(
            exact.value <= recipe.value + 3.0 * se,
            "{priors:?}: {} > {}",
            exact.value,
            recipe.value
        );
    }
}

#[test]
fn ball_prior_moves_the_dimension_by_at_most_one_half() {
    for (n, s) in [(24, 2), (24, 8)] {
        let signal = unit_signal(n, s, SignalVariant::Signed);
        let plain = build_family(&signal, Objective::L1, &[]).unwrap();
        let ball = build_family(&signal, Objective::L1, &[Prior::L2Ball]).unwrap();
        let a = mc_statdim_exact(&plain, 40_000, 23).unwrap();
        let b = mc_statdim_exact(&ball, 40_000, 23).unwrap();
        let se = a.std_error().hypot(b.std_error());
        assert!(
            (a.value - b.value).abs() <= 0.5 + 3.0 * se,
            "s={s}: {} vs {}",
            a.value,
            b.value
        );
        // The ball can only shrink the descent cone.
        assert!(b.value <= a.value + 3.0 * se);
    }
}

#[test]
fn point_family_dimension_is_n() {
    let point = AtomVector::new(SetLabel::Custom("zero".into()), vec![IntervalAtom::Point(0.0); 7]);
    let zero = SeparableFamily::new(7, vec![], vec![point]).unwrap();
    let est = mc_statdim_exact(&zero, 50_000, 24).unwrap();
    assert!((est.value - 7.0).abs() <= 3.0 * est.std_error());
}

#[test]
fn window_half_widths() {
    let w = transition_window(0.5, 1, 4.0 / std::f64::consts::E).unwrap();
    assert!((w.half_width() - 8f64.sqrt()).abs() < 1e-12);
    let w = transition_window(50.0, 100, 0.04).unwrap();
    assert!((w.half_width() - 60.697).abs() < 1e-3);
}

#[test]
fn bounds_bracket_the_exact_estimate() {
    for (variant, bv, priors) in [
        (SignalVariant::Signed, BoundVariant::L1Plain, &[][..]),
        (SignalVariant::Nonnegative, BoundVariant::L1Nonneg, &[Prior::Nonneg][..]),
    ] {
        let family = build_family(&unit_signal(64, 8, variant), Objective::L1, priors).unwrap();
        let exact = mc_statdim_exact(&family, 20_000, 25).unwrap();
        let (lower, upper) = statdim_bounds(8, 64, bv).unwrap();
        let slack = 3.0 * exact.std_error();
        assert!(
            exact.value >= lower - slack && exact.value <= upper + slack,
            "{bv:?}: {} not in [{lower}, {upper}]",
            exact.value
        );
    }
}

proptest! {
    #[test]
    fn closed_form_j_is_midpoint_convex(n in 2usize..40, frac in 0.05..0.95f64, a in 0.0..4.0f64, b in 0.0..4.0f64) {
        let s = ((n as f64 * frac).ceil() as usize).clamp(1, n);
        let family = build_family(&unit_signal(n, s, SignalVariant::Nonnegative), Objective::L1, &[Prior::Nonneg]).unwrap();
        let mid = exact_j(&family, &[0.5 * (a + b)]).unwrap();
        let avg = 0.5 * (exact_j(&family, &[a]).unwrap() + exact_j(&family, &[b]).unwrap());
        prop_assert!(mid <= avg + 1e-12);
    }
}
