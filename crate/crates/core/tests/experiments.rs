use std::collections::BTreeMap;
use std::fs;

use phasekit_core::experiments::*;
use phasekit_core::Error;
use proptest::prelude::*;

fn small_config() -> PhaseGridConfig {
    PhaseGridConfig {
        m_values: vec![2, 5, 8, 12],
        ..PhaseGridConfig::new(12, vec![1, 3], 4, ExperimentVariant::L1Plain, 11)
    }
}

#[test]
fn interrupted_run_resumes_to_identical_grid() {
    let cfg = small_config();
    let full = run_grid(&cfg, &RunOptions::default()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let cp = dir.path().join("grid.ckpt");
    let opts = RunOptions {
        checkpoint: Some(&cp),
        max_new_cells: Some(3),
        ..Default::default()
    };
    let partial = run_grid(&cfg, &opts).unwrap();
    assert!(!partial.complete);
    assert_eq!(partial.cells.len(), 3);
    let saved = fs::read_to_string(&cp).unwrap();
    assert!(saved.starts_with(CHECKPOINT_HEADER));
    assert_eq!(saved.lines().filter(|l| l.starts_with("cell ")).count(), 3);

    let resumed = run_grid(
        &cfg,
        &RunOptions {
            checkpoint: Some(&cp),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(resumed.complete);
    assert_eq!(resumed.cells, full.cells);
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = small_config();
    let a = run_grid(&cfg, &RunOptions::default()).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| run_grid(&cfg, &RunOptions::default()).unwrap());
    assert_eq!(a.cells, b.cells);
}

#[test]
fn foreign_or_corrupt_checkpoint_needs_reset() {
    let dir = tempfile::tempdir().unwrap();
    let cp = dir.path().join("grid.ckpt");
    fs::write(&cp, "not a checkpoint\n").unwrap();
    let cfg = small_config();
    let opts = RunOptions {
        checkpoint: Some(&cp),
        ..Default::default()
    };
    assert!(matches!(run_grid(&cfg, &opts), Err(Error::CorruptCheckpoint { .. })));
    assert_eq!(fs::read_to_string(&cp).unwrap(), "not a checkpoint\n");

    let reset = RunOptions {
        checkpoint: Some(&cp),
        reset: true,
        ..Default::default()
    };
    let grid = run_grid(&cfg, &reset).unwrap();
    assert!(grid.complete);

    let other = PhaseGridConfig { seed: 12, ..cfg };
    assert!(matches!(run_grid(&other, &opts), Err(Error::CorruptCheckpoint { .. })));
}

#[test]
fn counts_are_conserved() {
    let grid = run_grid(&small_config(), &RunOptions::default()).unwrap();
    assert_eq!(grid.total_solves(), 2 * 4 * 4);
    for (&(m, _), c) in &grid.cells {
        assert!(c.successes + c.non_converged <= c.trials_run);
        if m == 12 {
            assert_eq!(c.successes, c.trials_run);
        }
    }
}

#[test]
fn adaptive_sweep_brackets_the_crossing() {
    let mut cfg = PhaseGridConfig::new(32, vec![4], 10, ExperimentVariant::L1Nonneg, 5);
    cfg.sweep = Some(AdaptiveSweep {
        coarse_stride: 4,
        fine_stride: 1,
        zeta: 0.5,
    });
    let grid = run_grid(&cfg, &RunOptions::default()).unwrap();
    assert!(grid.cells.len() < 32);
    let crossing = find_crossing(&grid, 4).unwrap();
    let m50 = crossing.at().expect("crossing inside the swept range");
    // The fine fill leaves no gap wider than 1 around the crossing.
    let ms: Vec<usize> = grid.column(4).iter().map(|(m, _)| *m).collect();
    let i = ms.partition_point(|&m| (m as f64) < m50);
    assert!(i > 0 && i < ms.len() && ms[i] - ms[i - 1] <= 1, "{ms:?} {m50}");
}

#[test]
fn outputs_for_a_small_grid() {
    let grid = run_grid(&small_config(), &RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let preds = theory_predictions(&grid.config).unwrap();
    let files = emit_outputs(&grid, &preds, &dir.path().join("out")).unwrap();
    let csv = fs::read_to_string(&files.grid_csv).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8);
    let curve = fs::read_to_string(&files.curve_csv).unwrap();
    assert_eq!(
        curve.lines().next().unwrap(),
        "s,m_theory_upper,m_theory_lower,m50_empirical"
    );
    assert_eq!(curve.lines().count(), 3);
    let svg = fs::read_to_string(&files.heatmap_svg).unwrap();
    assert_eq!(svg.matches("<rect class=\"cell").count(), 8);
}

fn grid_from_column(ms: &[usize], successes: &[usize], trials: usize) -> PhaseGrid {
    let n = *ms.iter().max().unwrap();
    let mut config = PhaseGridConfig::new(n, vec![1], trials, ExperimentVariant::L1Plain, 0);
    config.m_values = ms.to_vec();
    let cells: BTreeMap<_, _> = ms
        .iter()
        .zip(successes)
        .map(|(&m, &k)| {
            (
                (m, 1),
                CellRecord {
                    successes: k,
                    trials_run: trials,
                    non_converged: 0,
                    redraws: 0,
                    stream_id: 0,
                },
            )
        })
        .collect();
    PhaseGrid {
        config,
        cells,
        complete: true,
    }
}

#[test]
fn step_probabilities_cross_at_two_and_a_half() {
    let g = grid_from_column(&[1, 2, 3, 4], &[0, 0, 4, 4], 4);
    assert_eq!(find_crossing(&g, 1).unwrap(), Crossing::At(2.5));
    let g = grid_from_column(&[1, 2, 3], &[4, 4, 4], 4);
    assert!(matches!(
        find_crossing(&g, 1).unwrap(),
        Crossing::BelowRange { min_m: 1 }
    ));
    let g = grid_from_column(&[3], &[4], 4);
    assert!(find_crossing(&g, 1).is_err());
}

/// Isotonic regression by the max–min formula
/// `f_i = max_{j ≤ i} min_{k ≥ i} mean(y_j..=y_k)` (equal weights).
fn max_min_isotonic(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| {
            (0..=i)
                .map(|j| {
                    (i..n)
                        .map(|k| y[j..=k].iter().sum::<f64>() / (k - j + 1) as f64)
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

fn oracle_crossing(ms: &[usize], fit: &[f64]) -> f64 {
    // Pooled means of k/20 can land on ½ up to rounding.
    const EPS: f64 = 1e-12;
    match fit.iter().position(|&f| f >= 0.5 - EPS) {
        None => f64::INFINITY,
        Some(0) if fit[0] > 0.5 + EPS => f64::NEG_INFINITY,
        Some(0) => ms[0] as f64,
        Some(i) => {
            let t = (0.5 - fit[i - 1]) / (fit[i] - fit[i - 1]);
            ms[i - 1] as f64 + t * (ms[i] - ms[i - 1]) as f64
        }
    }
}

proptest! {
    #[test]
    fn crossing_matches_max_min_isotonic_oracle(successes in prop::collection::vec(0usize..=20, 2..12)) {
        let ms: Vec<usize> = (0..successes.len()).map(|i| 3 + 2 * i).collect();
        let grid = grid_from_column(&ms, &successes, 20);
        let y: Vec<f64> = successes.iter().map(|&k| k as f64 / 20.0).collect();
        let fit = max_min_isotonic(&y);
        let pava = isotonic_fit(&y.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>());
        for (a, b) in fit.iter().zip(&pava) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let expected = oracle_crossing(&ms, &fit);
        let got = find_crossing(&grid, 1).unwrap().value();
        if expected.is_finite() {
            prop_assert!((got - expected).abs() < 1e-9, "{} vs {}", got, expected);
        } else {
            prop_assert_eq!(got, expected);
        }
    }
}
