//! 50% crossing of an isotonic fit of success probability versus `m`.

use super::PhaseGrid;
use crate::error::{Error, Result};

/// Where the fitted success curve of a column reaches ½.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Crossing {
    At(f64),
    /// The fit is already above ½ at the smallest `m`.
    BelowRange {
        min_m: usize,
    },
    /// The fit never reaches ½.
    AboveRange {
        max_m: usize,
    },
}

impl Crossing {
    /// The crossing, or `−∞` / `+∞` for the out-of-range sentinels.
    pub fn value(&self) -> f64 {
        match *self {
            Crossing::At(m) => m,
            Crossing::BelowRange { .. } => f64::NEG_INFINITY,
            Crossing::AboveRange { .. } => f64::INFINITY,
        }
    }

    pub fn at(&self) -> Option<f64> {
        match *self {
            Crossing::At(m) => Some(m),
            _ => None,
        }
    }
}

/// Weighted pool-adjacent-violators: the nondecreasing sequence closest to
/// `(value, weight)` pairs in weighted least squares.
pub fn isotonic_fit(points: &[(f64, f64)]) -> Vec<f64> {
    // Each block: (weighted mean, total weight, number of points).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(points.len());
    for &(v, w) in points {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, c2) = blocks[blocks.len() - 1];
            let (m1, w1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            let w = w1 + w2;
            blocks.truncate(blocks.len() - 2);
            blocks.push(((m1 * w1 + m2 * w2) / w, w, c1 + c2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(mean, _, count)| std::iter::repeat_n(mean, count))
        .collect()
}

/// Crossing point of `(m, fitted probability)` pairs sorted by `m`.
pub(crate) fn crossing_of(ms: &[f64], fit: &[f64]) -> Crossing {
    // Pooled means that equal ½ in exact arithmetic may round either way.
    const EPS: f64 = 1e-12;
    match fit.iter().position(|&f| f >= 0.5 - EPS) {
        None => Crossing::AboveRange {
            max_m: *ms.last().unwrap() as usize,
        },
        Some(0) if fit[0] <= 0.5 + EPS => Crossing::At(ms[0]),
        Some(0) => Crossing::BelowRange { min_m: ms[0] as usize },
        Some(i) => {
            let (m0, m1, f0, f1) = (ms[i - 1], ms[i], fit[i - 1], fit[i]);
            Crossing::At(m0 + ((0.5 - f0) / (f1 - f0)).clamp(0.0, 1.0) * (m1 - m0))
        }
    }
}

/// Smallest `m` where the trial-weighted isotonic fit of column `s` reaches
/// ½, interpolated linearly between adjacent evaluated `m`.
pub fn find_crossing(grid: &PhaseGrid, s: usize) -> Result<Crossing> {
    let column = grid.column(s);
    if column.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "column s = {s} has {} evaluated m values; need at least 2",
            column.len()
        )));
    }
    let points: Vec<(f64, f64)> = column
        .iter()
        .map(|(_, c)| (c.probability(), c.trials_run as f64))
        .collect();
    let ms: Vec<f64> = column.iter().map(|(m, _)| *m as f64).collect();
    Ok(crossing_of(&ms, &isotonic_fit(&points)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_column_crosses_midway() {
        let fit = isotonic_fit(&[(0.0, 1.0), (0.0, 1.0), (1.0, 1.0), (1.0, 1.0)]);
        assert_eq!(crossing_of(&[1.0, 2.0, 3.0, 4.0], &fit), Crossing::At(2.5));
    }

    #[test]
    fn sentinels() {
        let ms = [3.0, 5.0];
        assert_eq!(crossing_of(&ms, &[1.0, 1.0]), Crossing::BelowRange { min_m: 3 });
        assert_eq!(crossing_of(&ms, &[0.0, 0.2]), Crossing::AboveRange { max_m: 5 });
        assert_eq!(crossing_of(&ms, &[0.5, 1.0]), Crossing::At(3.0));
        assert_eq!(Crossing::BelowRange { min_m: 3 }.value(), f64::NEG_INFINITY);
    }

    #[test]
    fn pava_pools_violators() {
        let fit = isotonic_fit(&[(0.2, 1.0), (0.6, 1.0), (0.4, 1.0), (0.9, 1.0)]);
        assert_eq!(fit, vec![0.2, 0.5, 0.5, 0.9]);
        let fit = isotonic_fit(&[(1.0, 3.0), (0.0, 1.0)]);
        assert_eq!(fit, vec![0.75, 0.75]);
    }
}
