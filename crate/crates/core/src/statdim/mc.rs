//! Monte-Carlo estimators of `J(τ) = E dist²(g, S(τ))`, `g ~ N(0, Iₙ)`.
//!
//! Samples are split into fixed-size chunks; chunk `c` draws from the stream
//! keyed by `(seed, c)`. Partial statistics are merged in chunk order, so
//! every estimate is bit-reproducible regardless of the rayon pool size.
//! Calls with the same seed see the same Gaussian draws (common random
//! numbers), which is what makes finite differences and the Jensen ordering
//! between [`minimize_j`] and [`mc_statdim_exact`] meaningful.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{EstimateMethod, StatDimEstimate, Uncertainty};
use crate::error::{Error, Result};
use crate::geometry::SeparableFamily;
use crate::numeric::{expected_interval_dist_sq, golden_section_min};
use crate::rng;

/// Samples per deterministic substream.
pub const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Running mean and centered second moment of a vector-valued sample.
#[derive(Debug, Clone)]
struct SampleStats {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl SampleStats {
    fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / c;
            *s += d * (v - *m);
        }
    }

    fn merge(&mut self, other: &SampleStats) {
        if other.count == 0 {
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let total = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / total;
            self.m2[i] += other.m2[i] + d * d * na * nb / total;
        }
        self.count += other.count;
    }

    fn std_error(&self, i: usize) -> f64 {
        if self.count < 2 {
            return f64::INFINITY;
        }
        let n = self.count as f64;
        (self.m2[i] / (n - 1.0) / n).sqrt()
    }

    fn estimate(&self, i: usize) -> McEstimate {
        McEstimate {
            mean: self.mean[i],
            std_error: self.std_error(i),
            samples: self.count,
        }
    }
}

/// Runs `per_sample` over `samples` Gaussian vectors of length `n` and merges
/// the resulting statistics in chunk order.
fn chunked<F>(n: usize, samples: usize, seed: u64, dim: usize, per_sample: F) -> Result<SampleStats>
where
    F: Fn(&[f64], &mut [f64], usize) -> Result<()> + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let partials: Vec<Result<SampleStats>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = CHUNK.min(samples - c * CHUNK);
            let mut rng: ChaCha8Rng = rng::stream(seed, &[rng::TAG_MC, c as u64]);
            let mut g = vec![0.0; n];
            let mut out = vec![0.0; dim];
            let mut stats = SampleStats::new(dim);
            for k in 0..count {
                for v in g.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                per_sample(&g, &mut out, c * CHUNK + k)?;
                stats.push(&out);
            }
            Ok(stats)
        })
        .collect();
    let mut total = SampleStats::new(dim);
    for p in partials {
        total.merge(&p?);
    }
    Ok(total)
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples, got {samples}"
        )));
    }
    Ok(())
}

fn check_tau(family: &SeparableFamily, tau: &[f64]) -> Result<()> {
    // Reuse the family's own validation.
    family.interval_sum_at(tau, 0).map(|_| ())
}

/// `J(τ)` in closed form. Coordinates of `g` are independent, so `J` is a
/// sum of one-dimensional expectations `E dist²(Z, [lo, hi])`.
pub fn exact_j(family: &SeparableFamily, tau: &[f64]) -> Result<f64> {
    check_tau(family, tau)?;
    Ok((0..family.dim())
        .map(|c| {
            let (lo, hi) = family.bounds_at(tau, c);
            expected_interval_dist_sq(lo, hi)
        })
        .sum())
}

/// Sample mean and standard error of `dist²(g, S(τ))`.
pub fn mc_j(family: &SeparableFamily, tau: &[f64], samples: usize, seed: u64) -> Result<McEstimate> {
    check_samples(samples)?;
    check_tau(family, tau)?;
    let stats = chunked(family.dim(), samples, seed, 1, |g, out, _| {
        out[0] = family.eval_unchecked(tau, g, None, None);
        Ok(())
    })?;
    Ok(stats.estimate(0))
}

/// Value and gradient statistics on shared draws: index 0 is `J`, indices
/// `1..=k` the partial derivatives.
fn value_and_gradient(family: &SeparableFamily, tau: &[f64], samples: usize, seed: u64) -> Result<SampleStats> {
    let k = family.num_scaled();
    chunked(family.dim(), samples, seed, 1 + k, |g, out, _| {
        let (v, grad) = out.split_at_mut(1);
        v[0] = family.eval_unchecked(tau, g, Some(grad), None);
        Ok(())
    })
}

/// Monte-Carlo gradient of `J` with per-component standard errors. Each
/// sample contributes `−2⟨g − P(g), s̄ᵢ⟩`; at `τᵢ = 0` this is the right
/// derivative.
pub fn mc_j_gradient(family: &SeparableFamily, tau: &[f64], samples: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_samples(samples)?;
    check_tau(family, tau)?;
    let stats = value_and_gradient(family, tau, samples, seed)?;
    let k = family.num_scaled();
    let grad = stats.mean[1..].to_vec();
    let se = (1..=k).map(|i| stats.std_error(i)).collect();
    Ok((grad, se))
}

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    pub max_iters: usize,
    /// Stop once the projected gradient norm is below `tol_scale · n`.
    pub tol_scale: f64,
    /// With a single scaled set, minimize the closed-form `J` by golden
    /// section instead of running projected gradient on samples.
    pub closed_form_single: bool,
    pub initial_tau: Option<Vec<f64>>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol_scale: 1e-4,
            closed_form_single: true,
            initial_tau: None,
        }
    }
}

fn clamp_value(value: f64, n: usize) -> f64 {
    value.clamp(0.0, n as f64)
}

/// Minimizes `J` over `τ ≥ 0`.
///
/// The sampled objective uses the same draws at every iterate, so it is a
/// fixed convex piecewise-quadratic function of `τ`; projected gradient with
/// step `1/(2n)`, halved whenever the objective would increase, descends it
/// monotonically.
pub fn minimize_j(
    family: &SeparableFamily,
    samples: usize,
    seed: u64,
    opts: &MinimizeOptions,
) -> Result<StatDimEstimate> {
    let k = family.num_scaled();
    if k == 0 {
        return Err(Error::InvalidArgument(
            "family has no scaled set to minimize over".into(),
        ));
    }
    let n = family.dim();
    let nf = n as f64;

    if k == 1 && opts.closed_form_single {
        let j = |t: f64| exact_j(family, &[t]).unwrap_or(f64::INFINITY);
        let mut upper = 1.0;
        while j(2.0 * upper) < j(upper) && upper < 1e6 {
            upper *= 2.0;
        }
        let (tau, value) = golden_section_min(j, 0.0, 2.0 * upper, 1e-10);
        return Ok(StatDimEstimate {
            value: clamp_value(value, n),
            tau_star: vec![tau],
            method: EstimateMethod::McRecipe,
            uncertainty: Uncertainty::StdError { se: 0.0, samples: 0 },
        });
    }

    check_samples(samples)?;
    let mut tau = match &opts.initial_tau {
        Some(t) => {
            check_tau(family, t)?;
            t.clone()
        }
        None => vec![1.0; k],
    };
    let step0 = 1.0 / (2.0 * nf);
    let mut stats = value_and_gradient(family, &tau, samples, seed)?;
    let finish = |tau: Vec<f64>, stats: &SampleStats| StatDimEstimate {
        value: clamp_value(stats.mean[0], n),
        tau_star: tau,
        method: EstimateMethod::McRecipe,
        uncertainty: Uncertainty::StdError {
            se: stats.std_error(0),
            samples: stats.count,
        },
    };

    for _ in 0..opts.max_iters {
        let grad = &stats.mean[1..];
        let pg_norm = tau
            .iter()
            .zip(grad)
            .map(|(&t, &g)| if t <= 0.0 && g > 0.0 { 0.0 } else { g * g })
            .sum::<f64>()
            .sqrt();
        if pg_norm <= opts.tol_scale * nf {
            return Ok(finish(tau, &stats));
        }
        let mut step = step0;
        let mut moved = false;
        while step > step0 * 1e-12 {
            let cand: Vec<f64> = tau.iter().zip(grad).map(|(&t, &g)| (t - step * g).max(0.0)).collect();
            if cand == tau {
                break;
            }
            let cand_stats = value_and_gradient(family, &cand, samples, seed)?;
            if cand_stats.mean[0] <= stats.mean[0] {
                tau = cand;
                stats = cand_stats;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            // No descent at any step size: stationary up to rounding.
            return Ok(finish(tau, &stats));
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iters,
        last: Box::new(finish(tau, &stats)),
    })
}

/// Minimizes the per-sample `J_g(τ) = dist²(g, S(τ))` over `τ ≥ 0` (k ≤ 2)
/// by projected Newton steps with Armijo backtracking. `J_g` is convex and
/// piecewise quadratic, so the iteration terminates after a handful of steps.
fn inner_minimize(family: &SeparableFamily, g: &[f64], tau: &mut [f64]) -> Option<f64> {
    let k = tau.len();
    let mut grad = vec![0.0; k];
    let mut hess = vec![0.0; k * k];
    let mut cand = vec![0.0; k];
    let mut value = family.eval_unchecked(tau, g, Some(&mut grad), Some(&mut hess));
    for _ in 0..200 {
        let free: Vec<usize> = (0..k).filter(|&i| tau[i] > 0.0 || grad[i] < 0.0).collect();
        let pg_norm = free.iter().map(|&i| grad[i] * grad[i]).sum::<f64>().sqrt();
        if pg_norm <= 1e-10 * (1.0 + value) {
            return Some(value);
        }
        let mut dir = vec![0.0; k];
        match free.as_slice() {
            [i] => {
                let h = hess[i * k + i];
                dir[*i] = if h > 1e-12 { -grad[*i] / h } else { -grad[*i] };
            }
            [i, j] => {
                let (a, b, d) = (hess[i * k + i], hess[i * k + j], hess[j * k + j]);
                let det = a * d - b * b;
                if det > 1e-12 * a * d && a > 0.0 {
                    dir[*i] = -(d * grad[*i] - b * grad[*j]) / det;
                    dir[*j] = -(a * grad[*j] - b * grad[*i]) / det;
                } else {
                    dir[*i] = -grad[*i] / a.max(1e-12);
                    dir[*j] = -grad[*j] / d.max(1e-12);
                }
            }
            _ => return Some(value),
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..k {
                cand[i] = (tau[i] + step * dir[i]).max(0.0);
            }
            if cand == tau {
                break;
            }
            let decrease: f64 = (0..k).map(|i| grad[i] * (cand[i] - tau[i])).sum();
            let cv = family.eval_unchecked(&cand, g, None, None);
            if cv <= value + 1e-4 * decrease {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Some(value);
        }
        tau.copy_from_slice(&cand);
        value = family.eval_unchecked(tau, g, Some(&mut grad), Some(&mut hess));
    }
    None
}

/// Estimates `E[inf_τ dist²(g, S(τ))]`, which is the statistical dimension of
/// the cone polar to `∪_τ S(τ)` itself rather than an upper bound on it.
/// The reported `τ*` is the sample mean of the per-sample minimizers.
pub fn mc_statdim_exact(family: &SeparableFamily, samples: usize, seed: u64) -> Result<StatDimEstimate> {
    check_samples(samples)?;
    let k = family.num_scaled();
    if k > 2 {
        return Err(Error::InvalidArgument(format!(
            "per-sample minimization supports at most 2 scaled sets, got {k}"
        )));
    }
    let stats = chunked(family.dim(), samples, seed, 1 + k, |g, out, idx| {
        let (v, tau) = out.split_at_mut(1);
        tau.fill(1.0);
        v[0] = if k == 0 {
            family.eval_unchecked(&[], g, None, None)
        } else {
            inner_minimize(family, g, tau).ok_or(Error::InnerNotConverged { sample: idx })?
        };
        Ok(())
    })?;
    Ok(StatDimEstimate {
        value: clamp_value(stats.mean[0], family.dim()),
        tau_star: stats.mean[1..].to_vec(),
        method: EstimateMethod::McExact,
        uncertainty: Uncertainty::StdError {
            se: stats.std_error(0),
            samples: stats.count,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{
        build_family, AtomVector, IntervalAtom, Objective, Prior, SetLabel, SignalVariant, SparseSignal,
    };
    use crate::statdim::{psi_value, PsiVariant};

    fn zero_family(n: usize) -> SeparableFamily {
        SeparableFamily::new(
            n,
            vec![],
            vec![AtomVector::new(
                SetLabel::Custom("zero".into()),
                vec![IntervalAtom::Point(0.0); n],
            )],
        )
        .unwrap()
    }

    fn half_line() -> SeparableFamily {
        SeparableFamily::new(
            1,
            vec![],
            vec![AtomVector::new(
                SetLabel::NonnegNormalCone,
                vec![IntervalAtom::HalfLineBelow(0.0)],
            )],
        )
        .unwrap()
    }

    fn unit_signal(n: usize, s: usize, variant: SignalVariant) -> SparseSignal {
        let v = (0..n).map(|i| if i < s { 1.0 } else { 0.0 }).collect();
        SparseSignal::new(v, variant).unwrap()
    }

    #[test]
    fn zero_family_mean_is_dimension() {
        let e = mc_j(&zero_family(10), &[], 20_000, 1).unwrap();
        assert!((e.mean - 10.0).abs() <= 3.0 * e.std_error, "{e:?}");
        assert_eq!(exact_j(&zero_family(10), &[]).unwrap(), 10.0);
    }

    #[test]
    fn half_line_mean_is_one_half() {
        let e = mc_j(&half_line(), &[], 50_000, 2).unwrap();
        assert!((e.mean - 0.5).abs() <= 3.0 * e.std_error, "{e:?}");
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let fam = build_family(&unit_signal(12, 3, SignalVariant::Signed), Objective::L1, &[]).unwrap();
        let a = mc_j(&fam, &[1.2], 9000, 5).unwrap();
        let b = mc_j(&fam, &[1.2], 9000, 5).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| mc_j(&fam, &[1.2], 9000, 5).unwrap());
        assert_eq!(a, c);
        assert_ne!(a, mc_j(&fam, &[1.2], 9000, 6).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        let fam = zero_family(3);
        assert!(mc_j(&fam, &[], 1, 0).is_err());
        assert!(mc_j(&fam, &[1.0], 10, 0).is_err());
        assert!(minimize_j(&fam, 100, 0, &MinimizeOptions::default()).is_err());
    }

    #[test]
    fn l1_mc_matches_psi1() {
        let (n, s) = (128, 16);
        let fam = build_family(&unit_signal(n, s, SignalVariant::Signed), Objective::L1, &[]).unwrap();
        let (psi, tau) = psi_value(s as f64 / n as f64, PsiVariant::Psi1).unwrap();
        let exact = exact_j(&fam, &[tau]).unwrap();
        assert!((exact - n as f64 * psi).abs() < 1e-9, "{exact} vs {}", n as f64 * psi);
        let e = mc_j(&fam, &[tau], 100_000, 11).unwrap();
        assert!((e.mean - n as f64 * psi).abs() <= 3.0 * e.std_error, "{e:?}");
    }

    #[test]
    fn point_family_gradient_is_closed_form() {
        let c = [0.5, -1.0, 2.0];
        let fam = SeparableFamily::new(
            3,
            vec![AtomVector::new(
                SetLabel::Custom("pt".into()),
                c.iter().map(|&v| IntervalAtom::Point(v)).collect(),
            )],
            vec![],
        )
        .unwrap();
        let tau = 0.7;
        let (grad, se) = mc_j_gradient(&fam, &[tau], 50_000, 3).unwrap();
        let expected = 2.0 * tau * c.iter().map(|v| v * v).sum::<f64>();
        assert!((grad[0] - expected).abs() <= 3.0 * se[0], "{grad:?} {se:?}");
    }

    #[test]
    fn l2_singleton_gradient_matches_formula() {
        let sig = SparseSignal::new(vec![1.0, -2.0, 0.5, 0.0, 0.0, 0.0], SignalVariant::Signed).unwrap();
        let fam = build_family(&sig, Objective::L1, &[Prior::L2Ball]).unwrap();
        let tau = [0.8, 0.3];
        let (grad, se) = mc_j_gradient(&fam, &tau, 100_000, 4).unwrap();
        let expected = 2.0 * tau[0] * sig.l1_norm() / sig.l2_norm() + 2.0 * tau[1];
        assert!(
            (grad[1] - expected).abs() <= 3.0 * se[1],
            "{} vs {expected} (se {})",
            grad[1],
            se[1]
        );
    }

    #[test]
    fn minimize_single_set_matches_stationary_root() {
        let (n, s) = (128, 16);
        let fam = build_family(&unit_signal(n, s, SignalVariant::Signed), Objective::L1, &[]).unwrap();
        let (_, tau) = psi_value(0.125, PsiVariant::Psi1).unwrap();
        let closed = minimize_j(&fam, 0, 0, &MinimizeOptions::default()).unwrap();
        assert!((closed.tau_star[0] - tau).abs() < 1e-6);
        let opts = MinimizeOptions {
            closed_form_single: false,
            ..Default::default()
        };
        let mc = minimize_j(&fam, 20_000, 9, &opts).unwrap();
        assert!((mc.tau_star[0] - tau).abs() < 1e-2, "{} vs {tau}", mc.tau_star[0]);
    }

    #[test]
    fn inner_minimizer_beats_grid() {
        let sig = SparseSignal::new(vec![1.0, 2.0, 0.0, 0.0, 0.0], SignalVariant::Nonnegative).unwrap();
        let fam = build_family(&sig, Objective::L1, &[Prior::Nonneg]).unwrap();
        let g = [0.3, 1.9, -0.4, 1.1, 2.5];
        let mut tau = [1.0];
        let best = inner_minimize(&fam, &g, &mut tau).unwrap();
        for i in 0..=4000 {
            let t = i as f64 * 1e-3;
            assert!(best <= fam.dist_sq(&[t], &g).unwrap() + 1e-12);
        }
    }

    #[test]
    fn exact_estimate_of_half_line() {
        let e = mc_statdim_exact(&half_line(), 40_000, 8).unwrap();
        assert!((e.value - 0.5).abs() <= 3.0 * e.std_error());
        assert!(e.tau_star.is_empty());
    }
}
