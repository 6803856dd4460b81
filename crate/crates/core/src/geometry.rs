//! Coordinate-wise separable convex sets.
//!
//! The subdifferential of ‖·‖₁, the subdifferential of ‖·‖₂ at a nonzero
//! point and the normal cone of the nonnegative orthant are all products of
//! one-dimensional intervals. A nonnegative combination of such sets is again
//! a product of intervals, so Minkowski sums, projections and squared
//! distances reduce to per-coordinate interval arithmetic and clamping.
//!
//! A [`SeparableFamily`] stores the sets making up
//!
//! ```text
//! S(τ) = Σᵢ τᵢ·Sᵢ + Σⱼ Nⱼ
//! ```
//!
//! where the `Sᵢ` are scaled by the nonnegative weights `τ` and the `Nⱼ` are
//! cones that enter unscaled.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalVariant {
    Signed,
    Nonnegative,
}

/// The true signal `x*` together with its support.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal {
    values: Vec<f64>,
    support: Vec<usize>,
    variant: SignalVariant,
}

impl SparseSignal {
    /// Builds a signal, deriving the support from the nonzero entries.
    pub fn new(values: Vec<f64>, variant: SignalVariant) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSignal("empty signal".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal(format!("entry {i} is not finite")));
        }
        if variant == SignalVariant::Nonnegative {
            if let Some(i) = values.iter().position(|&v| v < 0.0) {
                return Err(Error::InvalidSignal(format!(
                    "entry {i} is negative in a nonnegative signal"
                )));
            }
        }
        let support: Vec<usize> = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, _)| i)
            .collect();
        if support.is_empty() {
            return Err(Error::InvalidSignal(
                "signal must have at least one nonzero entry".into(),
            ));
        }
        Ok(Self {
            values,
            support,
            variant,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn variant(&self) -> SignalVariant {
        self.variant
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// A closed interval of the real line: a point, a bounded box, or a half-line
/// `(−∞, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntervalAtom {
    Point(f64),
    Box { lo: f64, hi: f64 },
    HalfLineBelow(f64),
}

impl IntervalAtom {
    pub fn boxed(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "box requires finite lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(IntervalAtom::Box { lo, hi })
    }

    /// Builds the atom with the given endpoints; `lo = −∞` gives a half-line
    /// and `lo == hi` a point.
    fn from_bounds(lo: f64, hi: f64) -> Self {
        if lo == f64::NEG_INFINITY {
            IntervalAtom::HalfLineBelow(hi)
        } else if lo == hi {
            IntervalAtom::Point(lo)
        } else {
            IntervalAtom::Box { lo, hi }
        }
    }

    pub fn lo(&self) -> f64 {
        match *self {
            IntervalAtom::Point(c) => c,
            IntervalAtom::Box { lo, .. } => lo,
            IntervalAtom::HalfLineBelow(_) => f64::NEG_INFINITY,
        }
    }

    pub fn hi(&self) -> f64 {
        match *self {
            IntervalAtom::Point(c) => c,
            IntervalAtom::Box { hi, .. } => hi,
            IntervalAtom::HalfLineBelow(hi) => hi,
        }
    }

    /// Scales the atom by `t ≥ 0`. Half-lines keep their unbounded side.
    pub fn scale(self, t: f64) -> Self {
        match self {
            IntervalAtom::Point(c) => IntervalAtom::Point(t * c),
            IntervalAtom::Box { lo, hi } => IntervalAtom::Box { lo: t * lo, hi: t * hi },
            IntervalAtom::HalfLineBelow(hi) => IntervalAtom::HalfLineBelow(t * hi),
        }
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lo()).min(self.hi())
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lo() - tol && x <= self.hi() + tol
    }

    /// True for the atoms that are cones: `{0}` and `(−∞, 0]`.
    pub fn is_cone(&self) -> bool {
        matches!(
            *self,
            IntervalAtom::Point(c) | IntervalAtom::HalfLineBelow(c) if c == 0.0
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SetLabel {
    L1Subdifferential,
    L2Subdifferential,
    NonnegNormalCone,
    Custom(String),
}

/// One set of the family: an atom per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomVector {
    pub label: SetLabel,
    pub atoms: Vec<IntervalAtom>,
}

impl AtomVector {
    pub fn new(label: SetLabel, atoms: Vec<IntervalAtom>) -> Self {
        Self { label, atoms }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Coordinate-wise membership of `x` in the set scaled by `t`.
    pub fn contains(&self, t: f64, x: &[f64], tol: f64) -> bool {
        x.len() == self.atoms.len() && self.atoms.iter().zip(x).all(|(a, &v)| a.scale(t).contains(v, tol))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    L1,
}

/// Prior constraints that shape the recovery program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prior {
    /// `‖x‖₂ ≤ ‖x*‖₂`; contributes the singleton `{x*/‖x*‖₂}` as a scaled set.
    L2Ball,
    /// `x ≥ 0`; contributes the orthant normal cone as an unscaled set.
    Nonneg,
}

/// The nearest point of `S(τ)` to a query and one way of writing it as a sum
/// of members of the constituent sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionDecomposition {
    pub projection: Vec<f64>,
    /// `τᵢ·s̄ᵢ` for every scaled set.
    pub components: Vec<Vec<f64>>,
    /// Members of the unscaled cones.
    pub fixed_components: Vec<Vec<f64>>,
    /// The unscaled `s̄ᵢ ∈ Sᵢ`. Where `τᵢ = 0` these are chosen to maximise
    /// `⟨residual, s⟩` over `Sᵢ`, which gives the right derivative.
    pub directions: Vec<Vec<f64>>,
    pub residual: Vec<f64>,
}

/// Interface for projecting onto sets that are not products of intervals.
/// Only separable sets are implemented in this crate.
pub trait ProjectionOracle {
    fn dim(&self) -> usize;
    fn project(&self, x: &[f64], out: &mut [f64]);
}

/// `t·S` for a separable set `S`.
pub struct ScaledAtoms<'a> {
    pub set: &'a AtomVector,
    pub scale: f64,
}

impl ProjectionOracle for ScaledAtoms<'_> {
    fn dim(&self) -> usize {
        self.set.len()
    }

    fn project(&self, x: &[f64], out: &mut [f64]) {
        for ((o, &v), atom) in out.iter_mut().zip(x).zip(&self.set.atoms) {
            *o = atom.scale(self.scale).clamp(v);
        }
    }
}

/// Nearest point of the Minkowski sum `Σ Cᵢ` using only the projections
/// onto each `Cᵢ`: cyclic block minimization of `‖g − Σ cᵢ‖²`, where each
/// block update projects the current residual (plus its own term) onto its
/// set. Returns the squared distance and the components `cᵢ`.
///
/// This is generic and slow; it serves as an oracle for the separable code.
pub fn minkowski_projection(
    sets: &[&dyn ProjectionOracle],
    g: &[f64],
    max_sweeps: usize,
    tol: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = g.len();
    if let Some(set) = sets.iter().find(|s| s.dim() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: set.dim(),
        });
    }
    let mut comps = vec![vec![0.0; n]; sets.len()];
    let mut residual = g.to_vec();
    let mut target = vec![0.0; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_sweeps {
        let mut change = 0.0f64;
        for (set, comp) in sets.iter().zip(comps.iter_mut()) {
            for i in 0..n {
                target[i] = residual[i] + comp[i];
            }
            set.project(&target, &mut next);
            for i in 0..n {
                change = change.max((next[i] - comp[i]).abs());
                residual[i] = target[i] - next[i];
            }
            comp.copy_from_slice(&next);
        }
        if change <= tol {
            break;
        }
    }
    Ok((residual.iter().map(|r| r * r).sum(), comps))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparableFamily {
    n: usize,
    scaled: Vec<AtomVector>,
    fixed: Vec<AtomVector>,
}

impl SeparableFamily {
    pub fn new(n: usize, scaled: Vec<AtomVector>, fixed: Vec<AtomVector>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("ambient dimension must be positive".into()));
        }
        for set in scaled.iter().chain(&fixed) {
            if set.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: set.len(),
                });
            }
            for atom in &set.atoms {
                let ok = match *atom {
                    IntervalAtom::Point(c) | IntervalAtom::HalfLineBelow(c) => c.is_finite(),
                    IntervalAtom::Box { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
                };
                if !ok {
                    return Err(Error::InvalidArgument(format!("malformed atom {atom:?}")));
                }
            }
        }
        Ok(Self { n, scaled, fixed })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// The constituent sets of `S(τ)` as projection oracles, scaled sets
    /// first.
    pub fn oracles(&self, tau: &[f64]) -> Result<Vec<ScaledAtoms<'_>>> {
        self.check_tau(tau)?;
        Ok(self
            .scaled
            .iter()
            .zip(tau)
            .map(|(set, &scale)| ScaledAtoms { set, scale })
            .chain(self.fixed.iter().map(|set| ScaledAtoms { set, scale: 1.0 }))
            .collect())
    }

    pub fn num_scaled(&self) -> usize {
        self.scaled.len()
    }

    pub fn scaled(&self) -> &[AtomVector] {
        &self.scaled
    }

    pub fn fixed(&self) -> &[AtomVector] {
        &self.fixed
    }

    /// True when every unscaled set is a cone, so `S(λτ) = λ·S(τ)`.
    pub fn is_homogeneous(&self) -> bool {
        self.fixed.iter().all(|set| set.atoms.iter().all(IntervalAtom::is_cone))
    }

    fn check_tau(&self, tau: &[f64]) -> Result<()> {
        if tau.len() != self.scaled.len() {
            return Err(Error::DimensionMismatch {
                expected: self.scaled.len(),
                got: tau.len(),
            });
        }
        if let Some(t) = tau.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tau entries must be finite and nonnegative, got {t}"
            )));
        }
        Ok(())
    }

    fn check_query(&self, g: &[f64]) -> Result<()> {
        if g.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: g.len(),
            });
        }
        Ok(())
    }

    /// Endpoints of the summed interval at `coord`; `lo` may be `−∞`.
    #[inline]
    pub(crate) fn bounds_at(&self, tau: &[f64], coord: usize) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        let mut unbounded = false;
        let parts = self
            .scaled
            .iter()
            .zip(tau.iter().copied())
            .chain(self.fixed.iter().map(|s| (s, 1.0)));
        for (set, t) in parts {
            match set.atoms[coord] {
                IntervalAtom::Point(c) => {
                    lo += t * c;
                    hi += t * c;
                }
                IntervalAtom::Box { lo: a, hi: b } => {
                    lo += t * a;
                    hi += t * b;
                }
                IntervalAtom::HalfLineBelow(b) => {
                    unbounded = true;
                    hi += t * b;
                }
            }
        }
        if unbounded {
            lo = f64::NEG_INFINITY;
        }
        (lo, hi)
    }

    /// The interval `Σᵢ τᵢ·Sᵢ[coord] + Σⱼ Nⱼ[coord]`.
    pub fn interval_sum_at(&self, tau: &[f64], coord: usize) -> Result<IntervalAtom> {
        self.check_tau(tau)?;
        if coord >= self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: coord + 1,
            });
        }
        let (lo, hi) = self.bounds_at(tau, coord);
        Ok(IntervalAtom::from_bounds(lo, hi))
    }

    /// Squared distance from `g` to `S(τ)`.
    pub fn dist_sq(&self, tau: &[f64], g: &[f64]) -> Result<f64> {
        self.check_tau(tau)?;
        self.check_query(g)?;
        Ok(self.eval_unchecked(tau, g, None, None))
    }

    /// Squared distance together with its gradient in `τ` and, optionally,
    /// the (generalized) Hessian `2 Σ_c s̄ᵢ[c] s̄ⱼ[c]` over clamped coordinates,
    /// stored row-major. Buffers are overwritten.
    ///
    /// The partial derivative in `τᵢ` is `−2⟨g − P(g), s̄ᵢ⟩`; at `τᵢ = 0` it is
    /// the right derivative.
    pub(crate) fn eval_unchecked(
        &self,
        tau: &[f64],
        g: &[f64],
        mut grad: Option<&mut [f64]>,
        mut hess: Option<&mut [f64]>,
    ) -> f64 {
        let k = self.scaled.len();
        if let Some(gr) = grad.as_deref_mut() {
            gr.fill(0.0);
        }
        if let Some(h) = hess.as_deref_mut() {
            h.fill(0.0);
        }
        let mut dist = 0.0;
        for (c, &gc) in g.iter().enumerate() {
            let (lo, hi) = self.bounds_at(tau, c);
            let r = if gc > hi {
                gc - hi
            } else if gc < lo {
                gc - lo
            } else {
                continue;
            };
            dist += r * r;
            if grad.is_none() && hess.is_none() {
                continue;
            }
            for i in 0..k {
                let si = if r > 0.0 {
                    self.scaled[i].atoms[c].hi()
                } else {
                    self.scaled[i].atoms[c].lo()
                };
                if let Some(gr) = grad.as_deref_mut() {
                    gr[i] -= 2.0 * r * si;
                }
                if let Some(h) = hess.as_deref_mut() {
                    for j in 0..k {
                        let sj = if r > 0.0 {
                            self.scaled[j].atoms[c].hi()
                        } else {
                            self.scaled[j].atoms[c].lo()
                        };
                        h[i * k + j] += 2.0 * si * sj;
                    }
                }
            }
        }
        dist
    }

    /// Squared distance from `g` to `S(τ)` and a decomposition of the
    /// nearest point.
    ///
    /// Where the projected value of a coordinate can be split among the sets
    /// in more than one way, scaled sets are filled first (in order, each up
    /// to what the remaining sets can still absorb) and the cones take the
    /// rest.
    pub fn dist_sq_and_project(&self, tau: &[f64], g: &[f64]) -> Result<(f64, ProjectionDecomposition)> {
        self.check_tau(tau)?;
        self.check_query(g)?;
        let n = self.n;
        let k = self.scaled.len();
        let mut projection = vec![0.0; n];
        let mut residual = vec![0.0; n];
        let mut components = vec![vec![0.0; n]; k];
        let mut fixed_components = vec![vec![0.0; n]; self.fixed.len()];
        let mut directions = vec![vec![0.0; n]; k];
        let mut dist = 0.0;

        let mut parts: Vec<IntervalAtom> = Vec::with_capacity(k + self.fixed.len());
        let mut tail_lo: Vec<f64> = Vec::with_capacity(k + self.fixed.len() + 1);
        for c in 0..n {
            let (lo, hi) = self.bounds_at(tau, c);
            let p = g[c].max(lo).min(hi);
            let r = g[c] - p;
            projection[c] = p;
            residual[c] = r;
            dist += r * r;

            parts.clear();
            parts.extend(self.scaled.iter().zip(tau).map(|(s, &t)| s.atoms[c].scale(t)));
            parts.extend(self.fixed.iter().map(|s| s.atoms[c]));
            // tail_lo[j] = Σ_{l ≥ j} lo_l
            tail_lo.clear();
            tail_lo.resize(parts.len() + 1, 0.0);
            for j in (0..parts.len()).rev() {
                tail_lo[j] = tail_lo[j + 1] + parts[j].lo();
            }
            let mut remaining = p;
            for (j, atom) in parts.iter().enumerate() {
                let share = if j + 1 == parts.len() {
                    atom.clamp(remaining)
                } else {
                    atom.clamp((remaining - tail_lo[j + 1]).min(atom.hi()))
                };
                remaining -= share;
                if j < k {
                    components[j][c] = share;
                } else {
                    fixed_components[j - k][c] = share;
                }
            }

            for (i, set) in self.scaled.iter().enumerate() {
                let atom = set.atoms[c];
                directions[i][c] = if r > 0.0 {
                    atom.hi()
                } else if r < 0.0 {
                    atom.lo()
                } else if let IntervalAtom::Point(v) = atom {
                    v
                } else if tau[i] > 0.0 {
                    atom.clamp(components[i][c] / tau[i])
                } else {
                    atom.hi()
                };
            }
        }
        Ok((
            dist,
            ProjectionDecomposition {
                projection,
                components,
                fixed_components,
                directions,
                residual,
            },
        ))
    }
}

/// Builds the family whose sum `S(τ)` is the polar of the prior restricted
/// cone for `min ‖x‖₁` under the given priors.
///
/// Scaled sets come out in the order: ℓ1 subdifferential, then the ℓ2
/// singleton if requested. The orthant normal cone is the only unscaled set.
pub fn build_family(signal: &SparseSignal, objective: Objective, priors: &[Prior]) -> Result<SeparableFamily> {
    for (i, p) in priors.iter().enumerate() {
        if priors[..i].contains(p) {
            return Err(Error::InvalidArgument(format!("prior {p:?} listed twice")));
        }
    }
    if priors.contains(&Prior::Nonneg) && signal.variant() != SignalVariant::Nonnegative {
        return Err(Error::InvalidArgument(
            "nonnegativity prior requires a nonnegative signal".into(),
        ));
    }
    let x = signal.values();
    let n = x.len();
    let mut scaled = Vec::new();
    match objective {
        Objective::L1 => {
            let atoms = x
                .iter()
                .map(|&v| {
                    if v > 0.0 {
                        IntervalAtom::Point(1.0)
                    } else if v < 0.0 {
                        IntervalAtom::Point(-1.0)
                    } else {
                        IntervalAtom::Box { lo: -1.0, hi: 1.0 }
                    }
                })
                .collect();
            scaled.push(AtomVector::new(SetLabel::L1Subdifferential, atoms));
        }
    }
    let mut fixed = Vec::new();
    for prior in priors {
        match prior {
            Prior::L2Ball => {
                let norm = signal.l2_norm();
                let atoms = x.iter().map(|&v| IntervalAtom::Point(v / norm)).collect();
                scaled.push(AtomVector::new(SetLabel::L2Subdifferential, atoms));
            }
            Prior::Nonneg => {
                let atoms = x
                    .iter()
                    .map(|&v| {
                        if v > 0.0 {
                            IntervalAtom::Point(0.0)
                        } else {
                            IntervalAtom::HalfLineBelow(0.0)
                        }
                    })
                    .collect();
                fixed.push(AtomVector::new(SetLabel::NonnegNormalCone, atoms));
            }
        }
    }
    SeparableFamily::new(n, scaled, fixed)
}
