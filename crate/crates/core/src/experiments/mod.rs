//! Randomized recovery sweeps over `(m, s)`.
//!
//! Every trial draws its signal and sensing matrix from the stream keyed by
//! `(seed, m, s, trial, attempt)`, so a grid is a pure function of its
//! configuration regardless of scheduling, thread count or interruptions.
//! The stream key does not include the variant: the plain and ℓ2-ball
//! sweeps at one seed solve the very same instances.

mod checkpoint;
mod crossing;
mod output;

pub use checkpoint::{Checkpoint, CHECKPOINT_HEADER};
pub use crossing::{find_crossing, isotonic_fit, Crossing};
pub use output::{emit_outputs, theory_predictions, OutputFiles, Prediction};

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Prior, SignalVariant, SparseSignal};
use crate::rng;
use crate::solvers::{check_success, solve_recovery, AdmmParams, Constraint, RecoveryProblem};
use crate::statdim::{statdim_bounds, BoundVariant};

/// Ill-posed draws are re-drawn at most this many times per trial.
const MAX_REDRAWS: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentVariant {
    L1Plain,
    L1L2Ball,
    L1Nonneg,
}

impl ExperimentVariant {
    pub const ALL: [ExperimentVariant; 3] = [Self::L1Plain, Self::L1L2Ball, Self::L1Nonneg];

    pub fn name(self) -> &'static str {
        match self {
            Self::L1Plain => "l1_plain",
            Self::L1L2Ball => "l1_l2ball",
            Self::L1Nonneg => "l1_nonneg",
        }
    }

    pub fn signal_variant(self) -> SignalVariant {
        match self {
            Self::L1Nonneg => SignalVariant::Nonnegative,
            _ => SignalVariant::Signed,
        }
    }

    pub fn bound_variant(self) -> BoundVariant {
        match self {
            Self::L1Plain => BoundVariant::L1Plain,
            Self::L1L2Ball => BoundVariant::L1L2Ball,
            Self::L1Nonneg => BoundVariant::L1Nonneg,
        }
    }

    /// Priors of the matching separable family.
    pub fn priors(self) -> &'static [Prior] {
        match self {
            Self::L1Plain => &[],
            Self::L1L2Ball => &[Prior::L2Ball],
            Self::L1Nonneg => &[Prior::Nonneg],
        }
    }

    fn constraints(self, signal: &SparseSignal) -> Vec<Constraint> {
        match self {
            Self::L1Plain => vec![],
            Self::L1L2Ball => vec![Constraint::L2Ball {
                radius: signal.l2_norm(),
            }],
            Self::L1Nonneg => vec![Constraint::Nonneg],
        }
    }
}

impl FromStr for ExperimentVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown variant `{s}` (expected l1_plain, l1_l2ball or l1_nonneg)"
            ))
        })
    }
}

/// Coarse-to-fine sweep of each column around the predicted transition.
///
/// For each `s`, the `m_values` inside `δ ± a_ζ√n` are visited every
/// `coarse_stride`-th value. If the coarse column never crosses ½ the
/// sweep keeps stepping outward through `m_values` until it does or the
/// list ends. The gap that contains the crossing is then filled every
/// `fine_stride`-th value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveSweep {
    pub coarse_stride: usize,
    pub fine_stride: usize,
    pub zeta: f64,
}

impl Default for AdaptiveSweep {
    fn default() -> Self {
        Self {
            coarse_stride: 8,
            fine_stride: 2,
            zeta: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGridConfig {
    pub n: usize,
    pub m_values: Vec<usize>,
    pub s_values: Vec<usize>,
    pub trials: usize,
    pub variant: ExperimentVariant,
    pub seed: u64,
    pub admm: AdmmParams,
    pub sweep: Option<AdaptiveSweep>,
}

impl PhaseGridConfig {
    /// Full `m = 1..=n` grid at the given sparsities.
    pub fn new(n: usize, s_values: Vec<usize>, trials: usize, variant: ExperimentVariant, seed: u64) -> Self {
        Self {
            n,
            m_values: (1..=n).collect(),
            s_values,
            trials,
            variant,
            seed,
            admm: AdmmParams::default(),
            sweep: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if self.m_values.is_empty() || self.s_values.is_empty() {
            return bad("m_values and s_values must be nonempty".into());
        }
        if let Some(&m) = self.m_values.iter().find(|&&m| m == 0 || m > self.n) {
            return bad(format!("m = {m} outside 1..={}", self.n));
        }
        if let Some(&s) = self.s_values.iter().find(|&&s| s == 0 || s > self.n) {
            return bad(format!("s = {s} outside 1..={}", self.n));
        }
        let strictly_increasing = |v: &[usize]| v.windows(2).all(|w| w[0] < w[1]);
        if !strictly_increasing(&self.m_values) || !strictly_increasing(&self.s_values) {
            return bad("m_values and s_values must be strictly increasing".into());
        }
        if let Some(sw) = &self.sweep {
            if sw.coarse_stride == 0 || sw.fine_stride == 0 {
                return bad("sweep strides must be positive".into());
            }
            if !(sw.zeta > 0.0 && sw.zeta <= 4.0) {
                return bad(format!("zeta must lie in (0, 4], got {}", sw.zeta));
            }
        }
        Ok(())
    }

    /// One-line canonical description; a checkpoint only resumes a run whose
    /// description matches exactly.
    pub fn fingerprint(&self) -> String {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        let sweep = match &self.sweep {
            None => "none".to_string(),
            Some(s) => format!("{}/{}/{:e}", s.coarse_stride, s.fine_stride, s.zeta),
        };
        let p = &self.admm;
        format!(
            "n={} trials={} variant={} seed={} m=[{}] s=[{}] sweep={} admm={:e}/{}/{:e}/{:e}/{}/{}",
            self.n,
            self.trials,
            self.variant.name(),
            self.seed,
            join(&self.m_values),
            join(&self.s_values),
            sweep,
            p.rho,
            p.max_iters,
            p.feas_tol,
            p.obj_tol,
            p.adaptive_rho,
            p.polish,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRecord {
    pub successes: usize,
    pub trials_run: usize,
    /// Solves that hit `max_iters`; each also counts as a failure.
    pub non_converged: usize,
    /// Ill-posed draws that were replaced.
    pub redraws: usize,
    /// Id of the `(m, s)` stream family the trials were drawn from.
    pub stream_id: u64,
}

impl CellRecord {
    pub fn probability(&self) -> f64 {
        self.successes as f64 / self.trials_run as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    pub config: PhaseGridConfig,
    pub cells: BTreeMap<(usize, usize), CellRecord>,
    /// False when the run stopped early on a cell budget.
    pub complete: bool,
}

impl PhaseGrid {
    pub fn cell(&self, m: usize, s: usize) -> Option<&CellRecord> {
        self.cells.get(&(m, s))
    }

    /// `(m, cell)` pairs of column `s`, ordered by `m`.
    pub fn column(&self, s: usize) -> Vec<(usize, CellRecord)> {
        self.cells
            .iter()
            .filter(|((_, cs), _)| *cs == s)
            .map(|(&(m, _), c)| (m, *c))
            .collect()
    }

    pub fn total_solves(&self) -> usize {
        self.cells.values().map(|c| c.trials_run).sum()
    }
}

/// Signal with support on the first `s` coordinates, entries iid standard
/// normal (absolute values for the nonnegative variant).
pub fn generate_signal(n: usize, s: usize, variant: SignalVariant, rng: &mut ChaCha8Rng) -> Result<SparseSignal> {
    if s == 0 || s > n {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= s <= n, got s = {s}, n = {n}"
        )));
    }
    let mut values = vec![0.0; n];
    for v in values.iter_mut().take(s) {
        let g: f64 = rng.sample(StandardNormal);
        *v = match variant {
            SignalVariant::Signed => g,
            SignalVariant::Nonnegative => g.abs(),
        };
    }
    // An exact zero has probability zero but would shrink the support.
    if values[..s].contains(&0.0) {
        return Err(Error::InvalidSignal("drew an exact zero inside the support".into()));
    }
    SparseSignal::new(values, variant)
}

/// Draws `x*` and then `A` row by row from one trial stream.
fn draw_instance(
    config: &PhaseGridConfig,
    m: usize,
    s: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(SparseSignal, RecoveryProblem)> {
    let n = config.n;
    let signal = generate_signal(n, s, config.variant.signal_variant(), rng)?;
    let entries: Vec<f64> = (0..m * n).map(|_| rng.sample(StandardNormal)).collect();
    let a = DMatrix::from_row_slice(m, n, &entries);
    let y = (&a * nalgebra::DVector::from_column_slice(signal.values()))
        .as_slice()
        .to_vec();
    let problem = RecoveryProblem::new(a, y, config.variant.constraints(&signal))?;
    Ok((signal, problem))
}

#[derive(Debug, Clone, Copy, Default)]
struct TrialOutcome {
    success: bool,
    non_converged: bool,
    redraws: usize,
}

fn run_trial(config: &PhaseGridConfig, m: usize, s: usize, t: usize) -> Result<TrialOutcome> {
    let mut redraws = 0;
    for attempt in 0..MAX_REDRAWS {
        let key = [rng::TAG_TRIAL, m as u64, s as u64, t as u64, attempt];
        let mut stream = rng::stream(config.seed, &key);
        let drawn = draw_instance(config, m, s, &mut stream);
        let outcome = drawn.and_then(|(signal, problem)| {
            let result = solve_recovery(&problem, &config.admm)?;
            Ok((signal, result))
        });
        match outcome {
            Ok((signal, result)) => {
                let non_converged = !result.converged();
                if non_converged {
                    log::warn!(
                        "m={m} s={s} trial={t}: ADMM stopped at max_iters (primal {:e}, dual {:e}); counted as failure",
                        result.primal_residual,
                        result.dual_residual
                    );
                }
                let success = !non_converged && check_success(&result.x_hat, signal.values())?;
                return Ok(TrialOutcome {
                    success,
                    non_converged,
                    redraws,
                });
            }
            Err(Error::IllPosed(msg)) | Err(Error::InvalidSignal(msg)) => {
                log::warn!("m={m} s={s} trial={t} attempt={attempt}: {msg}; redrawing");
                redraws += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::IllPosed(format!(
        "m={m} s={s} trial={t}: {MAX_REDRAWS} consecutive ill-posed draws"
    )))
}

/// Runs all trials of one cell in parallel.
pub fn run_cell(config: &PhaseGridConfig, m: usize, s: usize) -> Result<CellRecord> {
    config.validate()?;
    if m == 0 || m > config.n || s == 0 || s > config.n {
        return Err(Error::InvalidArgument(format!(
            "cell (m={m}, s={s}) outside 1..={}",
            config.n
        )));
    }
    let outcomes: Vec<TrialOutcome> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, m, s, t))
        .collect::<Result<_>>()?;
    let record = CellRecord {
        successes: outcomes.iter().filter(|o| o.success).count(),
        trials_run: outcomes.len(),
        non_converged: outcomes.iter().filter(|o| o.non_converged).count(),
        redraws: outcomes.iter().map(|o| o.redraws).sum(),
        stream_id: rng::stream_id(&[rng::TAG_TRIAL, m as u64, s as u64]),
    };
    log::debug!("cell m={m} s={s}: {}/{} successes", record.successes, record.trials_run);
    Ok(record)
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions<'a> {
    /// Completed cells are persisted here and reused on the next run.
    pub checkpoint: Option<&'a Path>,
    /// Discard an existing checkpoint instead of resuming from it.
    pub reset: bool,
    /// Stop after computing this many new cells (the grid is then marked
    /// incomplete). Mainly useful to exercise resumption.
    pub max_new_cells: Option<usize>,
}

/// Executes cells, skipping those already present, and persists each newly
/// computed cell. Returns false if the cell budget ran out.
struct Runner<'a> {
    config: &'a PhaseGridConfig,
    cells: BTreeMap<(usize, usize), CellRecord>,
    checkpoint: Option<Checkpoint>,
    budget: Option<usize>,
}

impl Runner<'_> {
    fn ensure(&mut self, wanted: &[(usize, usize)]) -> Result<bool> {
        let mut todo: Vec<(usize, usize)> = wanted.iter().copied().filter(|k| !self.cells.contains_key(k)).collect();
        todo.sort_unstable();
        todo.dedup();
        let mut exhausted = false;
        if let Some(b) = self.budget {
            if todo.len() > b {
                todo.truncate(b);
                exhausted = true;
            }
            self.budget = Some(b - todo.len());
        }
        let config = self.config;
        let checkpoint = self.checkpoint.as_ref();
        // The checkpoint is the single serialized resource: each finished
        // cell is inserted and persisted under the lock.
        let shared = Mutex::new(&mut self.cells);
        todo.par_iter().try_for_each(|&(m, s)| -> Result<()> {
            let record = run_cell(config, m, s)?;
            let mut cells = shared.lock().unwrap_or_else(|e| e.into_inner());
            cells.insert((m, s), record);
            if let Some(cp) = checkpoint {
                cp.write(&cells)?;
            }
            Ok(())
        })?;
        Ok(!exhausted)
    }
}

/// Indices `0, stride, 2·stride, …` of `range`, plus its last index.
fn strided(range: std::ops::Range<usize>, stride: usize) -> Vec<usize> {
    if range.is_empty() {
        return vec![];
    }
    let last = range.end - 1;
    let mut out: Vec<usize> = range.clone().step_by(stride).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

fn sweep_column(runner: &mut Runner<'_>, s: usize, sweep: &AdaptiveSweep) -> Result<bool> {
    let config = runner.config;
    let ms = &config.m_values;
    let (_, upper) = statdim_bounds(s, config.n, config.variant.bound_variant())?;
    let window = crate::statdim::transition_window(upper, config.n, sweep.zeta)?;
    let lo = ms.partition_point(|&m| (m as f64) < window.m_low);
    let hi = ms.partition_point(|&m| (m as f64) <= window.m_high);
    let (lo, hi) = if lo < hi {
        (lo, hi)
    } else {
        // Window misses every m; start from the nearest one.
        let i = lo.min(ms.len() - 1);
        (i, i + 1)
    };
    let cells = |idx: &[usize]| idx.iter().map(|&i| (ms[i], s)).collect::<Vec<_>>();
    let mut visited: Vec<usize> = strided(lo..hi, sweep.coarse_stride);
    if !runner.ensure(&cells(&visited))? {
        return Ok(false);
    }

    // Step outward until the coarse column brackets the crossing.
    loop {
        let grid_view = column_probabilities(&runner.cells, ms, &visited, s);
        let fit = isotonic_fit(&grid_view.iter().map(|p| (p.0, p.1)).collect::<Vec<_>>());
        let first = visited[0];
        let last = *visited.last().unwrap();
        let next = if fit[0] > 0.5 && first > 0 {
            Some(first.saturating_sub(sweep.coarse_stride))
        } else if *fit.last().unwrap() < 0.5 && last + 1 < ms.len() {
            Some((last + sweep.coarse_stride).min(ms.len() - 1))
        } else {
            None
        };
        match next {
            Some(i) => {
                visited.push(i);
                visited.sort_unstable();
                if !runner.ensure(&cells(&[i]))? {
                    return Ok(false);
                }
            }
            None => break,
        }
    }

    // Fill the coarse gap containing the crossing.
    let probs = column_probabilities(&runner.cells, ms, &visited, s);
    let fit = isotonic_fit(&probs.iter().map(|p| (p.0, p.1)).collect::<Vec<_>>());
    if let Some(j) = fit.iter().position(|&f| f >= 0.5) {
        if j > 0 {
            let fill = strided(visited[j - 1]..visited[j], sweep.fine_stride);
            if !runner.ensure(&cells(&fill))? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// `(m, successes, trials)` weights for the visited indices of column `s`.
fn column_probabilities(
    cells: &BTreeMap<(usize, usize), CellRecord>,
    ms: &[usize],
    visited: &[usize],
    s: usize,
) -> Vec<(f64, f64, f64)> {
    visited
        .iter()
        .map(|&i| {
            let c = &cells[&(ms[i], s)];
            (c.probability(), c.trials_run as f64, ms[i] as f64)
        })
        .collect()
}

/// Runs (or resumes) a grid. Without a sweep every `(m, s)` pair is
/// executed; with one, each column is swept adaptively.
pub fn run_grid(config: &PhaseGridConfig, options: &RunOptions<'_>) -> Result<PhaseGrid> {
    config.validate()?;
    let mut cells = BTreeMap::new();
    let checkpoint = match options.checkpoint {
        Some(path) => {
            let cp = Checkpoint::new(path, config);
            if options.reset {
                cp.remove()?;
            } else if let Some(saved) = cp.load()? {
                log::info!("resuming {} cells from {}", saved.len(), path.display());
                cells = saved;
            }
            Some(cp)
        }
        None => None,
    };
    let mut runner = Runner {
        config,
        cells,
        checkpoint,
        budget: options.max_new_cells,
    };

    let mut complete = true;
    match &config.sweep {
        None => {
            let all: Vec<(usize, usize)> = config
                .s_values
                .iter()
                .flat_map(|&s| config.m_values.iter().map(move |&m| (m, s)))
                .collect();
            complete = runner.ensure(&all)?;
        }
        Some(sweep) => {
            for &s in &config.s_values {
                if !sweep_column(&mut runner, s, sweep)? {
                    complete = false;
                    break;
                }
            }
        }
    }
    if let Some(cp) = &runner.checkpoint {
        cp.write(&runner.cells)?;
    }
    Ok(PhaseGrid {
        config: config.clone(),
        cells: runner.cells,
        complete,
    })
}
