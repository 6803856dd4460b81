//! Line-oriented `key = value` files.
//!
//! Blank lines and lines starting with `#` are ignored. Array values are
//! whitespace-separated numbers; a value may continue over following lines
//! that do not contain `=`, which keeps matrices readable one row per line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::experiments::{AdaptiveSweep, ExperimentVariant, PhaseGridConfig};
use crate::solvers::{AdmmParams, Constraint, RecoveryProblem};

#[derive(Debug, Clone, Default)]
pub struct KeyValueFile {
    path: PathBuf,
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValueFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// `path` is only used in error messages.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                let key = k.trim().to_string();
                if key.is_empty() {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno,
                        msg: "empty key".into(),
                    });
                }
                if entries.contains_key(&key) {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line: lineno,
                        msg: format!("duplicate key `{key}`"),
                    });
                }
                entries.insert(key.clone(), (lineno, v.trim().to_string()));
                current = Some(key);
            } else if let Some(key) = &current {
                let entry = entries.get_mut(key).expect("current key exists");
                entry.1.push(' ');
                entry.1.push_str(line);
            } else {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    fn err(&self, key: &str, msg: String) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.entries.get(key).map_or(0, |e| e.0),
            msg,
        }
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Fails on any key outside `allowed`, so typos do not pass silently.
    pub fn reject_unknown(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(self.err(k, format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.1.as_str())
    }

    pub fn require_str(&self, key: &str) -> Result<&str> {
        self.str(key).ok_or_else(|| Error::Parse {
            path: self.path.clone(),
            line: 0,
            msg: format!("missing key `{key}`"),
        })
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(key, format!("cannot parse `{v}` for `{key}`"))),
        }
    }

    pub fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.parse_value(key)?.ok_or_else(|| Error::Parse {
            path: self.path.clone(),
            line: 0,
            msg: format!("missing key `{key}`"),
        })
    }

    pub fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v
                .split_whitespace()
                .map(|tok| {
                    tok.parse()
                        .map_err(|_| self.err(key, format!("cannot parse `{tok}` in `{key}`")))
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    pub fn require_list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.list(key)?.ok_or_else(|| Error::Parse {
            path: self.path.clone(),
            line: 0,
            msg: format!("missing key `{key}`"),
        })
    }
}

/// Parses `start:stop:step` into the inclusive integer range.
pub fn parse_int_range(spec: &str) -> Option<Vec<usize>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let (start, stop, step) = match parts.as_slice() {
        [a, b] => (a.parse().ok()?, b.parse().ok()?, 1),
        [a, b, c] => (a.parse().ok()?, b.parse().ok()?, c.parse().ok()?),
        _ => return None,
    };
    if step == 0 || start > stop {
        return None;
    }
    Some((start..=stop).step_by(step).collect())
}

fn parse_bool(kv: &KeyValueFile, key: &str) -> Result<Option<bool>> {
    kv.parse_value::<bool>(key)
}

/// Applies any solver keys present in the file to `params`.
fn admm_overrides(kv: &KeyValueFile, params: &mut AdmmParams) -> Result<()> {
    if let Some(v) = kv.parse_value("rho")? {
        params.rho = v;
    }
    if let Some(v) = kv.parse_value("max_iters")? {
        params.max_iters = v;
    }
    if let Some(v) = kv.parse_value("feas_tol")? {
        params.feas_tol = v;
    }
    if let Some(v) = kv.parse_value("obj_tol")? {
        params.obj_tol = v;
    }
    if let Some(v) = parse_bool(kv, "adaptive_rho")? {
        params.adaptive_rho = v;
    }
    if let Some(v) = parse_bool(kv, "polish")? {
        params.polish = v;
    }
    Ok(())
}

/// A list of counts: either whitespace-separated values or one
/// `start:stop[:step]` range.
fn count_list(kv: &KeyValueFile, key: &str) -> Result<Option<Vec<usize>>> {
    match kv.str(key) {
        Some(v) if v.contains(':') => parse_int_range(v).map(Some).ok_or_else(|| Error::Parse {
            path: kv.path.clone(),
            line: kv.entries.get(key).map_or(0, |e| e.0),
            msg: format!("bad range `{v}` for `{key}` (expected start:stop[:step])"),
        }),
        _ => kv.list(key),
    }
}

pub const GRID_KEYS: &[&str] = &[
    "n",
    "m_values",
    "s_values",
    "trials",
    "variant",
    "seed",
    "rho",
    "max_iters",
    "feas_tol",
    "obj_tol",
    "adaptive_rho",
    "polish",
    "sweep",
    "coarse_stride",
    "fine_stride",
    "zeta",
];

/// Grid configuration file. Required: `n`, `s_values`, `variant`.
/// `m_values` defaults to `1:n`, `trials` to 20, `seed` to 0. Setting
/// `sweep = true` enables the adaptive sweep (with optional
/// `coarse_stride`, `fine_stride`, `zeta`).
pub fn read_grid_config(path: &Path) -> Result<PhaseGridConfig> {
    let kv = KeyValueFile::read(path)?;
    grid_config_from(&kv)
}

pub fn grid_config_from(kv: &KeyValueFile) -> Result<PhaseGridConfig> {
    kv.reject_unknown(GRID_KEYS)?;
    let n: usize = kv.require("n")?;
    let variant: ExperimentVariant = kv.require_str("variant")?.parse()?;
    let s_values = count_list(kv, "s_values")?.ok_or_else(|| kv.err("s_values", "missing key `s_values`".into()))?;
    let mut config = PhaseGridConfig::new(
        n,
        s_values,
        kv.parse_value("trials")?.unwrap_or(20),
        variant,
        kv.parse_value("seed")?.unwrap_or(0),
    );
    if let Some(ms) = count_list(kv, "m_values")? {
        config.m_values = ms;
    }
    admm_overrides(kv, &mut config.admm)?;
    let sweep_keys = ["coarse_stride", "fine_stride", "zeta"];
    if parse_bool(kv, "sweep")?.unwrap_or(false) {
        let mut sweep = AdaptiveSweep::default();
        if let Some(v) = kv.parse_value("coarse_stride")? {
            sweep.coarse_stride = v;
        }
        if let Some(v) = kv.parse_value("fine_stride")? {
            sweep.fine_stride = v;
        }
        if let Some(v) = kv.parse_value("zeta")? {
            sweep.zeta = v;
        }
        config.sweep = Some(sweep);
    } else if let Some(k) = sweep_keys.iter().find(|k| kv.contains(k)) {
        return Err(kv.err(k, format!("`{k}` requires `sweep = true`")));
    }
    config.validate()?;
    Ok(config)
}

pub const PROBLEM_KEYS: &[&str] = &["m", "n", "A", "y", "constraints", "radius", "x_star"];

/// A recovery problem file and the optional reference signal `x_star`.
///
/// ```text
/// m = 2
/// n = 3
/// A = 1 0 2
///     0 1 1
/// y = 2 1
/// constraints = nonneg      # any of: l2_ball nonneg
/// radius = 1.5              # required with l2_ball
/// ```
pub fn read_problem(path: &Path) -> Result<(RecoveryProblem, Option<Vec<f64>>)> {
    let kv = KeyValueFile::read(path)?;
    problem_from(&kv)
}

pub fn problem_from(kv: &KeyValueFile) -> Result<(RecoveryProblem, Option<Vec<f64>>)> {
    kv.reject_unknown(PROBLEM_KEYS)?;
    let m: usize = kv.require("m")?;
    let n: usize = kv.require("n")?;
    let a: Vec<f64> = kv.require_list("A")?;
    if a.len() != m * n {
        return Err(kv.err("A", format!("`A` has {} entries, expected m*n = {}", a.len(), m * n)));
    }
    let y: Vec<f64> = kv.require_list("y")?;
    let mut constraints = vec![];
    for name in kv.list::<String>("constraints")?.unwrap_or_default() {
        match name.as_str() {
            "l2_ball" => {
                let radius: f64 = kv.require("radius")?;
                constraints.push(Constraint::L2Ball { radius });
            }
            "nonneg" => constraints.push(Constraint::Nonneg),
            other => {
                return Err(kv.err(
                    "constraints",
                    format!("unknown constraint `{other}` (expected l2_ball or nonneg)"),
                ))
            }
        }
    }
    if kv.contains("radius") && !constraints.iter().any(|c| matches!(c, Constraint::L2Ball { .. })) {
        return Err(kv.err("radius", "`radius` given without the l2_ball constraint".into()));
    }
    let x_star: Option<Vec<f64>> = kv.list("x_star")?;
    if let Some(x) = &x_star {
        if x.len() != n {
            return Err(kv.err("x_star", format!("`x_star` has {} entries, expected n = {n}", x.len())));
        }
    }
    let problem = RecoveryProblem::new(DMatrix::from_row_slice(m, n, &a), y, constraints)?;
    Ok((problem, x_star))
}
