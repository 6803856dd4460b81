//! Line-delimited record of completed cells.
//!
//! ```text
//! phasekit-checkpoint v1
//! config n=128 trials=50 variant=l1_plain ...
//! cell <m> <s> <successes> <trials> <non_converged> <redraws> <stream_id>
//! ```
//!
//! The file is always replaced atomically (write to a sibling temp file,
//! then rename), so a reader never sees a partial write.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{CellRecord, PhaseGridConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_HEADER: &str = "phasekit-checkpoint v1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    path: PathBuf,
    fingerprint: String,
    trials: usize,
}

impl Checkpoint {
    pub fn new(path: &Path, config: &PhaseGridConfig) -> Self {
        Self {
            path: path.to_path_buf(),
            fingerprint: config.fingerprint(),
            trials: config.trials,
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn corrupt(&self, msg: impl Into<String>) -> Error {
        Error::CorruptCheckpoint {
            path: self.path.clone(),
            msg: msg.into(),
        }
    }

    /// Cells saved by a previous run of the same configuration; `None` if no
    /// checkpoint exists. A file that does not parse, or that belongs to a
    /// different configuration, is an error and is left untouched.
    pub fn load(&self) -> Result<Option<BTreeMap<(usize, usize), CellRecord>>> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let mut lines = text.lines();
        if lines.next() != Some(CHECKPOINT_HEADER) {
            return Err(self.corrupt(format!("missing `{CHECKPOINT_HEADER}` header")));
        }
        match lines.next().and_then(|l| l.strip_prefix("config ")) {
            Some(fp) if fp == self.fingerprint => {}
            Some(_) => return Err(self.corrupt("written for a different configuration; use reset to discard it")),
            None => return Err(self.corrupt("missing config line")),
        }
        let mut cells = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            let lineno = i + 3;
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parsed = match fields.as_slice() {
                ["cell", rest @ ..] if rest.len() == 7 => {
                    let nums: std::result::Result<Vec<u64>, _> = rest.iter().map(|f| f.parse::<u64>()).collect();
                    nums.ok()
                }
                _ => None,
            };
            let nums = parsed.ok_or_else(|| self.corrupt(format!("line {lineno}: cannot parse `{line}`")))?;
            let record = CellRecord {
                successes: nums[2] as usize,
                trials_run: nums[3] as usize,
                non_converged: nums[4] as usize,
                redraws: nums[5] as usize,
                stream_id: nums[6],
            };
            if record.successes > record.trials_run
                || record.trials_run != self.trials
                || record.non_converged + record.successes > record.trials_run
            {
                return Err(self.corrupt(format!("line {lineno}: inconsistent tallies")));
            }
            if cells.insert((nums[0] as usize, nums[1] as usize), record).is_some() {
                return Err(self.corrupt(format!("line {lineno}: duplicate cell")));
            }
        }
        Ok(Some(cells))
    }

    pub fn write(&self, cells: &BTreeMap<(usize, usize), CellRecord>) -> Result<()> {
        let mut body = format!("{CHECKPOINT_HEADER}\nconfig {}\n", self.fingerprint);
        for (&(m, s), c) in cells {
            body.push_str(&format!(
                "cell {m} {s} {} {} {} {} {}\n",
                c.successes, c.trials_run, c.non_converged, c.redraws, c.stream_id
            ));
        }
        let mut tmp_name = self.path.file_name().unwrap_or_default().to_os_string();
        tmp_name.push(".tmp");
        let tmp = self.path.with_file_name(tmp_name);
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(body.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &self.path)?;
        Ok(())
    }

    pub fn remove(&self) -> Result<()> {
        match fs::remove_file(&self.path) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.into()),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::ExperimentVariant;

    fn record(successes: usize) -> CellRecord {
        CellRecord {
            successes,
            trials_run: 3,
            non_converged: 0,
            redraws: 0,
            stream_id: 99,
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PhaseGridConfig::new(4, vec![1], 3, ExperimentVariant::L1Plain, 1);
        let cp = Checkpoint::new(&dir.path().join("cp"), &cfg);
        assert!(cp.load().unwrap().is_none());
        let mut cells = BTreeMap::new();
        cells.insert((2, 1), record(1));
        cells.insert((4, 1), record(3));
        cp.write(&cells).unwrap();
        assert_eq!(cp.load().unwrap().unwrap(), cells);
    }

    #[test]
    fn rejects_garbage_and_foreign_configs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cp");
        let cfg = PhaseGridConfig::new(4, vec![1], 3, ExperimentVariant::L1Plain, 1);
        let cp = Checkpoint::new(&path, &cfg);

        fs::write(&path, "hello\n").unwrap();
        assert!(matches!(cp.load(), Err(Error::CorruptCheckpoint { .. })));

        let other = PhaseGridConfig { seed: 2, ..cfg.clone() };
        Checkpoint::new(&path, &other).write(&BTreeMap::new()).unwrap();
        assert!(matches!(cp.load(), Err(Error::CorruptCheckpoint { .. })));

        fs::write(
            &path,
            format!(
                "{CHECKPOINT_HEADER}\nconfig {}\ncell 2 1 5 3 0 0 1\n",
                cfg.fingerprint()
            ),
        )
        .unwrap();
        assert!(matches!(cp.load(), Err(Error::CorruptCheckpoint { .. })));
    }
}
