//! Exit-coded errors, statistics JSON and all-or-nothing file output.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use bisim_core::{QuotientModel, RunStats, SparseModel};

/// Usage or configuration error.
pub const EXIT_USAGE: u8 = 1;
/// Malformed or unreadable input.
pub const EXIT_PARSE: u8 = 2;
/// An internal invariant failed; the message carries the witness.
pub const EXIT_INVARIANT: u8 = 3;
/// Value iteration hit its sweep limit.
pub const EXIT_NOT_CONVERGED: u8 = 4;
/// Verification found a mismatch; a reproducer was written.
pub const EXIT_MISMATCH: u8 = 5;

#[derive(Debug)]
pub struct CliError {
    code: u8,
    source: anyhow::Error,
}

impl CliError {
    pub fn new(code: u8, source: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            source: source.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        self.code
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if f.alternate() {
            write!(f, "{:#}", self.source)
        } else {
            write!(f, "{}", self.source)
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Tags an error with an exit code.
pub trait WithCode<T> {
    fn code(self, code: u8) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for Result<T, E> {
    fn code(self, code: u8) -> CliResult<T> {
        self.map_err(|e| CliError::new(code, e))
    }
}

/// Statistics sidecar of `minimize`; field order is the file layout.
#[derive(Debug, Serialize)]
pub struct StatsJson {
    pub schema: u32,
    pub num_states: usize,
    pub num_actions: usize,
    pub num_transitions: usize,
    pub quotient_states: usize,
    pub refine_calls: u64,
    pub splitter_mass: u64,
    pub spl_avg: f64,
    pub stale_skips: u64,
    pub fallback_count: u64,
    pub wall_ms: f64,
}

impl StatsJson {
    pub fn new<P: bisim_core::Probability>(model: &SparseModel<P>, quotient: &QuotientModel<P>, stats: &RunStats) -> Self {
        Self {
            schema: 1,
            num_states: model.num_states(),
            num_actions: model.num_actions(),
            num_transitions: model.num_transitions(),
            quotient_states: quotient.num_states(),
            refine_calls: stats.refine_calls,
            splitter_mass: stats.splitter_mass,
            spl_avg: stats.spl_avg(),
            stale_skips: stats.stale_skips,
            fallback_count: stats.fallback_count,
            wall_ms: stats.wall_time.as_secs_f64() * 1e3,
        }
    }
}

/// `prefix` with `ext` appended, keeping any dots already in the prefix.
pub fn with_suffix(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(ext);
    PathBuf::from(s)
}

/// Writes every file or none: all contents go to temporaries in the target
/// directories (created if missing) first and are renamed into place only once all succeeded.
pub fn write_files_atomically(files: &[(PathBuf, &[u8])]) -> anyhow::Result<()> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, contents) in files {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("cannot create a file in {}", dir.display()))?;
        tmp.write_all(contents)
            .and_then(|()| tmp.as_file().sync_all())
            .with_context(|| format!("cannot write {}", path.display()))?;
        staged.push((tmp, path));
    }
    for (tmp, path) in staged {
        tmp.persist(path).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffix_keeps_dots() {
        assert_eq!(with_suffix(Path::new("out/a.min"), ".tra"), PathBuf::from("out/a.min.tra"));
    }

    #[test]
    fn failed_batch_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("a.txt");
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, b"").unwrap();
        let bad = blocker.join("b.txt");
        assert!(write_files_atomically(&[(good.clone(), b"x"), (bad, b"y")]).is_err());
        assert!(!good.exists());
    }
}
