//! The example corpus: `NAME.lh` programs with optional `NAME.expect.lh`
//! goldens and `NAME.inputs` run specifications.
//!
//! An inputs file holds one `main ARGS => RESULT` per line, where RESULT is a
//! printed first-order value or `error` (the program is expected not to
//! finish). Blank lines and lines starting with `#` are ignored.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::interp::{diff_check_with, eval_with, DiffReport};
use crate::normal::golden_eq;
use crate::parse::{parse, parse_args, ParseError};
use crate::pipeline::{run, PipelineConfig, PipelineError, PipelineOutput};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: expected `ARGS => RESULT`")]
    BadInputs { path: PathBuf, line: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Expected {
    Value(String),
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InputCase {
    pub args: String,
    pub expected: Expected,
}

#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub name: String,
    pub source: String,
    pub expect: Option<String>,
    pub inputs: Vec<InputCase>,
}

/// The corpus shipped with the repository.
pub fn default_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn parse_inputs(text: &str, path: &Path) -> Result<Vec<InputCase>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((args, result)) = line.split_once("=>") else {
            return Err(CorpusError::BadInputs { path: path.to_owned(), line: i + 1 });
        };
        let result = result.trim();
        let expected = if result == "error" { Expected::Error } else { Expected::Value(result.to_string()) };
        out.push(InputCase { args: args.trim().to_string(), expected });
    }
    Ok(out)
}

fn read(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_owned(), source })
}

fn read_opt(path: &Path) -> Result<Option<String>, CorpusError> {
    if path.exists() {
        read(path).map(Some)
    } else {
        Ok(None)
    }
}

/// Loads every program in `dir`, sorted by name.
pub fn load_dir(dir: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    let listing = fs::read_dir(dir).map_err(|source| CorpusError::Io { path: dir.to_owned(), source })?;
    let mut names: Vec<String> = listing
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().map(str::to_owned))
        .filter(|n| n.ends_with(".lh") && !n.ends_with(".expect.lh"))
        .map(|n| n.trim_end_matches(".lh").to_owned())
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|name| {
            let source = read(&dir.join(format!("{name}.lh")))?;
            let expect = read_opt(&dir.join(format!("{name}.expect.lh")))?;
            let inputs_path = dir.join(format!("{name}.inputs"));
            let inputs = match read_opt(&inputs_path)? {
                Some(t) => parse_inputs(&t, &inputs_path)?,
                None => Vec::new(),
            };
            Ok(CorpusEntry { name, source, expect, inputs })
        })
        .collect()
}

pub fn load_default() -> Result<Vec<CorpusEntry>, CorpusError> {
    load_dir(&default_dir())
}

#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Clone, Debug, Serialize)]
pub struct CaseOutcome {
    pub case: InputCase,
    pub diff: DiffReport,
    /// The original program's result agrees with the declared one.
    pub expected_ok: bool,
}

#[derive(Clone, Debug)]
pub struct EntryOutcome {
    pub name: String,
    pub output: PipelineOutput,
    /// `None` when there is no golden.
    pub golden_ok: Option<bool>,
    pub cases: Vec<CaseOutcome>,
}

impl EntryOutcome {
    pub fn passed(&self) -> bool {
        self.golden_ok != Some(false) && self.cases.iter().all(|c| c.expected_ok && c.diff.is_sound())
    }
}

/// Optimizes one entry and checks it against its golden and inputs.
pub fn check_entry(e: &CorpusEntry, cfg: &PipelineConfig, step_limit: u64) -> Result<EntryOutcome, CheckError> {
    let p = parse(&e.source)?;
    let output = run(&p, cfg)?;
    let golden_ok = match &e.expect {
        Some(src) => Some(golden_eq(&parse(src)?, &output.optimized)),
        None => None,
    };
    let mut cases = Vec::new();
    for case in &e.inputs {
        let args = parse_args(&case.args)?;
        let diff = diff_check_with(&p, &output.optimized, &args, step_limit);
        let orig = eval_with(&p, &args, step_limit);
        let expected_ok = match (&case.expected, orig.finished()) {
            (Expected::Value(v), Some(r)) => r.to_string() == *v,
            (Expected::Error, None) => true,
            _ => false,
        };
        cases.push(CaseOutcome { case: case.clone(), diff, expected_ok });
    }
    Ok(EntryOutcome { name: e.name.clone(), output, golden_ok, cases })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_format() {
        let cases = parse_inputs("# c\nmain 1 [2] => [3]\n\nmain => error\n", Path::new("x")).unwrap();
        assert_eq!(cases.len(), 2);
        assert_eq!(cases[0].args, "main 1 [2]");
        assert_eq!(cases[0].expected, Expected::Value("[3]".into()));
        assert_eq!(cases[1].expected, Expected::Error);
        assert!(parse_inputs("main 1", Path::new("x")).is_err());
    }
}
