//! `run` and `verify`: orchestration, file output and exit codes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::runners;
use crate::suites::{self, SuiteReport};
use crate::table::ResultTable;
use crate::{AppError, AppResult};

/// Build identification written into every report.
pub fn build_stamp() -> String {
    match option_env!("QFILTER_BUILD_COMMIT") {
        Some(commit) => format!("qfilter {} ({commit})", env!("CARGO_PKG_VERSION")),
        None => format!("qfilter {}", env!("CARGO_PKG_VERSION")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    /// `verify` ran but some property failed.
    PropertyFailed,
    Invalid,
    Numerical,
    Io,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            Self::Success => 0,
            Self::PropertyFailed | Self::Io => 1,
            Self::Invalid => 2,
            Self::Numerical => 3,
        }
    }

    pub fn of_error(e: &AppError) -> Self {
        match e {
            AppError::Invalid(_) => Self::Invalid,
            AppError::Numerical(_) => Self::Numerical,
            AppError::Io(_) => Self::Io,
        }
    }
}

/// Results of one `run`, before or after writing.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub tables: Vec<ResultTable>,
    /// Full JSON report: metadata, pass flag and experiment results.
    pub report: Value,
    pub passed: bool,
    pub files: Vec<PathBuf>,
}

fn pack<R: Serialize>(run: runners::Run<R>, passed: bool) -> (Value, Vec<ResultTable>, bool) {
    (
        serde_json::to_value(&run.report).expect("report serializes"),
        run.tables,
        passed,
    )
}

/// Runs a resolved configuration without touching the file system.
pub fn execute(cfg: &ExperimentConfig) -> AppResult<RunOutput> {
    use ExperimentKind::*;
    let (results, tables, passed) = match cfg.experiment {
        Reduction => {
            let r = runners::reduction(cfg)?;
            let ok = r.report.passes();
            pack(r, ok)
        }
        Stabilize => {
            let r = runners::stabilize(cfg)?;
            let ok = r.report.passes();
            pack(r, ok)
        }
        TwoqubitReduction | TwoqubitStabilize => {
            let r = runners::twoqubit(cfg, cfg.experiment == TwoqubitStabilize)?;
            let ok = r.report.passes();
            pack(r, ok)
        }
        Chaos => {
            let r = runners::chaos(cfg)?;
            let ok = r.report.non_increasing;
            pack(r, ok)
        }
        Picard => {
            let r = runners::picard(cfg)?;
            let ok = r.report.passes();
            pack(r, ok)
        }
        Dynkin => {
            let r = runners::dynkin(cfg)?;
            let ok = r.report.passes();
            pack(r, ok)
        }
        Dpp => {
            let r = runners::dpp(cfg)?;
            let ok = r.report.passes();
            pack(r, ok)
        }
        Lipschitz => {
            let r = runners::lipschitz(cfg)?;
            let ok = r.report.passes();
            pack(r, ok)
        }
    };
    let report = json!({
        "metadata": {
            "build": build_stamp(),
            "seed": cfg.seed,
            "config": cfg,
        },
        "passed": passed,
        "results": results,
    });
    Ok(RunOutput {
        config: cfg.clone(),
        tables,
        report,
        passed,
        files: Vec::new(),
    })
}

/// `(file name suffix, CSV text)` for each table.
pub fn render_tables(tables: &[ResultTable]) -> Vec<(String, String)> {
    tables
        .iter()
        .map(|t| (t.name.clone(), t.to_csv_string()))
        .collect()
}

fn prefixed(prefix: &str, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}_{suffix}"))
}

fn write_all(prefix: &str, files: &[(String, String)]) -> AppResult<Vec<PathBuf>> {
    if let Some(parent) = Path::new(prefix).parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut written = Vec::new();
    for (name, text) in files {
        let path = prefixed(prefix, name);
        fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

/// Applies overrides, validates, runs and writes `<prefix>_<table>.csv` and
/// `<prefix>_report.json`. Nothing is written unless the run succeeds.
pub fn run_config(
    mut cfg: ExperimentConfig,
    out: Option<&str>,
    seed: Option<u64>,
) -> AppResult<RunOutput> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output = Some(o.to_string());
    }
    let cfg = cfg.resolve()?;
    let mut output = execute(&cfg)?;
    let mut files: Vec<(String, String)> = output
        .tables
        .iter()
        .map(|t| (format!("{}.csv", t.name), t.to_csv_string()))
        .collect();
    let mut report = serde_json::to_string_pretty(&output.report).expect("report serializes");
    report.push('\n');
    files.push(("report.json".to_string(), report));
    output.files = write_all(cfg.output_prefix(), &files)?;
    Ok(output)
}

pub fn run_file(path: &Path, out: Option<&str>, seed: Option<u64>) -> AppResult<RunOutput> {
    run_config(ExperimentConfig::from_path(path)?, out, seed)
}

/// Runs a named suite; with `out`, also writes `<out>_verify.json`.
pub fn verify(suite: &str, out: Option<&str>) -> AppResult<(SuiteReport, Option<PathBuf>)> {
    if !suites::SUITES.contains(&suite) {
        return Err(AppError::Invalid(format!(
            "unknown suite {suite:?}; expected one of {}",
            suites::SUITES.join(", ")
        )));
    }
    let report = suites::run_suite(suite)?;
    let path = match out {
        Some(prefix) => {
            let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
            text.push('\n');
            write_all(prefix, &[("verify.json".to_string(), text)])?
                .into_iter()
                .next()
        }
        None => None,
    };
    Ok((report, path))
}
