//! Batch driver: config in, `config.resolved` + `data.csv` + `report.json` out.

pub mod config;
pub mod studies;

use config::StudyConfig;
use grazing_core::Error;
use serde::Serialize;
use std::path::Path;
use studies::{run_study, Check};

pub const REPORT_FORMAT: &str = "grazing-report/1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_TOLERANCE: i32 = 2;
pub const EXIT_ABORT: i32 = 3;

#[derive(Debug, Serialize)]
struct CsvContract<'a> {
    file: &'a str,
    version: &'a str,
    columns: &'a str,
}

#[derive(Debug, Serialize)]
struct Report<'a> {
    format: &'a str,
    study: String,
    seed: u64,
    csv: Option<CsvContract<'a>>,
    pass: bool,
    exit_code: i32,
    error: Option<String>,
    checks: &'a [Check],
    results: serde_json::Value,
}

/// Exit code for a library error raised while a study runs.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Tolerance { .. } => EXIT_TOLERANCE,
        Error::Abort(_) | Error::Singular(_) => EXIT_ABORT,
        _ => EXIT_CONFIG,
    }
}

fn write(path: &Path, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

/// Runs the study and writes its artifacts under `cfg.output.dir`; returns the exit code.
pub fn run(cfg: &StudyConfig) -> Result<i32, String> {
    let dir = Path::new(&cfg.output.dir);
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    write(&dir.join("config.resolved"), &cfg.to_toml())?;
    let (code, report) = match run_study(cfg) {
        Ok(out) => {
            let pass = out.checks.iter().all(|c| c.pass);
            let code = if pass { EXIT_OK } else { EXIT_TOLERANCE };
            write(&dir.join("data.csv"), &out.csv)?;
            let columns = out.csv.lines().next().unwrap_or("");
            let report = Report {
                format: REPORT_FORMAT,
                study: cfg.kind.to_string(),
                seed: cfg.seed,
                csv: Some(CsvContract { file: "data.csv", version: &out.csv_version, columns }),
                pass,
                exit_code: code,
                error: None,
                checks: &out.checks,
                results: out.results.clone(),
            };
            (code, serde_json::to_string_pretty(&report).expect("report serializes"))
        }
        Err(e) => {
            let code = exit_code(&e);
            let report = Report {
                format: REPORT_FORMAT,
                study: cfg.kind.to_string(),
                seed: cfg.seed,
                csv: None,
                pass: false,
                exit_code: code,
                error: Some(e.to_string()),
                checks: &[],
                results: serde_json::Value::Null,
            };
            eprintln!("{e}");
            (code, serde_json::to_string_pretty(&report).expect("report serializes"))
        }
    };
    write(&dir.join("report.json"), &(report + "\n"))?;
    Ok(code)
}
