//! Library side of the `maxmin` command: instance generators, the solve
//! pipeline, gap experiments and allocation checks. `main.rs` only parses
//! flags and maps errors to exit codes.

pub mod gap;
pub mod generate;
pub mod solve;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use maxmin_core::certify::CertifyError;
use maxmin_core::clp::ClpError;
use maxmin_core::matching::MatchingError;
use maxmin_core::oracle::{verify_allocation, OracleError};
use maxmin_core::{
    format_rational, validate_instance, Allocation, Instance, InstanceError, Rational, RawInstance,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gap::{gap_row, run_gap, GapOptions, GapRow, GapSummary, GapTable};
pub use generate::{generate_instance, GeneratorKind};
pub use solve::{solve, solve_with, Outcome, RunReport, SolveOptions, SolveResult, TargetSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_BELOW_THRESHOLD: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Clp(#[from] ClpError),
    #[error(transparent)]
    Matching(#[from] MatchingError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("self-audit failed: {0}")]
    SelfAudit(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. }
            | CliError::Json { .. }
            | CliError::Instance(_)
            | CliError::InvalidArgument(_) => EXIT_INPUT,
            CliError::Clp(ClpError::BudgetExceeded { .. })
            | CliError::Oracle(OracleError::BudgetExceeded { .. }) => EXIT_BUDGET,
            CliError::Clp(ClpError::Instance(_))
            | CliError::Oracle(OracleError::Instance(_) | OracleError::NotAPartition(_)) => {
                EXIT_INPUT
            }
            _ => EXIT_INTERNAL,
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(io_error(path))
}

pub fn write_lines(path: &Path, lines: &[String]) -> Result<(), CliError> {
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(path, text).map_err(io_error(path))
}

pub fn read_instance(path: &Path) -> Result<Instance, CliError> {
    let raw: RawInstance = read_json(path)?;
    Ok(validate_instance(&raw)?)
}

/// Allocation files map player names to lists of resource names.
pub fn read_allocation(path: &Path, instance: &Instance) -> Result<Allocation, CliError> {
    let names: BTreeMap<String, Vec<String>> = read_json(path)?;
    Ok(Allocation::from_names(instance, &names)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub min_value: String,
    pub threshold: String,
    pub passed: bool,
}

/// Exact min player value of `allocation`, compared against `threshold`.
pub fn verify(
    instance: &Instance,
    allocation: &Allocation,
    threshold: &Rational,
) -> Result<VerifyReport, CliError> {
    let value = verify_allocation(instance, allocation)?;
    Ok(VerifyReport {
        passed: &value >= threshold,
        min_value: format_rational(&value),
        threshold: format_rational(threshold),
    })
}
