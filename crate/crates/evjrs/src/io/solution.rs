use std::path::Path;

use evjrs_core::mip::Mode;
use serde::{Deserialize, Serialize};

use super::{check_envelope, json_error, read_text, write_bytes};
use crate::error::Result;

pub const SOLUTION_VERSION: u32 = 1;
const FORMAT: &str = "evjrs-solution";

/// Primal values of one solve, with enough context to re-verify them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub format: String,
    pub version: u32,
    pub instance_hash: String,
    pub mode: Mode,
    pub status: String,
    pub objective: f64,
    pub values: Vec<f64>,
}

impl SolutionFile {
    pub fn new(
        instance_hash: String,
        mode: Mode,
        status: String,
        objective: f64,
        values: Vec<f64>,
    ) -> SolutionFile {
        SolutionFile {
            format: String::from(FORMAT),
            version: SOLUTION_VERSION,
            instance_hash,
            mode,
            status,
            objective,
            values,
        }
    }
}

pub fn read_solution(path: &Path) -> Result<SolutionFile> {
    let text = read_text(path)?;
    check_envelope(path, &text, FORMAT, SOLUTION_VERSION)?;
    serde_json::from_str(&text).map_err(|e| json_error(path, &text, &e))
}

pub fn write_solution(path: &Path, sol: &SolutionFile) -> Result<()> {
    let mut s = serde_json::to_string_pretty(sol).expect("solution serializes");
    s.push('\n');
    write_bytes(path, s.as_bytes())
}
