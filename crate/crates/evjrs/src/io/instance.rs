use std::path::Path;

use evjrs_core::instances::{validate_instance, ProblemInstance};
use serde::{Deserialize, Serialize};

use super::{check_envelope, json_error, read_text, write_bytes};
use crate::error::Result;

pub const INSTANCE_VERSION: u32 = 1;
const FORMAT: &str = "evjrs-instance";

#[derive(Serialize)]
struct Out<'a> {
    format: &'static str,
    version: u32,
    instance: &'a ProblemInstance,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct In {
    #[allow(dead_code)]
    format: String,
    #[allow(dead_code)]
    version: u32,
    instance: ProblemInstance,
}

pub fn render_instance(inst: &ProblemInstance) -> String {
    let mut s = serde_json::to_string_pretty(&Out {
        format: FORMAT,
        version: INSTANCE_VERSION,
        instance: inst,
    })
    .expect("instance serializes");
    s.push('\n');
    s
}

/// Parses and validates an instance document.
pub fn parse_instance(path: &Path, text: &str) -> Result<ProblemInstance> {
    check_envelope(path, text, FORMAT, INSTANCE_VERSION)?;
    let doc: In = serde_json::from_str(text).map_err(|e| json_error(path, text, &e))?;
    validate_instance(&doc.instance)?;
    Ok(doc.instance)
}

pub fn read_instance(path: &Path) -> Result<ProblemInstance> {
    parse_instance(path, &read_text(path)?)
}

pub fn write_instance(path: &Path, inst: &ProblemInstance) -> Result<()> {
    write_bytes(path, render_instance(inst).as_bytes())
}
