//! Labeled dataset directory: one instance file per instance, a feature and
//! a label tensor per sample, a `manifest.json` tying them together, and a
//! `timings.csv` with the labeling wall times. The manifest holds only
//! deterministic content, so [`dataset_hash`] ignores the timings file.

use std::fmt::Write;
use std::path::Path;

use evjrs_core::hash::instance_hash;
use evjrs_core::instances::{raw_features, ProblemInstance};
use evjrs_core::learner::Mat;
use serde::{Deserialize, Serialize};

use super::{
    check_envelope, dir_hash, json_error, read_instance, read_tensor, read_text, write_bytes,
    write_instance, write_tensor,
};
use crate::error::{Error, Result};
use crate::pipeline::LabeledSample;

pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.csv";
const FORMAT: &str = "evjrs-dataset";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub instances: Vec<ProblemInstance>,
    pub samples: Vec<LabeledSample>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    instances: Vec<String>,
    samples: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    instance: usize,
    scenario: usize,
    instance_hash: String,
    objective: f64,
    features: String,
    labels: String,
}

pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    let mut manifest = Manifest {
        format: String::from(FORMAT),
        version: VERSION,
        instances: Vec::new(),
        samples: Vec::new(),
    };
    for (i, inst) in ds.instances.iter().enumerate() {
        let name = format!("instance-{i:05}.json");
        write_instance(&dir.join(&name), inst)?;
        manifest.instances.push(name);
    }
    let mut timings = String::from("sample,instance,scenario,solve_seconds\n");
    for (k, s) in ds.samples.iter().enumerate() {
        let features = format!("sample-{k:05}.features.bin");
        let labels = format!("sample-{k:05}.labels.bin");
        let f = &s.features;
        write_tensor(
            &dir.join(&features),
            &Mat::from_vec(f.rows, f.cols, f.data.clone()),
        )?;
        let n = if f.ev_count == 0 {
            0
        } else {
            s.labels.len() / f.ev_count
        };
        write_tensor(
            &dir.join(&labels),
            &Mat::from_vec(
                f.ev_count,
                n,
                s.labels.iter().map(|&b| f64::from(b)).collect(),
            ),
        )?;
        manifest.samples.push(Entry {
            instance: s.instance,
            scenario: s.scenario,
            instance_hash: s.instance_hash.clone(),
            objective: s.objective,
            features,
            labels,
        });
        let _ = writeln!(
            timings,
            "{k},{},{},{:e}",
            s.instance, s.scenario, s.solve_time
        );
    }
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_bytes(&dir.join(MANIFEST), text.as_bytes())?;
    write_bytes(&dir.join(TIMINGS), timings.as_bytes())
}

/// Reads a dataset and checks every stored tensor against the instance it
/// claims to come from.
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST);
    let text = read_text(&path)?;
    check_envelope(&path, &text, FORMAT, VERSION)?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| json_error(&path, &text, &e))?;
    let instances = manifest
        .instances
        .iter()
        .map(|n| read_instance(&dir.join(n)))
        .collect::<Result<Vec<_>>>()?;
    let times = read_timings(dir);
    let mut samples = Vec::new();
    for (k, e) in manifest.samples.into_iter().enumerate() {
        let bad = |m: String| Error::format(&path, None, format!("sample {k}: {m}"));
        let inst = instances
            .get(e.instance)
            .ok_or_else(|| bad(format!("instance {} out of range", e.instance)))?;
        if instance_hash(inst) != e.instance_hash {
            return Err(bad(String::from("instance hash mismatch")));
        }
        let features = raw_features(inst, e.scenario)?;
        let stored = read_tensor(&dir.join(&e.features))?;
        if (stored.rows, stored.cols) != (features.rows, features.cols)
            || stored.data != features.data
        {
            return Err(bad(String::from(
                "feature tensor does not match its instance",
            )));
        }
        let lab = read_tensor(&dir.join(&e.labels))?;
        if lab.rows != features.ev_count || lab.data.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(bad(String::from("label tensor must be e x n_per_ev bits")));
        }
        samples.push(LabeledSample {
            features,
            labels: lab.data.iter().map(|&v| v as u8).collect(),
            instance: e.instance,
            scenario: e.scenario,
            instance_hash: e.instance_hash,
            objective: e.objective,
            solve_time: times.get(k).copied().unwrap_or(f64::NAN),
        });
    }
    Ok(Dataset { instances, samples })
}

fn read_timings(dir: &Path) -> Vec<f64> {
    let Ok(text) = std::fs::read_to_string(dir.join(TIMINGS)) else {
        return Vec::new();
    };
    text.lines()
        .skip(1)
        .filter_map(|l| l.rsplit(',').next()?.parse().ok())
        .collect()
}

/// Hash of the dataset's deterministic content.
pub fn dataset_hash(dir: &Path) -> Result<String> {
    dir_hash(dir, &[TIMINGS])
}
