//! Files written for a run. Output is a pure function of the configuration:
//! no timestamps, sorted keys, shortest round-trip float formatting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::exit::{Stage, StageError};
use crate::pipeline::{RunArtifacts, RunReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_sha256: String,
    pub version: String,
    pub seed: u64,
    pub exit_code: i32,
    /// File name to SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
}

fn io_err(path: &Path, e: std::io::Error) -> StageError {
    StageError::new(Stage::Io, format!("{}: {e}", path.display()))
}

fn json<T: Serialize>(v: &T) -> String {
    // through Value so map keys come out sorted
    let value = serde_json::to_value(v).expect("serializable");
    let mut s = serde_json::to_string_pretty(&value).expect("serializable");
    s.push('\n');
    s
}

fn header(hash: &str) -> String {
    format!("# config_sha256={hash}\n")
}

pub fn fmt(x: f64) -> String {
    format!("{x:e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}

pub fn spectrum_csv(report: &RunReport) -> Option<String> {
    let spec = report.spectrum.as_ref()?;
    let mut out = header(&report.config_sha256);
    out.push_str("j,lambda_v,lambda_inf,shift\n");
    for (j, lv) in spec.eigenvalues.iter().enumerate() {
        let (li, sh) = match &report.kam {
            Some(k) => (Some(k.lambda_inf[j]), Some(k.shifts[j])),
            None => (None, None),
        };
        let _ = writeln!(out, "{j},{},{},{}", fmt(*lv), opt(li), opt(sh));
    }
    Some(out)
}

pub fn kam_trace_csv(report: &RunReport) -> Option<String> {
    let records = match (&report.kam, &report.failure) {
        (Some(k), _) => &k.records,
        (None, Some(f)) if !f.kam_trace.is_empty() => &f.kam_trace,
        _ => return None,
    };
    let mut out = header(&report.config_sha256);
    out.push_str(
        "step,eps,theta,min_divisor,min_margin,max_shift,tail,generator_norm,hermitian_defect,spectrum_defect,skipped\n",
    );
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            fmt(r.eps),
            opt(r.theta),
            fmt(r.min_divisor),
            fmt(r.min_margin),
            fmt(r.max_shift),
            fmt(r.tail),
            fmt(r.generator_norm),
            fmt(r.hermitian_defect),
            fmt(r.spectrum_defect),
            r.skipped
        );
    }
    Some(out)
}

pub fn norms_csv(arts: &RunArtifacts) -> Option<String> {
    let first = arts.norms.first()?;
    let mut out = header(&arts.report.config_sha256);
    out.push('t');
    for s in &arts.norms {
        let _ = write!(out, ",h{}", s.s);
    }
    out.push('\n');
    for (i, t) in first.times.iter().enumerate() {
        out.push_str(&fmt(*t));
        for s in &arts.norms {
            out.push(',');
            out.push_str(&fmt(s.values[i]));
        }
        out.push('\n');
    }
    Some(out)
}

/// Write every artifact of a run into `dir` and return the manifest.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, arts: &RunArtifacts) -> Result<Manifest, StageError> {
    let report = &arts.report;
    let mut files: BTreeMap<String, String> = BTreeMap::new();
    files.insert("config.toml".into(), cfg.to_toml_string());
    files.insert("results.json".into(), json(report));
    if let Some(s) = spectrum_csv(report) {
        files.insert("spectrum.csv".into(), s);
    }
    if let Some(s) = kam_trace_csv(report) {
        files.insert("kam_trace.csv".into(), s);
    }
    if let Some(s) = norms_csv(arts) {
        files.insert("norms.csv".into(), s);
    }
    if let Some(f) = &report.failure {
        files.insert("error.json".into(), json(f));
    }
    write_files(dir, &report.name, &report.config_sha256, report.seed, report.exit_code(), files)
}

/// Write `files` plus a manifest listing their hashes.
pub fn write_files(
    dir: &Path,
    name: &str,
    config_sha256: &str,
    seed: u64,
    exit_code: i32,
    files: BTreeMap<String, String>,
) -> Result<Manifest, StageError> {
    use sha2::{Digest, Sha256};
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut hashes = BTreeMap::new();
    for (file, body) in &files {
        let path = dir.join(file);
        fs::write(&path, body).map_err(|e| io_err(&path, e))?;
        hashes.insert(file.clone(), hex::encode(Sha256::digest(body.as_bytes())));
    }
    let manifest = Manifest {
        name: name.to_string(),
        config_sha256: config_sha256.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        exit_code,
        files: hashes,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, json(&manifest)).map_err(|e| io_err(&path, e))?;
    Ok(manifest)
}

pub fn read_report(dir: &Path) -> Result<RunReport, StageError> {
    let path = dir.join("results.json");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_str(&text).map_err(|e| StageError::new(Stage::Io, format!("{}: {e}", path.display())))
}
