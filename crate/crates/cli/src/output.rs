//! Artifact writing: `report.json`, CSV/SVG files and `manifest.json`.

use crate::config::{ExperimentConfig, Format};
use crate::experiments::Outcome;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_sha256: String,
    pub artifact_version: String,
    pub wall_time_s: f64,
    pub threads: usize,
    pub assertions: BTreeMap<String, bool>,
    pub passed: bool,
    pub files: Vec<String>,
}

/// SHA-256 of the resolved config, ignoring where and how outputs are
/// written.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.output_dir = None;
    c.formats = None;
    hex::encode(Sha256::digest(c.to_json().as_bytes()))
}

fn write(dir: &Path, name: &str, data: &[u8], files: &mut Vec<String>) -> std::io::Result<()> {
    std::fs::write(dir.join(name), data)?;
    files.push(name.to_string());
    Ok(())
}

/// Writes all artifacts of a finished run and returns the manifest.
pub fn write_artifacts(
    cfg: &ExperimentConfig,
    outcome: &Outcome,
    wall_time_s: f64,
    threads: usize,
) -> std::io::Result<Manifest> {
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let mut report = serde_json::to_string_pretty(&outcome.report).expect("report serialises");
    report.push('\n');
    write(&dir, "report.json", report.as_bytes(), &mut files)?;
    if cfg.wants(Format::Csv) {
        for (name, data) in &outcome.csv {
            write(&dir, name, data, &mut files)?;
        }
    }
    if cfg.wants(Format::Svg) {
        for (name, data) in &outcome.svg {
            write(&dir, name, data.as_bytes(), &mut files)?;
        }
    }
    let manifest = Manifest {
        experiment: cfg.experiment.map_or("", |e| e.name()).to_string(),
        config_sha256: config_hash(cfg),
        artifact_version: ARTIFACT_VERSION.to_string(),
        wall_time_s,
        threads,
        assertions: outcome.assertions.clone(),
        passed: outcome.passed(),
        files,
    };
    let mut m = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    m.push('\n');
    std::fs::write(dir.join("manifest.json"), m)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig::default().resolve(Experiment::Domination).unwrap();
        let mut b = a.clone();
        b.output_dir = Some(PathBuf::from("elsewhere"));
        b.formats = Some(vec![Format::Json]);
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = Some(1);
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    #[test]
    fn manifest_lists_written_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::default().resolve(Experiment::Domination).unwrap();
        cfg.output_dir = Some(dir.path().to_path_buf());
        cfg.formats = Some(vec![Format::Json, Format::Svg]);
        let mut o = crate::run(&cfg).unwrap();
        o.csv.push(("x.csv".into(), b"a\n".to_vec()));
        o.svg.push(("x.svg".into(), "<svg/>".into()));
        let m = write_artifacts(&cfg, &o, 0.5, 1).unwrap();
        assert_eq!(m.files, vec!["report.json".to_string(), "x.svg".to_string()]);
        assert!(!dir.path().join("x.csv").exists());
        assert!(m.passed);
    }
}
