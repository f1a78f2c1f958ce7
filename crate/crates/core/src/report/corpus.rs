use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{scan, ScanConfig, ScanFailure, ScanReport, SCHEMA_VERSION};
use crate::taint::Channel;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no APKs found in {0}")]
    NoApks(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("thread pool: {0}")]
    Pool(String),
}

fn io_error(path: &Path, e: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Expands directories to the `.apk` files directly inside them, sorted by
/// name; file arguments are kept as given.
pub fn collect_apks(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CorpusError> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found = Vec::new();
            for entry in std::fs::read_dir(input).map_err(|e| io_error(input, e))? {
                let path = entry.map_err(|e| io_error(input, e))?.path();
                let is_apk = path
                    .extension()
                    .is_some_and(|x| x.eq_ignore_ascii_case("apk"));
                if is_apk && path.is_file() {
                    found.push(path);
                }
            }
            found.sort();
            out.extend(found);
        } else {
            out.push(input.clone());
        }
    }
    if out.is_empty() {
        let shown: Vec<String> = inputs.iter().map(|p| p.display().to_string()).collect();
        return Err(CorpusError::NoApks(shown.join(", ")));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusApp {
    pub path: String,
    /// Per-app report file, relative to the corpus output directory.
    pub report: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatrixCell {
    pub source: String,
    pub channel: Channel,
    pub paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub schema_version: u32,
    /// Successfully scanned apps; prevalences are fractions of this count.
    pub n_apps: usize,
    pub n_failed: usize,
    pub apps: Vec<CorpusApp>,
    pub per_rule_prevalence: BTreeMap<String, f64>,
    pub per_tracker_prevalence: BTreeMap<String, f64>,
    pub source_sink_matrix: Vec<MatrixCell>,
    pub total_flows: usize,
}

impl CorpusStats {
    pub fn from_reports(apps: Vec<CorpusApp>, reports: &[&ScanReport]) -> CorpusStats {
        let n = reports.len();
        let mut rule_apps: BTreeMap<String, usize> = BTreeMap::new();
        let mut tracker_apps: BTreeMap<String, usize> = BTreeMap::new();
        let mut matrix: BTreeMap<(String, Channel), usize> = BTreeMap::new();
        let mut total_flows = 0;
        for r in reports {
            let rules: BTreeSet<&str> = r.findings.iter().map(|f| f.rule_id.as_str()).collect();
            for id in rules {
                *rule_apps.entry(id.to_string()).or_default() += 1;
            }
            let trackers: BTreeSet<&str> = r.trackers.iter().map(|t| t.name.as_str()).collect();
            for name in trackers {
                *tracker_apps.entry(name.to_string()).or_default() += 1;
            }
            for f in &r.flows {
                *matrix.entry((f.source.pattern.clone(), f.channel)).or_default() += 1;
                total_flows += 1;
            }
        }
        let fraction = |m: BTreeMap<String, usize>| -> BTreeMap<String, f64> {
            m.into_iter().map(|(k, c)| (k, c as f64 / n as f64)).collect()
        };
        CorpusStats {
            schema_version: SCHEMA_VERSION,
            n_apps: n,
            n_failed: apps.iter().filter(|a| a.error.is_some()).count(),
            apps,
            per_rule_prevalence: fraction(rule_apps),
            per_tracker_prevalence: fraction(tracker_apps),
            source_sink_matrix: matrix
                .into_iter()
                .map(|((source, channel), paths)| MatrixCell { source, channel, paths })
                .collect(),
            total_flows,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("corpus stats serialize")
    }
}

pub struct CorpusRun {
    pub stats: CorpusStats,
    /// One entry per input APK, in input order.
    pub results: Vec<(CorpusApp, Result<ScanReport, ScanFailure>)>,
}

/// Report file names derived from APK file stems, made unique by suffix.
fn report_names(paths: &[PathBuf]) -> Vec<String> {
    let mut used = BTreeSet::new();
    paths
        .iter()
        .map(|p| {
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "app".into());
            let mut name = format!("{stem}.json");
            let mut i = 2;
            while !used.insert(name.clone()) {
                name = format!("{stem}-{i}.json");
                i += 1;
            }
            format!("reports/{name}")
        })
        .collect()
}

/// Scans every APK on a pool of `jobs` threads. Individual failures are
/// recorded and do not stop the run.
pub fn run_corpus(paths: &[PathBuf], config: &ScanConfig, jobs: usize) -> Result<CorpusRun, CorpusError> {
    if paths.is_empty() {
        return Err(CorpusError::NoApks("(no inputs)".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CorpusError::Pool(e.to_string()))?;
    let outcomes: Vec<Result<ScanReport, ScanFailure>> =
        pool.install(|| paths.par_iter().map(|p| scan(p, config)).collect());
    let results: Vec<(CorpusApp, Result<ScanReport, ScanFailure>)> = paths
        .iter()
        .zip(report_names(paths))
        .zip(outcomes)
        .map(|((path, report), outcome)| {
            let app = CorpusApp {
                path: path.display().to_string(),
                report,
                error: outcome.as_ref().err().map(ToString::to_string),
            };
            (app, outcome)
        })
        .collect();
    let ok: Vec<&ScanReport> = results.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    let stats = CorpusStats::from_reports(results.iter().map(|(a, _)| a.clone()).collect(), &ok);
    Ok(CorpusRun { stats, results })
}

/// Writes `reports/<name>.json` for every app and `corpus.json`.
pub fn write_corpus(run: &CorpusRun, out_dir: &Path) -> Result<(), CorpusError> {
    std::fs::create_dir_all(out_dir.join("reports")).map_err(|e| io_error(out_dir, e))?;
    for (app, outcome) in &run.results {
        let json = match outcome {
            Ok(r) => r.to_json(),
            Err(e) => e.to_json(),
        };
        let path = out_dir.join(&app.report);
        std::fs::write(&path, json + "\n").map_err(|e| io_error(&path, e))?;
    }
    let path = out_dir.join("corpus.json");
    std::fs::write(&path, run.stats.to_json() + "\n").map_err(|e| io_error(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unique_report_names() {
        let names = report_names(&[
            PathBuf::from("a/app.apk"),
            PathBuf::from("b/app.apk"),
            PathBuf::from("c/other.apk"),
        ]);
        assert_eq!(names, ["reports/app.json", "reports/app-2.json", "reports/other.json"]);
    }

    #[test]
    fn empty_directory_has_no_apks() {
        let dir = std::env::temp_dir().join(format!("droidsift-empty-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let err = collect_apks(std::slice::from_ref(&dir)).unwrap_err();
        assert!(err.to_string().starts_with("no APKs found"));
        std::fs::remove_dir_all(dir).unwrap();
    }
}
