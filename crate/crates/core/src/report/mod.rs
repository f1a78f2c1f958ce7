//! Per-APK scan pipeline and report assembly.

mod corpus;
mod text;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axml::{extract_layout_widgets, extract_manifest, parse_axml, AxmlError};
use crate::container::{parse_apk_bytes, ContainerError, EntryKind, MANIFEST_NAME};
use crate::dex::parse_dex;
use crate::diag::{Warning, WarningKind};
use crate::malware::{MalwareClient, MalwareVerdict};
use crate::pii::{bind_pii, identify_pii_variables, parse_word_list, KeywordDatabase, PiiVariable};
use crate::program::Program;
use crate::rules::{
    confirm_candidates, evaluate_manifest_rules, extract_candidate_methods, sort_findings, Finding, RuleSet, Severity,
};
use crate::taint::{
    build_call_graph, confirm_flows, find_flows, EntryPointConfig, FlowPath, TaintGraph, TaintSpec, DEFAULT_MAX_DEPTH,
};
use crate::trackers::{builtin_trackers, detect_trackers, parse_trackers, TrackerMatch, TrackerSignature};

pub use corpus::{
    collect_apks, run_corpus, write_corpus, CorpusApp, CorpusError, CorpusRun, CorpusStats, MatrixCell,
};
pub use text::render_text;

pub const SCHEMA_VERSION: u32 = 1;
pub const ZERO_TIMESTAMP: &str = "1970-01-01T00:00:00Z";

/// Depth used when checking whether a PII value reaches a rule's call site.
const RULE_PII_DEPTH: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApkInfo {
    pub path: String,
    pub sha256: String,
    pub package: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tool_version: String,
    pub rule_count: usize,
    pub source_sink_count: usize,
    pub keyword_count: usize,
    pub tracker_signature_count: usize,
    pub duration_ms: u64,
    pub scanned_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub schema_version: u32,
    pub apk: ApkInfo,
    pub findings: Vec<Finding>,
    pub flows: Vec<FlowPath>,
    pub trackers: Vec<TrackerMatch>,
    pub malware: MalwareVerdict,
    pub pii_variables: Vec<PiiVariable>,
    pub warnings: Vec<Warning>,
    pub meta: ReportMeta,
}

impl ScanReport {
    /// Highest severity present: 0 for none, 1 for warnings, 2 for high.
    /// Confirmed flows count as high; trackers are informational.
    pub fn exit_code(&self) -> i32 {
        let worst = self.findings.iter().map(|f| f.severity).max();
        if !self.flows.is_empty() || worst == Some(Severity::High) {
            2
        } else if worst == Some(Severity::Warning) {
            1
        } else {
            0
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<ScanReport, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Io,
    Container,
    Manifest,
    Dex,
}

/// A fatal error that stopped the scan of one APK.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{path}: {message}")]
pub struct ScanFailure {
    pub path: String,
    pub stage: Stage,
    pub entry: Option<String>,
    pub offset: Option<usize>,
    pub message: String,
}

impl ScanFailure {
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct ErrorReport<'a> {
            schema_version: u32,
            error: &'a ScanFailure,
        }
        serde_json::to_string_pretty(&ErrorReport {
            schema_version: SCHEMA_VERSION,
            error: self,
        })
        .expect("error report serializes")
    }
}

fn axml_offset(e: &AxmlError) -> Option<usize> {
    match e {
        AxmlError::TruncatedChunk { offset, .. } => Some(*offset),
        _ => None,
    }
}

fn container_entry(e: &ContainerError) -> Option<String> {
    match e {
        ContainerError::UnsupportedCompression { entry, .. } | ContainerError::CrcMismatch { entry, .. } => {
            Some(entry.clone())
        }
        _ => None,
    }
}

/// Paths of data files replacing the shipped defaults.
#[derive(Debug, Clone, Default)]
pub struct DataFiles {
    pub rules: Option<PathBuf>,
    pub sources_sinks: Option<PathBuf>,
    pub keywords: Option<PathBuf>,
    pub trackers: Option<PathBuf>,
    pub entry_points: Option<PathBuf>,
}

#[derive(Debug, Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: PathBuf,
    pub message: String,
}

pub struct ScanConfig {
    pub rules: RuleSet,
    pub taint_spec: TaintSpec,
    pub keywords: KeywordDatabase,
    pub trackers: Vec<TrackerSignature>,
    pub entry_points: EntryPointConfig,
    pub max_depth: usize,
    pub malware: Arc<MalwareClient>,
    pub deterministic: bool,
}

impl ScanConfig {
    pub fn builtin() -> ScanConfig {
        ScanConfig {
            rules: RuleSet::builtin(),
            taint_spec: TaintSpec::builtin(),
            keywords: KeywordDatabase::builtin(),
            trackers: builtin_trackers(),
            entry_points: EntryPointConfig::builtin(),
            max_depth: DEFAULT_MAX_DEPTH,
            malware: Arc::new(MalwareClient::stub()),
            deterministic: false,
        }
    }

    /// Shipped defaults with the given files swapped in.
    pub fn load(files: &DataFiles) -> Result<ScanConfig, ConfigError> {
        fn read(path: &Path) -> Result<String, ConfigError> {
            std::fs::read_to_string(path).map_err(|e| ConfigError {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        }
        fn wrap<T, E: std::fmt::Display>(path: &Path, r: Result<T, E>) -> Result<T, ConfigError> {
            r.map_err(|e| ConfigError {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        }
        let mut config = ScanConfig::builtin();
        if let Some(p) = &files.rules {
            config.rules = wrap(p, RuleSet::parse(&read(p)?))?;
        }
        if let Some(p) = &files.sources_sinks {
            config.taint_spec = wrap(p, TaintSpec::parse(&read(p)?))?;
        }
        if let Some(p) = &files.keywords {
            let text = read(p)?;
            config.keywords = if text.trim_start().starts_with('{') {
                wrap(p, KeywordDatabase::from_json(&text))?
            } else {
                KeywordDatabase::from_seeds(&parse_word_list(&text))
            };
        }
        if let Some(p) = &files.trackers {
            config.trackers = wrap(p, parse_trackers(&read(p)?))?;
        }
        if let Some(p) = &files.entry_points {
            config.entry_points = wrap(p, EntryPointConfig::parse(&read(p)?))?;
        }
        Ok(config)
    }
}

pub fn scan(path: &Path, config: &ScanConfig) -> Result<ScanReport, ScanFailure> {
    let label = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| ScanFailure {
        path: label.clone(),
        stage: Stage::Io,
        entry: None,
        offset: None,
        message: e.to_string(),
    })?;
    scan_bytes(&label, &bytes, config)
}

/// `classes.dex` first, then `classes2.dex`, `classes3.dex`, ...
fn dex_ordinal(name: &str) -> u64 {
    let digits = name.trim_start_matches("classes").trim_end_matches(".dex");
    if digits.is_empty() {
        1
    } else {
        digits.parse().unwrap_or(u64::MAX)
    }
}

pub fn scan_bytes(label: &str, bytes: &[u8], config: &ScanConfig) -> Result<ScanReport, ScanFailure> {
    let started = Instant::now();
    let fail = |stage: Stage, entry: Option<String>, offset: Option<usize>, message: String| ScanFailure {
        path: label.to_string(),
        stage,
        entry,
        offset,
        message,
    };

    let archive =
        parse_apk_bytes(bytes).map_err(|e| fail(Stage::Container, container_entry(&e), None, e.to_string()))?;
    let manifest_name = Some(MANIFEST_NAME.to_string());
    let doc = parse_axml(&archive.manifest().data)
        .map_err(|e| fail(Stage::Manifest, manifest_name.clone(), axml_offset(&e), e.to_string()))?;
    let manifest = extract_manifest(&doc).map_err(|e| fail(Stage::Manifest, manifest_name, None, e.to_string()))?;

    let mut warnings: Vec<Warning> = manifest
        .unresolved
        .iter()
        .map(|u| Warning::new(WarningKind::UnresolvedReference, MANIFEST_NAME, u.clone()))
        .collect();

    let mut widgets = Vec::new();
    for entry in archive.entries_of_kind(EntryKind::LayoutXml) {
        match parse_axml(&entry.data) {
            Ok(doc) => {
                for w in extract_layout_widgets(&doc, &entry.name) {
                    warnings.extend(
                        w.unresolved
                            .iter()
                            .map(|u| Warning::new(WarningKind::UnresolvedReference, entry.name.clone(), u.clone())),
                    );
                    widgets.push(w);
                }
            }
            Err(e) => warnings.push(Warning::new(
                WarningKind::Other,
                entry.name.clone(),
                format!("layout skipped: {e}"),
            )),
        }
    }

    let mut dex_entries = archive.entries_of_kind(EntryKind::Dex);
    dex_entries.sort_by_key(|e| dex_ordinal(&e.name));
    let dexes = dex_entries
        .par_iter()
        .map(|e| parse_dex(&e.data, &e.name).map_err(|err| fail(Stage::Dex, Some(e.name.clone()), err.offset(), err.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let program = Program::new(dexes);
    warnings.extend(program.warnings.iter().cloned());

    let cg = build_call_graph(&program, &manifest, &config.entry_points);
    let graph = TaintGraph::new(&program, &cg);
    let db = &config.keywords;
    let pii = identify_pii_variables(&widgets, db);
    let binding = bind_pii(&program, &pii, db);

    let mut findings = evaluate_manifest_rules(&manifest, &config.rules);
    let candidates = extract_candidate_methods(&graph, &config.rules);
    let pii_sites = graph.pii_at_sites(&binding, RULE_PII_DEPTH);
    findings.extend(confirm_candidates(&candidates, &config.rules, &cg, &pii_sites, db));
    sort_findings(&mut findings);

    let (paths, flow_warnings) = find_flows(&graph, &config.taint_spec, &binding, db, config.max_depth);
    warnings.extend(flow_warnings);
    let flows = confirm_flows(&paths, &cg);

    let trackers = detect_trackers(program.class_descriptors(), &config.trackers);

    let sha256 = archive.sha256_hex();
    let mut malware = config.malware.scan(&sha256, bytes);
    if let Some(e) = &malware.error {
        warnings.push(Warning::new(WarningKind::MalwareScanUnavailable, label, e.clone()));
    }

    let mut pii_variables = binding.variables.clone();
    pii_variables.sort();
    pii_variables.dedup();
    warnings.sort();
    warnings.dedup();

    let mut meta = ReportMeta {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        rule_count: config.rules.len(),
        source_sink_count: config.taint_spec.len(),
        keyword_count: db.keywords.len(),
        tracker_signature_count: config.trackers.len(),
        duration_ms: started.elapsed().as_millis() as u64,
        scanned_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    if config.deterministic {
        meta.duration_ms = 0;
        meta.scanned_at = ZERO_TIMESTAMP.to_string();
        malware.fetched_at = ZERO_TIMESTAMP.to_string();
    }

    Ok(ScanReport {
        schema_version: SCHEMA_VERSION,
        apk: ApkInfo {
            path: label.to_string(),
            sha256,
            package: manifest.package.clone(),
        },
        findings,
        flows,
        trackers,
        malware,
        pii_variables,
        warnings,
        meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dex_order() {
        let mut names = vec!["classes10.dex", "classes2.dex", "classes.dex", "classes3.dex"];
        names.sort_by_key(|n| dex_ordinal(n));
        assert_eq!(names, ["classes.dex", "classes2.dex", "classes3.dex", "classes10.dex"]);
    }

    #[test]
    fn not_a_zip_is_a_structured_failure() {
        let err = scan_bytes("x.apk", b"garbage!", &ScanConfig::builtin()).unwrap_err();
        assert_eq!(err.stage, Stage::Container);
        let json: serde_json::Value = serde_json::from_str(&err.to_json()).unwrap();
        assert_eq!(json["error"]["stage"], "container");
        assert_eq!(json["schema_version"], 1);
    }

    #[test]
    fn builtin_config_counts() {
        let c = ScanConfig::builtin();
        assert_eq!(c.rules.len(), 13);
        assert!(c.keywords.contains("password"));
        assert!(c.malware.is_stub());
    }
}
