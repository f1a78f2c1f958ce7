//! Recomputes corpus statistics from the per-app report files on disk.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use droidsift::report::ScanReport;
use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct Recount {
    pub n_apps: usize,
    pub n_failed: usize,
    pub per_rule: BTreeMap<String, f64>,
    pub per_tracker: BTreeMap<String, f64>,
    /// `(source pattern, channel) -> paths`
    pub matrix: BTreeMap<(String, String), usize>,
    pub total_flows: usize,
}

/// Reads `corpus.json` for the app list, then every listed report file, and
/// counts from scratch.
pub fn recount(out_dir: &Path) -> Recount {
    let corpus: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("corpus.json")).unwrap()).unwrap();
    let mut reports = Vec::new();
    let mut n_failed = 0;
    for app in corpus["apps"].as_array().unwrap() {
        let text = std::fs::read_to_string(out_dir.join(app["report"].as_str().unwrap())).unwrap();
        let json: Value = serde_json::from_str(&text).unwrap();
        if json.get("error").is_some() {
            n_failed += 1;
        } else {
            reports.push(ScanReport::from_json(&text).unwrap());
        }
    }
    let n = reports.len();
    let mut rules: BTreeMap<String, usize> = BTreeMap::new();
    let mut trackers: BTreeMap<String, usize> = BTreeMap::new();
    let mut matrix = BTreeMap::new();
    let mut total_flows = 0;
    for r in &reports {
        for id in r.findings.iter().map(|f| f.rule_id.clone()).collect::<BTreeSet<_>>() {
            *rules.entry(id).or_default() += 1;
        }
        for t in r.trackers.iter().map(|t| t.name.clone()).collect::<BTreeSet<_>>() {
            *trackers.entry(t).or_default() += 1;
        }
        for f in &r.flows {
            *matrix.entry((f.source.pattern.clone(), f.channel.to_string())).or_default() += 1;
            total_flows += 1;
        }
    }
    let frac = |m: BTreeMap<String, usize>| m.into_iter().map(|(k, c)| (k, c as f64 / n as f64)).collect();
    Recount {
        n_apps: n,
        n_failed,
        per_rule: frac(rules),
        per_tracker: frac(trackers),
        matrix,
        total_flows,
    }
}

/// The same figures as written in `corpus.json`.
pub fn written(out_dir: &Path) -> Recount {
    let corpus: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("corpus.json")).unwrap()).unwrap();
    let map = |v: &Value| -> BTreeMap<String, f64> {
        v.as_object()
            .unwrap()
            .iter()
            .map(|(k, x)| (k.clone(), x.as_f64().unwrap()))
            .collect()
    };
    Recount {
        n_apps: corpus["n_apps"].as_u64().unwrap() as usize,
        n_failed: corpus["n_failed"].as_u64().unwrap() as usize,
        per_rule: map(&corpus["per_rule_prevalence"]),
        per_tracker: map(&corpus["per_tracker_prevalence"]),
        matrix: corpus["source_sink_matrix"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| {
                (
                    (c["source"].as_str().unwrap().to_string(), c["channel"].as_str().unwrap().to_string()),
                    c["paths"].as_u64().unwrap() as usize,
                )
            })
            .collect(),
        total_flows: corpus["total_flows"].as_u64().unwrap() as usize,
    }
}
