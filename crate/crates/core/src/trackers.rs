//! Third-party tracker detection by class package prefix.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_TRACKERS: &str = include_str!("../data/trackers.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerSignature {
    pub name: String,
    #[serde(default)]
    pub website: String,
    pub package_prefixes: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct TrackersFile {
    #[serde(rename = "tracker", default)]
    trackers: Vec<TrackerSignature>,
}

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("tracker file: {0}")]
    Parse(String),
    #[error("tracker {name}: prefix {prefix:?} is not a type descriptor prefix")]
    BadPrefix { name: String, prefix: String },
    #[error("duplicate tracker {0}")]
    Duplicate(String),
}

pub fn builtin_trackers() -> Vec<TrackerSignature> {
    parse_trackers(DEFAULT_TRACKERS).expect("shipped tracker file parses")
}

pub fn parse_trackers(text: &str) -> Result<Vec<TrackerSignature>, TrackerError> {
    let file: TrackersFile = toml::from_str(text).map_err(|e| TrackerError::Parse(e.to_string()))?;
    let mut names = BTreeSet::new();
    for t in &file.trackers {
        if !names.insert(t.name.clone()) {
            return Err(TrackerError::Duplicate(t.name.clone()));
        }
        if let Some(p) = t
            .package_prefixes
            .iter()
            .find(|p| !p.starts_with('L') || p.len() < 2 || p.contains('.'))
        {
            return Err(TrackerError::BadPrefix {
                name: t.name.clone(),
                prefix: p.clone(),
            });
        }
    }
    Ok(file.trackers)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrackerMatch {
    pub name: String,
    pub website: String,
    /// Number of distinct classes under the tracker's prefixes.
    pub matched_classes: usize,
}

/// Reports each signature with at least one class under one of its
/// prefixes, ordered by name.
pub fn detect_trackers<'a, I>(class_descriptors: I, signatures: &[TrackerSignature]) -> Vec<TrackerMatch>
where
    I: IntoIterator<Item = &'a str>,
{
    let classes: BTreeSet<&str> = class_descriptors.into_iter().collect();
    let mut out: Vec<TrackerMatch> = signatures
        .iter()
        .filter_map(|sig| {
            let n = classes
                .iter()
                .filter(|c| sig.package_prefixes.iter().any(|p| c.starts_with(p.as_str())))
                .count();
            (n > 0).then(|| TrackerMatch {
                name: sig.name.clone(),
                website: sig.website.clone(),
                matched_classes: n,
            })
        })
        .collect();
    out.sort();
    out
}
