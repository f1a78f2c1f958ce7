use serde::{Deserialize, Serialize};

/// Non-fatal observations collected during a scan.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Warning {
    pub kind: WarningKind,
    /// Archive entry or data file the warning refers to.
    pub origin: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarningKind {
    UnresolvedReference,
    Mutf8Repair,
    UnsortedStrings,
    DepthTruncated,
    KeywordNotInVocabulary,
    MalwareScanUnavailable,
    Other,
}

impl Warning {
    pub fn new(kind: WarningKind, origin: impl Into<String>, message: impl Into<String>) -> Self {
        Warning {
            kind,
            origin: origin.into(),
            message: message.into(),
        }
    }
}
