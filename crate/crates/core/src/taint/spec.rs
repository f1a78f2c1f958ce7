use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pattern::MethodPattern;

/// Where a sink sends data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Bundle,
    Intent,
    Log,
    #[serde(rename = "SMS")]
    Sms,
    SharedPreferences,
    File,
    Broadcast,
}

/// What kind of data a source produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceCategory {
    Location,
    Contacts,
    DeviceId,
    Database,
    UserInput,
    Other,
}

impl SourceCategory {
    /// Data that is personal regardless of keyword matching.
    pub fn is_intrinsic_pii(self) -> bool {
        matches!(self, SourceCategory::Location | SourceCategory::Contacts | SourceCategory::DeviceId)
    }
}

impl FromStr for Channel {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "Bundle" => Channel::Bundle,
            "Intent" => Channel::Intent,
            "Log" => Channel::Log,
            "SMS" => Channel::Sms,
            "SharedPreferences" => Channel::SharedPreferences,
            "File" => Channel::File,
            "Broadcast" => Channel::Broadcast,
            _ => return Err(()),
        })
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::Bundle => "Bundle",
            Channel::Intent => "Intent",
            Channel::Log => "Log",
            Channel::Sms => "SMS",
            Channel::SharedPreferences => "SharedPreferences",
            Channel::File => "File",
            Channel::Broadcast => "Broadcast",
        })
    }
}

impl FromStr for SourceCategory {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "Location" => SourceCategory::Location,
            "Contacts" => SourceCategory::Contacts,
            "DeviceId" => SourceCategory::DeviceId,
            "Database" => SourceCategory::Database,
            "UserInput" => SourceCategory::UserInput,
            "Other" => SourceCategory::Other,
            _ => return Err(()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSpec {
    pub category: SourceCategory,
    pub pattern: MethodPattern,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinkSpec {
    pub channel: Channel,
    pub pattern: MethodPattern,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaintSpec {
    pub sources: Vec<SourceSpec>,
    pub sinks: Vec<SinkSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("sources/sinks line {line}: {message}")]
pub struct SpecError {
    pub line: usize,
    pub message: String,
}

pub const DEFAULT_SOURCES_SINKS: &str = include_str!("../../data/sources_sinks.txt");

impl TaintSpec {
    pub fn builtin() -> TaintSpec {
        TaintSpec::parse(DEFAULT_SOURCES_SINKS).expect("shipped source/sink file parses")
    }

    pub fn len(&self) -> usize {
        self.sources.len() + self.sinks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parses `source|sink <label> <class descriptor> <method> <params|*>`
    /// records, one per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<TaintSpec, SpecError> {
        let mut spec = TaintSpec::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| SpecError { line: n + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [kind, label, class, name, params] = fields.as_slice() else {
                return Err(err(format!("expected 5 fields, found {}", fields.len())));
            };
            let pattern = MethodPattern::new(class, name, Some(params)).map_err(|e| err(e.to_string()))?;
            match *kind {
                "source" => spec.sources.push(SourceSpec {
                    category: label.parse().map_err(|_| err(format!("unknown source category {label}")))?,
                    pattern,
                }),
                "sink" => spec.sinks.push(SinkSpec {
                    channel: label.parse().map_err(|_| err(format!("unknown channel {label}")))?,
                    pattern,
                }),
                other => return Err(err(format!("unknown record kind {other}"))),
            }
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_parses() {
        let spec = TaintSpec::builtin();
        assert!(spec.sources.iter().any(|s| s.pattern.name == "getLatitude"));
        assert!(spec.sources.iter().any(|s| s.pattern.name == "findViewById"));
        for name in ["putString", "putAll", "sendTextMessage"] {
            assert!(spec.sinks.iter().any(|s| s.pattern.name == name), "{name}");
        }
    }

    #[test]
    fn parse_errors_carry_line() {
        let e = TaintSpec::parse("# c\nsink Pigeon Lx; m *\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(TaintSpec::parse("sink Log Lx; m\n").is_err());
        assert!(TaintSpec::parse("sink Log x m *\n").is_err());
    }
}
