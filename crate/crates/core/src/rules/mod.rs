//! Manifest and code rules, and the findings they produce.

mod code;
mod constness;
mod manifest;

use std::collections::BTreeSet;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pattern::MethodPattern;

pub use code::{confirm_candidates, extract_candidate_methods, Candidate};
pub use constness::Const;
pub use manifest::evaluate_manifest_rules;

pub const DEFAULT_RULES: &str = include_str!("../../data/rules.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    ManifestWeakness,
    SecurityVulnerability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    Info,
    Warning,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifestPredicate {
    AllowBackup,
    Debuggable,
    CleartextTraffic,
    NonStandardLaunchMode,
    UnprotectedComponent,
}

/// Declarative matcher as written in the rules file. Argument indices count
/// declared parameters only; the receiver is never an argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Matcher {
    Manifest {
        predicate: ManifestPredicate,
    },
    /// A call whose argument is a known string constant in `values`
    /// (case-insensitive) or matching `pattern`, and not matching `exclude`.
    InvokeConstString {
        calls: Vec<MethodPattern>,
        arg: usize,
        #[serde(default)]
        values: Vec<String>,
        pattern: Option<String>,
        exclude: Option<String>,
    },
    /// A call whose result reaches an argument of one of `targets`.
    InvokeResultReaches {
        calls: Vec<MethodPattern>,
        targets: Vec<MethodPattern>,
    },
    /// A call whose argument is a constant (equal to `equals`, if given).
    InvokeArgConstant {
        calls: Vec<MethodPattern>,
        arg: usize,
        equals: Option<i64>,
    },
    /// A call whose argument is not a constant.
    InvokeNonConstArg {
        calls: Vec<MethodPattern>,
        arg: usize,
    },
    NewInstance {
        classes: Vec<String>,
    },
    /// Any call to one of `calls`.
    Invoke {
        calls: Vec<MethodPattern>,
    },
    /// A string constant loaded in code that matches `pattern`; matched text
    /// listed in `exclude` is ignored.
    ConstString {
        pattern: String,
        #[serde(default)]
        exclude: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub id: String,
    pub category: Category,
    pub severity: Severity,
    #[serde(default)]
    pub requires_pii: bool,
    pub description: String,
    pub matchers: Vec<Matcher>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RulesFile {
    version: u32,
    #[serde(rename = "rule")]
    rules: Vec<Rule>,
}

#[derive(Debug, Error)]
pub enum RulesError {
    #[error("rules file: {0}")]
    Parse(String),
    #[error("duplicate rule id {0}")]
    DuplicateId(String),
    #[error("rule {rule}: {message}")]
    Invalid { rule: String, message: String },
}

/// A loaded, validated rule set with its regexes compiled.
#[derive(Debug, Clone)]
pub struct RuleSet {
    pub version: u32,
    pub rules: Vec<Rule>,
    regexes: Vec<Vec<CompiledRegexes>>,
}

#[derive(Debug, Clone, Default)]
struct CompiledRegexes {
    pattern: Option<Regex>,
    exclude: Option<Regex>,
}

impl RuleSet {
    pub fn builtin() -> RuleSet {
        RuleSet::parse(DEFAULT_RULES).expect("shipped rules file parses")
    }

    pub fn parse(text: &str) -> Result<RuleSet, RulesError> {
        let file: RulesFile = toml::from_str(text).map_err(|e| RulesError::Parse(e.to_string()))?;
        let mut ids = BTreeSet::new();
        let mut regexes = Vec::new();
        for rule in &file.rules {
            if !ids.insert(rule.id.clone()) {
                return Err(RulesError::DuplicateId(rule.id.clone()));
            }
            let invalid = |message: String| RulesError::Invalid {
                rule: rule.id.clone(),
                message,
            };
            if rule.matchers.is_empty() {
                return Err(invalid("no matchers".into()));
            }
            let mut compiled = Vec::new();
            for m in &rule.matchers {
                let is_manifest = matches!(m, Matcher::Manifest { .. });
                if is_manifest != (rule.category == Category::ManifestWeakness) {
                    return Err(invalid("matcher kind does not fit the rule category".into()));
                }
                let compile = |p: &Option<String>| -> Result<Option<Regex>, RulesError> {
                    p.as_deref()
                        .map(Regex::new)
                        .transpose()
                        .map_err(|e| invalid(e.to_string()))
                };
                compiled.push(match m {
                    Matcher::InvokeConstString { pattern, exclude, .. } => CompiledRegexes {
                        pattern: compile(pattern)?,
                        exclude: compile(exclude)?,
                    },
                    Matcher::ConstString { pattern, .. } => CompiledRegexes {
                        pattern: compile(&Some(pattern.clone()))?,
                        exclude: None,
                    },
                    _ => CompiledRegexes::default(),
                });
            }
            regexes.push(compiled);
        }
        Ok(RuleSet {
            version: file.version,
            rules: file.rules,
            regexes,
        })
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Location {
    Code {
        entry: String,
        class: String,
        method: String,
        offset: u32,
    },
    Manifest {
        path: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        component: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: String,
    pub category: Category,
    pub severity: Severity,
    pub evidence: String,
    pub location: Location,
    pub pii_tag: Option<String>,
    /// Set for code findings whose enclosing method is reachable; manifest
    /// findings do not involve calls and leave it unset.
    pub confirmed_called: bool,
}

pub fn sort_findings(findings: &mut Vec<Finding>) {
    findings.sort_by(|a, b| {
        (&a.rule_id, &a.location, &a.evidence).cmp(&(&b.rule_id, &b.location, &b.evidence))
    });
    findings.dedup_by(|a, b| a.rule_id == b.rule_id && a.location == b.location);
}
