use super::{Category, Finding, Location, ManifestPredicate, Matcher, RuleSet};
use crate::axml::{ComponentKind, ManifestModel};

pub const MANIFEST_PATH: &str = "AndroidManifest.xml";

pub fn evaluate_manifest_rules(m: &ManifestModel, rules: &RuleSet) -> Vec<Finding> {
    let mut out = Vec::new();
    for rule in rules.rules.iter().filter(|r| r.category == Category::ManifestWeakness) {
        for matcher in &rule.matchers {
            let Matcher::Manifest { predicate } = matcher else {
                continue;
            };
            for (component, evidence) in check(m, *predicate) {
                out.push(Finding {
                    rule_id: rule.id.clone(),
                    category: rule.category,
                    severity: rule.severity,
                    evidence,
                    location: Location::Manifest {
                        path: MANIFEST_PATH.to_string(),
                        component,
                    },
                    pii_tag: None,
                    confirmed_called: false,
                });
            }
        }
    }
    super::sort_findings(&mut out);
    out
}

fn check(m: &ManifestModel, predicate: ManifestPredicate) -> Vec<(Option<String>, String)> {
    let flags = &m.flags;
    match predicate {
        ManifestPredicate::AllowBackup => match flags.allow_backup {
            Some(true) => vec![(None, "android:allowBackup=\"true\"".into())],
            None => vec![(None, "android:allowBackup not set (defaults to true)".into())],
            Some(false) => vec![],
        },
        ManifestPredicate::Debuggable => match flags.debuggable {
            Some(true) => vec![(None, "android:debuggable=\"true\"".into())],
            _ => vec![],
        },
        ManifestPredicate::CleartextTraffic => match (flags.uses_cleartext_traffic, &flags.network_security_config) {
            (Some(true), _) => vec![(None, "android:usesCleartextTraffic=\"true\"".into())],
            (None, None) => vec![(
                None,
                "android:usesCleartextTraffic not set and no networkSecurityConfig".into(),
            )],
            _ => vec![],
        },
        ManifestPredicate::NonStandardLaunchMode => m
            .components
            .iter()
            .filter(|c| c.kind == ComponentKind::Activity && c.launch_mode.is_non_standard())
            .map(|c| (Some(c.name.clone()), format!("launchMode {:?} on {}", c.launch_mode, c.name)))
            .collect(),
        ManifestPredicate::UnprotectedComponent => m
            .components
            .iter()
            .filter(|c| c.is_exported() && c.permission.is_none())
            .map(|c| {
                let how = if c.exported == Some(true) {
                    "exported=\"true\""
                } else {
                    "exported through an intent filter"
                };
                (
                    Some(c.name.clone()),
                    format!("{:?} {} is {how} without a permission", c.kind, c.name),
                )
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axml::{AppFlags, Component, LaunchMode};

    fn component(kind: ComponentKind, exported: Option<bool>, permission: Option<&str>, filters: usize) -> Component {
        Component {
            kind,
            name: "com.example.C".into(),
            exported,
            permission: permission.map(Into::into),
            launch_mode: LaunchMode::Standard,
            intent_filters: filters,
        }
    }

    fn ids(m: &ManifestModel) -> Vec<String> {
        evaluate_manifest_rules(m, &RuleSet::builtin())
            .into_iter()
            .map(|f| f.rule_id)
            .collect()
    }

    fn clean() -> ManifestModel {
        ManifestModel {
            package: "com.example".into(),
            flags: AppFlags {
                allow_backup: Some(false),
                debuggable: Some(false),
                uses_cleartext_traffic: Some(false),
                network_security_config: None,
            },
            components: vec![
                component(ComponentKind::Activity, Some(true), Some("com.example.P"), 1),
                component(ComponentKind::Service, Some(false), None, 0),
            ],
            ..Default::default()
        }
    }

    #[test]
    fn clean_manifest_has_no_findings() {
        assert!(ids(&clean()).is_empty());
    }

    #[test]
    fn backup_tri_state() {
        let mut m = clean();
        for (state, expected) in [(Some(true), true), (Some(false), false), (None, true)] {
            m.flags.allow_backup = state;
            assert_eq!(ids(&m).contains(&"MANIFEST-BACKUP".to_string()), expected, "{state:?}");
        }
    }

    #[test]
    fn cleartext_needs_config_when_unset() {
        let mut m = clean();
        m.flags.uses_cleartext_traffic = None;
        assert_eq!(ids(&m), vec!["MANIFEST-CLEARTEXT"]);
        m.flags.network_security_config = Some("@xml/network".into());
        assert!(ids(&m).is_empty());
    }

    #[test]
    fn components() {
        let mut m = clean();
        m.components[0].launch_mode = LaunchMode::SingleInstance;
        m.components.push(component(ComponentKind::Receiver, None, None, 2));
        assert_eq!(ids(&m), vec!["MANIFEST-LAUNCHMODE", "MANIFEST-UNPROTECTED"]);
        m.flags.debuggable = Some(true);
        assert!(ids(&m).contains(&"MANIFEST-DEBUG".to_string()));
    }
}
