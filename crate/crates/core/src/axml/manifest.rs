use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{attr, TypedValue, XmlAttribute, XmlDocument, XmlElement};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ManifestError {
    #[error("root element is <{0}>, expected <manifest>")]
    NotAManifest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentKind {
    Activity,
    Service,
    Receiver,
    Provider,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LaunchMode {
    #[default]
    Standard,
    SingleTop,
    SingleTask,
    SingleInstance,
}

impl LaunchMode {
    fn from_value(value: &TypedValue) -> Option<LaunchMode> {
        match value {
            TypedValue::IntDec(0) | TypedValue::IntHex(0) => Some(LaunchMode::Standard),
            TypedValue::IntDec(1) | TypedValue::IntHex(1) => Some(LaunchMode::SingleTop),
            TypedValue::IntDec(2) | TypedValue::IntHex(2) => Some(LaunchMode::SingleTask),
            // 4 is singleInstancePerTask, which shares singleInstance's task isolation.
            TypedValue::IntDec(3 | 4) | TypedValue::IntHex(3 | 4) => {
                Some(LaunchMode::SingleInstance)
            }
            TypedValue::String(s) => match s.as_str() {
                "standard" => Some(LaunchMode::Standard),
                "singleTop" => Some(LaunchMode::SingleTop),
                "singleTask" => Some(LaunchMode::SingleTask),
                "singleInstance" | "singleInstancePerTask" => Some(LaunchMode::SingleInstance),
                _ => None,
            },
            _ => None,
        }
    }

    /// Modes that give the activity its own task, exposing it to task hijacking.
    pub fn is_non_standard(self) -> bool {
        matches!(self, LaunchMode::SingleTask | LaunchMode::SingleInstance)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub kind: ComponentKind,
    /// Fully qualified Java class name.
    pub name: String,
    pub exported: Option<bool>,
    pub permission: Option<String>,
    pub launch_mode: LaunchMode,
    pub intent_filters: usize,
}

impl Component {
    /// Exported either explicitly or implicitly through an intent filter.
    pub fn is_exported(&self) -> bool {
        match self.exported {
            Some(explicit) => explicit,
            None => self.intent_filters > 0,
        }
    }

    pub fn descriptor(&self) -> String {
        format!("L{};", self.name.replace('.', "/"))
    }
}

/// Application-level flags. `None` means the attribute was not set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppFlags {
    pub allow_backup: Option<bool>,
    pub debuggable: Option<bool>,
    pub uses_cleartext_traffic: Option<bool>,
    pub network_security_config: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestModel {
    pub package: String,
    pub permissions: Vec<String>,
    /// Custom `Application` subclass, fully qualified.
    pub application_class: Option<String>,
    pub components: Vec<Component>,
    pub flags: AppFlags,
    /// Attributes whose values are resource references we cannot resolve.
    pub unresolved: Vec<String>,
}

pub fn extract_manifest(doc: &XmlDocument) -> Result<ManifestModel, ManifestError> {
    let root = &doc.root;
    if root.name != "manifest" {
        return Err(ManifestError::NotAManifest(root.name.clone()));
    }
    let mut model = ManifestModel {
        package: root
            .attr("package")
            .and_then(XmlAttribute::string_value)
            .unwrap_or_default()
            .to_string(),
        ..ManifestModel::default()
    };

    for perm in root
        .children
        .iter()
        .filter(|c| c.name == "uses-permission" || c.name == "uses-permission-sdk-23")
    {
        if let Some(name) = perm.android_attr(attr::NAME, "name").and_then(XmlAttribute::string_value) {
            model.permissions.push(name.to_string());
        }
    }

    if let Some(app) = root.children_named("application").next() {
        model.flags.allow_backup = read_bool(app, attr::ALLOW_BACKUP, "allowBackup", &mut model.unresolved);
        model.flags.debuggable = read_bool(app, attr::DEBUGGABLE, "debuggable", &mut model.unresolved);
        model.flags.uses_cleartext_traffic = read_bool(
            app,
            attr::USES_CLEARTEXT_TRAFFIC,
            "usesCleartextTraffic",
            &mut model.unresolved,
        );
        model.flags.network_security_config = app
            .android_attr(attr::NETWORK_SECURITY_CONFIG, "networkSecurityConfig")
            .map(render_value);
        model.application_class = app
            .android_attr(attr::NAME, "name")
            .and_then(XmlAttribute::string_value)
            .map(|n| qualify(&model.package, n));

        for child in &app.children {
            let kind = match child.name.as_str() {
                "activity" | "activity-alias" => ComponentKind::Activity,
                "service" => ComponentKind::Service,
                "receiver" => ComponentKind::Receiver,
                "provider" => ComponentKind::Provider,
                _ => continue,
            };
            let Some(name) = child.android_attr(attr::NAME, "name").and_then(XmlAttribute::string_value) else {
                continue;
            };
            let launch_mode = child
                .android_attr(attr::LAUNCH_MODE, "launchMode")
                .and_then(|a| LaunchMode::from_value(&a.value))
                .unwrap_or_default();
            let permission = [
                (attr::PERMISSION, "permission"),
                (attr::READ_PERMISSION, "readPermission"),
                (attr::WRITE_PERMISSION, "writePermission"),
            ]
            .iter()
            .find_map(|(id, n)| child.android_attr(*id, n).map(render_value));
            model.components.push(Component {
                kind,
                name: qualify(&model.package, name),
                exported: read_bool(child, attr::EXPORTED, "exported", &mut model.unresolved),
                permission,
                launch_mode,
                intent_filters: child.children_named("intent-filter").count(),
            });
        }
    }
    Ok(model)
}

fn read_bool(el: &XmlElement, id: u32, name: &str, unresolved: &mut Vec<String>) -> Option<bool> {
    let attribute = el.android_attr(id, name)?;
    let value = attribute.value.as_bool();
    if value.is_none() {
        unresolved.push(format!("{}@{name}={}", el.name, render_value(attribute)));
    }
    value
}

fn render_value(attribute: &XmlAttribute) -> String {
    match (&attribute.value, &attribute.raw) {
        (TypedValue::String(s), _) => s.clone(),
        (_, Some(raw)) => raw.clone(),
        (TypedValue::Reference(id), None) => format!("@{id:#010x}"),
        (TypedValue::Attribute(id), None) => format!("?{id:#010x}"),
        (other, None) => format!("{other:?}"),
    }
}

/// Expands Android's shorthand component names against the package.
fn qualify(package: &str, name: &str) -> String {
    if let Some(rest) = name.strip_prefix('.') {
        format!("{package}.{rest}")
    } else if !name.contains('.') && !package.is_empty() {
        format!("{package}.{name}")
    } else {
        name.to_string()
    }
}
