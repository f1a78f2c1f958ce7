use serde::{Deserialize, Serialize};

use super::{attr, TypedValue, XmlAttribute, XmlDocument};

pub const DEFAULT_WIDGET_SUFFIXES: &[&str] = &["EditText", "TextView", "AutoCompleteTextView"];

/// A text-bearing widget declared in a layout file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WidgetDecl {
    pub widget_class: String,
    /// Trailing segment of an `@+id/...` declaration.
    pub id_name: Option<String>,
    /// Compiled resource ID of the widget, when the ID is a reference.
    pub resource_id: Option<u32>,
    pub hint_text: Option<String>,
    pub text: Option<String>,
    pub source_file: String,
    /// Text attributes that point into resources we do not resolve.
    pub unresolved: Vec<String>,
}

pub fn extract_layout_widgets(doc: &XmlDocument, source_file: &str) -> Vec<WidgetDecl> {
    extract_layout_widgets_with(doc, source_file, DEFAULT_WIDGET_SUFFIXES)
}

pub fn extract_layout_widgets_with<S: AsRef<str>>(
    doc: &XmlDocument,
    source_file: &str,
    suffixes: &[S],
) -> Vec<WidgetDecl> {
    let mut widgets = Vec::new();
    for el in doc.root.walk() {
        if !suffixes.iter().any(|s| el.name.ends_with(s.as_ref())) {
            continue;
        }
        let mut unresolved = Vec::new();
        let (id_name, resource_id) = match el.android_attr(attr::ID, "id") {
            Some(a) => {
                let name = a
                    .string_value()
                    .map(|s| s.rsplit('/').next().unwrap_or(s).to_string());
                let id = match a.value {
                    TypedValue::Reference(id) => Some(id),
                    _ => None,
                };
                (name, id)
            }
            None => (None, None),
        };
        let hint_text = text_attr(el.android_attr(attr::HINT, "hint"), "hint", &mut unresolved);
        let text = text_attr(el.android_attr(attr::TEXT, "text"), "text", &mut unresolved);
        if id_name.is_none() && hint_text.is_none() && text.is_none() {
            continue;
        }
        widgets.push(WidgetDecl {
            widget_class: el.name.clone(),
            id_name,
            resource_id,
            hint_text,
            text,
            source_file: source_file.to_string(),
            unresolved,
        });
    }
    widgets
}

fn text_attr(a: Option<&XmlAttribute>, label: &str, unresolved: &mut Vec<String>) -> Option<String> {
    let a = a?;
    match &a.value {
        TypedValue::String(s) => Some(s.clone()),
        TypedValue::Reference(id) => {
            let shown = a.raw.clone().unwrap_or_else(|| format!("@{id:#010x}"));
            unresolved.push(format!("{label}={shown}"));
            None
        }
        _ => a.raw.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axml::{XmlElement, ANDROID_NS};

    fn attr_str(name: &str, value: &str) -> XmlAttribute {
        XmlAttribute {
            namespace: Some(ANDROID_NS.into()),
            name: name.into(),
            resource_id: None,
            raw: None,
            value: TypedValue::String(value.into()),
        }
    }

    fn el(name: &str, attributes: Vec<XmlAttribute>, children: Vec<XmlElement>) -> XmlElement {
        XmlElement {
            name: name.into(),
            namespace: None,
            attributes,
            children,
        }
    }

    fn doc(root: XmlElement) -> XmlDocument {
        XmlDocument {
            string_pool: vec![],
            resource_ids: vec![],
            root,
        }
    }

    #[test]
    fn edit_text_id_name() {
        let d = doc(el(
            "LinearLayout",
            vec![],
            vec![el("EditText", vec![attr_str("id", "@+id/personal_details_name")], vec![])],
        ));
        let w = extract_layout_widgets(&d, "res/layout/a.xml");
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].widget_class, "EditText");
        assert_eq!(w[0].id_name.as_deref(), Some("personal_details_name"));
    }

    #[test]
    fn plain_layout_has_no_widgets() {
        let d = doc(el("LinearLayout", vec![], vec![]));
        assert!(extract_layout_widgets(&d, "res/layout/a.xml").is_empty());
    }

    #[test]
    fn hint_text_and_suffix_match() {
        let d = doc(el(
            "FrameLayout",
            vec![],
            vec![
                el("TextView", vec![attr_str("hint", "Full name")], vec![]),
                el(
                    "com.google.android.material.textfield.TextInputEditText",
                    vec![attr_str("text", "x")],
                    vec![],
                ),
                // no id/hint/text: dropped
                el("EditText", vec![], vec![]),
            ],
        ));
        let w = extract_layout_widgets(&d, "res/layout/a.xml");
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].hint_text.as_deref(), Some("Full name"));
        assert_eq!(w[1].text.as_deref(), Some("x"));
    }

    #[test]
    fn string_resource_hint_is_unresolved() {
        let mut hint = attr_str("hint", "");
        hint.value = TypedValue::Reference(0x7f0e_0001);
        hint.raw = Some("@string/hint_name".into());
        let d = doc(el(
            "EditText",
            vec![attr_str("id", "@+id/field"), hint],
            vec![],
        ));
        let w = extract_layout_widgets(&d, "res/layout/a.xml");
        assert_eq!(w[0].hint_text, None);
        assert_eq!(w[0].unresolved, vec!["hint=@string/hint_name".to_string()]);
    }
}
