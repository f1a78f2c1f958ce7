//! PII keyword database and PII variable identification.

mod bind;
pub mod embedding;
pub mod keywords;
pub mod tokens;

use serde::{Deserialize, Serialize};

use crate::axml::WidgetDecl;

pub use bind::{bind_pii, bind_pii_to_code, PiiBinding};
pub use embedding::{load_embeddings, EmbeddingError, EmbeddingStore};
pub use keywords::{expand_keywords, parse_word_list, KeywordDatabase, Review, DEFAULT_SEEDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PiiOrigin {
    WidgetId,
    WidgetHint,
    WidgetText,
    CodeIdentifier,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PiiLocation {
    /// Layout file or DEX entry.
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PiiVariable {
    pub origin: PiiOrigin,
    pub matched_keyword: String,
    /// Widget id name, or the field / string the match came from.
    pub identifier: String,
    pub location: PiiLocation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resource_id: Option<u32>,
}

/// First keyword (in database order) occurring as a token run of `identifier`.
pub fn match_identifier<'a>(db: &'a KeywordDatabase, identifier: &str) -> Option<&'a str> {
    let toks = tokens::tokenize(identifier);
    db.tokenized()
        .find(|(_, kt)| tokens::contains_run(&toks, kt))
        .map(|(k, _)| k)
}

/// First keyword occurring as whole words of free text.
pub fn match_text<'a>(db: &'a KeywordDatabase, text: &str) -> Option<&'a str> {
    let ws = tokens::words(text);
    db.tokenized()
        .find(|(_, kt)| tokens::contains_run(&ws, kt))
        .map(|(k, _)| k)
}

fn match_widget(db: &KeywordDatabase, w: &WidgetDecl) -> Option<(String, PiiOrigin)> {
    let id_toks = w.id_name.as_deref().map(tokens::tokenize).unwrap_or_default();
    let hint = w.hint_text.as_deref().map(tokens::words).unwrap_or_default();
    let text = w.text.as_deref().map(tokens::words).unwrap_or_default();
    for (k, kt) in db.tokenized() {
        let origin = if tokens::contains_run(&id_toks, kt) {
            PiiOrigin::WidgetId
        } else if tokens::contains_run(&hint, kt) {
            PiiOrigin::WidgetHint
        } else if tokens::contains_run(&text, kt) {
            PiiOrigin::WidgetText
        } else {
            continue;
        };
        return Some((k.to_string(), origin));
    }
    None
}

/// One PII variable per widget whose id, hint or text carries a keyword,
/// in canonical order.
pub fn identify_pii_variables(widgets: &[WidgetDecl], db: &KeywordDatabase) -> Vec<PiiVariable> {
    let mut out: Vec<PiiVariable> = widgets
        .iter()
        .filter_map(|w| {
            let (keyword, origin) = match_widget(db, w)?;
            let identifier = w
                .id_name
                .clone()
                .or_else(|| w.hint_text.clone())
                .or_else(|| w.text.clone())
                .unwrap_or_default();
            Some(PiiVariable {
                origin,
                matched_keyword: keyword,
                identifier,
                location: PiiLocation {
                    source: w.source_file.clone(),
                    ..Default::default()
                },
                resource_id: w.resource_id,
            })
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn widget(id: Option<&str>, hint: Option<&str>, text: Option<&str>) -> WidgetDecl {
        WidgetDecl {
            widget_class: "EditText".into(),
            id_name: id.map(Into::into),
            resource_id: None,
            hint_text: hint.map(Into::into),
            text: text.map(Into::into),
            source_file: "res/layout/main.xml".into(),
            unresolved: vec![],
        }
    }

    fn db() -> KeywordDatabase {
        KeywordDatabase::from_seeds(&["name", "phone", "postcode", "password"])
    }

    #[test]
    fn widget_id_token() {
        let v = identify_pii_variables(&[widget(Some("personal_details_name"), None, None)], &db());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].origin, PiiOrigin::WidgetId);
        assert_eq!(v[0].matched_keyword, "name");
    }

    #[test]
    fn hint_word() {
        let v = identify_pii_variables(&[widget(None, Some("Full name"), None)], &db());
        assert_eq!(v[0].origin, PiiOrigin::WidgetHint);
    }

    #[test]
    fn non_matches() {
        let ws = [
            widget(Some("submit_button"), None, None),
            widget(Some("username"), None, None),
            widget(None, Some("Nameless"), None),
        ];
        assert!(identify_pii_variables(&ws, &db()).is_empty());
    }

    #[test]
    fn first_keyword_by_database_order_wins() {
        let v = identify_pii_variables(&[widget(Some("phone_name"), None, None)], &db());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].matched_keyword, "name");
    }

    #[test]
    fn multi_word_keywords() {
        let db = KeywordDatabase::from_seeds(&["phone number"]);
        assert_eq!(match_identifier(&db, "userPhoneNumber"), Some("phone number"));
        assert_eq!(match_identifier(&db, "numberPhone"), None);
        assert_eq!(match_text(&db, "Your phone number"), Some("phone number"));
    }

    proptest! {
        #[test]
        fn order_independent(
            ids in proptest::collection::vec("(name|phone|x|y|post_code|postcode|pass)(_[a-z]{1,3})?", 0..8),
            seed in any::<u64>(),
        ) {
            let ws: Vec<WidgetDecl> = ids.iter().map(|i| widget(Some(i), None, None)).collect();
            let mut shuffled = ws.clone();
            let n = shuffled.len();
            if n > 1 {
                for i in 0..n {
                    let j = ((seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64)) % n as u64) as usize;
                    shuffled.swap(i, j);
                }
            }
            prop_assert_eq!(identify_pii_variables(&ws, &db()), identify_pii_variables(&shuffled, &db()));
        }
    }
}
