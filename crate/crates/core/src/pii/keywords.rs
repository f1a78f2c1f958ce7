use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize, Serializer};

use super::embedding::EmbeddingStore;
use super::tokens::tokenize;
use crate::diag::{Warning, WarningKind};

pub const DEFAULT_SEEDS: &str = include_str!("../../data/seeds.txt");

/// Parses a one-entry-per-line list; `#` starts a comment.
pub fn parse_word_list(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if !line.is_empty() {
            let w = line.to_lowercase();
            if !out.contains(&w) {
                out.push(w);
            }
        }
    }
    out
}

/// Manual-review filter applied to synonyms before they become keywords.
#[derive(Debug, Clone, Default)]
pub struct Review {
    pub allow: Option<BTreeSet<String>>,
    pub deny: BTreeSet<String>,
}

impl Review {
    pub fn accepts(&self, word: &str) -> bool {
        !self.deny.contains(word) && self.allow.as_ref().is_none_or(|a| a.contains(word))
    }
}

fn rounded<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64((x * 1e6).round() / 1e6)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synonym {
    pub word: String,
    #[serde(serialize_with = "rounded")]
    pub similarity: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub seed: String,
    pub in_vocabulary: bool,
    pub synonyms: Vec<Synonym>,
}

/// Seed keywords, their ranked synonyms and the resulting keyword list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordDatabase {
    pub k: usize,
    pub seeds: Vec<String>,
    pub expansions: Vec<Expansion>,
    /// Seeds first, then accepted synonyms; this order decides which keyword
    /// a variable is attributed to.
    pub keywords: Vec<String>,
    #[serde(skip)]
    pub warnings: Vec<Warning>,
    #[serde(skip)]
    token_cache: Vec<Vec<String>>,
}

impl KeywordDatabase {
    pub fn from_seeds<S: AsRef<str>>(seeds: &[S]) -> KeywordDatabase {
        let seeds: Vec<String> = seeds.iter().map(|s| s.as_ref().to_lowercase()).collect();
        let mut db = KeywordDatabase {
            k: 0,
            expansions: seeds
                .iter()
                .map(|s| Expansion {
                    seed: s.clone(),
                    in_vocabulary: false,
                    synonyms: vec![],
                })
                .collect(),
            keywords: Vec::new(),
            seeds,
            warnings: Vec::new(),
            token_cache: Vec::new(),
        };
        db.rebuild_keywords();
        db
    }

    /// Database of the shipped seed keywords, without expansion.
    pub fn builtin() -> KeywordDatabase {
        KeywordDatabase::from_seeds(&parse_word_list(DEFAULT_SEEDS))
    }

    pub fn empty() -> KeywordDatabase {
        KeywordDatabase::from_seeds::<&str>(&[])
    }

    pub fn from_json(text: &str) -> Result<KeywordDatabase, serde_json::Error> {
        let mut db: KeywordDatabase = serde_json::from_str(text)?;
        db.rebuild_keywords();
        Ok(db)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("keyword database serializes")
    }

    fn rebuild_keywords(&mut self) {
        let mut keywords: Vec<String> = Vec::new();
        let accepted = self
            .expansions
            .iter()
            .flat_map(|e| e.synonyms.iter().filter(|s| s.accepted).map(|s| &s.word));
        for w in self.seeds.iter().chain(accepted) {
            if !keywords.contains(w) {
                keywords.push(w.clone());
            }
        }
        self.token_cache = keywords.iter().map(|k| tokenize(k)).collect();
        self.keywords = keywords;
    }

    pub fn contains(&self, word: &str) -> bool {
        self.keywords.iter().any(|k| k == word)
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    /// Keywords paired with their token sequences, in database order.
    pub fn tokenized(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.keywords
            .iter()
            .zip(&self.token_cache)
            .map(|(k, t)| (k.as_str(), t.as_slice()))
    }

    /// Position of a keyword in database order.
    pub fn rank(&self, keyword: &str) -> usize {
        self.keywords
            .iter()
            .position(|k| k == keyword)
            .unwrap_or(usize::MAX)
    }
}

#[derive(Debug, PartialEq)]
struct Scored<'a> {
    similarity: f64,
    word: &'a str,
}

impl Eq for Scored<'_> {}

impl Ord for Scored<'_> {
    /// "Better" candidates compare as smaller, so the max-heap keeps the
    /// worst retained candidate on top.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .similarity
            .total_cmp(&self.similarity)
            .then_with(|| self.word.cmp(other.word))
    }
}

impl PartialOrd for Scored<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The `k` nearest words to vocabulary entry `seed`, most similar first.
pub fn nearest(store: &EmbeddingStore, seed: usize, k: usize) -> Vec<(String, f64)> {
    if k == 0 || store.norm(seed) == 0.0 {
        return Vec::new();
    }
    let mut heap: BinaryHeap<Scored<'_>> = BinaryHeap::with_capacity(k + 1);
    for (i, word) in store.words().iter().enumerate() {
        if i == seed || store.norm(i) == 0.0 {
            continue;
        }
        let cand = Scored {
            similarity: store.cosine_at(seed, i),
            word,
        };
        if heap.len() < k {
            heap.push(cand);
        } else if heap.peek().is_some_and(|worst| cand < *worst) {
            heap.pop();
            heap.push(cand);
        }
    }
    heap.into_sorted_vec()
        .into_iter()
        .map(|s| (s.word.to_string(), s.similarity))
        .collect()
}

fn lookup(store: &EmbeddingStore, seed: &str) -> Option<usize> {
    store
        .index_of(seed)
        .or_else(|| store.index_of(&seed.replace(' ', "_")))
}

/// Expands every seed with its `k` nearest vocabulary words.
pub fn expand_keywords<S: AsRef<str>>(
    store: &EmbeddingStore,
    seeds: &[S],
    k: usize,
    review: &Review,
) -> KeywordDatabase {
    let mut db = KeywordDatabase::from_seeds(seeds);
    db.k = k;
    for exp in &mut db.expansions {
        match lookup(store, &exp.seed) {
            Some(i) => {
                exp.in_vocabulary = true;
                exp.synonyms = nearest(store, i, k)
                    .into_iter()
                    .map(|(word, similarity)| Synonym {
                        accepted: review.accepts(&word),
                        word,
                        similarity,
                    })
                    .collect();
            }
            None => db.warnings.push(Warning::new(
                WarningKind::KeywordNotInVocabulary,
                "keywords",
                format!("seed {:?} not in embedding vocabulary", exp.seed),
            )),
        }
    }
    db.rebuild_keywords();
    db
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(rows: &[(&str, Vec<f64>)]) -> EmbeddingStore {
        EmbeddingStore::from_pairs(rows).unwrap()
    }

    #[test]
    fn identical_vectors_rank_first() {
        let s = store(&[
            ("phone", vec![1.0, 2.0]),
            ("telephone", vec![1.0, 2.0]),
            ("bread", vec![-2.0, 1.0]),
        ]);
        let db = expand_keywords(&s, &["phone"], 1, &Review::default());
        assert_eq!(db.expansions[0].synonyms.len(), 1);
        assert_eq!(db.expansions[0].synonyms[0].word, "telephone");
        assert!((db.expansions[0].synonyms[0].similarity - 1.0).abs() < 1e-12);
        assert_eq!(db.keywords, vec!["phone", "telephone"]);
    }

    #[test]
    fn ties_break_lexicographically_and_zero_vectors_are_skipped() {
        let s = store(&[
            ("seed", vec![1.0, 0.0]),
            ("b", vec![2.0, 0.0]),
            ("a", vec![3.0, 0.0]),
            ("z", vec![0.0, 0.0]),
            ("c", vec![0.0, 1.0]),
        ]);
        let got: Vec<String> = nearest(&s, 0, 10).into_iter().map(|(w, _)| w).collect();
        assert_eq!(got, vec!["a", "b", "c"]);
    }

    #[test]
    fn missing_seed_warns() {
        let s = store(&[("a", vec![1.0])]);
        let db = expand_keywords(&s, &["name", "a"], 3, &Review::default());
        assert!(db.expansions[0].synonyms.is_empty());
        assert_eq!(db.warnings.len(), 1);
        assert_eq!(db.keywords, vec!["name", "a"]);
    }

    #[test]
    fn spaced_seed_uses_underscored_vocabulary_entry() {
        let s = store(&[("phone_number", vec![1.0, 0.1]), ("mobile", vec![1.0, 0.0])]);
        let db = expand_keywords(&s, &["phone number"], 1, &Review::default());
        assert!(db.expansions[0].in_vocabulary);
        assert_eq!(db.keywords, vec!["phone number", "mobile"]);
    }

    #[test]
    fn review_lists_filter_acceptance() {
        let s = store(&[
            ("name", vec![1.0, 0.0]),
            ("surname", vec![1.0, 0.1]),
            ("username", vec![1.0, 0.2]),
        ]);
        let review = Review {
            allow: None,
            deny: ["username".to_string()].into(),
        };
        let db = expand_keywords(&s, &["name"], 5, &review);
        assert_eq!(db.expansions[0].synonyms.len(), 2);
        assert_eq!(db.keywords, vec!["name", "surname"]);
        let review = Review {
            allow: Some(["username".to_string()].into()),
            deny: BTreeSet::new(),
        };
        let db = expand_keywords(&s, &["name"], 5, &review);
        assert_eq!(db.keywords, vec!["name", "username"]);
    }

    #[test]
    fn json_round_trip_rounds_similarity() {
        let s = store(&[("name", vec![1.0, 0.0]), ("surname", vec![3.0, 1.0])]);
        let db = expand_keywords(&s, &["name"], 5, &Review::default());
        let json = db.to_json();
        assert!(json.contains("0.948683"), "{json}");
        let back = KeywordDatabase::from_json(&json).unwrap();
        assert_eq!(back.keywords, db.keywords);
    }

    #[test]
    fn word_list_comments() {
        assert_eq!(
            parse_word_list("# header\nName\n\nphone number  # inline\nname\n"),
            vec!["name", "phone number"]
        );
    }
}
