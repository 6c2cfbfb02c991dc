use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::Document;

pub const UNK: &str = "<unk>";
pub const UNK_ID: usize = 0;

/// Token vocabulary. Id 0 is reserved for unknown tokens; the remaining ids
/// follow the sorted order of the surfaces seen at build time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(k, t)| (t.clone(), k))
            .collect();
        Self { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    pub fn build<'a>(docs: impl IntoIterator<Item = &'a Document>) -> Self {
        let mut seen = BTreeSet::new();
        for d in docs {
            for t in d.tokens() {
                if t != UNK {
                    seen.insert(t.clone());
                }
            }
        }
        let tokens = std::iter::once(UNK.to_string()).chain(seen).collect::<Vec<_>>();
        Self::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn ids(&self, doc: &Document) -> Vec<usize> {
        doc.tokens().iter().map(|t| self.id(t)).collect()
    }

    pub fn index(&self, doc: Document) -> IndexedDoc {
        let ids = self.ids(&doc);
        IndexedDoc { doc, ids }
    }
}

/// A document paired with the vocabulary ids of its tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedDoc {
    pub doc: Document,
    pub ids: Vec<usize>,
}
