//! Miniature SNOMED-CT-shaped multilingual knowledge base.
//!
//! File layout (UTF-8, one record per line, tab-separated, `#` comments):
//!
//! ```text
//! C <cui> <snomed_id> <lang>:<phrase>|<phrase>... [<lang>:...]...
//! R <cui_a> <cui_b> <label>
//! ```
//!
//! The first phrase listed for a language is that language's preferred label.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::normalize_phrase;

/// Longest dictionary phrase, in tokens.
pub const MAX_PHRASE_TOKENS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OntologyError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: duplicate CUI {cui}")]
    DuplicateCui { line: usize, cui: ConceptId },
    #[error("line {line}: duplicate phrase {phrase:?} in language {lang} ({first} and {second})")]
    DuplicatePhrase {
        line: usize,
        lang: String,
        phrase: String,
        first: ConceptId,
        second: ConceptId,
    },
    #[error("line {line}: unknown endpoint {cui} in relation")]
    UnknownEndpoint { line: usize, cui: ConceptId },
    #[error("invalid concept id {0:?}: expected C followed by 7 digits")]
    InvalidId(String),
    #[error("unknown concept {0}")]
    UnknownConcept(ConceptId),
    #[error("reading {path}: {msg}")]
    Io { path: String, msg: String },
}

/// UMLS concept unique identifier: `C` followed by exactly seven digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ConceptId(String);

impl ConceptId {
    pub fn new(s: impl Into<String>) -> Result<Self, OntologyError> {
        let s = s.into();
        let b = s.as_bytes();
        if b.len() == 8 && b[0] == b'C' && b[1..].iter().all(u8::is_ascii_digit) {
            Ok(Self(s))
        } else {
            Err(OntologyError::InvalidId(s))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ConceptId {
    type Error = OntologyError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(s)
    }
}

impl From<ConceptId> for String {
    fn from(c: ConceptId) -> Self {
        c.0
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for ConceptId {
    type Err = OntologyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Concept {
    pub id: ConceptId,
    pub snomed_id: String,
    /// Surface phrases per language, in file order.
    pub terms: BTreeMap<String, Vec<String>>,
}

impl Concept {
    pub fn preferred_label(&self, lang: &str) -> Option<&str> {
        self.terms.get(lang).and_then(|t| t.first()).map(String::as_str)
    }

    /// Preferred label in `lang`, falling back to any language, then the CUI.
    pub fn display_label(&self, lang: &str) -> &str {
        self.preferred_label(lang)
            .or_else(|| self.terms.values().find_map(|t| t.first()).map(String::as_str))
            .unwrap_or(self.id.as_str())
    }
}

/// An undirected ontology relation; endpoints are stored with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Relation {
    pub a: ConceptId,
    pub b: ConceptId,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ontology {
    concepts: BTreeMap<ConceptId, Concept>,
    relations: BTreeSet<Relation>,
    neighbours: HashMap<ConceptId, BTreeSet<ConceptId>>,
    phrase_index: HashMap<String, HashMap<String, ConceptId>>,
}

impl Ontology {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, OntologyError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| OntologyError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, OntologyError> {
        let mut onto = Ontology::default();
        let mut pending = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let raw = raw.trim_end_matches('\r');
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            let perr = |msg: &str| OntologyError::Parse {
                line,
                msg: msg.to_string(),
            };
            let id = |s: &str| ConceptId::new(s).map_err(|e| perr(&e.to_string()));
            match fields[0] {
                "C" => {
                    if fields.len() < 4 {
                        return Err(perr("concept record needs cui, snomed id and at least one term group"));
                    }
                    let cui = id(fields[1])?;
                    let mut terms: BTreeMap<String, Vec<String>> = BTreeMap::new();
                    for group in &fields[3..] {
                        let (lang, phrases) = group
                            .split_once(':')
                            .ok_or_else(|| perr("term group must look like <lang>:<phrase>|..."))?;
                        if lang.is_empty() || !lang.chars().all(|c| c.is_ascii_lowercase()) {
                            return Err(perr(&format!("bad language code {lang:?}")));
                        }
                        let list = terms.entry(lang.to_string()).or_default();
                        for p in phrases.split('|') {
                            let norm = normalize_phrase(p);
                            let n_tokens = norm.split(' ').filter(|t| !t.is_empty()).count();
                            if n_tokens == 0 {
                                return Err(perr("empty phrase"));
                            }
                            if n_tokens > MAX_PHRASE_TOKENS {
                                return Err(perr(&format!(
                                    "phrase {p:?} longer than {MAX_PHRASE_TOKENS} tokens"
                                )));
                            }
                            if !list.contains(&norm) {
                                list.push(norm);
                            }
                        }
                    }
                    let concept = Concept {
                        id: cui.clone(),
                        snomed_id: fields[2].to_string(),
                        terms,
                    };
                    onto.insert_concept(concept, line)?;
                }
                "R" => {
                    if fields.len() != 4 {
                        return Err(perr("relation record needs cui_a, cui_b and label"));
                    }
                    let a = id(fields[1])?;
                    let b = id(fields[2])?;
                    if a == b {
                        return Err(perr("relation endpoints must differ"));
                    }
                    pending.push((line, a, b, fields[3].to_string()));
                }
                other => return Err(perr(&format!("unknown record kind {other:?}"))),
            }
        }

        for (line, a, b, label) in pending {
            for c in [&a, &b] {
                if !onto.concepts.contains_key(c) {
                    return Err(OntologyError::UnknownEndpoint {
                        line,
                        cui: c.clone(),
                    });
                }
            }
            onto.insert_relation(a, b, label);
        }
        Ok(onto)
    }

    fn insert_concept(&mut self, concept: Concept, line: usize) -> Result<(), OntologyError> {
        if self.concepts.contains_key(&concept.id) {
            return Err(OntologyError::DuplicateCui {
                line,
                cui: concept.id,
            });
        }
        for (lang, phrases) in &concept.terms {
            let index = self.phrase_index.entry(lang.clone()).or_default();
            for p in phrases {
                if let Some(prev) = index.get(p) {
                    return Err(OntologyError::DuplicatePhrase {
                        line,
                        lang: lang.clone(),
                        phrase: p.clone(),
                        first: prev.clone(),
                        second: concept.id.clone(),
                    });
                }
                index.insert(p.clone(), concept.id.clone());
            }
        }
        self.concepts.insert(concept.id.clone(), concept);
        Ok(())
    }

    fn insert_relation(&mut self, a: ConceptId, b: ConceptId, label: String) {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        self.neighbours.entry(a.clone()).or_default().insert(b.clone());
        self.neighbours.entry(b.clone()).or_default().insert(a.clone());
        self.relations.insert(Relation { a, b, label });
    }

    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    pub fn concept(&self, id: &ConceptId) -> Option<&Concept> {
        self.concepts.get(id)
    }

    pub fn contains(&self, id: &ConceptId) -> bool {
        self.concepts.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.iter()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    /// Languages with at least one phrase.
    pub fn languages(&self) -> impl Iterator<Item = &str> {
        let mut langs: Vec<&str> = self.phrase_index.keys().map(String::as_str).collect();
        langs.sort_unstable();
        langs.into_iter()
    }

    pub fn has_language(&self, lang: &str) -> bool {
        self.phrase_index.contains_key(lang)
    }

    /// Concept for an exact normalised phrase in `lang`.
    pub fn lookup(&self, lang: &str, phrase: &str) -> Option<&ConceptId> {
        self.phrase_index.get(lang)?.get(phrase)
    }

    /// Every `(language, phrase, concept)` triple in the index.
    pub fn phrase_entries(&self) -> impl Iterator<Item = (&str, &str, &ConceptId)> {
        self.phrase_index
            .iter()
            .flat_map(|(l, m)| m.iter().map(move |(p, c)| (l.as_str(), p.as_str(), c)))
    }

    fn require(&self, id: &ConceptId) -> Result<(), OntologyError> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(OntologyError::UnknownConcept(id.clone()))
        }
    }

    /// Whether a relation connects `a` and `b` in either direction.
    pub fn related(&self, a: &ConceptId, b: &ConceptId) -> Result<bool, OntologyError> {
        self.require(a)?;
        self.require(b)?;
        Ok(a != b && self.neighbours.get(a).is_some_and(|n| n.contains(b)))
    }

    /// Whether `b` is reachable from `a` in at most `hops` relation steps.
    /// `hops = 1` is exactly [`Ontology::related`].
    pub fn within_hops(&self, a: &ConceptId, b: &ConceptId, hops: usize) -> Result<bool, OntologyError> {
        self.require(a)?;
        self.require(b)?;
        if a == b || hops == 0 {
            return Ok(false);
        }
        let mut seen: BTreeSet<&ConceptId> = BTreeSet::from([a]);
        let mut queue = VecDeque::from([(a, 0usize)]);
        while let Some((node, depth)) = queue.pop_front() {
            if depth == hops {
                continue;
            }
            for next in self.neighbours.get(node).into_iter().flatten() {
                if next == b {
                    return Ok(true);
                }
                if seen.insert(next) {
                    queue.push_back((next, depth + 1));
                }
            }
        }
        Ok(false)
    }

    pub fn neighbours(&self, id: &ConceptId) -> impl Iterator<Item = &ConceptId> {
        self.neighbours.get(id).into_iter().flatten()
    }

    /// Serialises to the line format accepted by [`Ontology::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in self.concepts.values() {
            out.push_str(&format!("C\t{}\t{}", c.id, c.snomed_id));
            for (lang, phrases) in &c.terms {
                out.push_str(&format!("\t{lang}:{}", phrases.join("|")));
            }
            out.push('\n');
        }
        for r in &self.relations {
            out.push_str(&format!("R\t{}\t{}\t{}\n", r.a, r.b, r.label));
        }
        out
    }
}
