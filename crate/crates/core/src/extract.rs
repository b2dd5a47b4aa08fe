//! Dictionary-based concept extraction.
//!
//! Reports are split into sentences, tokenised, and scanned left to right for
//! the longest ontology phrase (up to [`MAX_PHRASE_TOKENS`] tokens) starting at
//! each position. Matched tokens are consumed, so mentions never overlap.
//! Negation and uncertainty are not interpreted.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::Labels;
use crate::ontology::{ConceptId, Ontology, MAX_PHRASE_TOKENS};
use crate::text::tokenize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExtractError {
    #[error("report {report}: language {lang:?} is not in the ontology")]
    UnknownLanguage { report: String, lang: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub id: String,
    pub language: String,
    pub text: String,
    pub labels: Option<Labels>,
}

/// One concept occurrence inside a sentence; `span` is a half-open token range.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mention {
    pub concept: ConceptId,
    pub sentence_index: usize,
    pub span: (usize, usize),
}

/// Output of an extractor: the mentions plus the number of sentences found.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extraction {
    pub mentions: Vec<Mention>,
    pub n_sentences: usize,
}

/// A concept recogniser. [`DictionaryExtractor`] is the built-in backend.
pub trait ConceptExtractor {
    fn extract(&self, report: &Report) -> Result<Extraction, ExtractError>;
}

/// Splits on `.`, `!`, `?` and blank lines; returns lowercased tokens per
/// sentence with punctuation removed and empty sentences dropped.
pub fn split_sentences(text: &str) -> Vec<Vec<String>> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut flush = |buf: &mut String| {
        let toks = tokenize(buf);
        if !toks.is_empty() {
            sentences.push(toks);
        }
        buf.clear();
    };
    for line in text.lines() {
        if line.trim().is_empty() {
            flush(&mut current);
            continue;
        }
        for ch in line.chars() {
            if matches!(ch, '.' | '!' | '?') {
                flush(&mut current);
            } else {
                current.push(ch);
            }
        }
        current.push(' ');
    }
    flush(&mut current);
    sentences
}

/// Leftmost-longest matches within one tokenised sentence.
pub fn match_sentence(ontology: &Ontology, lang: &str, tokens: &[String], sentence_index: usize) -> Vec<Mention> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let longest = MAX_PHRASE_TOKENS.min(tokens.len() - i);
        let hit = (1..=longest).rev().find_map(|len| {
            let phrase = tokens[i..i + len].join(" ");
            ontology.lookup(lang, &phrase).map(|c| (c.clone(), len))
        });
        match hit {
            Some((concept, len)) => {
                out.push(Mention {
                    concept,
                    sentence_index,
                    span: (i, i + len),
                });
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

/// Mentions of ontology concepts in `report`, ordered by `(sentence, start)`.
pub fn extract_concepts(ontology: &Ontology, report: &Report) -> Result<Vec<Mention>, ExtractError> {
    DictionaryExtractor::new(ontology).extract(report).map(|e| e.mentions)
}

pub struct DictionaryExtractor<'o> {
    ontology: &'o Ontology,
}

impl<'o> DictionaryExtractor<'o> {
    pub fn new(ontology: &'o Ontology) -> Self {
        Self { ontology }
    }
}

impl ConceptExtractor for DictionaryExtractor<'_> {
    fn extract(&self, report: &Report) -> Result<Extraction, ExtractError> {
        if !self.ontology.has_language(&report.language) {
            return Err(ExtractError::UnknownLanguage {
                report: report.id.clone(),
                lang: report.language.clone(),
            });
        }
        let sentences = split_sentences(&report.text);
        let mentions = sentences
            .iter()
            .enumerate()
            .flat_map(|(j, toks)| match_sentence(self.ontology, &report.language, toks, j))
            .collect();
        Ok(Extraction {
            mentions,
            n_sentences: sentences.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cid(s: &str) -> ConceptId {
        ConceptId::new(s).unwrap()
    }

    fn onto() -> Ontology {
        Ontology::parse(
            "C\tC0000001\t1\ten:edema\tes:edema\n\
             C\tC0000002\t2\ten:pleural effusion\tes:derrame pleural\n\
             C\tC0000003\t3\ten:effusion\tes:derrame\n\
             C\tC0000004\t4\ten:small\n",
        )
        .unwrap()
    }

    fn report(lang: &str, text: &str) -> Report {
        Report {
            id: "r1".into(),
            language: lang.into(),
            text: text.into(),
            labels: None,
        }
    }

    #[test]
    fn sentence_splitting_rules() {
        assert_eq!(
            split_sentences("No edema. Heart size normal."),
            vec![vec!["no", "edema"], vec!["heart", "size", "normal"]]
        );
        assert!(split_sentences("").is_empty());
        assert_eq!(split_sentences("opacities,  left lung"), vec![vec!["opacities", "left", "lung"]]);
        assert_eq!(split_sentences("a\nb\n\nc! d? ..."), vec![vec!["a", "b"], vec!["c"], vec!["d"]]);
    }

    #[test]
    fn longest_match_wins() {
        let o = onto();
        let m = extract_concepts(&o, &report("en", "small pleural effusion")).unwrap();
        assert_eq!(
            m,
            vec![
                Mention {
                    concept: cid("C0000004"),
                    sentence_index: 0,
                    span: (0, 1)
                },
                Mention {
                    concept: cid("C0000002"),
                    sentence_index: 0,
                    span: (1, 3)
                },
            ]
        );
    }

    #[test]
    fn per_sentence_emission_and_misses() {
        let o = onto();
        let m = extract_concepts(&o, &report("en", "Edema. Nothing here. Edema again.")).unwrap();
        let got: Vec<(String, usize)> = m.iter().map(|m| (m.concept.to_string(), m.sentence_index)).collect();
        assert_eq!(got, vec![("C0000001".into(), 0), ("C0000001".into(), 2)]);
        let ex = DictionaryExtractor::new(&o).extract(&report("en", "Nothing.")).unwrap();
        assert!(ex.mentions.is_empty());
        assert_eq!(ex.n_sentences, 1);
    }

    #[test]
    fn language_specific_index() {
        let o = onto();
        let m = extract_concepts(&o, &report("es", "Derrame pleural y edema")).unwrap();
        let ids: Vec<&str> = m.iter().map(|m| m.concept.as_str()).collect();
        assert_eq!(ids, ["C0000002", "C0000001"]);
        assert!(matches!(
            extract_concepts(&o, &report("fr", "oedème")),
            Err(ExtractError::UnknownLanguage { .. })
        ));
    }

    #[test]
    fn negation_is_not_interpreted() {
        let o = onto();
        let m = extract_concepts(&o, &report("en", "No edema.")).unwrap();
        assert_eq!(m.len(), 1);
    }
}
