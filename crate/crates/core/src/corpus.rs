//! Report corpora on disk and their train/validation/test partition.
//!
//! A corpus file holds one report per line as tab-separated `key=value`
//! fields: `id`, `lang`, optional `labels` (fourteen comma-separated 0/1
//! flags) and `text`. Inside values, backslash, tab and newline are written
//! `\\`, `\t` and `\n`. Blank lines and lines starting with `#` are skipped.
//!
//! Ids of the form `base/lang` mark translations of one report; splitting
//! keeps every translation of a base id in the same partition.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use kg_tensor::rng::{mix64, stable_hash};

use crate::error::{Error, Result};
use crate::extract::Report;
use crate::labels::Labels;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub reports: Vec<Report>,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str, line: usize) -> Result<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            other => {
                return Err(Error::Corpus(format!("line {line}: bad escape \\{}", other.unwrap_or(' '))));
            }
        }
    }
    Ok(out)
}

/// The part of a report id before the first `/`.
pub fn base_id(id: &str) -> &str {
    id.split('/').next().unwrap_or(id)
}

impl Corpus {
    pub fn new(reports: Vec<Report>) -> Self {
        Self { reports }
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Report> {
        self.reports.iter()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut reports = Vec::new();
        let mut seen = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let mut fields: BTreeMap<&str, String> = BTreeMap::new();
            for field in raw.split('\t') {
                let (k, v) = field
                    .split_once('=')
                    .ok_or_else(|| Error::Corpus(format!("line {line}: field {field:?} is not key=value")))?;
                if !matches!(k, "id" | "lang" | "labels" | "text") {
                    return Err(Error::Corpus(format!("line {line}: unknown field {k:?}")));
                }
                if fields.insert(k, unescape(v, line)?).is_some() {
                    return Err(Error::Corpus(format!("line {line}: repeated field {k:?}")));
                }
            }
            let mut take = |k: &str| {
                fields
                    .remove(k)
                    .ok_or_else(|| Error::Corpus(format!("line {line}: missing field {k:?}")))
            };
            let id = take("id")?;
            let language = take("lang")?;
            let text = take("text")?;
            let labels = fields
                .remove("labels")
                .map(|l| Labels::parse(&l).map_err(|e| Error::Corpus(format!("line {line}: {e}"))))
                .transpose()?;
            if id.is_empty() {
                return Err(Error::Corpus(format!("line {line}: empty id")));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::Corpus(format!("line {line}: duplicate id {id:?}")));
            }
            reports.push(Report {
                id,
                language,
                text,
                labels,
            });
        }
        Ok(Self { reports })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.reports {
            let _ = write!(out, "id={}\tlang={}", escape(&r.id), escape(&r.language));
            if let Some(l) = &r.labels {
                let _ = write!(out, "\tlabels={l}");
            }
            let _ = writeln!(out, "\ttext={}", escape(&r.text));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Reports whose language is `lang`, in corpus order.
    pub fn filter_language(&self, lang: &str) -> Corpus {
        Corpus::new(self.reports.iter().filter(|r| r.language == lang).cloned().collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Corpus,
    pub val: Corpus,
    pub test: Corpus,
}

pub const DEFAULT_RATIOS: [f64; 3] = [0.7, 0.1, 0.2];

/// Hash-ordered partition of the base ids. Validation and test receive
/// `floor(ratio · n)` base ids each and training takes the remainder. Within
/// each part reports are sorted by id.
pub fn split_corpus(c: &Corpus, ratios: [f64; 3], seed: u64) -> Result<Split> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("split ratios {ratios:?} must be in [0, 1] and sum to 1")));
    }
    let bases: BTreeSet<&str> = c.reports.iter().map(|r| base_id(&r.id)).collect();
    let mut order: Vec<&str> = bases.into_iter().collect();
    order.sort_by_key(|b| (mix64(stable_hash(b.as_bytes()) ^ mix64(seed)), *b));
    let n = order.len();
    let count = |r: f64| (r * n as f64 + 1e-9).floor() as usize;
    let (n_val, n_test) = (count(ratios[1]), count(ratios[2]));
    for (name, want, got) in [
        ("validation", ratios[1], n_val),
        ("test", ratios[2], n_test),
        ("training", ratios[0], n.saturating_sub(n_val + n_test)),
    ] {
        if want > 0.0 && got == 0 {
            return Err(Error::Corpus(format!(
                "{n} reports are too few for a non-empty {name} split"
            )));
        }
    }
    let test: BTreeSet<&str> = order[..n_test].iter().copied().collect();
    let val: BTreeSet<&str> = order[n_test..n_test + n_val].iter().copied().collect();
    let mut parts = [Vec::new(), Vec::new(), Vec::new()];
    for r in &c.reports {
        let b = base_id(&r.id);
        let k = if test.contains(b) {
            2
        } else if val.contains(b) {
            1
        } else {
            0
        };
        parts[k].push(r.clone());
    }
    for p in &mut parts {
        p.sort_by(|a, b| a.id.cmp(&b.id));
    }
    let [train, val, test] = parts.map(Corpus::new);
    Ok(Split { train, val, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(n: usize) -> Corpus {
        Corpus::new(
            (0..n)
                .map(|i| Report {
                    id: format!("r{i:03}"),
                    language: "en".into(),
                    text: format!("report {i}"),
                    labels: Some(Labels::default()),
                })
                .collect(),
        )
    }

    #[test]
    fn ten_reports_split_seven_one_two() {
        let s = split_corpus(&corpus(10), DEFAULT_RATIOS, 7).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 1, 2));
        assert_eq!(s, split_corpus(&corpus(10), DEFAULT_RATIOS, 7).unwrap());
    }

    #[test]
    fn split_is_a_partition() {
        let c = corpus(57);
        let s = split_corpus(&c, DEFAULT_RATIOS, 3).unwrap();
        let mut ids: Vec<String> = [&s.train, &s.val, &s.test]
            .iter()
            .flat_map(|p| p.reports.iter().map(|r| r.id.clone()))
            .collect();
        ids.sort();
        let mut want: Vec<String> = c.reports.iter().map(|r| r.id.clone()).collect();
        want.sort();
        assert_eq!(ids, want);
    }

    #[test]
    fn translations_share_a_split() {
        let mut reports = Vec::new();
        for i in 0..20 {
            for lang in ["en", "es"] {
                reports.push(Report {
                    id: format!("p{i}/{lang}"),
                    language: lang.into(),
                    text: String::new(),
                    labels: None,
                });
            }
        }
        let s = split_corpus(&Corpus::new(reports), DEFAULT_RATIOS, 1).unwrap();
        for part in [&s.train, &s.val, &s.test] {
            assert_eq!(part.len() % 2, 0);
            for pair in part.reports.chunks(2) {
                assert_eq!(base_id(&pair[0].id), base_id(&pair[1].id));
            }
        }
    }

    #[test]
    fn too_small_is_an_error() {
        assert!(split_corpus(&corpus(3), DEFAULT_RATIOS, 0).is_err());
        assert!(split_corpus(&corpus(10), [0.5, 0.2, 0.2], 0).is_err());
    }

    #[test]
    fn text_round_trip_with_escapes() {
        let mut c = corpus(2);
        c.reports[0].text = "line one.\nline\ttwo \\ done".into();
        c.reports[1].labels = None;
        let back = Corpus::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = Corpus::parse("id=a\tlang=en\ttext=x\nid=a\tlang=en\ttext=y\n").unwrap_err();
        assert!(err.to_string().contains("line 2"));
        assert!(Corpus::parse("id=a\ttext=x\n").is_err());
        assert!(Corpus::parse("id=a\tlang=en\ttext=x\tcolour=red\n").is_err());
    }
}
