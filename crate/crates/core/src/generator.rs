//! Synthetic bilingual chest-radiography reports with rule-derived labels.
//!
//! A report is planned first as a list of sentences, each an instance of a
//! [`Template`] with its slots filled by ontology concepts. Labels are a
//! function of the plan only: a [`LabelRule`] fires when all of its concepts
//! occur together in one sentence that carries no negation concept, and
//! "No Finding" is set exactly when nothing else is. The plan is then
//! rendered in each requested language with surface forms drawn from the
//! ontology, so translations of one report differ only in wording.
//!
//! Template text uses `{name}` for a fixed concept (random surface form),
//! `{name:k}` for its `k`-th surface form, and `{slot}` / `{slot?}` for a
//! required / optional concept drawn from a slot pool.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng as _;

use kg_tensor::rng::{self, stable_hash, Rng};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::extract::Report;
use crate::labels::{Labels, NUM_LABELS};
use crate::ontology::{ConceptId, Ontology};
use crate::sample::{concept, cui};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SentenceKind {
    Finding,
    Negated,
    Normal,
    Distractor,
    Filler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub kind: SentenceKind,
    pub en: &'static str,
    pub es: &'static str,
}

const fn t(kind: SentenceKind, en: &'static str, es: &'static str) -> Template {
    Template { kind, en, es }
}

use SentenceKind::*;

pub const TEMPLATES: &[Template] = &[
    t(Finding, "There is a {size?} {side?} {effusion}", "Hay {effusion} {side?} {size?}"),
    t(Finding, "{blunting} of the {side?} {cpa}", "{blunting} del {cpa} {side?}"),
    t(Finding, "The {heart} is {enlarged:0}", "El {heart} está {enlarged:0}"),
    t(Finding, "{severity?} {cardiomegaly}", "{cardiomegaly} {severity?}"),
    t(Finding, "The {mediastinum} is {enlarged:0}", "El {mediastinum} está {enlarged:0}"),
    t(Finding, "{severity?} {side?} {opacity} in the {lobe}", "{opacity} {side?} {severity?} en el {lobe}"),
    t(Finding, "Patchy {infiltrate} in the {side?} {lobe}", "{infiltrate} parcheado en el {lobe} {side?}"),
    t(Finding, "A {size?} {nodule:0} in the {side?} {lobe}", "Un {nodule:0} {size?} en el {lobe} {side?}"),
    t(Finding, "A {size?} {mass} in the {side?} {lobe}", "Una {mass} {size?} en el {lobe} {side?}"),
    t(Finding, "{severity?} {pulmonary_edema}", "{pulmonary_edema} {severity?}"),
    t(Finding, "{severity?} interstitial {edema}", "{edema} intersticial {severity?}"),
    t(Finding, "{side?} {lobe} {consolidation:0}", "{consolidation:0} en el {lobe} {side?}"),
    t(Finding, "Findings are concerning for {pneumonia}", "Hallazgos sugestivos de {pneumonia}"),
    t(Finding, "{side?} {lobe} {atelectasis:0}", "{atelectasis:0} en el {lobe} {side?}"),
    t(Finding, "{size?} {side?} {pneumothorax}", "{pneumothorax} {side?} {size?}"),
    t(Finding, "{side?} {thickening}", "{thickening} {side?}"),
    t(Finding, "Acute {fracture:0} of the {side?} {rib:0}", "{fracture:0} aguda del {rib:0} {side?}"),
    t(Finding, "{fracture:0} of the {side?} {clavicle}", "{fracture:0} de la {clavicle} {side?}"),
    t(Finding, "{ett} in standard position", "{ett} en posición adecuada"),
    t(Finding, "{cvc} terminates in the superior vena cava", "{cvc} con extremo en la vena cava superior"),
    t(Finding, "{pacemaker} leads in place", "Cables de {pacemaker} en posición"),
    t(Finding, "{ngt} courses below the {diaphragm}", "{ngt} por debajo del {diaphragm}"),
    t(Finding, "{side?} {chest_tube} in place", "{chest_tube} {side?} en posición"),
    t(Finding, "Median {sternotomy}", "{sternotomy} media"),
    t(Negated, "{no:0} {effusion}", "{no:1} {effusion}"),
    t(Negated, "{no:0} {pneumothorax}", "{no:0} hay {pneumothorax}"),
    t(Negated, "{no:0} focal {consolidation:0}", "{no:1} {consolidation:0} focal"),
    t(Negated, "{no:2} evidence of {pneumonia}", "{no:1} signos de {pneumonia}"),
    t(Negated, "{no:0} {pulmonary_edema}", "{no:1} {pulmonary_edema}"),
    t(Negated, "The {heart} is {no:1} {enlarged:0}", "El {heart} {no:0} está {enlarged:0}"),
    t(Negated, "The {mediastinum} is {no:1} {enlarged:0}", "El {mediastinum} {no:0} está {enlarged:0}"),
    t(Negated, "{no:0} displaced {fracture}", "{no:1} {fracture} desplazada"),
    t(Negated, "{no:0} {cardiomegaly}", "{no:1} {cardiomegaly}"),
    t(Negated, "{no:3} {nodule}", "{no:2} {nodule}"),
    t(Negated, "{no:0} {atelectasis}", "{no:1} {atelectasis}"),
    t(Negated, "{no:0} {blunting} of the {cpa}", "{no:1} {blunting} del {cpa}"),
    t(Normal, "{heart} size is {normal:0}", "Tamaño del {heart} {normal:0}"),
    t(Normal, "The {mediastinum} is {normal}", "El {mediastinum} es {normal:0}"),
    t(Normal, "The {lung:1} are {normal:2}", "Los {lung:1} son {normal:1}"),
    t(Normal, "The {hilum:1} are {normal:1}", "Los {hilum:1} son {normal:1}"),
    t(Normal, "The {cpa:1} are {normal:2}", "Los {cpa:1} son {normal:1}"),
    t(Normal, "{no:0} acute cardiopulmonary process", "{no:1} alteraciones agudas"),
    t(Distractor, "{hilum:2} {enlarged:1}", "{hilum:0} {enlarged:0}"),
    t(Distractor, "{blunting} of the {cardiophrenic:0}", "{blunting} del {cardiophrenic:0}"),
    t(Distractor, "{calcified:0} {granuloma} in the {lobe}", "{granuloma} {calcified:0} en el {lobe}"),
    t(Distractor, "{scoliosis} of the {spine}", "{scoliosis} de la {spine}"),
    t(Distractor, "{size?} {hernia}", "{hernia} {size?}"),
    t(Distractor, "{severity?} {emphysema}", "{emphysema} {severity?}"),
    t(Distractor, "{athero:1} {aorta:0}", "{aorta:0} {athero:1}"),
    t(Distractor, "{change} {hilum:2} {adenopathy}", "{adenopathy} {hilum:2} {change}"),
    t(Distractor, "{severity?} {congestion}", "{congestion} {severity?}"),
    t(Filler, "Comparison is made with the prior study", "Se compara con el estudio previo"),
    t(Filler, "Portable upright view of the chest", "Proyección portátil del tórax en bipedestación"),
    t(Filler, "Clinical history was reviewed", "Se revisó la historia clínica"),
    t(Filler, "The study is limited by patient rotation", "Estudio limitado por rotación del paciente"),
    t(Filler, "Findings were discussed with the referring team", "Hallazgos comentados con el equipo tratante"),
];

const NAMES: &[(&str, &str)] = &[
    ("effusion", cui::PLEURAL_EFFUSION),
    ("pulmonary_edema", cui::PULMONARY_EDEMA),
    ("edema", cui::EDEMA),
    ("cardiomegaly", cui::CARDIOMEGALY),
    ("consolidation", cui::CONSOLIDATION),
    ("pneumonia", cui::PNEUMONIA),
    ("atelectasis", cui::ATELECTASIS),
    ("pneumothorax", cui::PNEUMOTHORAX),
    ("opacity", cui::OPACITY),
    ("infiltrate", cui::INFILTRATE),
    ("nodule", cui::NODULE),
    ("mass", cui::MASS),
    ("thickening", cui::PLEURAL_THICKENING),
    ("fracture", cui::FRACTURE),
    ("emphysema", cui::EMPHYSEMA),
    ("hernia", cui::HIATAL_HERNIA),
    ("calcified", cui::CALCIFIED),
    ("granuloma", cui::GRANULOMA),
    ("blunting", cui::BLUNTING),
    ("congestion", cui::VASCULAR_CONGESTION),
    ("adenopathy", cui::LYMPHADENOPATHY),
    ("scoliosis", cui::SCOLIOSIS),
    ("athero", cui::ATHEROSCLEROSIS),
    ("enlarged", cui::ENLARGED),
    ("no", cui::ABSENT),
    ("normal", cui::NORMAL),
    ("lung", cui::LUNG),
    ("heart", cui::HEART),
    ("mediastinum", cui::MEDIASTINUM),
    ("hilum", cui::HILUM),
    ("rib", cui::RIB),
    ("clavicle", cui::CLAVICLE),
    ("cpa", cui::COSTOPHRENIC_ANGLE),
    ("cardiophrenic", cui::CARDIOPHRENIC_ANGLE),
    ("diaphragm", cui::DIAPHRAGM),
    ("spine", cui::SPINE),
    ("aorta", cui::AORTA),
    ("ett", cui::ENDOTRACHEAL_TUBE),
    ("cvc", cui::CENTRAL_LINE),
    ("pacemaker", cui::PACEMAKER),
    ("ngt", cui::NASOGASTRIC_TUBE),
    ("chest_tube", cui::CHEST_TUBE),
    ("sternotomy", cui::STERNOTOMY),
];

const SLOTS: &[(&str, &[&str])] = &[
    ("size", &[cui::SMALL, cui::LARGE]),
    ("severity", &[cui::MILD, cui::MODERATE, cui::SEVERE]),
    ("side", &[cui::LEFT, cui::RIGHT, cui::BILATERAL]),
    ("lobe", &[cui::LOWER_LOBE, cui::UPPER_LOBE, cui::MIDDLE_LOBE, cui::LUNG_BASE]),
    ("change", &[cui::STABLE, cui::IMPROVED]),
];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(&'static str),
    Concept { id: &'static str, form: Option<usize> },
    Slot { name: &'static str, optional: bool },
}

fn parse_template(src: &'static str) -> Vec<Piece> {
    let mut out = Vec::new();
    let mut rest = src;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            out.push(Piece::Text(&rest[..open]));
        }
        let close = rest[open..].find('}').expect("template braces balance") + open;
        let inner = &rest[open + 1..close];
        let (name, optional) = match inner.strip_suffix('?') {
            Some(n) => (n, true),
            None => (inner, false),
        };
        if let Some((pool, _)) = SLOTS.iter().find(|(s, _)| *s == name) {
            out.push(Piece::Slot { name: pool, optional });
        } else {
            let (name, form) = match name.split_once(':') {
                Some((n, k)) => (n, Some(k.parse().expect("surface form index"))),
                None => (name, None),
            };
            let id = NAMES
                .iter()
                .find(|(n, _)| *n == name)
                .unwrap_or_else(|| panic!("template names unknown concept {name:?}"))
                .1;
            out.push(Piece::Concept { id, form });
        }
        rest = &rest[close + 1..];
    }
    if !rest.is_empty() {
        out.push(Piece::Text(rest));
    }
    out
}

impl Template {
    fn text(&self, lang: &str) -> Option<&'static str> {
        match lang {
            "en" => Some(self.en),
            "es" => Some(self.es),
            _ => None,
        }
    }

    /// Slot names used by the template, in first-appearance order of the
    /// English text.
    pub fn slots(&self) -> Vec<(&'static str, bool)> {
        let mut seen = Vec::new();
        for p in parse_template(self.en) {
            if let Piece::Slot { name, optional } = p {
                if !seen.iter().any(|(n, _)| *n == name) {
                    seen.push((name, optional));
                }
            }
        }
        seen
    }

    /// Fixed concepts of the template, in English order.
    pub fn fixed_concepts(&self) -> Vec<ConceptId> {
        parse_template(self.en)
            .into_iter()
            .filter_map(|p| match p {
                Piece::Concept { id, .. } => Some(concept(id)),
                _ => None,
            })
            .collect()
    }
}

/// Languages with template text.
pub const LANGUAGES: [&str; 2] = ["en", "es"];

/// A label set when every concept of `concepts` occurs in one affirmed sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRule {
    pub concepts: BTreeSet<ConceptId>,
    pub label: usize,
}

impl LabelRule {
    pub fn new(label: usize, concepts: &[&str]) -> Self {
        Self {
            concepts: concepts.iter().map(|c| concept(c)).collect(),
            label,
        }
    }
}

/// Rules for labels 1 to 13; label 0 ("No Finding") is the complement.
pub fn default_rules() -> Vec<LabelRule> {
    let r = LabelRule::new;
    vec![
        r(1, &[cui::ENLARGED, cui::MEDIASTINUM]),
        r(2, &[cui::CARDIOMEGALY]),
        r(2, &[cui::ENLARGED, cui::HEART]),
        r(3, &[cui::OPACITY]),
        r(3, &[cui::INFILTRATE]),
        r(4, &[cui::NODULE]),
        r(4, &[cui::MASS]),
        r(5, &[cui::EDEMA]),
        r(5, &[cui::PULMONARY_EDEMA]),
        r(6, &[cui::CONSOLIDATION]),
        r(7, &[cui::PNEUMONIA]),
        r(8, &[cui::ATELECTASIS]),
        r(9, &[cui::PNEUMOTHORAX]),
        r(10, &[cui::PLEURAL_EFFUSION]),
        r(10, &[cui::BLUNTING, cui::COSTOPHRENIC_ANGLE]),
        r(11, &[cui::PLEURAL_THICKENING]),
        r(12, &[cui::FRACTURE]),
        r(13, &[cui::ENDOTRACHEAL_TUBE]),
        r(13, &[cui::CENTRAL_LINE]),
        r(13, &[cui::PACEMAKER]),
        r(13, &[cui::NASOGASTRIC_TUBE]),
        r(13, &[cui::CHEST_TUBE]),
        r(13, &[cui::STERNOTOMY]),
    ]
}

/// Labels implied by per-sentence concept lists. Sentences containing
/// `negation` contribute nothing.
pub fn apply_rules(rules: &[LabelRule], sentences: &[Vec<ConceptId>], negation: Option<&ConceptId>) -> Labels {
    let mut labels = Labels::default();
    for s in sentences {
        if negation.is_some_and(|n| s.contains(n)) {
            continue;
        }
        let set: BTreeSet<&ConceptId> = s.iter().collect();
        for r in rules {
            if r.concepts.iter().all(|c| set.contains(c)) {
                labels.set(r.label, true);
            }
        }
    }
    let any = (1..NUM_LABELS).any(|i| labels.get(i));
    labels.set(0, !any);
    labels
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub n_reports: usize,
    pub languages: Vec<String>,
    /// Render every report in every language (ids `base/lang`) rather than in
    /// one randomly chosen language.
    pub parallel: bool,
    pub min_sentences: usize,
    pub max_sentences: usize,
    /// Relative frequency of finding, negated, normal and distractor sentences.
    pub kind_weights: [f64; 4],
    /// Probability that a sentence is concept-free filler.
    pub noise: f64,
    /// Probability of flipping each generated label.
    pub label_noise: f64,
    pub seed: u64,
    pub rules: Vec<LabelRule>,
    pub negation: Option<ConceptId>,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            n_reports: 2000,
            languages: vec!["en".into(), "es".into()],
            parallel: false,
            min_sentences: 2,
            max_sentences: 6,
            kind_weights: [0.4, 0.2, 0.25, 0.15],
            noise: 0.1,
            label_noise: 0.0,
            seed: 0,
            rules: default_rules(),
            negation: Some(concept(cui::ABSENT)),
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self, o: &Ontology) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.languages.is_empty() {
            return bad("at least one language is required".into());
        }
        for l in &self.languages {
            if !LANGUAGES.contains(&l.as_str()) {
                return bad(format!("no report templates for language {l:?}"));
            }
            if !o.has_language(l) {
                return bad(format!("ontology has no terms in language {l:?}"));
            }
        }
        if self.min_sentences == 0 || self.min_sentences > self.max_sentences {
            return bad(format!(
                "sentence range {}..={} is empty",
                self.min_sentences, self.max_sentences
            ));
        }
        if self.kind_weights.iter().any(|w| !(*w >= 0.0)) || self.kind_weights.iter().sum::<f64>() <= 0.0 {
            return bad("sentence kind weights must be non-negative with a positive sum".into());
        }
        for (name, p) in [("noise", self.noise), ("label_noise", self.label_noise)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} is not a probability"));
            }
        }
        for r in &self.rules {
            if r.label == 0 || r.label >= NUM_LABELS {
                return bad(format!(
                    "rule targets unreachable label index {} (rules may set 1..{})",
                    r.label,
                    NUM_LABELS - 1
                ));
            }
            if r.concepts.is_empty() {
                return bad(format!("rule for label {} has no concepts", r.label));
            }
            if let Some(c) = r.concepts.iter().find(|c| !o.contains(c)) {
                return bad(format!("rule for label {} names unknown concept {c}", r.label));
            }
        }
        for label in 1..NUM_LABELS {
            if !self.rules.iter().any(|r| r.label == label) {
                return bad(format!("label index {label} is not reachable by any rule"));
            }
        }
        if let Some(n) = &self.negation {
            if !o.contains(n) {
                return bad(format!("negation concept {n} is not in the ontology"));
            }
        }
        for (name, id) in NAMES.iter().copied().chain(SLOTS.iter().flat_map(|&(s, ids)| ids.iter().map(move |&i| (s, i)))) {
            let c = concept(id);
            let Some(k) = o.concept(&c) else {
                return bad(format!("template concept {name} ({id}) is not in the ontology"));
            };
            for l in &self.languages {
                if !k.terms.contains_key(l) {
                    return bad(format!("template concept {name} has no {l} terms"));
                }
            }
        }
        Ok(())
    }
}

/// One planned sentence: template index, slot fillers and concept list.
#[derive(Debug, Clone, PartialEq)]
pub struct SentencePlan {
    pub template: usize,
    pub slots: BTreeMap<&'static str, Option<ConceptId>>,
    pub concepts: Vec<ConceptId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportPlan {
    pub index: usize,
    pub sentences: Vec<SentencePlan>,
    pub labels: Labels,
}

fn pick_kind(r: &mut Rng, spec: &GeneratorSpec) -> SentenceKind {
    if r.random::<f64>() < spec.noise {
        return Filler;
    }
    let total: f64 = spec.kind_weights.iter().sum();
    let mut x = r.random::<f64>() * total;
    for (w, kind) in spec.kind_weights.iter().zip([Finding, Negated, Normal, Distractor]) {
        if x < *w {
            return kind;
        }
        x -= w;
    }
    Distractor
}

fn plan_sentence(r: &mut Rng, kind: SentenceKind) -> SentencePlan {
    let candidates: Vec<usize> = (0..TEMPLATES.len()).filter(|&i| TEMPLATES[i].kind == kind).collect();
    let template = candidates[r.random_range(0..candidates.len())];
    let tpl = &TEMPLATES[template];
    let mut slots = BTreeMap::new();
    for (name, optional) in tpl.slots() {
        let pool = SLOTS.iter().find(|(s, _)| *s == name).expect("known slot").1;
        let fill = if optional && r.random::<f64>() < 0.5 {
            None
        } else {
            Some(concept(pool[r.random_range(0..pool.len())]))
        };
        slots.insert(name, fill);
    }
    let mut concepts = tpl.fixed_concepts();
    concepts.extend(slots.values().flatten().cloned());
    concepts.sort();
    SentencePlan {
        template,
        slots,
        concepts,
    }
}

/// Plans report `index`; the same `(spec.seed, index)` always gives the same plan.
pub fn plan_report(spec: &GeneratorSpec, index: usize) -> ReportPlan {
    let mut r = rng::stream(spec.seed, &[0x9e4, index as u64]);
    let n = r.random_range(spec.min_sentences..=spec.max_sentences);
    let mut sentences: Vec<SentencePlan> = (0..n)
        .map(|_| {
            let kind = pick_kind(&mut r, spec);
            plan_sentence(&mut r, kind)
        })
        .collect();
    if sentences.iter().all(|s| s.concepts.is_empty()) {
        let at = r.random_range(0..=sentences.len());
        sentences.insert(at, plan_sentence(&mut r, Normal));
    }
    let lists: Vec<Vec<ConceptId>> = sentences.iter().map(|s| s.concepts.clone()).collect();
    let mut labels = apply_rules(&spec.rules, &lists, spec.negation.as_ref());
    if spec.label_noise > 0.0 {
        for i in 0..NUM_LABELS {
            if r.random::<f64>() < spec.label_noise {
                labels.set(i, !labels.get(i));
            }
        }
    }
    ReportPlan {
        index,
        sentences,
        labels,
    }
}

fn capitalise(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

impl ReportPlan {
    /// Report text in `lang`. Surface forms are drawn from a stream keyed by
    /// the report index and language.
    pub fn render(&self, o: &Ontology, lang: &str, seed: u64) -> Result<String> {
        let mut r = rng::stream(seed, &[0x7e7, self.index as u64, stable_hash(lang.as_bytes())]);
        let mut out = Vec::with_capacity(self.sentences.len());
        for s in &self.sentences {
            let tpl = &TEMPLATES[s.template];
            let src = tpl
                .text(lang)
                .ok_or_else(|| Error::Config(format!("no report templates for language {lang:?}")))?;
            let mut text = String::new();
            for piece in parse_template(src) {
                let (id, form) = match piece {
                    Piece::Text(t) => {
                        text.push_str(t);
                        continue;
                    }
                    Piece::Concept { id, form } => (concept(id), form),
                    Piece::Slot { name, .. } => match s.slots.get(name).cloned().flatten() {
                        Some(id) => (id, Some(0)),
                        None => continue,
                    },
                };
                let phrases = o
                    .concept(&id)
                    .and_then(|c| c.terms.get(lang))
                    .ok_or_else(|| Error::Config(format!("concept {id} has no {lang} terms")))?;
                let k = form.unwrap_or_else(|| r.random_range(0..phrases.len()));
                let phrase = phrases
                    .get(k)
                    .ok_or_else(|| Error::Config(format!("concept {id} has no {lang} surface form {k}")))?;
                text.push_str(phrase);
            }
            let words: Vec<&str> = text.split_whitespace().collect();
            out.push(format!("{}.", capitalise(&words.join(" "))));
        }
        Ok(out.join(" "))
    }
}

/// Generates the corpus described by `spec`. Report ids are `r00000`, ...
/// or `r00000/en`, `r00000/es`, ... in parallel mode.
pub fn generate_corpus(o: &Ontology, spec: &GeneratorSpec) -> Result<Corpus> {
    spec.validate(o)?;
    let mut reports = Vec::new();
    for i in 0..spec.n_reports {
        let plan = plan_report(spec, i);
        let base = format!("r{i:05}");
        if spec.parallel {
            for lang in &spec.languages {
                reports.push(Report {
                    id: format!("{base}/{lang}"),
                    language: lang.clone(),
                    text: plan.render(o, lang, spec.seed)?,
                    labels: Some(plan.labels),
                });
            }
        } else {
            let mut r = rng::stream(spec.seed, &[0x1a6, i as u64]);
            let lang = &spec.languages[r.random_range(0..spec.languages.len())];
            reports.push(Report {
                id: base,
                language: lang.clone(),
                text: plan.render(o, lang, spec.seed)?,
                labels: Some(plan.labels),
            });
        }
    }
    Ok(Corpus::new(reports))
}
