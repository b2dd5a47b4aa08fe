mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use report_kg::corpus::{base_id, split_corpus, Corpus};
use report_kg::extract::{ConceptExtractor, DictionaryExtractor};
use report_kg::generator::{apply_rules, GeneratorSpec};
use report_kg::sample;

fn ids(c: &Corpus) -> Vec<String> {
    c.iter().map(|r| r.id.clone()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splits_partition_the_corpus(n in 20usize..120, seed in any::<u64>(), val in 5u32..30, test in 5u32..30) {
        let c = common::corpus(n, seed % 1000, seed % 2 == 0);
        let ratios = [1.0 - f64::from(val + test) / 100.0, f64::from(val) / 100.0, f64::from(test) / 100.0];
        let s = split_corpus(&c, ratios, seed).unwrap();
        let mut all: Vec<String> = [ids(&s.train), ids(&s.val), ids(&s.test)].concat();
        prop_assert_eq!(all.len(), c.len());
        all.sort();
        let mut expected = ids(&c);
        expected.sort();
        prop_assert_eq!(all, expected);

        let bases = |c: &Corpus| c.iter().map(|r| base_id(&r.id).to_string()).collect::<BTreeSet<_>>();
        let (a, b, t) = (bases(&s.train), bases(&s.val), bases(&s.test));
        prop_assert!(a.is_disjoint(&b) && a.is_disjoint(&t) && b.is_disjoint(&t));
        let n_bases = a.len() + b.len() + t.len();
        prop_assert_eq!(b.len(), (ratios[1] * n_bases as f64 + 1e-9).floor() as usize);
        prop_assert_eq!(t.len(), (ratios[2] * n_bases as f64 + 1e-9).floor() as usize);

        let again = split_corpus(&c, ratios, seed).unwrap();
        prop_assert_eq!(ids(&again.test), ids(&s.test));
    }

    #[test]
    fn corpus_text_round_trips(n in 1usize..40, seed in 0u64..500) {
        let c = common::corpus(n, seed, true);
        prop_assert_eq!(Corpus::parse(&c.to_text()).unwrap(), c);
    }
}

#[test]
fn generated_labels_follow_the_rules_on_extracted_concepts() {
    let o = sample::ontology();
    let extractor = DictionaryExtractor::new(&o);
    let spec = GeneratorSpec::default();
    for r in common::corpus(500, 8, true).iter() {
        let ex = extractor.extract(r).unwrap();
        let mut sentences = vec![Vec::new(); ex.n_sentences];
        for m in ex.mentions {
            sentences[m.sentence_index].push(m.concept);
        }
        let labels = apply_rules(&spec.rules, &sentences, spec.negation.as_ref());
        assert_eq!(Some(labels), r.labels, "report {}", r.id);
    }
}
