//! Report graphs: concept, sentence and global nodes joined by four edge
//! families, with initial node features taken from the embedding table.
//!
//! Node order is canonical: concept nodes sorted by CUI, then sentence nodes
//! by index, then the global node. The graph is therefore a function of the
//! `(concept, sentence)` mention multiset alone, independent of surface
//! language or token order.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use kg_tensor::Tensor;

use crate::embedding::{mean_vector, EmbeddingTable};
use crate::extract::Mention;
use crate::ontology::{ConceptId, Ontology, OntologyError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("mention of {concept} has sentence index {index} but the report has {n_sentences} sentences")]
    SentenceIndex {
        concept: ConceptId,
        index: usize,
        n_sentences: usize,
    },
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error("malformed graph: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value")]
pub enum NodeKind {
    Concept(ConceptId),
    Sentence(usize),
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    ConceptConcept,
    SentenceConcept,
    GlobalSentence,
    GlobalConcept,
}

impl EdgeKind {
    pub fn touches_global(self) -> bool {
        matches!(self, EdgeKind::GlobalSentence | EdgeKind::GlobalConcept)
    }
}

/// Undirected edge with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub kind: EdgeKind,
}

/// Which node and edge families to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub use_global: bool,
    pub use_sentence: bool,
    pub use_concept_edges: bool,
    /// Maximum ontology path length that still yields a concept–concept
    /// edge. 1 means direct relations only.
    pub relation_hops: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self::FULL
    }
}

impl AblationConfig {
    pub const FULL: Self = Self {
        use_global: true,
        use_sentence: true,
        use_concept_edges: true,
        relation_hops: 1,
    };
    pub const NO_GLOBAL: Self = Self {
        use_global: false,
        ..Self::FULL
    };
    pub const NO_GLOBAL_SENTENCE: Self = Self {
        use_global: false,
        use_sentence: false,
        ..Self::FULL
    };
    pub const NO_CONCEPT_EDGES: Self = Self {
        use_concept_edges: false,
        ..Self::FULL
    };
    pub const NO_GLOBAL_SENTENCE_CONCEPT_EDGES: Self = Self {
        use_global: false,
        use_sentence: false,
        use_concept_edges: false,
        relation_hops: 1,
    };

    /// The full graph and the four ablations, with short names.
    pub fn variants() -> [(&'static str, Self); 5] {
        [
            ("full", Self::FULL),
            ("no_g", Self::NO_GLOBAL),
            ("no_g_s", Self::NO_GLOBAL_SENTENCE),
            ("no_cc", Self::NO_CONCEPT_EDGES),
            ("no_g_s_cc", Self::NO_GLOBAL_SENTENCE_CONCEPT_EDGES),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportGraph {
    pub nodes: Vec<NodeKind>,
    pub edges: Vec<Edge>,
    /// `|nodes| × F` initial features.
    pub features: Tensor,
}

/// Mean of a sentence's concept vectors; zero vector for an empty sentence.
pub fn sentence_embedding_init(concept_rows: &[&[f64]], dim: usize) -> Vec<f64> {
    mean_vector(concept_rows.iter().copied(), dim)
}

pub fn build_graph(
    ontology: &Ontology,
    mentions: &[Mention],
    n_sentences: usize,
    emb: &EmbeddingTable,
    ab: &AblationConfig,
) -> Result<ReportGraph, GraphError> {
    let dim = emb.dim();
    let mut by_sentence: BTreeMap<usize, BTreeSet<&ConceptId>> = BTreeMap::new();
    let mut concepts: BTreeSet<&ConceptId> = BTreeSet::new();
    for m in mentions {
        if m.sentence_index >= n_sentences {
            return Err(GraphError::SentenceIndex {
                concept: m.concept.clone(),
                index: m.sentence_index,
                n_sentences,
            });
        }
        if !ontology.contains(&m.concept) {
            return Err(OntologyError::UnknownConcept(m.concept.clone()).into());
        }
        by_sentence.entry(m.sentence_index).or_default().insert(&m.concept);
        concepts.insert(&m.concept);
    }

    let mut nodes = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let concept_ids: Vec<&ConceptId> = concepts.into_iter().collect();
    let concept_vecs: Vec<Vec<f64>> = concept_ids.iter().map(|c| emb.vector(c).into_owned()).collect();
    let concept_node: BTreeMap<&ConceptId, usize> =
        concept_ids.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    for (c, v) in concept_ids.iter().zip(&concept_vecs) {
        nodes.push(NodeKind::Concept((*c).clone()));
        rows.push(v.clone());
    }

    let mut edges = BTreeSet::new();
    if ab.use_concept_edges {
        for i in 0..concept_ids.len() {
            for j in i + 1..concept_ids.len() {
                if ontology.within_hops(concept_ids[i], concept_ids[j], ab.relation_hops)? {
                    edges.insert(Edge {
                        a: i,
                        b: j,
                        kind: EdgeKind::ConceptConcept,
                    });
                }
            }
        }
    }

    let mut sentence_nodes = Vec::new();
    if ab.use_sentence {
        for s in 0..n_sentences {
            let idx = nodes.len();
            let members: Vec<usize> = by_sentence
                .get(&s)
                .map(|set| set.iter().map(|c| concept_node[c]).collect())
                .unwrap_or_default();
            let member_rows: Vec<&[f64]> = members.iter().map(|&i| concept_vecs[i].as_slice()).collect();
            nodes.push(NodeKind::Sentence(s));
            rows.push(sentence_embedding_init(&member_rows, dim));
            for c in members {
                edges.insert(Edge {
                    a: c,
                    b: idx,
                    kind: EdgeKind::SentenceConcept,
                });
            }
            sentence_nodes.push(idx);
        }
    }

    if ab.use_global {
        let g = nodes.len();
        nodes.push(NodeKind::Global);
        rows.push(mean_vector(concept_vecs.iter().map(Vec::as_slice), dim));
        for c in 0..concept_ids.len() {
            edges.insert(Edge {
                a: c,
                b: g,
                kind: EdgeKind::GlobalConcept,
            });
        }
        for &s in &sentence_nodes {
            edges.insert(Edge {
                a: s,
                b: g,
                kind: EdgeKind::GlobalSentence,
            });
        }
    }

    let n = nodes.len();
    let features = Tensor::new(vec![n, dim], rows.into_iter().flatten().collect())
        .map_err(|e| GraphError::Malformed(e.to_string()))?;
    Ok(ReportGraph {
        nodes,
        edges: edges.into_iter().collect(),
        features,
    })
}

impl ReportGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn count_edges(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    /// Row-major `n × n` neighbourhood mask including self-loops.
    pub fn attention_mask(&self) -> Vec<bool> {
        let n = self.nodes.len();
        let mut mask = vec![false; n * n];
        for i in 0..n {
            mask[i * n + i] = true;
        }
        for e in &self.edges {
            mask[e.a * n + e.b] = true;
            mask[e.b * n + e.a] = true;
        }
        mask
    }

    pub fn neighbours(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |e| {
            if e.a == node {
                Some(e.b)
            } else if e.b == node {
                Some(e.a)
            } else {
                None
            }
        })
    }

    /// Node index for a node kind.
    pub fn index_of(&self, kind: &NodeKind) -> Option<usize> {
        self.nodes.iter().position(|n| n == kind)
    }

    /// Checks the structural invariants: ordered unique edges without
    /// self-loops, in-range endpoints, edge kinds matching node kinds, and a
    /// feature row per node.
    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.nodes.len();
        if self.features.rank() != 2 || self.features.shape()[0] != n {
            return Err(GraphError::Malformed(format!(
                "{} nodes but features of shape {:?}",
                n,
                self.features.shape()
            )));
        }
        let globals = self.nodes.iter().filter(|k| **k == NodeKind::Global).count();
        if globals > 1 {
            return Err(GraphError::Malformed("more than one global node".into()));
        }
        let distinct: BTreeSet<&NodeKind> = self.nodes.iter().collect();
        if distinct.len() != n {
            return Err(GraphError::Malformed("duplicate node".into()));
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            if e.a >= e.b || e.b >= n {
                return Err(GraphError::Malformed(format!("bad edge {e:?}")));
            }
            if !seen.insert((e.a, e.b)) {
                return Err(GraphError::Malformed(format!("duplicate edge {e:?}")));
            }
            let (ka, kb) = (&self.nodes[e.a], &self.nodes[e.b]);
            let ok = match e.kind {
                EdgeKind::ConceptConcept => {
                    matches!(ka, NodeKind::Concept(_)) && matches!(kb, NodeKind::Concept(_))
                }
                EdgeKind::SentenceConcept => matches!(
                    (ka, kb),
                    (NodeKind::Concept(_), NodeKind::Sentence(_)) | (NodeKind::Sentence(_), NodeKind::Concept(_))
                ),
                EdgeKind::GlobalSentence => matches!(
                    (ka, kb),
                    (NodeKind::Sentence(_), NodeKind::Global) | (NodeKind::Global, NodeKind::Sentence(_))
                ),
                EdgeKind::GlobalConcept => matches!(
                    (ka, kb),
                    (NodeKind::Concept(_), NodeKind::Global) | (NodeKind::Global, NodeKind::Concept(_))
                ),
            };
            if !ok {
                return Err(GraphError::Malformed(format!("edge kind mismatch {e:?}")));
            }
        }
        Ok(())
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> ReportGraph {
        let n = self.nodes.len();
        let dim = self.feature_dim();
        let mut nodes = vec![NodeKind::Global; n];
        let mut data = vec![0.0; n * dim];
        for (old, &new) in perm.iter().enumerate() {
            nodes[new] = self.nodes[old].clone();
            data[new * dim..(new + 1) * dim].copy_from_slice(self.features.row_slice(old));
        }
        let mut edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| {
                let (a, b) = (perm[e.a], perm[e.b]);
                Edge {
                    a: a.min(b),
                    b: a.max(b),
                    kind: e.kind,
                }
            })
            .collect();
        edges.sort();
        ReportGraph {
            nodes,
            edges,
            features: Tensor::new(vec![n, dim], data).expect("same size"),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn cid(s: &str) -> ConceptId {
        ConceptId::new(s).unwrap()
    }

    pub(crate) fn fixture_ontology() -> Ontology {
        Ontology::parse(
            "C\tC0000001\t1\ten:alpha\tes:alfa\n\
             C\tC0000002\t2\ten:beta\tes:beta\n\
             C\tC0000003\t3\ten:gamma\tes:gama\n\
             R\tC0000001\tC0000003\tis_a\n",
        )
        .unwrap()
    }

    pub(crate) fn fixture_embeddings() -> EmbeddingTable {
        EmbeddingTable::parse("C0000001 1 0 2\nC0000002 0 1 0\nC0000003 3 3 -1\n").unwrap()
    }

    fn mention(c: &str, s: usize) -> Mention {
        Mention {
            concept: cid(c),
            sentence_index: s,
            span: (0, 1),
        }
    }

    /// s0 = {A, B}, s1 = {B, C}, relation A–C.
    pub(crate) fn fixture_mentions() -> Vec<Mention> {
        vec![
            mention("C0000001", 0),
            mention("C0000002", 0),
            mention("C0000002", 1),
            mention("C0000003", 1),
        ]
    }

    pub(crate) fn fixture_graph() -> ReportGraph {
        build_graph(
            &fixture_ontology(),
            &fixture_mentions(),
            2,
            &fixture_embeddings(),
            &AblationConfig::FULL,
        )
        .unwrap()
    }

    #[test]
    fn six_node_fixture_counts() {
        let g = fixture_graph();
        g.validate().unwrap();
        assert_eq!(g.node_count(), 6);
        assert_eq!(g.edge_count(), 10);
        assert_eq!(g.count_edges(EdgeKind::ConceptConcept), 1);
        assert_eq!(g.count_edges(EdgeKind::SentenceConcept), 4);
        assert_eq!(g.count_edges(EdgeKind::GlobalSentence), 2);
        assert_eq!(g.count_edges(EdgeKind::GlobalConcept), 3);
        // Sentence 0 = mean(A, B); global = mean(A, B, C).
        assert_eq!(g.features.row_slice(3), &[0.5, 0.5, 1.0]);
        assert_eq!(g.features.row_slice(4), &[1.5, 2.0, -0.5]);
        assert_eq!(g.features.row_slice(5), &[4.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn empty_report_has_global_and_sentence() {
        let g = build_graph(&fixture_ontology(), &[], 1, &fixture_embeddings(), &AblationConfig::FULL).unwrap();
        assert_eq!(g.nodes, vec![NodeKind::Sentence(0), NodeKind::Global]);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].kind, EdgeKind::GlobalSentence);
        assert!(g.features.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn full_ablation_leaves_isolated_concepts() {
        let g = build_graph(
            &fixture_ontology(),
            &fixture_mentions(),
            2,
            &fixture_embeddings(),
            &AblationConfig::NO_GLOBAL_SENTENCE_CONCEPT_EDGES,
        )
        .unwrap();
        assert_eq!(g.node_count(), 3);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn bad_sentence_index() {
        let r = build_graph(
            &fixture_ontology(),
            &fixture_mentions(),
            1,
            &fixture_embeddings(),
            &AblationConfig::FULL,
        );
        assert!(matches!(r, Err(GraphError::SentenceIndex { index: 1, .. })));
    }

    #[test]
    fn missing_embedding_uses_fallback() {
        let emb = EmbeddingTable::parse("C0000001 1 0 2\n").unwrap();
        let g = build_graph(&fixture_ontology(), &fixture_mentions(), 2, &emb, &AblationConfig::FULL).unwrap();
        let row = g.features.row_slice(1);
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 0.1).abs() < 1e-12);
    }

    #[test]
    fn sentence_init_examples() {
        assert_eq!(sentence_embedding_init(&[&[1.0, 1.0], &[3.0, 3.0]], 2), vec![2.0, 2.0]);
        assert_eq!(sentence_embedding_init(&[], 2), vec![0.0, 0.0]);
        assert_eq!(sentence_embedding_init(&[&[0.25, -4.0]], 2), vec![0.25, -4.0]);
    }

    #[test]
    fn repeated_concept_is_one_node() {
        let g = fixture_graph();
        let b = g.index_of(&NodeKind::Concept(cid("C0000002"))).unwrap();
        let sentence_neighbours: Vec<usize> = g
            .neighbours(b)
            .filter(|&n| matches!(g.nodes[n], NodeKind::Sentence(_)))
            .collect();
        assert_eq!(sentence_neighbours.len(), 2);
    }

    #[test]
    fn mask_is_symmetric_with_self_loops() {
        let g = fixture_graph();
        let n = g.node_count();
        let m = g.attention_mask();
        for i in 0..n {
            assert!(m[i * n + i]);
            for j in 0..n {
                assert_eq!(m[i * n + j], m[j * n + i]);
            }
        }
    }

    #[test]
    fn permutation_round_trip() {
        let g = fixture_graph();
        let perm = [5, 3, 1, 0, 2, 4];
        let p = g.permuted(&perm);
        p.validate().unwrap();
        let mut inv = [0; 6];
        for (i, &v) in perm.iter().enumerate() {
            inv[v] = i;
        }
        assert_eq!(p.permuted(&inv), g);
    }
}
