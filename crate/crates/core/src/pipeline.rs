//! Report text to report graph: extraction followed by graph construction.

use crate::corpus::Corpus;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::extract::{ConceptExtractor, DictionaryExtractor, Report};
use crate::graph::{build_graph, AblationConfig, ReportGraph};
use crate::labels::Labels;
use crate::ontology::Ontology;

#[derive(Clone, Copy)]
pub struct Pipeline<'a> {
    pub ontology: &'a Ontology,
    pub embeddings: &'a EmbeddingTable,
    pub ablation: AblationConfig,
}

/// A report graph paired with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub graph: ReportGraph,
    pub labels: Labels,
}

impl<'a> Pipeline<'a> {
    pub fn new(ontology: &'a Ontology, embeddings: &'a EmbeddingTable, ablation: AblationConfig) -> Self {
        Self {
            ontology,
            embeddings,
            ablation,
        }
    }

    pub fn graph(&self, report: &Report) -> Result<ReportGraph> {
        let ex = DictionaryExtractor::new(self.ontology).extract(report)?;
        Ok(build_graph(
            self.ontology,
            &ex.mentions,
            ex.n_sentences,
            self.embeddings,
            &self.ablation,
        )?)
    }

    /// Graphs for every report; reports must carry labels.
    pub fn samples(&self, corpus: &Corpus) -> Result<Vec<Sample>> {
        corpus
            .iter()
            .map(|r| {
                let labels = r
                    .labels
                    .ok_or_else(|| Error::Corpus(format!("report {} has no labels", r.id)))?;
                Ok(Sample {
                    id: r.id.clone(),
                    graph: self.graph(r)?,
                    labels,
                })
            })
            .collect()
    }
}
