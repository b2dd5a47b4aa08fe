//! DOT and JSON renderings of report graphs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use kg_tensor::Tensor;

use crate::graph::{Edge, EdgeKind, GraphError, NodeKind, ReportGraph};
use crate::ontology::Ontology;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dot" => Ok(Self::Dot),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown export format {other:?} (expected dot or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportOptions {
    /// Drop edges incident to the global node from DOT output.
    pub omit_global_edges: bool,
    /// Language used for concept labels.
    pub language: String,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self {
            omit_global_edges: false,
            language: "en".into(),
        }
    }
}

pub fn export_graph(g: &ReportGraph, o: &Ontology, format: ExportFormat, opts: &ExportOptions) -> String {
    match format {
        ExportFormat::Dot => to_dot(g, o, opts),
        ExportFormat::Json => to_json(g),
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn to_dot(g: &ReportGraph, o: &Ontology, opts: &ExportOptions) -> String {
    let mut out = String::from("digraph report {\n    edge [dir=none];\n");
    for (i, node) in g.nodes.iter().enumerate() {
        let (label, color, shape) = match node {
            NodeKind::Concept(c) => {
                let label = o.concept(c).map_or(c.as_str(), |k| k.display_label(&opts.language));
                (label.to_string(), "#9ecae1", "ellipse")
            }
            NodeKind::Sentence(j) => (format!("s{j}"), "#fdd0a2", "box"),
            NodeKind::Global => ("g".to_string(), "#c7e9c0", "doublecircle"),
        };
        let _ = writeln!(
            out,
            "    n{i} [label=\"{}\", shape={shape}, style=filled, fillcolor=\"{color}\"];",
            escape(&label)
        );
    }
    for e in &g.edges {
        if opts.omit_global_edges && e.kind.touches_global() {
            continue;
        }
        let style = match e.kind {
            EdgeKind::ConceptConcept => "color=\"#d62728\", penwidth=2",
            EdgeKind::SentenceConcept => "color=\"#7f7f7f\"",
            EdgeKind::GlobalSentence | EdgeKind::GlobalConcept => "color=\"#2ca02c\", style=dashed",
        };
        let _ = writeln!(out, "    n{} -> n{} [{style}];", e.a, e.b);
    }
    out.push_str("}\n");
    out
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    nodes: Vec<NodeKind>,
    edges: Vec<Edge>,
    feature_dim: usize,
    features: Vec<Vec<f64>>,
}

pub fn to_json(g: &ReportGraph) -> String {
    let dim = g.feature_dim();
    let doc = GraphJson {
        nodes: g.nodes.clone(),
        edges: g.edges.clone(),
        feature_dim: dim,
        features: (0..g.node_count()).map(|i| g.features.row_slice(i).to_vec()).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("graph serialises")
}

pub fn from_json(text: &str) -> Result<ReportGraph, GraphError> {
    let doc: GraphJson = serde_json::from_str(text).map_err(|e| GraphError::Malformed(e.to_string()))?;
    let n = doc.features.len();
    if doc.features.iter().any(|r| r.len() != doc.feature_dim) {
        return Err(GraphError::Malformed("feature row length differs from feature_dim".into()));
    }
    let features = Tensor::new(vec![n, doc.feature_dim], doc.features.into_iter().flatten().collect())
        .map_err(|e| GraphError::Malformed(e.to_string()))?;
    let g = ReportGraph {
        nodes: doc.nodes,
        edges: doc.edges,
        features,
    };
    g.validate()?;
    Ok(g)
}
