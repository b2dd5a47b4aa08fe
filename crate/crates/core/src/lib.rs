//! Ontology-grounded knowledge graphs for free-text radiology reports.
//!
//! The pipeline is: [`extract`] concept mentions with a dictionary matcher
//! over an [`ontology`], [`graph::build_graph`] a report graph with concept,
//! sentence and global nodes, encode it with stacked graph attention
//! ([`gat`]), then either classify the 14 finding labels ([`classifier`],
//! [`trainer`]) or distil the report embedding into an image branch
//! ([`vkd`]).

pub mod classifier;
pub mod config;
pub mod corpus;
pub mod embedding;
mod error;
pub mod export;
pub mod extract;
pub mod gat;
pub mod generator;
pub mod graph;
pub mod labels;
pub mod metrics;
pub mod ontology;
pub mod params;
pub mod pipeline;
pub mod sample;
pub mod text;
pub mod trainer;
pub mod vkd;

pub use error::{Error, Result};
pub use kg_tensor as tensor;
