use thiserror::Error;

use kg_tensor::{CheckpointError, TensorError};

use crate::embedding::EmbeddingError;
use crate::extract::ExtractError;
use crate::graph::GraphError;
use crate::ontology::OntologyError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("empty graph")]
    EmptyGraph,
    #[error("config: {0}")]
    Config(String),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {err}")]
    Io { path: String, err: std::io::Error },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            err,
        }
    }

    /// Whether this failure comes from numerics rather than from the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Self::NonFinite(_) | Self::Tensor(TensorError::NonFiniteGradient(_))
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
