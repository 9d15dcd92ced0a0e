//! Word-character heterogeneous text graphs and graph neural network
//! document classifiers (GCN and multi-phase GAT) on a small reverse-mode
//! differentiable tensor core.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common instantiations.

pub mod autodiff;
pub mod corpus;
pub mod dense;
pub mod error;
pub mod graph;
pub mod graph_io;
pub mod models;
pub mod scalar;
pub mod sparse;
pub mod text_stats;
pub mod trainer;

pub use autodiff::{Gradients, Segments, SparseOperand, Tape, Var};
pub use corpus::{assign_validation, load_corpus, prune_vocabulary, tokenize, Corpus, CorpusFormat, Document, PreprocessConfig, Split};
pub use dense::Matrix;
pub use error::{Error, Result};
pub use graph::{assemble_adjacency, build_graph, normalized_adjacency, EdgeType, HetGraph, NodeRef, NodeType};
pub use graph_io::{load_graph, save_graph};
pub use models::{GatModel, GcnModel, GraphModel, ModelConfig, ModelKind, ParamStore};
pub use scalar::Scalar;
pub use sparse::{normalize_adjacency, SparseMatrix};
pub use text_stats::{compute_stats, NgramKind, NgramSpec, StatTables, StatsConfig};
pub use trainer::{run_many, sweep_char_ngrams, train, Adam, RunSummary, SweepGrid, TrainConfig, TrainReport};

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type SparseMatrix64 = SparseMatrix<f64>;
pub type Tape64 = Tape<f64>;
pub type Tape32 = Tape<f32>;
pub type GcnModel64 = GcnModel<f64>;
pub type GatModel64 = GatModel<f64>;
pub type ParamStore64 = ParamStore<f64>;
