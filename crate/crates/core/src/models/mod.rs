//! Graph neural network classifiers over the heterogeneous graph.

mod gat;
mod gcn;

pub use gat::{GatModel, HeadParams, LayerInput, NodeStates, Phase, PHASES};
pub use gcn::GcnModel;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::HetGraph;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    WctextGcn,
    WctextGat,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::WctextGcn => "wctext_gcn",
            ModelKind::WctextGat => "wctext_gat",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wctext_gcn" | "gcn" => Ok(ModelKind::WctextGcn),
            "wctext_gat" | "gat" => Ok(ModelKind::WctextGat),
            other => Err(Error::Config(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: ModelKind,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub edge_dim: usize,
    pub dropout: f64,
    /// Also drop attention coefficients (GAT only).
    pub attention_dropout: bool,
    pub leaky_slope: f64,
    pub use_grams: bool,
    pub use_chargrams: bool,
    pub use_doc_sim: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::WctextGcn,
            hidden_dim: 200,
            num_layers: 2,
            heads: 8,
            head_dim: 16,
            edge_dim: 32,
            dropout: 0.5,
            attention_dropout: true,
            leaky_slope: 0.2,
            use_grams: true,
            use_chargrams: true,
            use_doc_sim: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be positive");
        }
        if self.num_layers == 0 {
            return bad("num_layers must be at least 1");
        }
        if self.model == ModelKind::WctextGat && (self.heads == 0 || self.head_dim == 0 || self.edge_dim == 0) {
            return bad("GAT needs heads, head_dim and edge_dim >= 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0,1)");
        }
        if !self.leaky_slope.is_finite() {
            return bad("leaky_slope must be finite");
        }
        Ok(())
    }

    /// The ablated baseline: no grams, chargrams or document similarity.
    pub fn ablated(&self) -> Self {
        Self {
            use_grams: false,
            use_chargrams: false,
            use_doc_sim: false,
            ..self.clone()
        }
    }
}

/// Named, ordered parameter matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStore<S> {
    pub names: Vec<String>,
    pub values: Vec<Matrix<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn get(&self, name: &str) -> Option<&Matrix<S>> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix<S>> {
        self.names.iter().position(|n| n == name).map(|i| &mut self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    /// Records every parameter on the tape as a gradient-bearing leaf.
    pub fn register(&self, tape: &mut Tape<S>) -> Result<Vec<Var>> {
        self.values.iter().map(|m| tape.param(m.clone())).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Init {
    Glorot,
    Zeros,
}

#[derive(Debug, Clone)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

pub(crate) fn init_from_specs<S: Scalar>(specs: &[ParamSpec], rng: &mut ChaCha8Rng) -> ParamStore<S> {
    ParamStore {
        names: specs.iter().map(|s| s.name.clone()).collect(),
        values: specs
            .iter()
            .map(|s| match s.init {
                Init::Glorot => Matrix::glorot(s.rows, s.cols, rng),
                Init::Zeros => Matrix::zeros(s.rows, s.cols),
            })
            .collect(),
    }
}

/// Forward-pass mode. Training draws dropout seeds from the run's stream.
pub enum Mode<'a> {
    Train(&'a mut ChaCha8Rng),
    Eval,
}

impl Mode<'_> {
    pub(crate) fn dropout<S: Scalar>(&mut self, tape: &mut Tape<S>, x: Var, p: f64) -> Result<Var> {
        match self {
            Mode::Train(rng) if p > 0.0 => {
                let seed = rng.gen();
                tape.dropout(x, p, seed)
            }
            _ => Ok(x),
        }
    }

    /// Inverted-dropout keep mask over `n` one-hot input rows, or `None` in eval mode.
    pub(crate) fn row_mask<S: Scalar>(&mut self, n: usize, p: f64) -> Option<Vec<S>> {
        match self {
            Mode::Train(rng) if p > 0.0 => {
                let keep = S::lit(1.0 / (1.0 - p));
                Some((0..n).map(|_| if rng.gen::<f64>() < p { S::zero() } else { keep }).collect())
            }
            _ => None,
        }
    }
}

/// Scales row `i` of `x` by `mask[i]`, which for one-hot inputs is exactly
/// dropout applied to the identity feature matrix.
pub(crate) fn apply_row_mask<S: Scalar>(tape: &mut Tape<S>, x: Var, mask: Option<&[S]>) -> Result<Var> {
    match mask {
        None => Ok(x),
        Some(m) => {
            let cols = tape.shape(x).1;
            let c = tape.constant(Matrix::from_fn(m.len(), cols, |i, _| m[i]))?;
            tape.mul(x, c)
        }
    }
}

/// A document classifier over a fixed graph.
pub trait GraphModel<S: Scalar>: Send + Sync {
    fn config(&self) -> &ModelConfig;

    /// Graph the model was built on, after ablation.
    fn graph(&self) -> &HetGraph;

    fn n_classes(&self) -> usize;

    fn init_params(&self, rng: &mut ChaCha8Rng) -> ParamStore<S>;

    /// Logits over document nodes (`n_docs × n_classes`).
    fn forward(&self, tape: &mut Tape<S>, params: &[Var], mode: &mut Mode<'_>) -> Result<Var>;
}

/// Builds the configured model for `graph`.
pub fn build_model<S: Scalar>(graph: &HetGraph, config: &ModelConfig) -> Result<Box<dyn GraphModel<S>>> {
    Ok(match config.model {
        ModelKind::WctextGcn => Box::new(GcnModel::new(graph, config)?),
        ModelKind::WctextGat => Box::new(GatModel::new(graph, config)?),
    })
}

pub(crate) fn class_count(graph: &HetGraph) -> Result<usize> {
    let c = graph.classes().len();
    if c == 0 {
        return Err(Error::Config("graph has no labelled documents, class count unknown".into()));
    }
    Ok(c)
}

/// Mean cross-entropy over the selected document rows.
pub fn loss<S: Scalar>(tape: &mut Tape<S>, logits: Var, labels: &[usize], rows: &[usize]) -> Result<Var> {
    tape.masked_cross_entropy(logits, labels.into(), rows.into())
}
