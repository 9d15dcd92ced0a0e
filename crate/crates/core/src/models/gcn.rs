use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::{apply_row_mask, class_count, init_from_specs, GraphModel, Init, Mode, ModelConfig, ParamSpec, ParamStore};
use crate::autodiff::{SparseOperand, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, HetGraph, NodeType};
use crate::scalar::Scalar;

/// Graph convolution over the block adjacency with 1-of-K node features:
/// `H¹ = ReLU(Â W₀)`, `Hˡ⁺¹ = ReLU(Â Hˡ Wₗ)`, logits are the document rows
/// of the last (linear) layer.
pub struct GcnModel<S> {
    config: ModelConfig,
    graph: HetGraph,
    adjacency: Arc<SparseOperand<S>>,
    doc_adjacency: Arc<SparseOperand<S>>,
    n_classes: usize,
    specs: Vec<ParamSpec>,
}

impl<S: Scalar> GcnModel<S> {
    pub fn new(graph: &HetGraph, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let graph = graph.restrict(config.use_grams, config.use_chargrams, config.use_doc_sim);
        let n_classes = class_count(&graph)?;
        let a_hat = normalized_adjacency(&graph)?.cast::<S>();
        let n = a_hat.rows();
        let n_docs = graph.count(NodeType::Doc);
        let doc_adjacency = SparseOperand::new(a_hat.slice_rows(0, n_docs));
        let adjacency = SparseOperand::new(a_hat);

        let mut specs = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let rows = if l == 0 { n } else { config.hidden_dim };
            let cols = if l + 1 == config.num_layers { n_classes } else { config.hidden_dim };
            specs.push(ParamSpec {
                name: format!("gcn{l}"),
                rows,
                cols,
                init: Init::Glorot,
            });
        }
        Ok(Self {
            config: config.clone(),
            graph,
            adjacency,
            doc_adjacency,
            n_classes,
            specs,
        })
    }

    /// The normalized adjacency `Â` the model propagates with.
    pub fn adjacency(&self) -> &crate::sparse::SparseMatrix<S> {
        self.adjacency.matrix()
    }
}

impl<S: Scalar> GraphModel<S> for GcnModel<S> {
    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn graph(&self) -> &HetGraph {
        &self.graph
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn init_params(&self, rng: &mut ChaCha8Rng) -> ParamStore<S> {
        init_from_specs(&self.specs, rng)
    }

    fn forward(&self, tape: &mut Tape<S>, params: &[Var], mode: &mut Mode<'_>) -> Result<Var> {
        if params.len() != self.specs.len() {
            return Err(Error::Operand {
                op: "gcn_forward",
                msg: format!("expected {} parameters, got {}", self.specs.len(), params.len()),
            });
        }
        let layers = params.len();
        let p = self.config.dropout;
        let n_docs = self.graph.count(NodeType::Doc);

        // X = I, so Â X W₀ is Â W₀ and input dropout drops rows of W₀
        let mask = mode.row_mask::<S>(self.adjacency.matrix().rows(), p);
        let w0 = apply_row_mask(tape, params[0], mask.as_deref())?;
        if layers == 1 {
            return tape.spmm(&self.doc_adjacency, w0);
        }
        let mut h = tape.spmm(&self.adjacency, w0)?;
        for (l, &w) in params.iter().enumerate().skip(1) {
            h = tape.relu(h)?;
            h = mode.dropout(tape, h, p)?;
            let hw = tape.matmul(h, w)?;
            if l + 1 == layers {
                return tape.spmm(&self.doc_adjacency, hw);
            }
            h = tape.spmm(&self.adjacency, hw)?;
        }
        tape.slice_rows(h, 0, n_docs)
    }
}
