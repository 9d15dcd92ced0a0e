use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::{apply_row_mask, class_count, init_from_specs, GraphModel, Init, Mode, ModelConfig, ParamSpec, ParamStore};
use crate::autodiff::{Segments, Tape, Var};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::{HetGraph, NodeType};
use crate::scalar::Scalar;

/// Neighbor types each node type attends to, one phase per entry.
pub const PHASES: [(NodeType, &[NodeType]); 4] = [
    (NodeType::Doc, &[NodeType::Doc, NodeType::Word, NodeType::Gram]),
    (NodeType::Word, &[NodeType::Doc, NodeType::Word, NodeType::Gram, NodeType::CharGram]),
    (NodeType::Gram, &[NodeType::Doc, NodeType::Word]),
    (NodeType::CharGram, &[NodeType::Word]),
];

/// Edges of one (target type ← source type) aggregation, sorted by target.
#[derive(Debug, Clone)]
pub struct Phase<S> {
    pub target: NodeType,
    pub source: NodeType,
    pub dst: Arc<[usize]>,
    pub src: Arc<[usize]>,
    /// Raw scalar edge weight per edge (`n_edges × 1`).
    pub weights: Matrix<S>,
    pub segments: Arc<Segments>,
}

impl<S> Phase<S> {
    pub fn n_edges(&self) -> usize {
        self.dst.len()
    }
}

/// Parameter indices of one attention head in one phase of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadParams {
    pub w_v: usize,
    pub w_t: usize,
    /// `1 × edge_dim`: maps the scalar edge weight to an edge feature row.
    pub w_e: usize,
    pub a_v: usize,
    pub a_t: usize,
    pub a_e: usize,
}

#[derive(Debug, Clone)]
struct LayerLayout {
    /// `heads[p][h]` for phase `p`.
    heads: Vec<Vec<HeadParams>>,
    w_out: [Option<usize>; 4],
}

/// Per-type hidden states; `None` for node types absent from the graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NodeStates {
    pub states: [Option<Var>; 4],
}

impl NodeStates {
    pub fn get(&self, t: NodeType) -> Option<Var> {
        self.states[t.index()]
    }
}

pub enum LayerInput {
    /// 1-of-K features: every node's input is its own indicator vector.
    OneHot,
    States(NodeStates),
}

/// Heterogeneous multi-head graph attention. Each node type aggregates one
/// phase per neighbor type; a phase's heads are concatenated, the phases of
/// a type are concatenated and mixed by a per-type linear map.
pub struct GatModel<S> {
    config: ModelConfig,
    graph: HetGraph,
    n_classes: usize,
    phases: Vec<Phase<S>>,
    layers: Vec<LayerLayout>,
    classifier: usize,
    specs: Vec<ParamSpec>,
}

impl<S: Scalar> GatModel<S> {
    pub fn new(graph: &HetGraph, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let graph = graph.restrict(config.use_grams, config.use_chargrams, config.use_doc_sim);
        let n_classes = class_count(&graph)?;
        let present = |t: NodeType| graph.count(t) > 0;

        let mut phases = Vec::new();
        for (target, sources) in PHASES {
            if !present(target) {
                continue;
            }
            for &source in sources {
                if !present(source) || (target == NodeType::Doc && source == NodeType::Doc && !config.use_doc_sim) {
                    continue;
                }
                let edges = graph.phase_edges(target, source);
                let dst: Vec<usize> = edges.iter().map(|e| e.0).collect();
                let segments = Arc::new(Segments::from_sorted_ids(&dst, graph.count(target))?);
                phases.push(Phase {
                    target,
                    source,
                    src: edges.iter().map(|e| e.1).collect(),
                    weights: Matrix::from_vec(edges.len(), 1, edges.iter().map(|e| S::lit(e.2)).collect())?,
                    dst: dst.into(),
                    segments,
                });
            }
        }

        let (k, d, de) = (config.hidden_dim, config.head_dim, config.edge_dim);
        let mut specs = Vec::new();
        let push = |specs: &mut Vec<ParamSpec>, name: String, rows, cols, init| {
            specs.push(ParamSpec { name, rows, cols, init });
            specs.len() - 1
        };
        let mut layers = Vec::with_capacity(config.num_layers);
        for l in 0..config.num_layers {
            let mut heads = Vec::with_capacity(phases.len());
            for ph in &phases {
                let in_v = if l == 0 { graph.count(ph.target) } else { k };
                let in_t = if l == 0 { graph.count(ph.source) } else { k };
                let prefix = format!("gat{l}.{}<{}", ph.target, ph.source);
                let hs = (0..config.heads)
                    .map(|h| HeadParams {
                        w_v: push(&mut specs, format!("{prefix}.h{h}.w_v"), in_v, d, Init::Glorot),
                        w_t: push(&mut specs, format!("{prefix}.h{h}.w_t"), in_t, d, Init::Glorot),
                        w_e: push(&mut specs, format!("{prefix}.h{h}.w_e"), 1, de, Init::Glorot),
                        a_v: push(&mut specs, format!("{prefix}.h{h}.a_v"), d, 1, Init::Zeros),
                        a_t: push(&mut specs, format!("{prefix}.h{h}.a_t"), d, 1, Init::Zeros),
                        a_e: push(&mut specs, format!("{prefix}.h{h}.a_e"), de, 1, Init::Zeros),
                    })
                    .collect();
                heads.push(hs);
            }
            let mut w_out = [None; 4];
            for t in NodeType::ALL {
                let n_ph = phases.iter().filter(|p| p.target == t).count();
                if present(t) && n_ph > 0 {
                    w_out[t.index()] = Some(push(
                        &mut specs,
                        format!("gat{l}.{t}.w_out"),
                        n_ph * config.heads * d,
                        k,
                        Init::Glorot,
                    ));
                }
            }
            layers.push(LayerLayout { heads, w_out });
        }
        let classifier = push(&mut specs, "cls".into(), k, n_classes, Init::Glorot);
        Ok(Self {
            config: config.clone(),
            graph,
            n_classes,
            phases,
            layers,
            classifier,
            specs,
        })
    }

    pub fn phases(&self) -> &[Phase<S>] {
        &self.phases
    }

    pub fn head_params(&self, layer: usize, phase: usize, head: usize) -> HeadParams {
        self.layers[layer].heads[phase][head]
    }

    pub fn w_out_param(&self, layer: usize, t: NodeType) -> Option<usize> {
        self.layers[layer].w_out[t.index()]
    }

    pub fn classifier_param(&self) -> usize {
        self.classifier
    }

    pub fn param_names(&self) -> Vec<&str> {
        self.specs.iter().map(|s| s.name.as_str()).collect()
    }

    /// One attention layer over every node type.
    pub fn gat_layer(
        &self,
        tape: &mut Tape<S>,
        layer: usize,
        input: &LayerInput,
        params: &[Var],
        mode: &mut Mode<'_>,
    ) -> Result<NodeStates> {
        let lay = &self.layers[layer];
        let p = self.config.dropout;
        let slope = S::lit(self.config.leaky_slope);

        // input dropout, shared by every phase reading a node type
        let mut masks: [Option<Vec<S>>; 4] = Default::default();
        let mut dropped = NodeStates::default();
        for t in NodeType::ALL {
            match input {
                LayerInput::OneHot => masks[t.index()] = mode.row_mask(self.graph.count(t), p),
                LayerInput::States(s) => {
                    if let Some(h) = s.get(t) {
                        dropped.states[t.index()] = Some(mode.dropout(tape, h, p)?);
                    }
                }
            }
        }
        let project = |tape: &mut Tape<S>, t: NodeType, w: Var| -> Result<Var> {
            match input {
                LayerInput::OneHot => apply_row_mask(tape, w, masks[t.index()].as_deref()),
                LayerInput::States(_) => {
                    let h = dropped.get(t).ok_or_else(|| Error::Operand {
                        op: "gat_layer",
                        msg: format!("missing {t} states"),
                    })?;
                    tape.matmul(h, w)
                }
            }
        };

        let mut per_type: [Vec<Var>; 4] = Default::default();
        for (pi, ph) in self.phases.iter().enumerate() {
            let n_t = self.graph.count(ph.target);
            let mut head_outs = Vec::with_capacity(self.config.heads);
            for hp in &lay.heads[pi] {
                if ph.n_edges() == 0 {
                    head_outs.push(tape.constant(Matrix::zeros(n_t, self.config.head_dim))?);
                    continue;
                }
                let pv = project(tape, ph.target, params[hp.w_v])?;
                let pt = project(tape, ph.source, params[hp.w_t])?;
                let sv = tape.matmul(pv, params[hp.a_v])?;
                let st = tape.matmul(pt, params[hp.a_t])?;
                let ew = tape.constant(ph.weights.clone())?;
                let ef = tape.matmul(ew, params[hp.w_e])?;
                let se = tape.matmul(ef, params[hp.a_e])?;
                let zv = tape.gather_rows(sv, Arc::clone(&ph.dst))?;
                let zt = tape.gather_rows(st, Arc::clone(&ph.src))?;
                let z = tape.add(zv, zt)?;
                let z = tape.add(z, se)?;
                let z = tape.leaky_relu(z, slope)?;
                let mut alpha = tape.segment_softmax(z, &ph.segments)?;
                if self.config.attention_dropout {
                    alpha = mode.dropout(tape, alpha, p)?;
                }
                let msg = tape.gather_rows(pt, Arc::clone(&ph.src))?;
                let agg = tape.segment_weighted_sum(msg, alpha, &ph.segments)?;
                head_outs.push(tape.elu(agg)?);
            }
            let cat = tape.concat_cols(&head_outs)?;
            per_type[ph.target.index()].push(cat);
        }

        let mut out = NodeStates::default();
        for t in NodeType::ALL {
            let Some(w_out) = lay.w_out[t.index()] else { continue };
            let cat = tape.concat_cols(&per_type[t.index()])?;
            out.states[t.index()] = Some(tape.matmul(cat, params[w_out])?);
        }
        Ok(out)
    }
}

impl<S: Scalar> GraphModel<S> for GatModel<S> {
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
                op: "gat_forward",
                msg: format!("expected {} parameters, got {}", self.specs.len(), params.len()),
            });
        }
        let mut input = LayerInput::OneHot;
        for l in 0..self.layers.len() {
            input = LayerInput::States(self.gat_layer(tape, l, &input, params, mode)?);
        }
        let LayerInput::States(states) = input else { unreachable!("at least one layer") };
        let docs = states.get(NodeType::Doc).ok_or_else(|| Error::Operand {
            op: "gat_forward",
            msg: "graph has no document nodes".into(),
        })?;
        let docs = mode.dropout(tape, docs, self.config.dropout)?;
        tape.matmul(docs, params[self.classifier])
    }
}
