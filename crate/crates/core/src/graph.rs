//! The word-character heterogeneous graph: typed node registries, the six
//! typed edge sets, and the block adjacency built from them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::sparse::{normalize_adjacency, SparseMatrix};
use crate::text_stats::StatTables;

/// Node types in block order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeType {
    Doc,
    Word,
    Gram,
    CharGram,
}

impl NodeType {
    pub const ALL: [NodeType; 4] = [NodeType::Doc, NodeType::Word, NodeType::Gram, NodeType::CharGram];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::Doc => "doc",
            NodeType::Word => "word",
            NodeType::Gram => "gram",
            NodeType::CharGram => "chargram",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NodeType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownNode(format!("unknown node type {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub node_type: NodeType,
    pub index: usize,
}

impl NodeRef {
    pub fn new(node_type: NodeType, index: usize) -> Self {
        Self { node_type, index }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.node_type, self.index)
    }
}

/// The six edge families. Each is stored once, oriented `source → target`
/// as named; `WW` and `DD` keep only `src < dst`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeType {
    DW,
    DG,
    WW,
    DD,
    GW,
    CW,
}

impl EdgeType {
    pub const ALL: [EdgeType; 6] = [EdgeType::DW, EdgeType::DG, EdgeType::WW, EdgeType::DD, EdgeType::GW, EdgeType::CW];

    pub fn tag(self) -> &'static str {
        match self {
            EdgeType::DW => "DW",
            EdgeType::DG => "DG",
            EdgeType::WW => "WW",
            EdgeType::DD => "DD",
            EdgeType::GW => "GW",
            EdgeType::CW => "CW",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        EdgeType::ALL.into_iter().find(|e| e.tag() == tag)
    }

    pub fn endpoints(self) -> (NodeType, NodeType) {
        use NodeType::*;
        match self {
            EdgeType::DW => (Doc, Word),
            EdgeType::DG => (Doc, Gram),
            EdgeType::WW => (Word, Word),
            EdgeType::DD => (Doc, Doc),
            EdgeType::GW => (Gram, Word),
            EdgeType::CW => (CharGram, Word),
        }
    }

    pub fn is_homogeneous(self) -> bool {
        let (a, b) = self.endpoints();
        a == b
    }

    /// Edge family joining two node types, in either orientation.
    pub fn between(a: NodeType, b: NodeType) -> Option<Self> {
        EdgeType::ALL.into_iter().find(|e| {
            let (s, t) = e.endpoints();
            (s, t) == (a, b) || (t, s) == (a, b)
        })
    }

    /// 0/1 incidence families.
    pub fn is_boolean(self) -> bool {
        matches!(self, EdgeType::GW | EdgeType::CW)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HetGraph {
    nodes: [Vec<String>; 4],
    labels: Vec<String>,
    splits: Vec<Split>,
    edges: [Vec<Edge>; 6],
}

impl HetGraph {
    /// Assembles a graph from raw parts, sorting edges and checking every
    /// structural invariant.
    pub fn from_parts(
        nodes: [Vec<String>; 4],
        labels: Vec<String>,
        splits: Vec<Split>,
        mut edges: [Vec<Edge>; 6],
    ) -> Result<Self> {
        for list in &mut edges {
            list.sort_by_key(|e| (e.src, e.dst));
        }
        let g = Self {
            nodes,
            labels,
            splits,
            edges,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let n_d = self.count(NodeType::Doc);
        if self.labels.len() != n_d || self.splits.len() != n_d {
            return Err(Error::GraphMismatch(format!(
                "{n_d} documents but {} labels and {} splits",
                self.labels.len(),
                self.splits.len()
            )));
        }
        for et in EdgeType::ALL {
            let (s, t) = et.endpoints();
            let (ns, nt) = (self.count(s), self.count(t));
            let list = self.edges(et);
            for (k, e) in list.iter().enumerate() {
                if e.src >= ns || e.dst >= nt {
                    return Err(Error::GraphMismatch(format!(
                        "{et} edge ({}, {}) outside registries of size {ns}/{nt}",
                        e.src, e.dst
                    )));
                }
                if !e.weight.is_finite() || e.weight <= 0.0 {
                    return Err(Error::GraphMismatch(format!(
                        "{et} edge ({}, {}) has weight {}",
                        e.src, e.dst, e.weight
                    )));
                }
                if et.is_boolean() && e.weight != 1.0 {
                    return Err(Error::GraphMismatch(format!("{et} edge weight must be exactly 1")));
                }
                if et.is_homogeneous() && e.src >= e.dst {
                    return Err(Error::GraphMismatch(format!(
                        "{et} edges must be stored with src < dst, found ({}, {})",
                        e.src, e.dst
                    )));
                }
                if k > 0 && (list[k - 1].src, list[k - 1].dst) >= (e.src, e.dst) {
                    return Err(Error::GraphMismatch(format!(
                        "duplicate {et} edge ({}, {})",
                        e.src, e.dst
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn nodes(&self, t: NodeType) -> &[String] {
        &self.nodes[t.index()]
    }

    pub fn count(&self, t: NodeType) -> usize {
        self.nodes[t.index()].len()
    }

    pub fn total_nodes(&self) -> usize {
        self.nodes.iter().map(Vec::len).sum()
    }

    /// Offset of a type's first node in the flat (doc, word, gram, chargram) ordering.
    pub fn offset(&self, t: NodeType) -> usize {
        self.nodes[..t.index()].iter().map(Vec::len).sum()
    }

    pub fn flat_id(&self, node: NodeRef) -> usize {
        self.offset(node.node_type) + node.index
    }

    pub fn edges(&self, et: EdgeType) -> &[Edge] {
        &self.edges[et.index()]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    /// Class names in first-occurrence order over documents.
    pub fn classes(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for l in &self.labels {
            if !out.contains(l) {
                out.push(l.clone());
            }
        }
        out
    }

    /// Per-document class index into [`HetGraph::classes`].
    pub fn class_ids(&self) -> Vec<usize> {
        let classes = self.classes();
        self.labels
            .iter()
            .map(|l| classes.iter().position(|c| c == l).expect("label in classes"))
            .collect()
    }

    pub fn docs_in(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn find(&self, t: NodeType, key: &str) -> Option<usize> {
        self.nodes[t.index()].iter().position(|k| k == key)
    }

    /// Edges seen from `target`'s side: `(target index, source index, weight)`
    /// for every edge joining a `source`-typed node to a `target`-typed node,
    /// sorted by target then source.
    pub fn phase_edges(&self, target: NodeType, source: NodeType) -> Vec<(usize, usize, f64)> {
        let Some(et) = EdgeType::between(target, source) else {
            return Vec::new();
        };
        let (s, _) = et.endpoints();
        let mut out: Vec<(usize, usize, f64)> = Vec::new();
        for e in self.edges(et) {
            if et.is_homogeneous() {
                out.push((e.src, e.dst, e.weight));
                out.push((e.dst, e.src, e.weight));
            } else if s == target {
                out.push((e.src, e.dst, e.weight));
            } else {
                out.push((e.dst, e.src, e.weight));
            }
        }
        out.sort_by_key(|e| (e.0, e.1));
        out
    }

    /// Typed neighbors of `node` with their edge family and weight.
    pub fn neighbors(&self, node: NodeRef) -> Result<Vec<(EdgeType, NodeRef, f64)>> {
        if node.index >= self.count(node.node_type) {
            return Err(Error::UnknownNode(node.to_string()));
        }
        let mut out = Vec::new();
        for et in EdgeType::ALL {
            let (s, t) = et.endpoints();
            for e in self.edges(et) {
                if s == node.node_type && e.src == node.index {
                    out.push((et, NodeRef::new(t, e.dst), e.weight));
                }
                if t == node.node_type && e.dst == node.index {
                    out.push((et, NodeRef::new(s, e.src), e.weight));
                }
            }
        }
        Ok(out)
    }

    /// Copy with gram, chargram or doc-similarity components removed.
    pub fn restrict(&self, use_grams: bool, use_chargrams: bool, use_doc_sim: bool) -> HetGraph {
        let mut g = self.clone();
        if !use_grams {
            g.nodes[NodeType::Gram.index()].clear();
            g.edges[EdgeType::DG.index()].clear();
            g.edges[EdgeType::GW.index()].clear();
        }
        if !use_chargrams {
            g.nodes[NodeType::CharGram.index()].clear();
            g.edges[EdgeType::CW.index()].clear();
        }
        if !use_doc_sim {
            g.edges[EdgeType::DD.index()].clear();
        }
        g
    }

    /// Copy with some documents moved to another split.
    pub fn with_splits(&self, splits: Vec<Split>) -> Result<HetGraph> {
        let mut g = self.clone();
        g.splits = splits;
        g.validate()?;
        Ok(g)
    }
}

/// Builds the heterogeneous graph from a corpus and its statistics.
pub fn build_graph(corpus: &Corpus, stats: &StatTables) -> Result<HetGraph> {
    let n_d = corpus.len();
    let n_w = corpus.vocabulary().len();
    let n_g = stats.grams.len();
    let n_c = stats.chargrams.len();

    let check = |name: &str, i: usize, ni: usize, j: usize, nj: usize| {
        if i >= ni || j >= nj {
            Err(Error::GraphMismatch(format!(
                "{name} entry ({i}, {j}) outside {ni}x{nj}"
            )))
        } else {
            Ok(())
        }
    };
    let weighted = |name: &str, entries: &[(usize, usize, f64)], ni, nj, upper: bool| -> Result<Vec<Edge>> {
        let mut out = Vec::new();
        for &(i, j, w) in entries {
            check(name, i, ni, j, nj)?;
            if w == 0.0 || (upper && i >= j) {
                continue;
            }
            out.push(Edge { src: i, dst: j, weight: w });
        }
        Ok(out)
    };
    let boolean = |name: &str, pairs: &[(usize, usize)], ni, nj| -> Result<Vec<Edge>> {
        let mut out = Vec::new();
        for &(i, j) in pairs {
            check(name, i, ni, j, nj)?;
            out.push(Edge { src: i, dst: j, weight: 1.0 });
        }
        out.dedup_by(|a, b| (a.src, a.dst) == (b.src, b.dst));
        Ok(out)
    };

    let edges = [
        weighted("tfidf_dw", stats.tfidf_dw.entries(), n_d, n_w, false)?,
        weighted("tfidf_dg", stats.tfidf_dg.entries(), n_d, n_g, false)?,
        weighted("pmi_ww", stats.pmi_ww.entries(), n_w, n_w, true)?,
        weighted("sim_dd", stats.sim_dd.entries(), n_d, n_d, true)?,
        boolean("contain_gw", &stats.contain_gw, n_g, n_w)?,
        boolean("contain_cw", &stats.contain_cw, n_c, n_w)?,
    ];
    let docs = corpus.documents();
    HetGraph::from_parts(
        [
            docs.iter().map(|d| d.doc_id.clone()).collect(),
            corpus.vocabulary().words().to_vec(),
            stats.grams.words().to_vec(),
            stats.chargrams.words().to_vec(),
        ],
        docs.iter().map(|d| d.label.clone()).collect(),
        docs.iter().map(|d| d.split).collect(),
        edges,
    )
}

/// The symmetric block adjacency over all nodes in flat order, optionally
/// with unit self-loops on every node.
pub fn assemble_adjacency(graph: &HetGraph, self_loops: bool) -> SparseMatrix<f64> {
    let n = graph.total_nodes();
    let mut t = Vec::new();
    for et in EdgeType::ALL {
        let (s, d) = et.endpoints();
        let (os, od) = (graph.offset(s), graph.offset(d));
        for e in graph.edges(et) {
            t.push((os + e.src, od + e.dst, e.weight));
            t.push((od + e.dst, os + e.src, e.weight));
        }
    }
    if self_loops {
        t.extend((0..n).map(|i| (i, i, 1.0)));
    }
    SparseMatrix::from_triplets(n, n, t).expect("graph invariants rule out duplicate coordinates")
}

/// `D^{-1/2} (A + I) D^{-1/2}` for the whole graph.
pub fn normalized_adjacency(graph: &HetGraph) -> Result<SparseMatrix<f64>> {
    normalize_adjacency(&assemble_adjacency(graph, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::text_stats::{compute_stats, NgramSpec, StatsConfig};

    fn tiny_corpus() -> Corpus {
        Corpus::from_documents(vec![
            Document {
                doc_id: "a".into(),
                split: Split::Train,
                label: "x".into(),
                tokens: vec!["cat".into(), "dog".into()],
            },
            Document {
                doc_id: "b".into(),
                split: Split::Test,
                label: "y".into(),
                tokens: vec!["dog".into(), "fish".into()],
            },
        ])
        .unwrap()
    }

    #[test]
    fn degenerate_configuration() {
        let c = tiny_corpus();
        let cfg = StatsConfig {
            window: 2,
            word_ngrams: None,
            char_ngrams: None,
            sim_threshold: Some(0.0),
        };
        let g = build_graph(&c, &compute_stats(&c, &cfg).unwrap()).unwrap();
        assert_eq!(g.count(NodeType::Doc), 2);
        assert_eq!(g.count(NodeType::Word), 3);
        assert_eq!(g.count(NodeType::Gram), 0);
        assert_eq!(g.count(NodeType::CharGram), 0);
        assert!(!g.edges(EdgeType::DW).is_empty());
        assert!(g.edges(EdgeType::GW).is_empty() && g.edges(EdgeType::CW).is_empty());
        assert!(g.edges(EdgeType::DG).is_empty());
    }

    #[test]
    fn chargram_nodes_for_single_word() {
        let c = Corpus::from_documents(vec![
            Document {
                doc_id: "a".into(),
                split: Split::Train,
                label: "x".into(),
                tokens: vec!["cat".into()],
            },
            Document {
                doc_id: "b".into(),
                split: Split::Test,
                label: "x".into(),
                tokens: vec!["cat".into()],
            },
        ])
        .unwrap();
        let cfg = StatsConfig {
            window: 2,
            word_ngrams: None,
            char_ngrams: Some(NgramSpec::char(3, 3, 1)),
            sim_threshold: None,
        };
        let g = build_graph(&c, &compute_stats(&c, &cfg).unwrap()).unwrap();
        assert_eq!(g.nodes(NodeType::CharGram), &["<ca", "cat", "at>"]);
        assert_eq!(g.edges(EdgeType::CW).len(), 3);
        for c in 0..3 {
            let n = g.neighbors(NodeRef::new(NodeType::CharGram, c)).unwrap();
            assert_eq!(n, vec![(EdgeType::CW, NodeRef::new(NodeType::Word, 0), 1.0)]);
        }
    }

    #[test]
    fn mismatched_stats_rejected() {
        let c = tiny_corpus();
        let mut stats = StatTables::default();
        stats.contain_cw = vec![(0, 0)];
        assert!(matches!(build_graph(&c, &stats), Err(Error::GraphMismatch(_))));
    }

    fn one_edge_graph() -> HetGraph {
        HetGraph::from_parts(
            [vec!["d0".into()], vec!["w0".into()], vec![], vec![]],
            vec!["x".into()],
            vec![Split::Train],
            [vec![Edge { src: 0, dst: 0, weight: 0.5 }], vec![], vec![], vec![], vec![], vec![]],
        )
        .unwrap()
    }

    #[test]
    fn single_dw_edge_mirrors() {
        let a = assemble_adjacency(&one_edge_graph(), false);
        assert_eq!(a.triplets().collect::<Vec<_>>(), vec![(0, 1, 0.5), (1, 0, 0.5)]);
    }

    #[test]
    fn empty_edges_with_loops_is_identity() {
        let g = HetGraph::from_parts(
            [vec!["d0".into(), "d1".into()], vec!["w".into()], vec!["g".into()], vec![]],
            vec!["x".into(), "y".into()],
            vec![Split::Train, Split::Test],
            Default::default(),
        )
        .unwrap();
        let a = assemble_adjacency(&g, true);
        assert_eq!(a, SparseMatrix::identity(4));
    }

    #[test]
    fn invariant_violations_rejected() {
        let bad_ww = HetGraph::from_parts(
            [vec!["d".into()], vec!["a".into(), "b".into()], vec![], vec![]],
            vec!["x".into()],
            vec![Split::Train],
            [vec![], vec![], vec![Edge { src: 1, dst: 0, weight: 1.0 }], vec![], vec![], vec![]],
        );
        assert!(bad_ww.is_err());
        let bad_bool = HetGraph::from_parts(
            [vec!["d".into()], vec!["a".into()], vec![], vec!["<a>".into()]],
            vec!["x".into()],
            vec![Split::Train],
            [vec![], vec![], vec![], vec![], vec![], vec![Edge { src: 0, dst: 0, weight: 0.5 }]],
        );
        assert!(bad_bool.is_err());
    }

    #[test]
    fn phase_edges_orientations() {
        let g = one_edge_graph();
        assert_eq!(g.phase_edges(NodeType::Doc, NodeType::Word), vec![(0, 0, 0.5)]);
        assert_eq!(g.phase_edges(NodeType::Word, NodeType::Doc), vec![(0, 0, 0.5)]);
        assert!(g.phase_edges(NodeType::Doc, NodeType::CharGram).is_empty());
    }

    #[test]
    fn unknown_node() {
        assert!(one_edge_graph().neighbors(NodeRef::new(NodeType::Word, 3)).is_err());
    }
}
