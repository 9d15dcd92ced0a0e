//! Shared fixtures and brute-force oracles for the integration suites.
//! Oracles here recompute results from raw inputs with plain loops and
//! never call into the code paths they check.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wctext_core::autodiff::{Tape, Var};
use wctext_core::corpus::{Corpus, Document, Split};
use wctext_core::graph::{Edge, EdgeType, HetGraph, NodeType};
use wctext_core::models::{GatModel, ParamStore};
use wctext_core::{Matrix, Result};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Overwrites every parameter with uniform noise so no activation sits at a kink.
pub fn randomize(params: &mut ParamStore<f64>, rng: &mut ChaCha8Rng, scale: f64) {
    for m in &mut params.values {
        for v in m.as_mut_slice() {
            *v = rng.gen_range(-scale..scale);
        }
    }
}

/// Random corpus of `n_docs` documents over a vocabulary of `n_words` words.
pub fn random_corpus(seed: u64, n_docs: usize, n_words: usize, max_len: usize) -> Corpus {
    let mut r = rng(seed);
    let docs = (0..n_docs)
        .map(|i| {
            let len = r.gen_range(1..=max_len);
            Document {
                doc_id: format!("doc{i}"),
                split: if i % 4 == 0 { Split::Test } else { Split::Train },
                label: format!("c{}", r.gen_range(0..3)),
                tokens: (0..len).map(|_| format!("w{}", r.gen_range(0..n_words))).collect(),
            }
        })
        .collect();
    Corpus::from_documents(docs).unwrap()
}

/// Random heterogeneous graph of at most `max_nodes` nodes (at least 7).
pub fn random_graph(seed: u64, max_nodes: usize) -> HetGraph {
    let mut r = rng(seed);
    let n_d = r.gen_range(3..=6.min(max_nodes - 4));
    let n_w = r.gen_range(2..=6.min(max_nodes - n_d - 2));
    let rest = max_nodes - n_d - n_w;
    let n_g = r.gen_range(0..=rest.min(4));
    let n_c = r.gen_range(0..=(rest - n_g).min(4));
    graph_with_counts(seed ^ 0x5eed, [n_d, n_w, n_g, n_c], 0.45)
}

/// Graph with fixed per-type node counts and each admissible edge present
/// with probability `density`.
pub fn graph_with_counts(seed: u64, counts: [usize; 4], density: f64) -> HetGraph {
    let mut r = rng(seed);
    let n_d = counts[0];
    let nodes: [Vec<String>; 4] = std::array::from_fn(|t| (0..counts[t]).map(|i| format!("{}{i}", NodeType::ALL[t])).collect());
    let mut edges: [Vec<Edge>; 6] = Default::default();
    for et in EdgeType::ALL {
        let (s, t) = et.endpoints();
        for i in 0..counts[s.index()] {
            for j in 0..counts[t.index()] {
                if et.is_homogeneous() && i >= j {
                    continue;
                }
                if r.gen_bool(density) {
                    let weight = if et.is_boolean() { 1.0 } else { r.gen_range(0.05..2.0) };
                    edges[et.index()].push(Edge { src: i, dst: j, weight });
                }
            }
        }
    }
    let splits: Vec<Split> = (0..n_d)
        .map(|i| match i % 3 {
            0 => Split::Train,
            1 => Split::Val,
            _ => Split::Test,
        })
        .collect();
    let labels = (0..n_d).map(|i| format!("c{}", i % 2)).collect();
    HetGraph::from_parts(nodes, labels, splits, edges).unwrap()
}

/// Maximum over every input entry of |analytic − numeric| / max(1, |numeric|),
/// with central differences of step `eps`.
pub fn fd_max_rel_error(
    inputs: &[Matrix<f64>],
    eps: f64,
    f: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
) -> f64 {
    let eval = |xs: &[Matrix<f64>]| -> f64 {
        let mut t = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|m| t.param(m.clone()).unwrap()).collect();
        let l = f(&mut t, &vars).unwrap();
        t.value(l)[(0, 0)]
    };
    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| t.param(m.clone()).unwrap()).collect();
    let l = f(&mut t, &vars).unwrap();
    let grads = t.backward(l).unwrap();
    let mut worst = 0.0f64;
    for (k, x) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).cloned().unwrap_or_else(|| Matrix::zeros(x.rows(), x.cols()));
        for idx in 0..x.len() {
            let mut xs = inputs.to_vec();
            xs[k].as_mut_slice()[idx] += eps;
            let up = eval(&xs);
            xs[k].as_mut_slice()[idx] -= 2.0 * eps;
            let down = eval(&xs);
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.as_slice()[idx];
            worst = worst.max((a - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    worst
}

/// Dense `D^{-1/2}(A+I)D^{-1/2}` assembled directly from the edge lists.
pub fn dense_normalized_adjacency(g: &HetGraph) -> Vec<Vec<f64>> {
    let n = g.total_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for et in EdgeType::ALL {
        let (s, t) = et.endpoints();
        for e in g.edges(et) {
            let i = g.offset(s) + e.src;
            let j = g.offset(t) + e.dst;
            a[i][j] = e.weight;
            a[j][i] = e.weight;
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum::<f64>()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (d[i].sqrt() * d[j].sqrt())).collect())
        .collect()
}

pub fn dense_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| (0..m).map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum()).collect())
        .collect()
}

pub fn to_rows(m: &Matrix<f64>) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Two-or-more-layer GCN on identity features, evaluated densely.
pub fn gcn_oracle(g: &HetGraph, weights: &[Matrix<f64>]) -> Vec<Vec<f64>> {
    let a = dense_normalized_adjacency(g);
    let mut h = dense_mul(&a, &to_rows(&weights[0]));
    for w in &weights[1..] {
        for v in h.iter_mut().flatten() {
            *v = v.max(0.0);
        }
        h = dense_mul(&a, &dense_mul(&h, &to_rows(w)));
    }
    h.truncate(g.count(NodeType::Doc));
    h
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Neighbors `(source index, weight)` of target node `i`, read off the raw edge lists.
fn raw_neighbors(g: &HetGraph, target: NodeType, source: NodeType, i: usize) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for et in EdgeType::ALL {
        let (s, t) = et.endpoints();
        for e in g.edges(et) {
            if s == target && t == source && e.src == i {
                out.push((e.dst, e.weight));
            }
            if t == target && s == source && e.dst == i {
                out.push((e.src, e.weight));
            }
        }
    }
    out
}

/// Per-edge loop evaluation of one attention layer. `inputs[t]` holds dense
/// per-type states, or `None` for 1-of-K features at the first layer.
pub fn gat_layer_oracle(
    model: &GatModel<f64>,
    params: &ParamStore<f64>,
    layer: usize,
    inputs: Option<&[Vec<Vec<f64>>; 4]>,
    slope: f64,
) -> [Vec<Vec<f64>>; 4] {
    let g = wctext_core::models::GraphModel::graph(model);
    let cfg = wctext_core::models::GraphModel::config(model);
    let project = |t: NodeType, i: usize, w: &Matrix<f64>| -> Vec<f64> {
        match inputs {
            None => w.row(i).to_vec(),
            Some(h) => (0..w.cols()).map(|c| (0..w.rows()).map(|r| h[t.index()][i][r] * w[(r, c)]).sum()).collect(),
        }
    };
    let mut concat: [Vec<Vec<f64>>; 4] = std::array::from_fn(|t| vec![Vec::new(); g.count(NodeType::ALL[t])]);
    for ph in model.phases() {
        let (t, s) = (ph.target, ph.source);
        for i in 0..g.count(t) {
            let nbrs = raw_neighbors(g, t, s, i);
            for h in 0..cfg.heads {
                let name = |p: &str| format!("gat{layer}.{t}<{s}.h{h}.{p}");
                let get = |p: &str| params.get(&name(p)).unwrap();
                let (w_v, w_t, w_e) = (get("w_v"), get("w_t"), get("w_e"));
                let (a_v, a_t, a_e) = (get("a_v").as_slice(), get("a_t").as_slice(), get("a_e").as_slice());
                let hv = project(t, i, w_v);
                let zs: Vec<f64> = nbrs
                    .iter()
                    .map(|&(j, e)| {
                        let ht = project(s, j, w_t);
                        let ef: Vec<f64> = w_e.as_slice().iter().map(|w| w * e).collect();
                        leaky(dot(a_v, &hv) + dot(a_t, &ht) + dot(a_e, &ef), slope)
                    })
                    .collect();
                let mx = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let den: f64 = zs.iter().map(|z| (z - mx).exp()).sum();
                let mut acc = vec![0.0; cfg.head_dim];
                for (k, &(j, _)) in nbrs.iter().enumerate() {
                    let alpha = (zs[k] - mx).exp() / den;
                    for (a, x) in acc.iter_mut().zip(project(s, j, w_t)) {
                        *a += alpha * x;
                    }
                }
                concat[t.index()][i].extend(acc.into_iter().map(elu));
            }
        }
    }
    std::array::from_fn(|ti| {
        let t = NodeType::ALL[ti];
        match params.get(&format!("gat{layer}.{t}.w_out")) {
            None => Vec::new(),
            Some(w) => concat[ti]
                .iter()
                .map(|row| (0..w.cols()).map(|c| row.iter().enumerate().map(|(r, x)| x * w[(r, c)]).sum()).collect())
                .collect(),
        }
    })
}

/// Stacked layer oracle plus the linear classifier on document states.
pub fn gat_forward_oracle(model: &GatModel<f64>, params: &ParamStore<f64>, layers: usize, slope: f64) -> Vec<Vec<f64>> {
    let mut states = gat_layer_oracle(model, params, 0, None, slope);
    for l in 1..layers {
        states = gat_layer_oracle(model, params, l, Some(&states), slope);
    }
    dense_mul(&states[NodeType::Doc.index()], &to_rows(params.get("cls").unwrap()))
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &Matrix<f64>) -> f64 {
    assert_eq!(a.len(), b.rows());
    let mut worst = 0.0f64;
    for (i, row) in a.iter().enumerate() {
        assert_eq!(row.len(), b.cols());
        for (j, v) in row.iter().enumerate() {
            worst = worst.max((v - b[(i, j)]).abs());
        }
    }
    worst
}

/// Brute-force PMI straight from the definition, over corpora given as id lists.
pub fn pmi_oracle(docs: &[Vec<usize>], window: usize, i: usize, j: usize) -> f64 {
    let mut windows: Vec<&[usize]> = Vec::new();
    for d in docs {
        if d.len() <= window {
            windows.push(d);
        } else {
            for s in 0..=d.len() - window {
                windows.push(&d[s..s + window]);
            }
        }
    }
    let n = windows.len() as f64;
    let wi = windows.iter().filter(|w| w.contains(&i)).count() as f64;
    let wj = windows.iter().filter(|w| w.contains(&j)).count() as f64;
    let wij = windows.iter().filter(|w| w.contains(&i) && w.contains(&j)).count() as f64;
    (wij * n / (wi * wj)).ln()
}

/// Brute-force tf-idf of term `t` in document `d`.
pub fn tfidf_oracle(docs: &[Vec<usize>], d: usize, t: usize) -> f64 {
    let tf = docs[d].iter().filter(|&&x| x == t).count() as f64;
    let df = docs.iter().filter(|doc| doc.contains(&t)).count() as f64;
    if df == 0.0 {
        return 0.0;
    }
    tf * (docs.len() as f64 / df).ln()
}

/// Dense cosine similarity of two tf-idf vectors built by the tf-idf oracle.
pub fn cosine_oracle(docs: &[Vec<usize>], n_words: usize, a: usize, b: usize) -> f64 {
    let va: Vec<f64> = (0..n_words).map(|t| tfidf_oracle(docs, a, t)).collect();
    let vb: Vec<f64> = (0..n_words).map(|t| tfidf_oracle(docs, b, t)).collect();
    let na = dot(&va, &va).sqrt();
    let nb = dot(&vb, &vb).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(&va, &vb) / (na * nb)
}

/// Linearly separable two-class corpus: each class draws from its own
/// word pool plus shared filler words.
pub fn toy_corpus() -> Corpus {
    let pos = ["great", "superb", "lovely", "brilliant", "charming", "delight"];
    let neg = ["awful", "boring", "dreadful", "tedious", "clumsy", "dull"];
    let filler = ["film", "story", "actor", "scene"];
    let mut docs = Vec::new();
    for i in 0..20 {
        let (pool, label) = if i % 2 == 0 { (&pos, "pos") } else { (&neg, "neg") };
        let tokens: Vec<String> = (0..6)
            .map(|k| {
                if k % 3 == 2 {
                    filler[(i + k) % filler.len()].to_string()
                } else {
                    pool[(i * 5 + k * 7) % pool.len()].to_string()
                }
            })
            .collect();
        docs.push(Document {
            doc_id: format!("toy{i}"),
            split: if i >= 14 { Split::Test } else { Split::Train },
            label: label.to_string(),
            tokens,
        });
    }
    Corpus::from_documents(docs).unwrap()
}
