//! Block structure, normalization and serialization properties of built graphs.

mod common;

use common::{dense_normalized_adjacency, random_corpus, random_graph, rng};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use wctext_core::graph_io;
use wctext_core::{
    assemble_adjacency, build_graph, compute_stats, load_graph, normalize_adjacency, normalized_adjacency, save_graph, HetGraph,
    NgramSpec, NodeType, SparseMatrix, StatsConfig,
};

fn type_of(g: &HetGraph, flat: usize) -> NodeType {
    *NodeType::ALL.iter().rev().find(|&&t| flat >= g.offset(t) && g.count(t) > 0).unwrap()
}

const ALLOWED: [(NodeType, NodeType); 10] = {
    use NodeType::*;
    [
        (Doc, Doc),
        (Doc, Word),
        (Doc, Gram),
        (Word, Doc),
        (Word, Word),
        (Word, Gram),
        (Word, CharGram),
        (Gram, Doc),
        (Gram, Word),
        (CharGram, Word),
    ]
};

fn built_graph(seed: u64) -> HetGraph {
    let mut r = rng(seed);
    let c = random_corpus(seed, r.gen_range(3..30), r.gen_range(5..25), 20);
    let cfg = StatsConfig {
        window: r.gen_range(2..8),
        word_ngrams: r.gen_bool(0.7).then(|| NgramSpec::word(2, r.gen_range(2..4), r.gen_range(1..3))),
        char_ngrams: r.gen_bool(0.7).then(|| NgramSpec::char(2, r.gen_range(2..5), r.gen_range(1..3))),
        sim_threshold: r.gen_bool(0.8).then(|| r.gen_range(0.0..0.9)),
    };
    build_graph(&c, &compute_stats(&c, &cfg).unwrap()).unwrap()
}

fn check_block_structure(g: &HetGraph) {
    let a = assemble_adjacency(g, false);
    assert_eq!(a.shape(), (g.total_nodes(), g.total_nodes()));
    assert!(a.is_symmetric());
    for (i, j, w) in a.triplets() {
        let pair = (type_of(g, i), type_of(g, j));
        assert!(ALLOWED.contains(&pair), "entry ({i},{j}) in forbidden block {pair:?}");
        assert!(w.is_finite() && w != 0.0);
    }
    // recomposition D^{1/2} Â D^{1/2} = A + I
    let with_loops = assemble_adjacency(g, true);
    let hat = normalized_adjacency(g).unwrap();
    let d: Vec<f64> = with_loops.row_sums().iter().map(|x| x.sqrt()).collect();
    let n = g.total_nodes();
    for i in 0..n {
        for j in 0..n {
            let back = d[i] * hat.get(i, j) * d[j];
            assert!((back - with_loops.get(i, j)).abs() < 1e-12, "({i},{j})");
        }
    }
}

#[test]
fn built_graphs_respect_block_structure() {
    for seed in 0..60 {
        let g = built_graph(seed);
        check_block_structure(&g);
        assert!(g.validate().is_ok());
    }
}

#[test]
fn random_graphs_respect_block_structure() {
    for seed in 0..60 {
        check_block_structure(&random_graph(seed, 20));
    }
}

#[test]
fn six_node_recomposition() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let mut trip = Vec::new();
        for i in 0..6 {
            trip.push((i, i, r.gen_range(0.5f64..2.0)));
            for j in (i + 1)..6 {
                if r.gen_bool(0.5) {
                    let w = r.gen_range(0.1f64..3.0);
                    trip.push((i, j, w));
                    trip.push((j, i, w));
                }
            }
        }
        let a = SparseMatrix::from_triplets(6, 6, trip).unwrap();
        let hat = normalize_adjacency(&a).unwrap();
        assert!(hat.is_symmetric());
        let d: Vec<f64> = a.row_sums().iter().map(|x| x.sqrt()).collect();
        for i in 0..6 {
            for j in 0..6 {
                assert!((d[i] * hat.get(i, j) * d[j] - a.get(i, j)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn normalized_adjacency_matches_dense_construction() {
    for seed in 0..30 {
        let g = random_graph(seed, 20);
        let want = dense_normalized_adjacency(&g);
        let got = normalized_adjacency(&g).unwrap().to_dense();
        for (i, row) in want.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((v - got[(i, j)]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn spectrum_lies_in_half_open_unit_interval() {
    for seed in 0..30 {
        let g = if seed % 2 == 0 { random_graph(seed, 20) } else { built_graph(seed) };
        let n = g.total_nodes();
        if n > 50 {
            continue;
        }
        let hat = normalized_adjacency(&g).unwrap().to_dense();
        let m = DMatrix::from_fn(n, n, |i, j| hat[(i, j)]);
        let eig = m.symmetric_eigen().eigenvalues;
        for &l in eig.iter() {
            assert!(l > -1.0 + 1e-12 && l <= 1.0 + 1e-9, "seed {seed}: eigenvalue {l}");
        }
        // the top eigenvalue is exactly one (eigenvector D^{1/2}·1)
        assert!((eig.max() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn serialization_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..40 {
        let g = if seed % 2 == 0 { random_graph(seed, 20) } else { built_graph(seed) };
        let path = dir.path().join(format!("g{seed}.wctg"));
        save_graph(&g, &path).unwrap();
        let back = load_graph(&path).unwrap();
        assert_eq!(g, back);
        for et in wctext_core::EdgeType::ALL {
            for (a, b) in g.edges(et).iter().zip(back.edges(et)) {
                assert_eq!(a.weight.to_bits(), b.weight.to_bits());
            }
        }
        assert_eq!(std::fs::read_to_string(&path).unwrap(), graph_io::to_string(&back));
    }
}

#[test]
fn rebuilding_gives_identical_bytes() {
    for seed in 0..10 {
        assert_eq!(graph_io::to_string(&built_graph(seed)), graph_io::to_string(&built_graph(seed)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_survive_text_encoding(w in prop::num::f64::POSITIVE | prop::num::f64::NORMAL) {
        prop_assume!(w.is_finite() && w > 0.0);
        let s = graph_io::format_weight(w);
        prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), w.to_bits());
    }

    #[test]
    fn any_random_graph_round_trips(seed in 0u64..10_000) {
        let g = random_graph(seed, 20);
        let text = graph_io::to_string(&g);
        prop_assert_eq!(graph_io::from_str(&text).unwrap(), g);
    }
}
