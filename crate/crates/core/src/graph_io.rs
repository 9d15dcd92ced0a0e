//! Versioned line-oriented graph file (`WCTG v1`).
//!
//! ```text
//! WCTG v1
//! #nodes
//! doc<TAB>0<TAB>d1
//! word<TAB>0<TAB>good
//! #labels
//! 0<TAB>train<TAB>pos
//! #edges
//! DW<TAB>0<TAB>0<TAB>0.5
//! #checksum<TAB><sha256 of every preceding byte, hex>
//! ```
//!
//! Node and label lines must list indices densely in order. Edge indices are
//! local to each endpoint type. Weights use the shortest decimal string that
//! parses back to the same binary64 value.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::corpus::Split;
use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeType, HetGraph, NodeType};

pub const MAGIC: &str = "WCTG";
pub const VERSION: &str = "v1";
const CHECKSUM_TAG: &str = "#checksum";

/// Shortest round-tripping decimal rendering of a binary64 value.
pub fn format_weight(w: f64) -> String {
    let plain = format!("{w}");
    let sci = format!("{w:e}");
    if sci.len() < plain.len() {
        sci
    } else {
        plain
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn to_string(graph: &HetGraph) -> String {
    let mut out = String::new();
    out.push_str(&format!("{MAGIC} {VERSION}\n#nodes\n"));
    for t in NodeType::ALL {
        for (i, key) in graph.nodes(t).iter().enumerate() {
            let _ = writeln!(out, "{t}\t{i}\t{key}");
        }
    }
    out.push_str("#labels\n");
    for (i, (label, split)) in graph.labels().iter().zip(graph.splits()).enumerate() {
        let _ = writeln!(out, "{i}\t{split}\t{label}");
    }
    out.push_str("#edges\n");
    for et in EdgeType::ALL {
        for e in graph.edges(et) {
            let _ = writeln!(out, "{et}\t{}\t{}\t{}", e.src, e.dst, format_weight(e.weight));
        }
    }
    let sum = sha256_hex(out.as_bytes());
    let _ = writeln!(out, "{CHECKSUM_TAG}\t{sum}");
    out
}

/// Appends the checksum trailer to a body that lacks one.
pub fn seal(body: &str) -> String {
    format!("{body}{CHECKSUM_TAG}\t{}\n", sha256_hex(body.as_bytes()))
}

#[derive(PartialEq)]
enum Section {
    Header,
    Nodes,
    Labels,
    Edges,
}

pub fn from_str(text: &str) -> Result<HetGraph> {
    // checksum trailer first: its absence means the file was cut short
    let body_end = match text.rfind(&format!("\n{CHECKSUM_TAG}")) {
        Some(p) => p + 1,
        None => return Err(Error::Truncated("missing checksum trailer".into())),
    };
    let trailer = text[body_end..].trim_end_matches(['\n', '\r']);
    let found = trailer
        .strip_prefix(CHECKSUM_TAG)
        .map(|s| s.trim())
        .ok_or_else(|| Error::Truncated("malformed checksum trailer".into()))?;
    if found.lines().count() > 1 {
        return Err(Error::GraphFormat {
            line: text[..body_end].lines().count() + 2,
            msg: "content after checksum trailer".into(),
        });
    }
    let body = &text[..body_end];
    let expected = sha256_hex(body.as_bytes());
    if expected != found {
        return Err(Error::ChecksumMismatch {
            expected,
            found: found.to_owned(),
        });
    }

    let mut nodes: [Vec<String>; 4] = Default::default();
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    let mut edges: [Vec<Edge>; 6] = Default::default();
    let mut section = Section::Header;

    for (i, line) in body.lines().enumerate() {
        let line_no = i + 1;
        let fmt_err = |msg: String| Error::GraphFormat { line: line_no, msg };
        if section == Section::Header {
            let mut parts = line.split(' ');
            if parts.next() != Some(MAGIC) {
                return Err(fmt_err(format!("expected {MAGIC} header")));
            }
            let version = parts.next().unwrap_or_default();
            if version != VERSION {
                return Err(Error::VersionMismatch(version.to_owned()));
            }
            section = Section::Nodes;
            continue;
        }
        match line {
            "#nodes" => continue,
            "#labels" => {
                section = Section::Labels;
                continue;
            }
            "#edges" => {
                section = Section::Edges;
                continue;
            }
            _ => {}
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let index = |s: &str| s.parse::<usize>().map_err(|_| fmt_err(format!("bad index {s:?}")));
        match section {
            Section::Nodes => {
                if fields.len() != 3 {
                    return Err(fmt_err(format!("node line needs 3 fields, found {}", fields.len())));
                }
                let t: NodeType = fields[0].parse().map_err(|_| fmt_err(format!("unknown node type {:?}", fields[0])))?;
                let idx = index(fields[1])?;
                let list = &mut nodes[t.index()];
                if idx != list.len() {
                    return Err(fmt_err(format!("{t} index {idx} out of order (expected {})", list.len())));
                }
                list.push(fields[2].to_owned());
            }
            Section::Labels => {
                if fields.len() != 3 {
                    return Err(fmt_err(format!("label line needs 3 fields, found {}", fields.len())));
                }
                let idx = index(fields[0])?;
                if idx != labels.len() {
                    return Err(fmt_err(format!("label index {idx} out of order")));
                }
                let split: Split = fields[1].parse().map_err(fmt_err)?;
                splits.push(split);
                labels.push(fields[2].to_owned());
            }
            Section::Edges => {
                let et = EdgeType::from_tag(fields[0]).ok_or_else(|| Error::UnknownEdgeType {
                    tag: fields[0].to_owned(),
                    line: line_no,
                })?;
                if fields.len() != 4 {
                    return Err(fmt_err(format!("edge line needs 4 fields, found {}", fields.len())));
                }
                let weight: f64 = fields[3]
                    .parse()
                    .map_err(|_| fmt_err(format!("bad weight {:?}", fields[3])))?;
                edges[et.index()].push(Edge {
                    src: index(fields[1])?,
                    dst: index(fields[2])?,
                    weight,
                });
            }
            Section::Header => unreachable!(),
        }
    }
    if section == Section::Header {
        return Err(Error::Truncated("empty graph file".into()));
    }
    HetGraph::from_parts(nodes, labels, splits, edges)
}

pub fn save_graph(graph: &HetGraph, path: &Path) -> Result<()> {
    fs::write(path, to_string(graph)).map_err(|e| Error::io(path, e))
}

pub fn load_graph(path: &Path) -> Result<HetGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_str(&text)
}
