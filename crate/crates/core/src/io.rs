//! Graph file formats.
//!
//! Edge-list text:
//!
//! ```text
//! # comment
//! undirected        (or `directed`; an optional state count may follow)
//! 0 1 2.5
//! 1 2               (weight defaults to 1)
//! ```
//!
//! JSON: `{"n": 3, "directed": false, "edges": [[0, 1, 2.5], [1, 2, 1.0]]}`.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::chain::WeightedGraph;
use crate::{Error, Result};

#[derive(Deserialize)]
struct JsonGraph {
    n: usize,
    directed: bool,
    edges: Vec<JsonEdge>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonEdge {
    Weighted(usize, usize, f64),
    Unit(usize, usize),
}

pub fn read_graph(path: &Path) -> Result<WeightedGraph> {
    let text = fs::read_to_string(path)?;
    parse_graph(&text)
}

/// Parses either format; a document whose first non-blank character is `{` is JSON.
pub fn parse_graph(text: &str) -> Result<WeightedGraph> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_edge_list(text)
    }
}

pub fn parse_json(text: &str) -> Result<WeightedGraph> {
    let g: JsonGraph = serde_json::from_str(text)?;
    let edges = g
        .edges
        .into_iter()
        .map(|e| match e {
            JsonEdge::Weighted(u, v, w) => (u, v, w),
            JsonEdge::Unit(u, v) => (u, v, 1.0),
        })
        .collect();
    WeightedGraph::new(g.n, edges, g.directed)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

pub fn parse_edge_list(text: &str) -> Result<WeightedGraph> {
    let mut directed = None;
    let mut declared_n = None;
    let mut edges = Vec::new();
    let mut max_index = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if directed.is_none() {
            directed = Some(match fields[0] {
                "directed" => true,
                "undirected" => false,
                other => {
                    return Err(parse_err(
                        line_no,
                        format!("expected header `directed` or `undirected`, found `{other}`"),
                    ))
                }
            });
            match fields.len() {
                1 => {}
                2 => {
                    let n = fields[1]
                        .parse::<usize>()
                        .map_err(|_| parse_err(line_no, format!("bad state count `{}`", fields[1])))?;
                    declared_n = Some(n);
                }
                _ => return Err(parse_err(line_no, "header takes at most one state count")),
            }
            continue;
        }
        if fields.len() < 2 || fields.len() > 3 {
            return Err(parse_err(line_no, format!("expected `u v [w]`, found `{line}`")));
        }
        let index = |s: &str| s.parse::<usize>().map_err(|_| parse_err(line_no, format!("bad state index `{s}`")));
        let u = index(fields[0])?;
        let v = index(fields[1])?;
        let w = match fields.get(2) {
            Some(s) => {
                let w = s.parse::<f64>().map_err(|_| parse_err(line_no, format!("bad weight `{s}`")))?;
                if !(w > 0.0 && w.is_finite()) {
                    return Err(parse_err(line_no, format!("weight {w} must be positive and finite")));
                }
                w
            }
            None => 1.0,
        };
        if let Some(n) = declared_n {
            if u >= n || v >= n {
                return Err(parse_err(line_no, format!("index out of range for {n} states")));
            }
        }
        max_index = Some(max_index.unwrap_or(0).max(u).max(v));
        edges.push((u, v, w));
    }

    let directed = directed.ok_or_else(|| parse_err(0, "empty graph file"))?;
    let n = declared_n.unwrap_or_else(|| max_index.map_or(0, |m| m + 1));
    WeightedGraph::new(n, edges, directed)
}

/// Edge-list text for `g`, readable by [`parse_edge_list`].
pub fn to_edge_list(g: &WeightedGraph) -> String {
    let mut out = format!("{} {}\n", if g.is_directed() { "directed" } else { "undirected" }, g.n());
    for &(u, v, w) in g.edges() {
        out.push_str(&format!("{u} {v} {w:?}\n"));
    }
    out
}
