//! Small graph families used by tests, examples and benchmarks.

use rand::Rng;

use crate::chain::{VertexSet, WeightedGraph};

fn build(n: usize, edges: Vec<(usize, usize, f64)>, directed: bool) -> WeightedGraph {
    WeightedGraph::new(n, edges, directed).expect("generator produced an invalid graph")
}

/// Undirected cycle `C_n`, unit weights.
pub fn cycle(n: usize) -> WeightedGraph {
    assert!(n >= 3, "cycle needs at least three states");
    build(n, (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect(), false)
}

/// Directed cycle `0 -> 1 -> ... -> n-1 -> 0`.
pub fn directed_cycle(n: usize) -> WeightedGraph {
    assert!(n >= 2);
    build(n, (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect(), true)
}

/// Undirected complete graph `K_n` without self-loops.
pub fn complete(n: usize) -> WeightedGraph {
    assert!(n >= 2);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            edges.push((u, v, 1.0));
        }
    }
    build(n, edges, false)
}

/// Undirected path `0 - 1 - ... - n-1`.
pub fn path(n: usize) -> WeightedGraph {
    assert!(n >= 2);
    build(n, (0..n - 1).map(|i| (i, i + 1, 1.0)).collect(), false)
}

/// Two triangles `{0,1,2}` and `{3,4,5}` joined by the edge `2 - 3` of weight `bridge`.
pub fn two_triangles(bridge: f64) -> WeightedGraph {
    let edges = vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0), (2, 3, bridge)];
    build(6, edges, false)
}

/// `k` cliques of `size` states each, arranged in a ring: state 0 of blob
/// `i` is joined to state 1 of blob `i + 1` with weight `bridge`.
pub fn blobs(k: usize, size: usize, bridge: f64) -> WeightedGraph {
    assert!(k >= 1 && size >= 2);
    let n = k * size;
    let mut edges = Vec::new();
    for b in 0..k {
        let base = b * size;
        for u in 0..size {
            for v in u + 1..size {
                edges.push((base + u, base + v, 1.0));
            }
        }
    }
    let links = match k {
        1 => 0,
        2 => 1,
        _ => k,
    };
    for b in 0..links {
        let next = (b + 1) % k;
        edges.push((b * size, next * size + 1, bridge));
    }
    build(n, edges, false)
}

/// Random strongly connected graph: a Hamiltonian cycle (in random order)
/// plus each remaining ordered pair with probability `density`, weights
/// uniform in `[0.1, 1]`. Undirected graphs use unordered pairs.
pub fn random_graph<R: Rng>(n: usize, density: f64, directed: bool, self_loops: bool, rng: &mut R) -> WeightedGraph {
    assert!(n >= 2);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut edges: Vec<(usize, usize, f64)> =
        (0..n).map(|i| (order[i], order[(i + 1) % n], rng.random_range(0.1..1.0))).collect();
    for u in 0..n {
        let start = if directed { 0 } else { u + 1 };
        for v in start..n {
            if u == v {
                continue;
            }
            if rng.random::<f64>() < density {
                edges.push((u, v, rng.random_range(0.1..1.0)));
            }
        }
        if self_loops && rng.random::<f64>() < 0.5 {
            edges.push((u, u, rng.random_range(0.1..1.0)));
        }
    }
    build(n, edges, directed)
}

/// A planted sparse cut: a clique on the first `blob` states inside a
/// random undirected graph on the rest, joined by `links` edges of weight
/// `bridge`. Returns the graph and the planted set.
pub fn planted<R: Rng>(n: usize, blob: usize, bridge: f64, links: usize, rng: &mut R) -> (WeightedGraph, VertexSet) {
    assert!(blob >= 2 && n >= blob + 2 && links >= 1);
    let rest = n - blob;
    let mut edges = Vec::new();
    for u in 0..blob {
        for v in u + 1..blob {
            edges.push((u, v, 1.0));
        }
    }
    for i in 0..rest {
        edges.push((blob + i, blob + (i + 1) % rest, 1.0));
    }
    for u in 0..rest {
        for v in u + 1..rest {
            if rng.random::<f64>() < 0.5 {
                edges.push((blob + u, blob + v, rng.random_range(0.5..1.0)));
            }
        }
    }
    for _ in 0..links {
        let u = rng.random_range(0..blob);
        let v = blob + rng.random_range(0..rest);
        edges.push((u, v, bridge));
    }
    let set = VertexSet::new(n, (0..blob).collect()).expect("planted set is valid");
    (build(n, edges, false), set)
}
