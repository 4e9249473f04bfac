//! Independent reference computations shared by the integration tests.
//! Nothing here goes through the eigendecomposition used by the library.

#![allow(dead_code, clippy::needless_range_loop)]

use markov_sse::chain::{from_graph, reversibilize, DirectedChain, ReversibleChain, VertexSet, WeightedGraph};
use markov_sse::generators;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `exp(A)` by scaling and squaring with a degree-30 Taylor polynomial.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = a.iter().map(|v| v.abs()).fold(0.0, f64::max) * n as f64;
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `H_t = exp(-t (I - K))` in the standard basis.
pub fn heat_matrix(c: &ReversibleChain, t: f64) -> DMatrix<f64> {
    let n = c.n();
    let l = DMatrix::<f64>::identity(n, n) - c.kernel();
    expm(&(-t * l))
}

pub fn apply(m: &DMatrix<f64>, f: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(f)).as_slice().to_vec()
}

pub fn inner(pi: &[f64], f: &[f64], g: &[f64]) -> f64 {
    pi.iter().zip(f).zip(g).map(|((p, a), b)| p * a * b).sum()
}

/// `<f, (I - K) f>_pi` straight from the kernel.
pub fn laplacian_form(pi: &[f64], k: &DMatrix<f64>, f: &[f64]) -> f64 {
    let kf = apply(k, f);
    inner(pi, f, f) - inner(pi, f, &kf)
}

/// `C(t, S) = sum_tau Poisson(tau; t) <phi', K_S^tau phi'>`, truncated once
/// the remaining Poisson mass is below `1e-12`.
pub fn poisson_stay_probability(c: &ReversibleChain, s: &VertexSet, t: f64) -> f64 {
    let n = c.n();
    let pi = c.pi().as_slice();
    let inside = s.mask();
    let mass: f64 = s.members().iter().map(|&x| pi[x]).sum();
    let mut ks = c.kernel().clone();
    for x in 0..n {
        for y in 0..n {
            if !(inside[x] && inside[y]) {
                ks[(x, y)] = 0.0;
            }
        }
    }
    let phi: Vec<f64> = (0..n).map(|x| if inside[x] { 1.0 / mass.sqrt() } else { 0.0 }).collect();
    let mut v = phi.clone();
    let mut weight = (-t).exp();
    let mut covered = weight;
    let mut total = weight * inner(pi, &phi, &v);
    let mut tau = 0u32;
    while 1.0 - covered > 1e-12 && tau < 10_000 {
        tau += 1;
        v = apply(&ks, &v);
        weight *= t / tau as f64;
        covered += weight;
        total += weight * inner(pi, &phi, &v);
    }
    total
}

/// Escaping mass over measure, from the raw definition.
pub fn set_conductance(c: &ReversibleChain, s: &VertexSet) -> f64 {
    let pi = c.pi().as_slice();
    let inside = s.mask();
    let mut out = 0.0;
    let mut mass = 0.0;
    for x in 0..c.n() {
        if !inside[x] {
            continue;
        }
        mass += pi[x];
        for y in 0..c.n() {
            if !inside[y] {
                out += pi[x] * c.kernel()[(x, y)];
            }
        }
    }
    out / mass
}

/// `min { Phi[S] : S nonempty, pi(S) <= r }` by plain enumeration.
pub fn brute_conductance_profile(c: &ReversibleChain, r: f64) -> f64 {
    let n = c.n();
    let mut best = f64::INFINITY;
    for bits in 1u64..1 << n {
        let s = VertexSet::from_bits(n, bits);
        if c.pi().mass(&s) <= r + 1e-12 {
            best = best.min(set_conductance(c, &s));
        }
    }
    best
}

pub fn reversible_of(g: &WeightedGraph) -> ReversibleChain {
    from_graph(g).unwrap().into_reversible().unwrap().0
}

pub fn random_reversible<R: Rng>(n: usize, rng: &mut R) -> ReversibleChain {
    let density = rng.random_range(0.1..0.7);
    let loops = rng.random::<bool>();
    reversible_of(&generators::random_graph(n, density, false, loops, rng))
}

pub fn random_directed<R: Rng>(n: usize, rng: &mut R) -> DirectedChain {
    let density = rng.random_range(0.1..0.6);
    let loops = rng.random::<bool>();
    let g = generators::random_graph(n, density, true, loops, rng);
    match from_graph(&g).unwrap() {
        markov_sse::chain::Chain::Directed(d) => d,
        markov_sse::chain::Chain::Reversible(_) => unreachable!("directed input"),
    }
}

/// Random chain of either kind, reversibilized when directed.
pub fn random_chain<R: Rng>(n: usize, rng: &mut R) -> ReversibleChain {
    if rng.random::<bool>() {
        random_reversible(n, rng)
    } else {
        reversibilize(&random_directed(n, rng)).unwrap()
    }
}

pub fn random_function<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}
