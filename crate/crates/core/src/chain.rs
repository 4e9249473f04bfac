//! Markov chains built from weighted graphs.
//!
//! All inner products and norms in this crate are taken with respect to the
//! stationary distribution: `<f, g> = E_{x~pi}[f(x) g(x)]` and
//! `||f||_p^p = E_{x~pi}|f(x)|^p`. [`StationaryMeasure`] is the one place
//! those are computed.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::spectral::StateFunction;
use crate::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;
const BALANCE_TOL: f64 = 1e-9;
const STATIONARY_TOL: f64 = 1e-10;
const POWER_ITER_TOL: f64 = 1e-12;
const POWER_ITER_BUDGET: usize = 1_000_000;
const DIRECT_SOLVE_MAX_N: usize = 2000;

/// Edge-weighted graph as ingested from a file or generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    directed: bool,
}

impl WeightedGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>, directed: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no states".into()));
        }
        for (i, &(u, v, w)) in edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!("edge {i} ({u}, {v}) has an endpoint outside [0, {n})")));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge {i} ({u}, {v}) has non-positive or non-finite weight {w}"
                )));
            }
        }
        Ok(Self { n, edges, directed })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Dense weight matrix with duplicate edges summed. An undirected edge
    /// `{u, v}` fills both `W[u][v]` and `W[v][u]`; an undirected self-loop
    /// is counted once.
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n, self.n);
        for &(u, v, weight) in &self.edges {
            w[(u, v)] += weight;
            if !self.directed && u != v {
                w[(v, u)] += weight;
            }
        }
        w
    }
}

/// The stationary distribution `pi` of a chain. Strictly positive and sums to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryMeasure(Vec<f64>);

impl StationaryMeasure {
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::InvalidChain("empty distribution".into()));
        }
        if let Some(x) = pi.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::InvalidChain(format!("pi({x}) = {} is not strictly positive", pi[x])));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidChain(format!("pi sums to {total}, not 1")));
        }
        Ok(Self(pi))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn mass(&self, set: &VertexSet) -> f64 {
        set.members().iter().map(|&x| self.0[x]).sum()
    }

    pub fn expect(&self, f: &StateFunction) -> f64 {
        self.0.iter().zip(f.values()).map(|(p, v)| p * v).sum()
    }

    pub fn inner(&self, f: &StateFunction, g: &StateFunction) -> f64 {
        self.0.iter().zip(f.values().iter().zip(g.values())).map(|(p, (a, b))| p * a * b).sum()
    }

    pub fn norm1(&self, f: &StateFunction) -> f64 {
        self.0.iter().zip(f.values()).map(|(p, v)| p * v.abs()).sum()
    }

    pub fn norm2_sq(&self, f: &StateFunction) -> f64 {
        self.inner(f, f)
    }

    pub fn norm2(&self, f: &StateFunction) -> f64 {
        self.norm2_sq(f).sqrt()
    }
}

/// A subset of states, stored as a sorted list of distinct indices.
/// Serializes as that list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexSet {
    n: usize,
    members: Vec<usize>,
}

impl VertexSet {
    pub fn new(n: usize, mut members: Vec<usize>) -> Result<Self> {
        if let Some(&index) = members.iter().find(|&&x| x >= n) {
            return Err(Error::IndexOutOfRange { index, n });
        }
        members.sort_unstable();
        members.dedup();
        Ok(Self { n, members })
    }

    pub fn full(n: usize) -> Self {
        Self { n, members: (0..n).collect() }
    }

    pub fn singleton(n: usize, x: usize) -> Result<Self> {
        Self::new(n, vec![x])
    }

    /// Builds a set from the low `n` bits of `bits`.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        let members = (0..n).filter(|&x| bits >> x & 1 == 1).collect();
        Self { n, members }
    }

    pub fn from_mask(mask: &[bool]) -> Self {
        let members = mask.iter().enumerate().filter_map(|(x, &m)| m.then_some(x)).collect();
        Self { n: mask.len(), members }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.members.len() == self.n
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n];
        for &x in &self.members {
            mask[x] = true;
        }
        mask
    }

    pub fn contains(&self, x: usize) -> bool {
        self.members.binary_search(&x).is_ok()
    }

    pub fn indicator(&self) -> StateFunction {
        StateFunction::from_vec(self.mask().into_iter().map(|m| if m { 1.0 } else { 0.0 }).collect())
    }
}

impl Serialize for VertexSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.members.serialize(serializer)
    }
}

/// A reversible chain: row-stochastic kernel `K` in detailed balance with `pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReversibleChain {
    pi: StationaryMeasure,
    kernel: DMatrix<f64>,
}

impl ReversibleChain {
    /// Validates stochasticity, stationarity and detailed balance.
    pub fn new(pi: StationaryMeasure, kernel: DMatrix<f64>) -> Result<Self> {
        check_kernel(&kernel, pi.len())?;
        let p = pi.as_slice();
        let n = p.len();
        let mut balance = 0.0f64;
        for x in 0..n {
            for y in (x + 1)..n {
                balance = balance.max((p[x] * kernel[(x, y)] - p[y] * kernel[(y, x)]).abs());
            }
        }
        if balance > BALANCE_TOL {
            return Err(Error::InvalidChain(format!(
                "detailed balance residual {balance:.3e} exceeds {BALANCE_TOL:.0e}"
            )));
        }
        let residual = stationarity_residual(&kernel, p);
        if residual > BALANCE_TOL {
            return Err(Error::InvalidChain(format!("stationarity residual {residual:.3e} exceeds {BALANCE_TOL:.0e}")));
        }
        Ok(Self { pi, kernel })
    }

    pub fn n(&self) -> usize {
        self.pi.len()
    }

    pub fn pi(&self) -> &StationaryMeasure {
        &self.pi
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    /// `K f`.
    pub fn apply_kernel(&self, f: &StateFunction) -> StateFunction {
        apply(&self.kernel, f)
    }

    /// `<f, L f>` evaluated directly as `<f, f> - <f, K f>`.
    pub fn quadratic_form(&self, f: &StateFunction) -> f64 {
        quadratic_form(&self.kernel, &self.pi, f)
    }

    /// The Dirichlet form `1/2 sum_{x,y} pi(x) K(x,y) (f(x) - f(y))^2`, which
    /// equals `<f, L f>` for reversible chains and is never negative.
    pub fn dirichlet_form(&self, f: &StateFunction) -> f64 {
        let p = self.pi.as_slice();
        let v = f.values();
        let n = self.n();
        let mut total = 0.0;
        for x in 0..n {
            let mut row = 0.0;
            for y in 0..n {
                let d = v[x] - v[y];
                row += self.kernel[(x, y)] * d * d;
            }
            total += p[x] * row;
        }
        0.5 * total
    }

    /// Probability flow `pi(x) K(x, y)`; symmetric for reversible chains.
    pub fn flow(&self) -> DMatrix<f64> {
        let p = self.pi.as_slice();
        DMatrix::from_fn(self.n(), self.n(), |x, y| p[x] * self.kernel[(x, y)])
    }

    /// Views this chain as a general chain, e.g. to feed it back through
    /// [`reversibilize`].
    pub fn to_directed(&self) -> DirectedChain {
        DirectedChain { pi: self.pi.clone(), kernel: self.kernel.clone() }
    }
}

/// An irreducible chain that need not satisfy detailed balance.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedChain {
    pi: StationaryMeasure,
    kernel: DMatrix<f64>,
}

impl DirectedChain {
    /// Builds a chain from a row-stochastic irreducible kernel, solving for `pi`.
    pub fn from_kernel(kernel: DMatrix<f64>) -> Result<Self> {
        check_kernel(&kernel, kernel.nrows())?;
        check_irreducible(&kernel)?;
        let pi = stationary_distribution(&kernel)?;
        Ok(Self { pi: StationaryMeasure::new(pi)?, kernel })
    }

    pub fn n(&self) -> usize {
        self.pi.len()
    }

    pub fn pi(&self) -> &StationaryMeasure {
        &self.pi
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    /// `<f, L' f>` with `L' = id - K'`.
    pub fn quadratic_form(&self, f: &StateFunction) -> f64 {
        quadratic_form(&self.kernel, &self.pi, f)
    }
}

/// Result of ingesting a graph.
#[derive(Debug, Clone, PartialEq)]
pub enum Chain {
    Reversible(ReversibleChain),
    Directed(DirectedChain),
}

impl Chain {
    pub fn n(&self) -> usize {
        match self {
            Chain::Reversible(c) => c.n(),
            Chain::Directed(c) => c.n(),
        }
    }

    pub fn pi(&self) -> &StationaryMeasure {
        match self {
            Chain::Reversible(c) => c.pi(),
            Chain::Directed(c) => c.pi(),
        }
    }

    /// Returns the associated reversible chain and whether reversibilization
    /// was applied.
    pub fn into_reversible(self) -> Result<(ReversibleChain, bool)> {
        match self {
            Chain::Reversible(c) => Ok((c, false)),
            Chain::Directed(c) => Ok((reversibilize(&c)?, true)),
        }
    }
}

/// Random-walk chain of a weighted graph: row `x` of the kernel is the
/// weight-proportional distribution over the out-neighbours of `x`.
pub fn from_graph(g: &WeightedGraph) -> Result<Chain> {
    let w = g.weight_matrix();
    let n = g.n();
    let degrees: Vec<f64> = (0..n).map(|x| w.row(x).sum()).collect();
    if let Some(state) = degrees.iter().position(|&d| d <= 0.0) {
        return Err(Error::IsolatedState { state });
    }
    check_irreducible(&w)?;
    let kernel = DMatrix::from_fn(n, n, |x, y| w[(x, y)] / degrees[x]);

    if g.is_directed() {
        let pi = stationary_distribution(&kernel)?;
        Ok(Chain::Directed(DirectedChain { pi: StationaryMeasure::new(pi)?, kernel }))
    } else {
        let total: f64 = degrees.iter().sum();
        let pi = degrees.iter().map(|d| d / total).collect();
        Ok(Chain::Reversible(ReversibleChain::new(StationaryMeasure::new(pi)?, kernel)?))
    }
}

/// Invariant distribution of an irreducible row-stochastic kernel.
///
/// Solved directly by Grassmann-Taksar-Heyman state reduction (no
/// subtractions, so small entries keep full relative accuracy) for
/// `n <= 2000`, otherwise by power iteration on the lazy kernel. Either way
/// the answer is polished by lazy power iteration until
/// `||pi K - pi||_inf <= 1e-10`.
pub fn stationary_distribution(kernel: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = kernel.nrows();
    check_kernel(kernel, n)?;
    check_irreducible(kernel)?;

    let mut pi = if n <= DIRECT_SOLVE_MAX_N { gth_solve(kernel)? } else { vec![1.0 / n as f64; n] };

    let target = if n <= DIRECT_SOLVE_MAX_N { STATIONARY_TOL } else { POWER_ITER_TOL };
    let mut residual = stationarity_residual(kernel, &pi);
    let mut iterations = 0;
    while residual > target && iterations < POWER_ITER_BUDGET {
        // Lazy step (pi + pi K) / 2 shares the invariant vector and is aperiodic.
        let step = kernel.tr_mul(&nalgebra::DVector::from_column_slice(&pi));
        let mut next: Vec<f64> = pi.iter().zip(step.iter()).map(|(a, b)| 0.5 * (a + b)).collect();
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|p| *p /= total);
        pi = next;
        residual = stationarity_residual(kernel, &pi);
        iterations += 1;
    }
    if residual > STATIONARY_TOL {
        return Err(Error::NoConvergence { residual, iterations });
    }
    Ok(pi)
}

fn gth_solve(kernel: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = kernel.nrows();
    let mut a = kernel.clone();
    for k in (1..n).rev() {
        let s: f64 = (0..k).map(|j| a[(k, j)]).sum();
        if s <= 0.0 {
            return Err(Error::NotIrreducible { unreachable: k });
        }
        for i in 0..k {
            a[(i, k)] /= s;
        }
        for i in 0..k {
            let aik = a[(i, k)];
            if aik == 0.0 {
                continue;
            }
            for j in 0..k {
                a[(i, j)] += aik * a[(k, j)];
            }
        }
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for k in 1..n {
        pi[k] = (0..k).map(|i| pi[i] * a[(i, k)]).sum();
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= total);
    Ok(pi)
}

/// Associated reversible chain with kernel `(K' + K'*)/2`, where `K'*` is the
/// `pi`-adjoint `K'*(x, y) = pi(y) K'(y, x) / pi(x)`. Keeps the same `pi`.
pub fn reversibilize(c: &DirectedChain) -> Result<ReversibleChain> {
    let n = c.n();
    let p = c.pi.as_slice();
    let k = &c.kernel;
    let kernel = DMatrix::from_fn(n, n, |x, y| {
        // Symmetric flow divided by pi(x) keeps detailed balance exact up to
        // rounding; the division can land one ulp above 1.
        let flow = 0.5 * (p[x] * k[(x, y)] + p[y] * k[(y, x)]);
        (flow / p[x]).min(1.0)
    });
    ReversibleChain::new(c.pi.clone(), kernel)
}

/// `max_y |(pi K)(y) - pi(y)|`.
pub fn stationarity_residual(kernel: &DMatrix<f64>, pi: &[f64]) -> f64 {
    let n = pi.len();
    (0..n)
        .map(|y| {
            let flow_in: f64 = (0..n).map(|x| pi[x] * kernel[(x, y)]).sum();
            (flow_in - pi[y]).abs()
        })
        .fold(0.0, f64::max)
}

fn apply(kernel: &DMatrix<f64>, f: &StateFunction) -> StateFunction {
    let v = f.values();
    let n = v.len();
    StateFunction::from_vec((0..n).map(|x| (0..n).map(|y| kernel[(x, y)] * v[y]).sum()).collect())
}

fn quadratic_form(kernel: &DMatrix<f64>, pi: &StationaryMeasure, f: &StateFunction) -> f64 {
    let kf = apply(kernel, f);
    pi.norm2_sq(f) - pi.inner(f, &kf)
}

fn check_kernel(kernel: &DMatrix<f64>, n: usize) -> Result<()> {
    if kernel.nrows() != n || kernel.ncols() != n || n == 0 {
        return Err(Error::InvalidChain(format!("kernel is {}x{}, expected {n}x{n}", kernel.nrows(), kernel.ncols())));
    }
    for x in 0..n {
        let mut sum = 0.0;
        for y in 0..n {
            let v = kernel[(x, y)];
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidChain(format!("K({x},{y}) = {v} is outside [0, 1]")));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidChain(format!("row {x} sums to {sum}")));
        }
    }
    Ok(())
}

/// Strong connectivity of the support of `m` by forward and reverse search from state 0.
fn check_irreducible(m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    for reverse in [false, true] {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(x) = queue.pop_front() {
            for y in 0..n {
                let w = if reverse { m[(y, x)] } else { m[(x, y)] };
                if w > 0.0 && !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        if let Some(unreachable) = seen.iter().position(|s| !s) {
            return Err(Error::NotIrreducible { unreachable });
        }
    }
    Ok(())
}
