//! Brute-force search for an analytically sparse function in a
//! low-eigenvalue subspace, over an `s`-net of its unit sphere.
//!
//! The lattice net takes integer vectors `z` with `h |z|` inside the shell
//! `[1 - s/2, 1 + s/2]`, where `h = s / sqrt(m)`, and normalizes them. Any
//! unit vector rounds coordinatewise to such a `z` at distance at most
//! `s/2`, and normalizing moves that point by at most another `s/2`.

use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::functionals::phi;
use crate::spectral::{analytic_nullity, SpectralBasis, StateFunction};
use crate::{Error, Result};

pub const DEFAULT_BUDGET: usize = 10_000_000;
pub const DEFAULT_SEED: u64 = 0;
const BATCH: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetMode {
    Lattice,
    RandomFallback,
}

/// Requested net. `mode` is what the caller asks for; a lattice that would
/// exceed `budget` points is replaced by `budget` random points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub m: usize,
    pub radius: f64,
    pub budget: usize,
    pub mode: NetMode,
    pub seed: u64,
}

impl NetSpec {
    pub fn lattice(m: usize, radius: f64) -> Self {
        Self { m, radius, budget: DEFAULT_BUDGET, mode: NetMode::Lattice, seed: DEFAULT_SEED }
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::BadRange("net dimension must be positive".into()));
        }
        if !(self.radius > 0.0 && self.radius <= 1.0) {
            return Err(Error::BadRange(format!("net radius {} must lie in (0, 1]", self.radius)));
        }
        if self.budget == 0 {
            return Err(Error::BadRange("net budget must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    pub points: Vec<Vec<f64>>,
    pub exhaustive: bool,
}

/// Integer shell `Nmin <= |z|^2 <= Nmax` for the lattice net.
#[derive(Debug, Clone, Copy)]
struct Shell {
    m: usize,
    n_min: u64,
    n_max: u64,
}

impl Shell {
    fn new(m: usize, s: f64) -> Self {
        let scale = m as f64 / (s * s);
        let lo = (1.0 - s / 2.0).powi(2) * scale;
        let hi = (1.0 + s / 2.0).powi(2) * scale;
        Self { m, n_min: (lo * (1.0 - 1e-12)).ceil() as u64, n_max: (hi * (1.0 + 1e-12)).floor() as u64 }
    }

    /// Visits every shell point that is the shortest in-shell multiple of
    /// its direction, in lexicographic order. Stops early once `f` returns
    /// false.
    fn for_each(&self, mut f: impl FnMut(&[i64]) -> bool) {
        let m = self.m;
        let mut z = vec![0i64; m];
        let mut prefix = vec![0u64; m + 1];
        let bound = |rest: u64| isqrt(rest) as i64;
        z[0] = -bound(self.n_max);
        let mut depth = 0;
        loop {
            // Descend, filling coordinates after `depth` with their minimum.
            prefix[depth + 1] = prefix[depth] + (z[depth] * z[depth]) as u64;
            if depth + 1 < m {
                depth += 1;
                z[depth] = -bound(self.n_max - prefix[depth]);
                continue;
            }
            let norm = prefix[m];
            if norm >= self.n_min && is_canonical(&z, norm, self.n_min) && !f(&z) {
                return;
            }
            // Advance the odometer.
            loop {
                let limit = bound(self.n_max - prefix[depth]);
                if z[depth] < limit {
                    z[depth] += 1;
                    break;
                }
                if depth == 0 {
                    return;
                }
                depth -= 1;
            }
        }
    }

    fn count_up_to(&self, cap: usize) -> usize {
        let mut count = 0;
        self.for_each(|_| {
            count += 1;
            count <= cap
        });
        count
    }
}

fn isqrt(x: u64) -> u64 {
    let mut r = (x as f64).sqrt() as u64;
    while r * r > x {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= x {
        r += 1;
    }
    r
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `z = g d` with `d` primitive; `z` is kept only if `(g - 1) d` falls below the shell.
fn is_canonical(z: &[i64], norm: u64, n_min: u64) -> bool {
    let g = z.iter().fold(0u64, |acc, &v| gcd(acc, v.unsigned_abs()));
    if g < 2 {
        return true;
    }
    let primitive = norm / (g * g);
    (g - 1) * (g - 1) * primitive < n_min
}

fn normalize(z: &[i64]) -> Vec<f64> {
    let norm = z.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
    z.iter().map(|&v| v as f64 / norm).collect()
}

fn random_points(m: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

/// Materializes the net described by `spec`.
pub fn build_net(spec: &NetSpec) -> Result<Net> {
    spec.validate()?;
    if spec.mode == NetMode::Lattice {
        let shell = Shell::new(spec.m, spec.radius);
        if shell.count_up_to(spec.budget) <= spec.budget {
            let mut points = Vec::new();
            shell.for_each(|z| {
                points.push(normalize(z));
                true
            });
            return Ok(Net { points, exhaustive: true });
        }
    }
    Ok(Net { points: random_points(spec.m, spec.budget, spec.seed), exhaustive: false })
}

/// Number of lattice points the net for `(m, radius)` would contain, or
/// `None` when it exceeds `cap`.
pub fn lattice_size(m: usize, radius: f64, cap: usize) -> Option<usize> {
    let count = Shell::new(m, radius).count_up_to(cap);
    (count <= cap).then_some(count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumResult {
    pub g: StateFunction,
    pub coeffs: Vec<f64>,
    pub mu_g: f64,
    pub phi_g: f64,
    /// Dimension of the searched subspace, `nullity_eta(L)`.
    pub m: usize,
    pub net_size: usize,
    pub exhaustive: bool,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumOptions {
    pub budget: usize,
    pub seed: u64,
}

impl Default for EnumOptions {
    fn default() -> Self {
        Self { budget: DEFAULT_BUDGET, seed: DEFAULT_SEED }
    }
}

pub fn check_enum_range(eta: f64, eps: f64, delta: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 0.25) {
        return Err(Error::BadRange(format!("eps = {eps} must lie in (0, 1/4]")));
    }
    if !(eta >= 2.0 * eps && eta <= 1.0) {
        return Err(Error::BadRange(format!("eta = {eta} must lie in [2 eps, 1] = [{}, 1]", 2.0 * eps)));
    }
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::BadRange(format!("delta = {delta} must lie in (0, 1/2]")));
    }
    Ok(())
}

struct Candidate {
    mu: f64,
    coeffs: Vec<f64>,
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    match a.mu.partial_cmp(&b.mu) {
        Some(Ordering::Less) => true,
        Some(Ordering::Greater) => false,
        _ => a.coeffs.iter().zip(&b.coeffs).find(|(x, y)| x != y).is_some_and(|(x, y)| x < y),
    }
}

fn pick(a: Candidate, b: Candidate) -> Candidate {
    if better(&b, &a) {
        b
    } else {
        a
    }
}

/// Searches the unit sphere of `span(psi_1 .. psi_m)`, `m = nullity_eta(L)`,
/// with a net of radius `0.5 sqrt(eps / eta)`, and returns the point with
/// the smallest analytic sparsity (ties to the lexicographically smaller
/// coefficient vector).
pub fn enumerate_sparse(b: &SpectralBasis, eta: f64, eps: f64, delta: f64, opts: EnumOptions) -> Result<EnumResult> {
    check_enum_range(eta, eps, delta)?;
    let m = analytic_nullity(b, eta);
    let radius = 0.5 * (eps / eta).sqrt();

    // Rows of sqrt(pi) * Psi restricted to the first m columns: for a unit
    // coefficient vector c, ||g||_2 = 1 and ||g||_1 = sum_x pi(x) |(Psi c)(x)|.
    let n = b.n();
    let p = b.pi().as_slice();
    let psis = b.psi_matrix();
    let rows: Vec<Vec<f64>> = (0..n).map(|x| (0..m).map(|i| psis[(x, i)]).collect()).collect();
    let mu_of = |c: &[f64]| {
        let l1: f64 =
            rows.iter().zip(p).map(|(row, px)| px * row.iter().zip(c).map(|(r, ci)| r * ci).sum::<f64>().abs()).sum();
        l1 * l1
    };
    let evaluate = |points: &[Vec<f64>]| {
        points.par_iter().map(|c| Candidate { mu: mu_of(c), coeffs: c.clone() }).reduce_with(pick)
    };

    let shell = Shell::new(m, radius);
    let lattice_fits = shell.count_up_to(opts.budget) <= opts.budget;
    let mut best: Option<Candidate> = None;
    let mut net_size = 0;
    let merge = |batch: &[Vec<f64>], best: &mut Option<Candidate>| {
        if let Some(c) = evaluate(batch) {
            *best = Some(match best.take() {
                Some(b) => pick(b, c),
                None => c,
            });
        }
    };
    if lattice_fits {
        let mut batch = Vec::with_capacity(BATCH);
        shell.for_each(|z| {
            batch.push(normalize(z));
            if batch.len() == BATCH {
                merge(&batch, &mut best);
                net_size += batch.len();
                batch.clear();
            }
            true
        });
        merge(&batch, &mut best);
        net_size += batch.len();
    } else {
        let points = random_points(m, opts.budget, opts.seed);
        for batch in points.chunks(BATCH) {
            merge(batch, &mut best);
        }
        net_size = points.len();
    }

    let best = best.expect("nets are nonempty");
    let g = b.combine(&best.coeffs);
    let phi_g = phi(b.chain(), &g)?;
    if phi_g > eta + 1e-9 {
        return Err(Error::GuaranteeViolated(format!(
            "enumeration witness has Phi = {phi_g:.6e} above eta = {eta:.6e}"
        )));
    }
    Ok(EnumResult { g, coeffs: best.coeffs, mu_g: best.mu, phi_g, m, net_size, exhaustive: lattice_fits, radius })
}
