//! Probability that a continuous-time walk started from `pi` conditioned on
//! `S` never leaves `S` before time `t`, exactly through the Dirichlet
//! operator `K_S(x, y) = 1_S(x) 1_S(y) K(x, y)` and by simulation.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{ReversibleChain, VertexSet};
use crate::functionals::phi_set;
use crate::{Error, Result};

const RESIDUAL_TOL: f64 = 1e-8;
const UNIT_TOL: f64 = 1e-10;
const BOUND_SLACK: f64 = 1e-9;
/// Largest mean sampled by direct inversion.
const POISSON_INVERSION_MAX: f64 = 30.0;
pub const DEFAULT_EXHAUSTIVE_CAP: usize = 10;

/// Spectrum of `L_S = I - K_S` on the whole state space, and the
/// coefficients of `1_S / sqrt(pi(S))` in its eigenbasis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirichletSpectrum {
    pub set: VertexSet,
    pub lambdas: Vec<f64>,
    pub coeffs: Vec<f64>,
}

pub fn dirichlet_spectrum(c: &ReversibleChain, s: &VertexSet) -> Result<DirichletSpectrum> {
    if s.is_empty() {
        return Err(Error::EmptySet);
    }
    let n = c.n();
    if s.n() != n {
        return Err(Error::LengthMismatch { expected: n, got: s.n() });
    }
    let p = c.pi().as_slice();
    let k = c.kernel();
    let inside = s.mask();
    let sq: Vec<f64> = p.iter().map(|v| v.sqrt()).collect();
    // D^{1/2} (I - K_S) D^{-1/2}, symmetrized against rounding.
    let mut a = DMatrix::<f64>::identity(n, n);
    for x in 0..n {
        for y in 0..n {
            if inside[x] && inside[y] {
                a[(x, y)] -= 0.5 * (sq[x] * k[(x, y)] / sq[y] + sq[y] * k[(y, x)] / sq[x]);
            }
        }
    }
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::EigensolverFailure("Dirichlet eigensolver did not converge".into()))?;

    let mass = c.pi().mass(s);
    let w: Vec<f64> = (0..n).map(|x| if inside[x] { sq[x] / mass.sqrt() } else { 0.0 }).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));

    let mut lambdas = Vec::with_capacity(n);
    let mut coeffs = Vec::with_capacity(n);
    for &i in &order {
        let u = eig.eigenvectors.column(i);
        let lambda = eig.eigenvalues[i];
        let residual = (&a * u - u * lambda).norm();
        if residual > RESIDUAL_TOL {
            return Err(Error::EigensolverFailure(format!(
                "Dirichlet eigenpair residual {residual:.3e} exceeds {RESIDUAL_TOL:.0e}"
            )));
        }
        lambdas.push(lambda);
        coeffs.push(u.iter().zip(&w).map(|(ui, wi)| ui * wi).sum());
    }
    let total: f64 = coeffs.iter().map(|c| c * c).sum();
    if (total - 1.0).abs() > UNIT_TOL {
        return Err(Error::EigensolverFailure(format!("coefficients have squared norm {total}, expected 1")));
    }
    Ok(DirichletSpectrum { set: s.clone(), lambdas, coeffs })
}

/// `Phi[S] = sum_i c_i^2 lambda_i`.
pub fn phi_from_spectrum(d: &DirichletSpectrum) -> f64 {
    d.coeffs.iter().zip(&d.lambdas).map(|(c, l)| c * c * l).sum()
}

/// `C(t, S) = sum_i c_i^2 exp(-t lambda_i)`, clamped to `[0, 1]`.
pub fn exact_stay_probability(d: &DirichletSpectrum, t: f64) -> f64 {
    let v: f64 = d.coeffs.iter().zip(&d.lambdas).map(|(c, l)| c * c * (-t * l).exp()).sum();
    v.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub walks: usize,
}

/// Cumulative distribution sampler over a fixed weight vector.
struct Cumulative(Vec<f64>);

impl Cumulative {
    fn new(weights: impl Iterator<Item = f64>) -> Self {
        let mut acc = 0.0;
        let mut cum: Vec<f64> = weights
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        for v in &mut cum {
            *v /= acc;
        }
        Self(cum)
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.0.partition_point(|&c| c <= u).min(self.0.len() - 1)
    }
}

fn poisson<R: Rng>(t: f64, rng: &mut R) -> u64 {
    if t <= 0.0 {
        return 0;
    }
    if t > POISSON_INVERSION_MAX {
        return Poisson::new(t).expect("positive finite mean").sample(rng) as u64;
    }
    let u: f64 = rng.random();
    let mut k = 0u64;
    let mut term = (-t).exp();
    let mut cum = term;
    while u >= cum {
        k += 1;
        term *= t / k as f64;
        let next = cum + term;
        if next == cum {
            break;
        }
        cum = next;
    }
    k
}

/// Simulates `walks` walks: start `x ~ pi | S`, take `tau ~ Poisson(t)`
/// kernel steps, succeed if every visited state is in `S`. Walk `i` uses
/// stream `i` of a ChaCha8 generator seeded with `seed`, so the result does
/// not depend on scheduling.
pub fn mc_stay_probability(c: &ReversibleChain, s: &VertexSet, t: f64, walks: usize, seed: u64) -> Result<McEstimate> {
    if s.is_empty() {
        return Err(Error::EmptySet);
    }
    if walks == 0 {
        return Err(Error::BadRange("need at least one walk".into()));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::BadRange(format!("t = {t} must be finite and nonnegative")));
    }
    let n = c.n();
    let p = c.pi().as_slice();
    let inside = s.mask();
    let start = Cumulative::new((0..n).map(|x| if inside[x] { p[x] } else { 0.0 }));
    let rows: Vec<Cumulative> = (0..n).map(|x| Cumulative::new(c.kernel().row(x).iter().copied())).collect();

    let stays = (0..walks)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut x = start.sample(&mut rng);
            let steps = poisson(t, &mut rng);
            for _ in 0..steps {
                x = rows[x].sample(&mut rng);
                if !inside[x] {
                    return false;
                }
            }
            true
        })
        .count();
    let estimate = stays as f64 / walks as f64;
    let stderr = (estimate * (1.0 - estimate) / walks as f64).sqrt();
    Ok(McEstimate { estimate, stderr, walks })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeReport {
    pub t: f64,
    pub set: VertexSet,
    pub phi: f64,
    pub exact: f64,
    /// `exp(-t Phi[S])`.
    pub bound: f64,
    pub holds: bool,
    pub mc_estimate: Option<f64>,
    pub mc_walks: usize,
    pub mc_stderr: Option<f64>,
}

pub fn escape_report(c: &ReversibleChain, s: &VertexSet, t: f64, walks: usize, seed: u64) -> Result<EscapeReport> {
    let d = dirichlet_spectrum(c, s)?;
    let phi = phi_set(c, s)?;
    let exact = exact_stay_probability(&d, t);
    let bound = (-t * phi).exp();
    let mc = if walks > 0 { Some(mc_stay_probability(c, s, t, walks, seed)?) } else { None };
    Ok(EscapeReport {
        t,
        set: s.clone(),
        phi,
        exact,
        bound,
        holds: exact >= bound - BOUND_SLACK,
        mc_estimate: mc.map(|m| m.estimate),
        mc_walks: walks,
        mc_stderr: mc.map(|m| m.stderr),
    })
}

/// The pair `(S, t)` closest to equality in `C(t, S) >= exp(-t Phi[S])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundWitness {
    pub set: VertexSet,
    pub t: f64,
    pub exact: f64,
    pub bound: f64,
    /// `sum c_i^2 lambda_i`, the mean of the Dirichlet eigenvalues under `c^2`.
    pub phi_spectral: f64,
    /// `C(t, S) - exp(-t sum c_i^2 lambda_i)`, the Jensen gap.
    pub jensen_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub n: usize,
    pub subsets: usize,
    pub t_grid: Vec<f64>,
    pub checks: usize,
    pub violations: Vec<BoundWitness>,
    pub min_slack: f64,
    pub tightest: BoundWitness,
    pub holds: bool,
}

/// Checks `C(t, S) >= exp(-t Phi[S])` for every nonempty `S` and every `t`
/// in `t_grid`.
pub fn verify_bound(c: &ReversibleChain, t_grid: &[f64], exhaustive_cap: usize) -> Result<BoundReport> {
    let n = c.n();
    let cap = exhaustive_cap.min(63);
    if n > cap {
        return Err(Error::TooLarge { n, cap });
    }
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::BadRange("t grid must be nonempty, finite and nonnegative".into()));
    }
    let per_set: Vec<Vec<BoundWitness>> = (1u64..1 << n)
        .into_par_iter()
        .map(|bits| {
            let s = VertexSet::from_bits(n, bits);
            let d = dirichlet_spectrum(c, &s)?;
            let phi = phi_set(c, &s)?;
            let phi_spectral = phi_from_spectrum(&d);
            Ok(t_grid
                .iter()
                .map(|&t| {
                    let exact = exact_stay_probability(&d, t);
                    BoundWitness {
                        set: s.clone(),
                        t,
                        exact,
                        bound: (-t * phi).exp(),
                        phi_spectral,
                        jensen_gap: exact - (-t * phi_spectral).exp(),
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut tightest: Option<BoundWitness> = None;
    let mut violations = Vec::new();
    let mut checks = 0;
    for w in per_set.into_iter().flatten() {
        checks += 1;
        let slack = w.exact - w.bound;
        if slack < -BOUND_SLACK {
            violations.push(w.clone());
        }
        if tightest.as_ref().is_none_or(|b| slack < b.exact - b.bound) {
            tightest = Some(w);
        }
    }
    let tightest = tightest.expect("at least one check");
    Ok(BoundReport {
        n,
        subsets: (1usize << n) - 1,
        t_grid: t_grid.to_vec(),
        checks,
        min_slack: tightest.exact - tightest.bound,
        holds: violations.is_empty(),
        violations,
        tightest,
    })
}
