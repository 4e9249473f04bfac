//! The heat-kernel trace criterion.
//!
//! If `tr(H_t) - tr(L H_t) / gamma >= delta` for some `t`, then some state
//! `x0` has `<g, g> - <g, L g> / gamma >= delta` for `g = H_{t/2} phi_{x0}`,
//! and that `g` is a nonnegative function with `||g||_1 = 1`,
//! `mu[g] <= 1/delta` and `Phi[g] <= gamma`. The corollaries below pick `t`
//! and `delta` from the analytic nullity of `L`.

use serde::Serialize;

use crate::functionals::{mu, phi, ProfilePoint, Witness, BUDGET_SLACK};
use crate::spectral::{analytic_nullity, heat_apply, SpectralBasis, StateFunction};
use crate::{Error, Result};

/// Slack on the guarantees `mu <= 1/delta`, `Phi <= gamma`.
pub const GUARANTEE_SLACK: f64 = 1e-9;
const HOLDS_SLACK: f64 = 1e-12;
/// Negative entries of a heat witness smaller than this fraction of its
/// largest entry are rounding noise and are zeroed. Eigenvectors inside a
/// tight eigenvalue cluster carry errors of order `eps / gap`, which reach
/// about `1e-8` relative on blob chains with bridges near `1e-6`.
const POSITIVITY_NOISE: f64 = 1e-6;
/// Smallest `gamma` used when `lambda_k` is exactly zero.
const GAMMA_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceCertificate {
    pub t: f64,
    pub gamma: f64,
    pub delta_cap: f64,
    /// `tr(H_t) - tr(L H_t) / gamma`.
    pub trace_value: f64,
    pub holds: bool,
    /// `delta < 1`: the algebra still goes through, but this is outside the
    /// range the guarantee is usually stated for.
    pub delta_below_one: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessOrigin {
    Heat,
    Enumeration,
}

/// A function together with its analytic sparsity and conductance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparseWitness {
    pub g: StateFunction,
    pub mu_g: f64,
    pub phi_g: f64,
    pub origin: WitnessOrigin,
    pub x0: Option<usize>,
}

impl SparseWitness {
    pub fn new(b: &SpectralBasis, g: StateFunction, origin: WitnessOrigin, x0: Option<usize>) -> Result<Self> {
        let mu_g = mu(b.pi(), &g)?;
        let phi_g = phi(b.chain(), &g)?;
        Ok(Self { g, mu_g, phi_g, origin, x0 })
    }
}

fn trace_weights(b: &SpectralBasis, t: f64, gamma: f64) -> Vec<f64> {
    b.lambdas().iter().map(|&l| (1.0 - l / gamma) * (-t * l).exp()).collect()
}

/// `sum_i (1 - lambda_i / gamma) exp(-t lambda_i)`.
pub fn trace_condition(b: &SpectralBasis, t: f64, gamma: f64) -> f64 {
    trace_weights(b, t, gamma).iter().sum()
}

pub fn certify(b: &SpectralBasis, t: f64, gamma: f64, delta: f64) -> TraceCertificate {
    let trace_value = trace_condition(b, t, gamma);
    TraceCertificate {
        t,
        gamma,
        delta_cap: delta,
        trace_value,
        holds: trace_value >= delta - HOLDS_SLACK,
        delta_below_one: delta < 1.0,
    }
}

/// Horizons tried by [`best_certificate`]: `2^j / gamma` for
/// `j = -3 ..= ceil(log2 ln n) + 1`, plus `ln n / gamma`.
pub fn time_grid(n: usize, gamma: f64) -> Vec<f64> {
    let ln_n = (n as f64).ln();
    let top = if n >= 2 { ln_n.log2().ceil() as i32 + 1 } else { 1 };
    let mut grid: Vec<f64> = (-3..=top.max(-3)).map(|j| 2f64.powi(j) / gamma).collect();
    if n >= 2 {
        grid.push(ln_n / gamma);
    }
    grid
}

/// Best certificate over [`time_grid`]: largest trace value, ties to the smaller `t`.
pub fn best_certificate(b: &SpectralBasis, gamma: f64, delta: f64) -> TraceCertificate {
    time_grid(b.n(), gamma)
        .into_iter()
        .map(|t| certify(b, t, gamma, delta))
        .reduce(|best, c| {
            if c.trace_value > best.trace_value || (c.trace_value == best.trace_value && c.t < best.t) {
                c
            } else {
                best
            }
        })
        .expect("grid is nonempty")
}

/// `d(x) = pi(x) sum_i (1 - lambda_i/gamma) exp(-t lambda_i) psi_i(x)^2`.
/// Sums to [`trace_condition`].
pub fn per_state_diagnostic(b: &SpectralBasis, t: f64, gamma: f64) -> Vec<f64> {
    let w = trace_weights(b, t, gamma);
    let p = b.pi().as_slice();
    let psis = b.psi_matrix();
    (0..b.n())
        .map(|x| {
            let q: f64 = w.iter().enumerate().map(|(i, wi)| wi * psis[(x, i)] * psis[(x, i)]).sum();
            p[x] * q
        })
        .collect()
}

fn check_params(t: f64, gamma: f64, delta: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::BadRange(format!("t = {t} must be finite and nonnegative")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::BadRange(format!("gamma = {gamma} must lie in (0, 1]")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::BadRange(format!("delta = {delta} must be positive")));
    }
    Ok(())
}

/// Heat witness `g = H_{t/2} phi_{x0}`, where `x0` maximizes the per-state
/// quantity `d(x) / pi(x)` (ties to the lowest index). Any state where that
/// quantity is at least `delta` works; the maximizer always is one when the
/// trace condition holds.
pub fn heat_witness(b: &SpectralBasis, t: f64, gamma: f64, delta: f64) -> Result<SparseWitness> {
    check_params(t, gamma, delta)?;
    let cert = certify(b, t, gamma, delta);
    if !cert.holds {
        return Err(Error::CertificateFails { value: cert.trace_value, delta });
    }
    let p = b.pi().as_slice();
    let diag = per_state_diagnostic(b, t, gamma);
    let mut x0 = 0;
    for x in 1..b.n() {
        if diag[x] / p[x] > diag[x0] / p[x0] {
            x0 = x;
        }
    }

    let raw = heat_apply(b, t / 2.0, &StateFunction::point_density(b.pi(), x0));
    let noise = POSITIVITY_NOISE * raw.max_abs();
    let mut values = raw.into_values();
    for (x, v) in values.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < -noise {
                return Err(Error::GuaranteeViolated(format!(
                    "heat witness entry {x} is {v:.3e}; the heat operator must preserve positivity"
                )));
            }
            *v = 0.0;
        }
    }
    let witness = SparseWitness::new(b, StateFunction::new(values)?, WitnessOrigin::Heat, Some(x0))?;

    if witness.mu_g > 1.0 / delta + GUARANTEE_SLACK || witness.phi_g > gamma + GUARANTEE_SLACK {
        return Err(Error::GuaranteeViolated(format!(
            "heat witness has mu = {:.6e} (bound {:.6e}), Phi = {:.6e} (bound {gamma:.6e})",
            witness.mu_g,
            1.0 / delta,
            witness.phi_g
        )));
    }
    Ok(witness)
}

/// Heat witness driven by analytic nullity: with `k = nullity_{alpha gamma}(L)
/// >= n^alpha / ln n`, the trace condition holds at `t = ln n / gamma` with
/// `delta = k / (4 n^alpha)`.
pub fn nullity_witness(b: &SpectralBasis, gamma: f64, alpha: f64) -> Result<(SparseWitness, TraceCertificate)> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::BadRange(format!("gamma = {gamma} must lie in (0, 1]")));
    }
    if !(alpha > 0.0 && alpha <= 1.0 / 3.0) {
        return Err(Error::BadRange(format!("alpha = {alpha} must lie in (0, 1/3]")));
    }
    let n = b.n();
    if n < 2 {
        return Err(Error::PreconditionFails("need at least two states".into()));
    }
    let nf = n as f64;
    let k = analytic_nullity(b, alpha * gamma);
    let needed = nf.powf(alpha) / nf.ln();
    if (k as f64) < needed {
        return Err(Error::PreconditionFails(format!(
            "nullity_{{alpha gamma}}(L) = {k} is below n^alpha / ln n = {needed:.4}"
        )));
    }
    let t = nf.ln() / gamma;
    let delta = k as f64 / (4.0 * nf.powf(alpha));
    let cert = certify(b, t, gamma, delta);
    if !cert.holds {
        return Err(Error::GuaranteeViolated(format!(
            "nullity {k} should force trace value >= {delta:.6e}, got {:.6e}",
            cert.trace_value
        )));
    }
    let witness = heat_witness(b, t, gamma, delta)?;
    Ok((witness, cert))
}

/// Constructive spectral-profile bound: a witness with
/// `mu[g] <= 4 k^{-1+1/A}` and `Phi[g] <= A lambda_k log_k n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileBound {
    pub k: usize,
    pub a: f64,
    pub lambda_k: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub mu_bound: f64,
    pub phi_bound: f64,
    pub witness: SparseWitness,
    pub certificate: TraceCertificate,
}

pub fn profile_bound(b: &SpectralBasis, k: usize, a: f64) -> Result<ProfileBound> {
    let n = b.n();
    if !(a >= 3.0 && a.is_finite()) {
        return Err(Error::BadRange(format!("A = {a} must be at least 3")));
    }
    if k < 2 || k > n {
        return Err(Error::BadRange(format!("k = {k} must lie in [2, n = {n}]")));
    }
    let lambda_k = b.lambda(k);
    let log_k_n = (n as f64).ln() / (k as f64).ln();
    let phi_bound = a * lambda_k * log_k_n;
    if phi_bound > 1.0 {
        return Err(Error::GammaOutOfRange { gamma: phi_bound });
    }
    let gamma = if phi_bound > 0.0 { phi_bound } else { GAMMA_FLOOR };
    let alpha = 1.0 / (a * log_k_n);
    let (witness, certificate) = nullity_witness(b, gamma, alpha)?;
    let mu_bound = 4.0 * (k as f64).powf(-1.0 + 1.0 / a);
    if witness.mu_g > mu_bound + GUARANTEE_SLACK || witness.phi_g > phi_bound + GUARANTEE_SLACK {
        return Err(Error::GuaranteeViolated(format!(
            "profile witness has mu = {:.6e} (bound {mu_bound:.6e}), Phi = {:.6e} (bound {phi_bound:.6e})",
            witness.mu_g, witness.phi_g
        )));
    }
    Ok(ProfileBound { k, a, lambda_k, gamma, alpha, mu_bound, phi_bound, witness, certificate })
}

/// Upper bound on `Lambda'_G(r)`: the smallest `Phi` among heat witnesses
/// `H_{t/2} phi_x` (every state `x`, `t` in `{0} U {2^j : -6 <= j <= 12}`)
/// with `mu <= r`.
pub fn sparsity_profile_upper_bound(b: &SpectralBasis, r: f64) -> Result<ProfilePoint> {
    let mut times = vec![0.0];
    times.extend((-6..=12).map(|j| 2f64.powi(j)));
    let mut best: Option<(f64, StateFunction)> = None;
    for x in 0..b.n() {
        let start = StateFunction::point_density(b.pi(), x);
        for &t in &times {
            let g = heat_apply(b, t / 2.0, &start);
            let g = StateFunction::new(g.into_values().into_iter().map(|v| v.max(0.0)).collect())?;
            if mu(b.pi(), &g)? > r + BUDGET_SLACK {
                continue;
            }
            let value = phi(b.chain(), &g)?;
            if best.as_ref().is_none_or(|(bv, _)| value < *bv) {
                best = Some((value, g));
            }
        }
    }
    Ok(match best {
        None => ProfilePoint { r, value: f64::INFINITY, witness: Witness::None, upper_bound_only: true },
        Some((value, g)) => ProfilePoint { r, value, witness: Witness::Function(g), upper_bound_only: true },
    })
}
