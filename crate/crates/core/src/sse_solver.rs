//! The combined small-set expansion algorithm: branch on analytic nullity,
//! then round the resulting function to a set with a sweep cut.

use serde::Serialize;

use crate::chain::{ReversibleChain, VertexSet};
use crate::eigenspace_enum::{enumerate_sparse, EnumOptions};
use crate::functionals::{phi_set, symmetric_flow};
use crate::heat_method::{
    nullity_witness, profile_bound, ProfileBound, SparseWitness, TraceCertificate, WitnessOrigin,
};
use crate::spectral::{analytic_nullity, decompose, SpectralBasis, StateFunction};
use crate::{Error, Result};

const NEGATIVE_TOL: f64 = 1e-9;
const MEASURE_SLACK: f64 = 1e-12;
const SWEEP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SseConfig {
    pub alpha: f64,
    pub c_param: f64,
    pub delta: f64,
    pub eps: f64,
    /// Defaults to `64 C^2`.
    pub b: Option<f64>,
    pub budget: usize,
    pub seed: u64,
}

impl SseConfig {
    pub fn new(alpha: f64, c_param: f64, delta: f64, eps: f64) -> Self {
        let opts = EnumOptions::default();
        Self { alpha, c_param, delta, eps, b: None, budget: opts.budget, seed: opts.seed }
    }

    pub fn b(&self) -> f64 {
        self.b.unwrap_or(64.0 * self.c_param * self.c_param)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0 / 3.0) {
            return Err(Error::BadRange(format!("alpha = {} must lie in (0, 1/3]", self.alpha)));
        }
        if !(self.c_param >= 1.0 && self.c_param.is_finite()) {
            return Err(Error::BadRange(format!("C = {} must be at least 1", self.c_param)));
        }
        if !(self.delta > 0.0 && self.delta <= 0.5) {
            return Err(Error::BadRange(format!("delta = {} must lie in (0, 1/2]", self.delta)));
        }
        if !(self.eps > 0.0 && self.eps <= 0.25) {
            return Err(Error::BadRange(format!("eps = {} must lie in (0, 1/4]", self.eps)));
        }
        if !(self.b() > 0.0 && self.b().is_finite()) {
            return Err(Error::BadRange(format!("B = {} must be positive", self.b())));
        }
        if self.budget == 0 {
            return Err(Error::BadRange("net budget must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    HighNullity,
    LowNullity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnumSummary {
    pub m: usize,
    pub net_size: usize,
    pub exhaustive: bool,
    pub radius: f64,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SseOutcome {
    pub witness: SparseWitness,
    pub branch: Branch,
    pub gamma: f64,
    /// `B eps / (alpha delta)` exceeded 1 and was clamped.
    pub gamma_clamped: bool,
    /// Threshold `alpha gamma` used for the nullity test.
    pub eta: f64,
    /// The enumeration threshold had to be raised to `2 eps`.
    pub eta_raised: bool,
    pub nullity: usize,
    pub nullity_threshold: f64,
    /// Heat branch with unclamped `gamma`: `mu <= delta`, `Phi <= gamma` hold unconditionally.
    pub certified: bool,
    /// `mu[g] <= delta (1 + 1/C)`.
    pub meets_mu_target: bool,
    pub certificate: Option<TraceCertificate>,
    pub enumeration: Option<EnumSummary>,
}

/// Heat branch when `nullity_{alpha gamma}(L) >= (4/delta) n^alpha`,
/// eigenspace enumeration at `eta = alpha gamma` otherwise, with
/// `gamma = B eps / (alpha delta)`.
pub fn analytic_sse(b: &SpectralBasis, cfg: &SseConfig) -> Result<SseOutcome> {
    cfg.validate()?;
    let n = b.n() as f64;
    let raw_gamma = cfg.b() * cfg.eps / (cfg.alpha * cfg.delta);
    let gamma_clamped = raw_gamma > 1.0;
    let gamma = raw_gamma.min(1.0);
    let eta = cfg.alpha * gamma;
    let nullity = analytic_nullity(b, eta);
    let nullity_threshold = 4.0 / cfg.delta * n.powf(cfg.alpha);
    let mu_target = cfg.delta * (1.0 + 1.0 / cfg.c_param);

    if b.n() >= 2 && nullity as f64 >= nullity_threshold {
        let (witness, cert) = nullity_witness(b, gamma, cfg.alpha)?;
        if witness.mu_g > cfg.delta + 1e-9 || witness.phi_g > gamma + 1e-9 {
            return Err(Error::GuaranteeViolated(format!(
                "high-nullity witness has mu = {:.6e}, Phi = {:.6e} (bounds {:.6e}, {gamma:.6e})",
                witness.mu_g, witness.phi_g, cfg.delta
            )));
        }
        let meets_mu_target = witness.mu_g <= mu_target + 1e-9;
        return Ok(SseOutcome {
            witness,
            branch: Branch::HighNullity,
            gamma,
            gamma_clamped,
            eta,
            eta_raised: false,
            nullity,
            nullity_threshold,
            certified: !gamma_clamped,
            meets_mu_target,
            certificate: Some(cert),
            enumeration: None,
        });
    }

    let eta_raised = eta < 2.0 * cfg.eps;
    let enum_eta = if eta_raised { (2.0 * cfg.eps).min(1.0) } else { eta };
    let opts = EnumOptions { budget: cfg.budget, seed: cfg.seed };
    let found = enumerate_sparse(b, enum_eta, cfg.eps, cfg.delta, opts)?;
    let witness = SparseWitness {
        g: found.g,
        mu_g: found.mu_g,
        phi_g: found.phi_g,
        origin: WitnessOrigin::Enumeration,
        x0: None,
    };
    let meets_mu_target = witness.mu_g <= mu_target + 1e-9;
    Ok(SseOutcome {
        witness,
        branch: Branch::LowNullity,
        gamma,
        gamma_clamped,
        eta: enum_eta,
        eta_raised,
        nullity,
        nullity_threshold,
        certified: false,
        meets_mu_target,
        certificate: None,
        enumeration: Some(EnumSummary {
            m: found.m,
            net_size: found.net_size,
            exhaustive: found.exhaustive,
            radius: found.radius,
            coeffs: found.coeffs,
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutResult {
    pub set: VertexSet,
    pub measure: f64,
    pub conductance: f64,
    /// Smallest value of the input function on `set`.
    pub threshold: f64,
}

/// Threshold sweep over the level sets `{g > theta}` with
/// `theta >= ||g||_1 / (4r)`, each of measure at most `4r`: returns the one
/// with the smallest conductance (ties to the smaller measure, then the
/// lower threshold). For `r >= mu[g]` the family is nonempty and its best
/// member has `Phi <= 2 sqrt(Phi[g])`.
pub fn sweep_cut(c: &ReversibleChain, g: &StateFunction, r: f64) -> Result<CutResult> {
    let n = c.n();
    if g.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: g.len() });
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::BadRange(format!("sweep budget r = {r} must be positive")));
    }
    for (x, &v) in g.values().iter().enumerate() {
        if v < -NEGATIVE_TOL {
            return Err(Error::NegativeInput { state: x, value: v });
        }
    }
    if g.values().iter().all(|&v| v <= 0.0) {
        return Err(Error::ZeroFunction);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| g[b].total_cmp(&g[a]).then(a.cmp(&b)));
    let p = c.pi().as_slice();
    let q = symmetric_flow(c);
    let budget = 4.0 * r + MEASURE_SLACK;
    let theta0 = c.pi().norm1(g) / (4.0 * r);

    let mut inside = vec![false; n];
    let mut measure = 0.0;
    let mut cut = 0.0;
    // (conductance, measure, threshold, prefix length)
    let mut best: Option<(f64, f64, f64, usize)> = None;
    for (i, &x) in order.iter().enumerate() {
        let to_inside: f64 = (0..n).filter(|&y| inside[y]).map(|y| q[(x, y)]).sum();
        cut += p[x] - q[(x, x)] - 2.0 * to_inside;
        measure += p[x];
        inside[x] = true;
        let at_break = i + 1 == n || g[order[i + 1]] < g[x];
        if !at_break || g[x] <= theta0 || measure > budget {
            continue;
        }
        let conductance = cut.max(0.0) / measure;
        let threshold = g[x];
        let better = match best {
            None => true,
            Some((bc, bm, bt, _)) => {
                conductance < bc || (conductance == bc && (measure < bm || (measure == bm && threshold < bt)))
            }
        };
        if better {
            best = Some((conductance, measure, threshold, i + 1));
        }
    }

    let (_, _, threshold, len) = best.ok_or(Error::NoFeasibleThreshold { budget: 4.0 * r })?;
    let set = VertexSet::new(n, order[..len].to_vec())?;
    let measure = c.pi().mass(&set);
    let conductance = phi_set(c, &set)?;
    Ok(CutResult { set, measure, conductance, threshold })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SseSets {
    pub outcome: SseOutcome,
    /// Sweep budget `mu[|g|]`.
    pub r: f64,
    pub cut: CutResult,
}

/// Rounds the witness of `outcome` to a set. Enumeration witnesses may
/// change sign; they are replaced by their absolute value, which has the
/// same sparsity and no larger conductance.
pub fn round_outcome(c: &ReversibleChain, outcome: SseOutcome) -> Result<SseSets> {
    let g = outcome.witness.g.abs();
    let r = crate::functionals::mu(c.pi(), &g)?;
    let phi_g = crate::functionals::phi(c, &g)?;
    let cut = sweep_cut(c, &g, r)?;
    check_sweep(&cut, r, phi_g)?;
    Ok(SseSets { outcome, r, cut })
}

/// Sweep guarantee: `pi(T) <= 4r` and `Phi[T] <= 2 sqrt(Phi[g])`.
pub fn check_sweep(cut: &CutResult, r: f64, phi_g: f64) -> Result<()> {
    if cut.measure > 4.0 * r + MEASURE_SLACK || cut.conductance > 2.0 * phi_g.max(0.0).sqrt() + SWEEP_SLACK {
        return Err(Error::GuaranteeViolated(format!(
            "sweep cut has measure {:.6e} (bound {:.6e}) and conductance {:.6e} (bound {:.6e})",
            cut.measure,
            4.0 * r,
            cut.conductance,
            2.0 * phi_g.max(0.0).sqrt()
        )));
    }
    Ok(())
}

/// [`analytic_sse`] followed by a sweep cut.
pub fn sse_sets(c: &ReversibleChain, cfg: &SseConfig) -> Result<SseSets> {
    let b = decompose(c)?;
    let outcome = analytic_sse(&b, cfg)?;
    round_outcome(c, outcome)
}

/// Composed check of `Phi_G(16 k^{-1+1/A}) <= 2 sqrt(A lambda_k log_k n)`
/// through the profile witness and its sweep cut.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallSetReport {
    pub profile: ProfileBound,
    pub cut: CutResult,
    pub measure_bound: f64,
    pub conductance_bound: f64,
    pub holds: bool,
}

pub fn small_set_check(b: &SpectralBasis, k: usize, a: f64) -> Result<SmallSetReport> {
    let profile = profile_bound(b, k, a)?;
    let w = &profile.witness;
    let cut = sweep_cut(b.chain(), &w.g, w.mu_g)?;
    check_sweep(&cut, w.mu_g, w.phi_g)?;
    let measure_bound = 16.0 * (k as f64).powf(-1.0 + 1.0 / a);
    let conductance_bound = 2.0 * profile.phi_bound.sqrt();
    let holds = cut.measure <= measure_bound + MEASURE_SLACK && cut.conductance <= conductance_bound + SWEEP_SLACK;
    if !holds {
        return Err(Error::GuaranteeViolated(format!(
            "cut has measure {:.6e} (bound {measure_bound:.6e}), conductance {:.6e} (bound {conductance_bound:.6e})",
            cut.measure, cut.conductance
        )));
    }
    Ok(SmallSetReport { profile, cut, measure_bound, conductance_bound, holds })
}
