//! Analytic conductance and sparsity of functions, set conductance, and
//! exhaustive oracles for the conductance and spectral profiles.

use std::cmp::Ordering;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::chain::{ReversibleChain, StationaryMeasure, VertexSet};
use crate::heat_method;
use crate::spectral::{decompose, StateFunction};
use crate::{Error, Result};

/// Largest state count for the subset-enumeration conductance oracle.
pub const CONDUCTANCE_ORACLE_MAX_N: usize = 20;
/// Largest state count for the Dirichlet-block spectral profile oracle.
pub const SPECTRAL_ORACLE_MAX_N: usize = 16;
/// Slack on measure budgets so that a set of measure exactly `r` is never
/// lost to summation order.
pub const BUDGET_SLACK: f64 = 1e-12;

/// Analytic conductance `Phi[f] = <f, Lf> / <f, f>`.
///
/// The numerator is evaluated as the Dirichlet form, which is exact for
/// reversible chains and never negative.
pub fn phi(c: &ReversibleChain, f: &StateFunction) -> Result<f64> {
    check_len(c.n(), f)?;
    let norm = c.pi().norm2_sq(f);
    if norm == 0.0 {
        return Err(Error::ZeroFunction);
    }
    Ok(c.dirichlet_form(f) / norm)
}

/// Analytic sparsity `mu[f] = ||f||_1^2 / ||f||_2^2`.
pub fn mu(pi: &StationaryMeasure, f: &StateFunction) -> Result<f64> {
    check_len(pi.len(), f)?;
    let norm = pi.norm2_sq(f);
    if norm == 0.0 {
        return Err(Error::ZeroFunction);
    }
    let l1 = pi.norm1(f);
    Ok(l1 * l1 / norm)
}

/// Conductance of a set: the probability that one stationary step from a
/// state of `S` leaves `S`.
pub fn phi_set(c: &ReversibleChain, s: &VertexSet) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::EmptySet);
    }
    if s.n() != c.n() {
        return Err(Error::LengthMismatch { expected: c.n(), got: s.n() });
    }
    let p = c.pi().as_slice();
    let k = c.kernel();
    let inside = s.mask();
    let mut escaping = 0.0;
    for &x in s.members() {
        let out: f64 = (0..c.n()).filter(|&y| !inside[y]).map(|y| k[(x, y)]).sum();
        escaping += p[x] * out;
    }
    Ok(escaping / c.pi().mass(s))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Witness {
    Set(VertexSet),
    Function(StateFunction),
    None,
}

/// A value of a profile at budget `r` together with the object achieving it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub r: f64,
    /// `+inf` when nothing fits the budget.
    pub value: f64,
    pub witness: Witness,
    /// Set when `value` is only an upper bound on the profile.
    pub upper_bound_only: bool,
}

impl ProfilePoint {
    fn infeasible(r: f64, upper_bound_only: bool) -> Self {
        Self { r, value: f64::INFINITY, witness: Witness::None, upper_bound_only }
    }
}

/// Exact `Phi_G(r) = min { Phi[S] : S nonempty, pi(S) <= r }` by Gray-code
/// enumeration of all subsets. Ties go to the lexicographically smallest set.
pub fn conductance_profile_oracle(c: &ReversibleChain, r: f64) -> Result<ProfilePoint> {
    let n = c.n();
    if n > CONDUCTANCE_ORACLE_MAX_N {
        return Err(Error::TooLarge { n, cap: CONDUCTANCE_ORACLE_MAX_N });
    }
    check_budget(r)?;
    let p = c.pi().as_slice();
    let flow = symmetric_flow(c);
    let limit = r + BUDGET_SLACK;

    let mut mask = 0u64;
    let mut mass = 0.0;
    let mut internal = 0.0;
    let mut best: Option<(f64, u64)> = None;
    for i in 1u64..(1u64 << n) {
        let v = i.trailing_zeros() as usize;
        let bit = 1u64 << v;
        let cross: f64 = (0..n).filter(|&y| y != v && mask >> y & 1 == 1).map(|y| flow[(v, y)]).sum();
        if mask & bit == 0 {
            internal += 2.0 * cross + flow[(v, v)];
            mass += p[v];
        } else {
            internal -= 2.0 * cross + flow[(v, v)];
            mass -= p[v];
        }
        mask ^= bit;
        if mass > limit {
            continue;
        }
        let value = (mass - internal).max(0.0) / mass;
        let better = match best {
            None => true,
            Some((bv, bm)) => match value.total_cmp(&bv) {
                Ordering::Less => true,
                Ordering::Equal => lex_less(mask, bm),
                Ordering::Greater => false,
            },
        };
        if better {
            best = Some((value, mask));
        }
    }

    Ok(match best {
        None => ProfilePoint::infeasible(r, false),
        Some((_, bits)) => {
            let set = VertexSet::from_bits(n, bits);
            let value = phi_set(c, &set)?;
            ProfilePoint { r, value, witness: Witness::Set(set), upper_bound_only: false }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralProfileVariant {
    /// `Lambda_G(r)`: functions with `pi(supp f) <= r`.
    Support,
    /// `Lambda'_G(r)`: functions with `mu[f] <= r`; only an upper bound is available.
    Sparsity,
}

/// Spectral profile at budget `r`.
///
/// For [`SpectralProfileVariant::Support`] the minimum over functions
/// supported on `S` is the smallest eigenvalue of the Dirichlet block of the
/// symmetrized Laplacian on `S`, whose eigenvector can be taken
/// nonnegative. Enlarging `S` can only lower that eigenvalue, so only
/// budget-maximal sets are examined. For [`SpectralProfileVariant::Sparsity`]
/// the best heat witness with `mu <= r` is returned as an upper bound.
pub fn spectral_profile_oracle(c: &ReversibleChain, r: f64, variant: SpectralProfileVariant) -> Result<ProfilePoint> {
    check_budget(r)?;
    match variant {
        SpectralProfileVariant::Support => support_profile(c, r),
        SpectralProfileVariant::Sparsity => {
            let basis = decompose(c)?;
            heat_method::sparsity_profile_upper_bound(&basis, r)
        }
    }
}

fn support_profile(c: &ReversibleChain, r: f64) -> Result<ProfilePoint> {
    let n = c.n();
    if n > SPECTRAL_ORACLE_MAX_N {
        return Err(Error::TooLarge { n, cap: SPECTRAL_ORACLE_MAX_N });
    }
    let p = c.pi().as_slice();
    let flow = symmetric_flow(c);
    let limit = r + BUDGET_SLACK;
    // Symmetric conjugate of L: delta_xy - F(x,y) / sqrt(pi(x) pi(y)).
    let conj = DMatrix::from_fn(n, n, |x, y| {
        let id = if x == y { 1.0 } else { 0.0 };
        id - flow[(x, y)] / (p[x] * p[y]).sqrt()
    });

    let mut best: Option<(f64, u64, Vec<f64>)> = None;
    for bits in 1u64..(1u64 << n) {
        let members: Vec<usize> = (0..n).filter(|&x| bits >> x & 1 == 1).collect();
        let mass: f64 = members.iter().map(|&x| p[x]).sum();
        if mass > limit {
            continue;
        }
        let maximal = (0..n).all(|y| bits >> y & 1 == 1 || mass + p[y] > limit);
        if !maximal {
            continue;
        }
        let m = members.len();
        let block = DMatrix::from_fn(m, m, |i, j| conj[(members[i], members[j])]);
        let eig = SymmetricEigen::new(block);
        let (idx, value) =
            eig.eigenvalues.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).expect("nonempty block");
        let better = match &best {
            None => true,
            Some((bv, bm, _)) => match value.total_cmp(bv) {
                Ordering::Less => true,
                Ordering::Equal => lex_less(bits, *bm),
                Ordering::Greater => false,
            },
        };
        if better {
            let mut f = vec![0.0; n];
            for (i, &x) in members.iter().enumerate() {
                // Perron vector: entries share a sign, so absolute values recover it.
                f[x] = eig.eigenvectors[(i, idx)].abs() / p[x].sqrt();
            }
            best = Some((value, bits, f));
        }
    }

    match best {
        None => Ok(ProfilePoint::infeasible(r, false)),
        Some((_, _, f)) => {
            let f = StateFunction::new(f)?;
            let value = phi(c, &f)?;
            Ok(ProfilePoint { r, value, witness: Witness::Function(f), upper_bound_only: false })
        }
    }
}

/// `(F + F^T) / 2` for the flow `F(x, y) = pi(x) K(x, y)`.
pub(crate) fn symmetric_flow(c: &ReversibleChain) -> DMatrix<f64> {
    let f = c.flow();
    (&f + f.transpose()) * 0.5
}

/// Lexicographic order of the sorted member lists of two bitsets.
fn lex_less(a: u64, b: u64) -> bool {
    let diff = a ^ b;
    if diff == 0 {
        return false;
    }
    let v = diff.trailing_zeros();
    let above = !((1u64 << v) | ((1u64 << v) - 1));
    if a >> v & 1 == 1 {
        // b continues past the shared prefix with something larger than v, or ends.
        b & above != 0
    } else {
        a & above == 0
    }
}

fn check_budget(r: f64) -> Result<()> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::BadRange(format!("budget r = {r} must lie in (0, 1]")));
    }
    Ok(())
}

fn check_len(n: usize, f: &StateFunction) -> Result<()> {
    if f.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: f.len() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{from_graph, WeightedGraph};

    fn chain(n: usize, edges: &[(usize, usize, f64)]) -> ReversibleChain {
        let g = WeightedGraph::new(n, edges.to_vec(), false).unwrap();
        from_graph(&g).unwrap().into_reversible().unwrap().0
    }

    fn k4() -> ReversibleChain {
        let mut e = vec![];
        for u in 0..4 {
            for v in (u + 1)..4 {
                e.push((u, v, 1.0));
            }
        }
        chain(4, &e)
    }

    fn two_triangles(bridge: f64) -> ReversibleChain {
        chain(6, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0), (3, 4, 1.0), (4, 5, 1.0), (5, 3, 1.0), (2, 3, bridge)])
    }

    #[test]
    fn phi_and_mu_of_simple_functions() {
        let c = k4();
        let one = StateFunction::constant(4, 3.0);
        assert!(phi(&c, &one).unwrap().abs() < 1e-15);
        assert!((mu(c.pi(), &one).unwrap() - 1.0).abs() < 1e-15);
        let point = VertexSet::singleton(4, 2).unwrap().indicator();
        assert!((phi(&c, &point).unwrap() - 1.0).abs() < 1e-15);
        assert!((mu(c.pi(), &point).unwrap() - 0.25).abs() < 1e-15);
        let density = StateFunction::point_density(c.pi(), 1);
        assert!((mu(c.pi(), &density).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(phi(&c, &StateFunction::constant(4, 0.0)), Err(Error::ZeroFunction)));
        assert!(matches!(mu(c.pi(), &StateFunction::constant(4, 0.0)), Err(Error::ZeroFunction)));
    }

    #[test]
    fn set_conductance_of_bridged_triangles() {
        // pi proportional to degrees (2,2,3,3,2,2)/14; the only escaping mass
        // is pi(2) K(2,3) = (3/14)(1/3) = 1/14 out of pi(S) = 7/14.
        let c = two_triangles(1.0);
        let s = VertexSet::new(6, vec![0, 1, 2]).unwrap();
        assert!((phi_set(&c, &s).unwrap() - 1.0 / 7.0).abs() < 1e-14);
        assert!((phi(&c, &s.indicator()).unwrap() - 1.0 / 7.0).abs() < 1e-14);
        assert!(phi_set(&c, &VertexSet::full(6)).unwrap().abs() < 1e-15);
        assert!(matches!(phi_set(&c, &VertexSet::new(6, vec![]).unwrap()), Err(Error::EmptySet)));
    }

    #[test]
    fn conductance_oracle_examples() {
        let p = conductance_profile_oracle(&k4(), 0.3).unwrap();
        assert!((p.value - 1.0).abs() < 1e-14);
        match p.witness {
            Witness::Set(s) => assert_eq!(s.len(), 1),
            _ => panic!(),
        }
        let full = conductance_profile_oracle(&k4(), 1.0).unwrap();
        assert!(full.value.abs() < 1e-15);
        assert_eq!(full.witness, Witness::Set(VertexSet::full(4)));

        let bridge = 1e-9;
        let p = conductance_profile_oracle(&two_triangles(bridge), 0.5).unwrap();
        assert!(p.value <= 10.0 * bridge);

        let tiny = conductance_profile_oracle(&k4(), 0.1).unwrap();
        assert!(tiny.value.is_infinite());
        assert_eq!(tiny.witness, Witness::None);
    }

    #[test]
    fn spectral_oracle_examples() {
        let p = spectral_profile_oracle(&k4(), 1.0, SpectralProfileVariant::Support).unwrap();
        assert!(p.value.abs() < 1e-12);
        let p = spectral_profile_oracle(&k4(), 0.3, SpectralProfileVariant::Support).unwrap();
        assert!((p.value - 1.0).abs() < 1e-12);
        let p = spectral_profile_oracle(&two_triangles(1e-9), 0.5, SpectralProfileVariant::Support).unwrap();
        assert!(p.value <= 1e-7);
        let p = spectral_profile_oracle(&k4(), 0.3, SpectralProfileVariant::Sparsity).unwrap();
        assert!(p.upper_bound_only);
        assert!(p.value <= 1.0 + 1e-12);
    }

    #[test]
    fn oracles_refuse_large_inputs() {
        let n = 21;
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        let c = chain(n, &edges);
        assert!(matches!(conductance_profile_oracle(&c, 0.5), Err(Error::TooLarge { .. })));
        assert!(matches!(
            spectral_profile_oracle(&c, 0.5, SpectralProfileVariant::Support),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn lexicographic_order_of_bitsets() {
        // {0} < {0,1} < {0,2} < {1}
        assert!(lex_less(0b001, 0b011));
        assert!(lex_less(0b011, 0b101));
        assert!(lex_less(0b101, 0b010));
        assert!(!lex_less(0b010, 0b101));
        assert!(!lex_less(0b011, 0b001));
    }
}
