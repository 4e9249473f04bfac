//! Eigendecomposition of the Laplacian `L = id - K` of a reversible chain in
//! the `pi`-weighted inner product, and the heat operator `H_t = exp(-tL)`
//! applied through that eigenbasis.

use std::ops::Index;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::chain::{ReversibleChain, StationaryMeasure};
use crate::{Error, Result};

/// Absolute slack when counting eigenvalues below a threshold.
pub const NULLITY_SLACK: f64 = 1e-12;

const RANGE_SLACK: f64 = 1e-9;
const ORTHO_TOL: f64 = 1e-9;
const RESIDUAL_TOL: f64 = 1e-8;

/// A real-valued function on the states of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateFunction(Vec<f64>);

impl StateFunction {
    /// Checks that every entry is finite.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(x) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(x));
        }
        Ok(Self(values))
    }

    pub(crate) fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    /// Checks finiteness and that the length matches `n`.
    pub fn for_states(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: values.len() });
        }
        Self::new(values)
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self(vec![value; n])
    }

    /// `phi_x = 1_x / pi(x)`, the density of the point mass at `x`.
    pub fn point_density(pi: &StationaryMeasure, x: usize) -> Self {
        let mut v = vec![0.0; pi.len()];
        v[x] = 1.0 / pi.as_slice()[x];
        Self(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| c * v).collect())
    }

    pub fn abs(&self) -> Self {
        Self(self.0.iter().map(|v| v.abs()).collect())
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl Index<usize> for StateFunction {
    type Output = f64;

    fn index(&self, x: usize) -> &f64 {
        &self.0[x]
    }
}

/// `pi`-orthonormal eigenbasis of the Laplacian of a reversible chain.
///
/// `psis` is stored column-wise: column `i` holds `psi_{i+1}(x)` for every
/// state `x`. The first eigenfunction is the constant `1` with eigenvalue
/// exactly zero.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    chain: ReversibleChain,
    lambdas: Vec<f64>,
    psis: DMatrix<f64>,
}

impl SpectralBasis {
    pub fn chain(&self) -> &ReversibleChain {
        &self.chain
    }

    pub fn pi(&self) -> &StationaryMeasure {
        self.chain.pi()
    }

    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    /// Eigenvalues in ascending order.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// `lambda_k`, one-based to match the usual `lambda_1 <= ... <= lambda_n`.
    pub fn lambda(&self, k: usize) -> f64 {
        self.lambdas[k - 1]
    }

    /// Matrix whose column `i` is the eigenfunction for `lambdas()[i]`.
    pub fn psi_matrix(&self) -> &DMatrix<f64> {
        &self.psis
    }

    /// Eigenfunction for `lambdas()[i]` (zero-based).
    pub fn psi(&self, i: usize) -> StateFunction {
        StateFunction::from_vec(self.psis.column(i).iter().copied().collect())
    }

    /// Coordinates `<f, psi_i>` of `f` in the eigenbasis.
    pub fn coefficients(&self, f: &StateFunction) -> Vec<f64> {
        let p = self.pi().as_slice();
        let weighted = DVector::from_iterator(self.n(), p.iter().zip(f.values()).map(|(p, v)| p * v));
        self.psis.tr_mul(&weighted).iter().copied().collect()
    }

    /// `sum_i coeffs[i] psi_i`; `coeffs` may be shorter than `n`.
    pub fn combine(&self, coeffs: &[f64]) -> StateFunction {
        let n = self.n();
        let mut out = vec![0.0; n];
        for (i, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (x, o) in out.iter_mut().enumerate() {
                *o += c * self.psis[(x, i)];
            }
        }
        StateFunction::from_vec(out)
    }

    /// Applies the spectral multiplier `h(lambda_i)` to `f`.
    pub fn apply_multiplier(&self, f: &StateFunction, h: impl Fn(f64) -> f64) -> StateFunction {
        let coeffs: Vec<f64> = self.coefficients(f).into_iter().zip(&self.lambdas).map(|(c, &l)| c * h(l)).collect();
        self.combine(&coeffs)
    }

    /// `L f` evaluated directly from the kernel.
    pub fn apply_laplacian(&self, f: &StateFunction) -> StateFunction {
        let kf = self.chain.apply_kernel(f);
        StateFunction::from_vec(f.values().iter().zip(kf.values()).map(|(a, b)| a - b).collect())
    }
}

/// Eigendecomposition of `L` via the symmetric conjugate `D^{1/2} L D^{-1/2}`
/// where `D = diag(pi)`.
///
/// The known null vector `sqrt(pi)` is shifted to eigenvalue 3 before the
/// dense solve so that the remaining eigenvectors come out orthogonal to it;
/// it is then reinstated as `psi_1 = 1` with `lambda_1 = 0`. Eigenvectors
/// are re-orthonormalized in index order and sign-normalized (first entry of
/// largest magnitude positive), which makes the output deterministic.
pub fn decompose(c: &ReversibleChain) -> Result<SpectralBasis> {
    let n = c.n();
    let p = c.pi().as_slice();
    let sqrt_pi: Vec<f64> = p.iter().map(|v| v.sqrt()).collect();
    let k = c.kernel();

    // Symmetrized conjugate plus the rank-one shift 3 * sqrt(pi) sqrt(pi)^T.
    let mut a = DMatrix::from_fn(n, n, |x, y| {
        let flow = 0.5 * (p[x] * k[(x, y)] + p[y] * k[(y, x)]);
        let id = if x == y { 1.0 } else { 0.0 };
        id - flow / (sqrt_pi[x] * sqrt_pi[y]) + 3.0 * sqrt_pi[x] * sqrt_pi[y]
    });
    a = (&a + a.transpose()) * 0.5;

    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    // The shifted null vector is the largest eigenvalue.
    let shifted = order.pop().expect("n >= 1");
    if (eig.eigenvalues[shifted] - 3.0).abs() > 1e-6 {
        return Err(Error::EigensolverFailure(format!(
            "shifted stationary direction has eigenvalue {} instead of 3",
            eig.eigenvalues[shifted]
        )));
    }

    let mut lambdas = Vec::with_capacity(n);
    let mut vectors: Vec<DVector<f64>> = Vec::with_capacity(n);
    lambdas.push(0.0);
    vectors.push(DVector::from_column_slice(&sqrt_pi));
    for &i in &order {
        let mut l = eig.eigenvalues[i];
        if l < 0.0 {
            if l < -RANGE_SLACK {
                return Err(Error::EigensolverFailure(format!("negative eigenvalue {l:.3e}")));
            }
            l = 0.0;
        }
        lambdas.push(l);
        vectors.push(eig.eigenvectors.column(i).into_owned());
    }
    if let Some(&top) = lambdas.last() {
        if top > 2.0 + RANGE_SLACK {
            return Err(Error::EigensolverFailure(format!("eigenvalue {top} exceeds 2")));
        }
    }

    // Modified Gram-Schmidt in index order; the first vector is fixed.
    for i in 1..n {
        for j in 0..i {
            let proj = vectors[j].dot(&vectors[i]);
            let vj = vectors[j].clone();
            vectors[i].axpy(-proj, &vj, 1.0);
        }
        let norm = vectors[i].norm();
        if norm < 0.5 {
            return Err(Error::EigensolverFailure(format!(
                "eigenvector {i} lost orthogonality (residual norm {norm:.3e})"
            )));
        }
        vectors[i] /= norm;
        if leading_entry(vectors[i].as_slice()) < 0.0 {
            vectors[i] = -vectors[i].clone();
        }
    }

    let psis = DMatrix::from_fn(n, n, |x, i| vectors[i][x] / sqrt_pi[x]);
    let basis = SpectralBasis { chain: c.clone(), lambdas, psis };
    validate(&basis)?;
    Ok(basis)
}

/// First entry of largest magnitude.
fn leading_entry(v: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for &x in v {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    best
}

fn validate(b: &SpectralBasis) -> Result<()> {
    let n = b.n();
    let p = b.pi().as_slice();
    // Orthonormality in the pi inner product.
    let weighted = DMatrix::from_fn(n, n, |x, i| p[x] * b.psis[(x, i)]);
    let gram = b.psis.tr_mul(&weighted);
    let ortho = (gram - DMatrix::identity(n, n)).amax();
    if ortho > ORTHO_TOL {
        return Err(Error::EigensolverFailure(format!("orthonormality defect {ortho:.3e}")));
    }
    // ||L psi - lambda psi||_{2,pi}.
    let lpsi = &b.psis - b.chain.kernel() * &b.psis;
    for i in 0..n {
        let r: f64 = (0..n)
            .map(|x| {
                let d = lpsi[(x, i)] - b.lambdas[i] * b.psis[(x, i)];
                p[x] * d * d
            })
            .sum::<f64>()
            .sqrt();
        if r > RESIDUAL_TOL {
            return Err(Error::EigensolverFailure(format!(
                "eigenpair {i} residual {r:.3e} exceeds {RESIDUAL_TOL:.0e}"
            )));
        }
    }
    Ok(())
}

/// `H_t f = sum_i exp(-t lambda_i) <f, psi_i> psi_i`.
pub fn heat_apply(b: &SpectralBasis, t: f64, f: &StateFunction) -> StateFunction {
    b.apply_multiplier(f, |l| (-t * l).exp())
}

/// `tr(H_t) = sum_i exp(-t lambda_i)`.
pub fn heat_trace(b: &SpectralBasis, t: f64) -> f64 {
    b.lambdas.iter().map(|l| (-t * l).exp()).sum()
}

/// `tr(L H_t) = sum_i lambda_i exp(-t lambda_i)`.
pub fn laplacian_heat_trace(b: &SpectralBasis, t: f64) -> f64 {
    b.lambdas.iter().map(|l| l * (-t * l).exp()).sum()
}

/// `nullity_eta(L) = #{i : lambda_i <= eta}`, with absolute slack [`NULLITY_SLACK`].
pub fn analytic_nullity(b: &SpectralBasis, eta: f64) -> usize {
    b.lambdas.iter().filter(|&&l| l <= eta + NULLITY_SLACK).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{from_graph, WeightedGraph};

    fn basis(n: usize, edges: &[(usize, usize, f64)]) -> SpectralBasis {
        let g = WeightedGraph::new(n, edges.to_vec(), false).unwrap();
        let (c, _) = from_graph(&g).unwrap().into_reversible().unwrap();
        decompose(&c).unwrap()
    }

    fn cycle4() -> SpectralBasis {
        basis(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)])
    }

    #[test]
    fn cycle_spectrum() {
        let b = cycle4();
        for (l, want) in b.lambdas().iter().zip([0.0, 1.0, 1.0, 2.0]) {
            assert!((l - want).abs() < 1e-12, "{:?}", b.lambdas());
        }
    }

    #[test]
    fn complete_graph_spectrum() {
        let mut edges = vec![];
        for u in 0..4 {
            for v in (u + 1)..4 {
                edges.push((u, v, 1.0));
            }
        }
        let b = basis(4, &edges);
        for (l, want) in b.lambdas().iter().zip([0.0, 4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0]) {
            assert!((l - want).abs() < 1e-12);
        }
    }

    #[test]
    fn weak_bridge_gives_tiny_lambda2() {
        let b = basis(6, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0), (3, 4, 1.0), (4, 5, 1.0), (5, 3, 1.0), (2, 3, 1e-9)]);
        assert!(b.lambda(2) <= 1e-8);
        assert!(b.lambda(3) > 0.1);
    }

    #[test]
    fn first_eigenfunction_is_constant() {
        let b = cycle4();
        assert_eq!(b.lambda(1), 0.0);
        assert!(b.psi(0).values().iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn heat_at_zero_is_identity_and_constants_are_fixed() {
        let b = cycle4();
        let f = StateFunction::new(vec![0.3, -1.0, 2.5, 0.0]).unwrap();
        let h0 = heat_apply(&b, 0.0, &f);
        for (a, c) in h0.values().iter().zip(f.values()) {
            assert!((a - c).abs() < 1e-10);
        }
        let one = StateFunction::constant(4, 2.0);
        for t in [0.5, 3.0, 100.0] {
            let h = heat_apply(&b, t, &one);
            assert!(h.values().iter().all(|v| (v - 2.0).abs() < 1e-10));
        }
    }

    #[test]
    fn traces_on_cycle() {
        let b = cycle4();
        let e = (-1.0f64).exp();
        assert!((heat_trace(&b, 0.0) - 4.0).abs() < 1e-12);
        assert!((heat_trace(&b, 1.0) - (1.0 + 2.0 * e + e * e)).abs() < 1e-12);
        assert!((heat_trace(&b, 60.0) - 1.0).abs() < 1e-12);
        assert!((laplacian_heat_trace(&b, 1.0) - (2.0 * e + 2.0 * e * e)).abs() < 1e-12);
        // tr(L) = n - sum_x K(x,x) = 4
        assert!((laplacian_heat_trace(&b, 0.0) - 4.0).abs() < 1e-12);
        assert!(laplacian_heat_trace(&b, 60.0).abs() < 1e-12);
    }

    #[test]
    fn nullity_counts() {
        let b = cycle4();
        assert_eq!(analytic_nullity(&b, 0.0), 1);
        assert_eq!(analytic_nullity(&b, 1.0), 3);
        assert_eq!(analytic_nullity(&b, 2.0), 4);
    }

    #[test]
    fn state_function_rejects_non_finite() {
        assert!(StateFunction::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(StateFunction::for_states(3, vec![1.0, 2.0]).is_err());
    }
}
