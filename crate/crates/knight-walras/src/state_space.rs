//! Finite state space primitives: contingent plans, prior polytopes, the
//! worst-case expectation, state prices, and the mean-ambiguity-free
//! subspace.
//!
//! A prior polytope is stored as an explicit vertex list, so the
//! sublinear expectation of a plan is an exact maximum of finitely many
//! linear expectations. Interval families over two states enter through
//! [`PriorSet::interval_family`], which emits the two extreme vertices.

use serde::{Deserialize, Serialize};

use crate::error::KwError;
use crate::scalar::{dot, fp, Scalar};
use crate::Result;

/// Absolute tolerance used to validate probability vectors and to
/// deduplicate vertices.
pub const DEFAULT_PROBABILITY_TOL: f64 = 1e-9;
/// Pivot threshold for the rank-revealing elimination behind
/// [`PriorSet::mean_ambiguity_free_basis`].
pub const DEFAULT_PIVOT_TOL: f64 = 1e-10;
/// Default spread tolerance for [`PriorSet::is_mean_ambiguity_free`].
pub const DEFAULT_MAF_TOL: f64 = 1e-9;

/// A state-contingent plan: one real value per state.
///
/// Doubles as the payoff/consumption bundle type and, via
/// [`StatePrice`], as the coordinate type for prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingentPlan<S: Scalar> {
    values: Vec<S>,
}

impl<S: Scalar> ContingentPlan<S> {
    /// Builds a plan, rejecting empty or non-finite input.
    pub fn new(values: Vec<S>) -> Result<Self> {
        if values.is_empty() {
            return Err(KwError::EmptyStateSpace);
        }
        if let Some(state) = values.iter().position(|v| !v.is_finite()) {
            return Err(KwError::InvalidParameter {
                name: "plan",
                reason: format!("non-finite entry at state {state}"),
            });
        }
        Ok(Self { values })
    }

    /// Builds a plan from a slice.
    pub fn from_slice(values: &[S]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    /// Constant plan `c·1`.
    pub fn constant(states: usize, c: S) -> Self {
        Self {
            values: vec![c; states],
        }
    }

    /// Zero plan.
    pub fn zero(states: usize) -> Self {
        Self::constant(states, S::zero())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    /// Statewise sum. Panics on length mismatch; callers hold plans from
    /// the same economy.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len(), "plan dimensions must match");
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    /// Statewise difference.
    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len(), "plan dimensions must match");
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    /// Scalar multiple.
    pub fn scale(&self, lambda: S) -> Self {
        Self {
            values: self.values.iter().map(|&a| a * lambda).collect(),
        }
    }

    /// Statewise product.
    pub fn hadamard(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len(), "plan dimensions must match");
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a * b)
                .collect(),
        }
    }

    /// Applies `f` statewise.
    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            values: self.values.iter().map(|&a| f(a)).collect(),
        }
    }

    /// True when every entry is at least `-tol`.
    pub fn is_nonnegative(&self, tol: S) -> bool {
        self.values.iter().all(|&v| v >= -tol)
    }

    pub fn min_entry(&self) -> S {
        self.values.iter().copied().fold(S::infinity(), S::min)
    }

    pub fn max_entry(&self) -> S {
        self.values
            .iter()
            .copied()
            .fold(S::neg_infinity(), S::max)
    }
}

impl<S: Scalar> std::ops::Index<usize> for ContingentPlan<S> {
    type Output = S;

    fn index(&self, state: usize) -> &S {
        &self.values[state]
    }
}

/// A convex, compact set of probability vectors, stored by its vertices.
///
/// Vertices normally have full support (every state carries positive
/// mass). The one sanctioned exception is [`PriorSet::full_ambiguity`],
/// the closure of the open simplex: it keeps the Dirac vertices and sets
/// `simplex_closure`, which waives the positivity requirement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSet<S: Scalar> {
    vertices: Vec<Vec<S>>,
    tolerance: S,
    simplex_closure: bool,
}

impl<S: Scalar> PriorSet<S> {
    /// Validates and deduplicates a vertex list.
    ///
    /// Each vertex must sum to one within `tolerance` and have strictly
    /// positive entries. Vertices within `tolerance` of an earlier one
    /// (in the max norm) are dropped; the surviving order is the input
    /// order.
    pub fn new(vertices: Vec<Vec<S>>, tolerance: S) -> Result<Self> {
        Self::build(vertices, tolerance, false)
    }

    /// [`PriorSet::new`] with the default validation tolerance.
    pub fn from_vertices(vertices: Vec<Vec<S>>) -> Result<Self> {
        Self::new(vertices, fp(DEFAULT_PROBABILITY_TOL))
    }

    /// Single-prior set (pure risk).
    pub fn singleton(p: Vec<S>) -> Result<Self> {
        Self::from_vertices(vec![p])
    }

    /// Two-state interval family: first-state mass ranges over
    /// `[1/2 - eps, 1/2 + eps]`. Requires `0 <= eps < 1/2`; `eps = 0`
    /// collapses to the singleton `(1/2, 1/2)`.
    pub fn interval_family(eps: S) -> Result<Self> {
        let half = fp::<S>(0.5);
        if eps < S::zero() || eps >= half {
            return Err(KwError::InvalidParameter {
                name: "eps",
                reason: format!("must lie in [0, 0.5), got {eps}"),
            });
        }
        Self::from_vertices(vec![vec![half - eps, half + eps], vec![half + eps, half - eps]])
    }

    /// Closure of the full simplex: the Dirac vertices.
    ///
    /// The zero entries mean the relevance property fails on this set;
    /// queries still work, but tests that rely on full support must
    /// check [`PriorSet::is_simplex_closure`].
    pub fn full_ambiguity(states: usize) -> Result<Self> {
        if states == 0 {
            return Err(KwError::EmptyStateSpace);
        }
        let vertices = (0..states)
            .map(|k| {
                let mut v = vec![S::zero(); states];
                v[k] = S::one();
                v
            })
            .collect();
        Self::build(vertices, fp(DEFAULT_PROBABILITY_TOL), true)
    }

    fn build(vertices: Vec<Vec<S>>, tolerance: S, simplex_closure: bool) -> Result<Self> {
        if tolerance < S::zero() {
            return Err(KwError::InvalidParameter {
                name: "tolerance",
                reason: "must be nonnegative".into(),
            });
        }
        if vertices.is_empty() {
            return Err(KwError::EmptyPriorSet);
        }
        let states = vertices[0].len();
        if states == 0 {
            return Err(KwError::EmptyStateSpace);
        }
        for (index, v) in vertices.iter().enumerate() {
            if v.len() != states {
                return Err(KwError::DimensionMismatch {
                    expected: states,
                    got: v.len(),
                });
            }
            if v.iter().any(|p| !p.is_finite()) {
                return Err(KwError::InvalidProbability {
                    index,
                    reason: "non-finite entry".into(),
                });
            }
            if !simplex_closure {
                if let Some(state) = v.iter().position(|&p| p <= S::zero()) {
                    return Err(KwError::InvalidProbability {
                        index,
                        reason: format!("entry at state {state} must be strictly positive"),
                    });
                }
            } else if v.iter().any(|&p| p < S::zero()) {
                return Err(KwError::InvalidProbability {
                    index,
                    reason: "negative entry".into(),
                });
            }
            let mass: S = v.iter().copied().sum();
            if (mass - S::one()).abs() > tolerance {
                return Err(KwError::InvalidProbability {
                    index,
                    reason: format!("mass {mass} not within tolerance of 1"),
                });
            }
        }
        let mut unique: Vec<Vec<S>> = Vec::with_capacity(vertices.len());
        for v in vertices {
            let duplicate = unique.iter().any(|u| {
                u.iter()
                    .zip(&v)
                    .all(|(&a, &b)| (a - b).abs() <= tolerance)
            });
            if !duplicate {
                unique.push(v);
            }
        }
        Ok(Self {
            vertices: unique,
            tolerance,
            simplex_closure,
        })
    }

    pub fn state_count(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_singleton(&self) -> bool {
        self.vertices.len() == 1
    }

    pub fn is_simplex_closure(&self) -> bool {
        self.simplex_closure
    }

    pub fn tolerance(&self) -> S {
        self.tolerance
    }

    pub fn vertices(&self) -> &[Vec<S>] {
        &self.vertices
    }

    pub fn vertex(&self, k: usize) -> &[S] {
        &self.vertices[k]
    }

    /// Arithmetic mean of the vertices; a convenient interior reference
    /// prior.
    pub fn centroid(&self) -> Vec<S> {
        let n = self.state_count();
        let inv = S::one() / fp::<S>(self.vertices.len() as f64);
        (0..n)
            .map(|w| self.vertices.iter().map(|v| v[w]).sum::<S>() * inv)
            .collect()
    }

    fn check_dim(&self, x: &ContingentPlan<S>) -> Result<()> {
        if x.len() != self.state_count() {
            return Err(KwError::DimensionMismatch {
                expected: self.state_count(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Linear expectation under vertex `k`.
    pub fn expectation_under(&self, k: usize, x: &ContingentPlan<S>) -> S {
        dot(&self.vertices[k], x.values())
    }

    /// Expectations under every vertex, in vertex order.
    pub fn expectations(&self, x: &ContingentPlan<S>) -> Result<Vec<S>> {
        self.check_dim(x)?;
        Ok((0..self.vertices.len())
            .map(|k| self.expectation_under(k, x))
            .collect())
    }

    /// Worst-case (upper) expectation: the maximum of `E^P x` over the
    /// vertices. Returns the value and the index of the maximizing
    /// vertex; ties go to the lowest index.
    pub fn sublinear_expectation(&self, x: &ContingentPlan<S>) -> Result<(S, usize)> {
        self.check_dim(x)?;
        let mut best = self.expectation_under(0, x);
        let mut arg = 0;
        for k in 1..self.vertices.len() {
            let e = self.expectation_under(k, x);
            if e > best {
                best = e;
                arg = k;
            }
        }
        Ok((best, arg))
    }

    /// Lower expectation: the minimum of `E^P x` over the vertices, with
    /// the minimizing index (lowest on ties).
    pub fn inf_expectation(&self, x: &ContingentPlan<S>) -> Result<(S, usize)> {
        let (v, k) = self.sublinear_expectation(&x.scale(-S::one()))?;
        Ok((-v, k))
    }

    /// Indices of every vertex whose expectation is within `tol` of the
    /// minimum, in vertex order.
    pub fn minimizing_vertices(&self, x: &ContingentPlan<S>, tol: S) -> Result<Vec<usize>> {
        let exps = self.expectations(x)?;
        let min = exps.iter().copied().fold(S::infinity(), S::min);
        Ok(exps
            .iter()
            .enumerate()
            .filter(|(_, &e)| e - min <= tol)
            .map(|(k, _)| k)
            .collect())
    }

    /// True iff `E^P xi` is the same for every vertex, up to `tol` on
    /// the max-min spread.
    pub fn is_mean_ambiguity_free(&self, xi: &ContingentPlan<S>, tol: S) -> Result<bool> {
        let exps = self.expectations(xi)?;
        let max = exps.iter().copied().fold(S::neg_infinity(), S::max);
        let min = exps.iter().copied().fold(S::infinity(), S::min);
        Ok(max - min <= tol)
    }

    /// Basis of the subspace of plans with vertex-independent
    /// expectation, with the default pivot threshold.
    pub fn mean_ambiguity_free_basis(&self) -> SubspaceBasis<S> {
        self.mean_ambiguity_free_basis_with_tol(fp(DEFAULT_PIVOT_TOL))
    }

    /// Basis of the mean-ambiguity-free subspace: the kernel of the
    /// matrix with rows `P_k - P_1`.
    ///
    /// Reduced row echelon form with partial pivoting; entries whose
    /// magnitude is at most `pivot_tol` are treated as zero. On rational
    /// inputs the free-column kernel construction reproduces the usual
    /// integer-friendly basis.
    pub fn mean_ambiguity_free_basis_with_tol(&self, pivot_tol: S) -> SubspaceBasis<S> {
        let n = self.state_count();
        let rows: Vec<Vec<S>> = self.vertices[1..]
            .iter()
            .map(|v| {
                v.iter()
                    .zip(&self.vertices[0])
                    .map(|(&pk, &p1)| pk - p1)
                    .collect()
            })
            .collect();
        let basis = kernel_basis(rows, n, pivot_tol);
        SubspaceBasis {
            dimension: basis.len(),
            basis_vectors: basis
                .into_iter()
                .map(|v| ContingentPlan { values: v })
                .collect(),
        }
    }
}

/// Kernel of an `m x n` matrix via reduced row echelon form.
fn kernel_basis<S: Scalar>(mut rows: Vec<Vec<S>>, n: usize, pivot_tol: S) -> Vec<Vec<S>> {
    let m = rows.len();
    let mut pivot_cols: Vec<usize> = Vec::new();
    let mut r = 0;
    for col in 0..n {
        if r == m {
            break;
        }
        let (best, best_abs) = (r..m)
            .map(|i| (i, rows[i][col].abs()))
            .fold((r, S::zero()), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best_abs <= pivot_tol {
            continue;
        }
        rows.swap(r, best);
        let p = rows[r][col];
        for j in col..n {
            rows[r][j] = rows[r][j] / p;
        }
        rows[r][col] = S::one();
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = rows[i][col];
            if f != S::zero() {
                for j in col..n {
                    let sub = f * rows[r][j];
                    rows[i][j] = rows[i][j] - sub;
                }
                rows[i][col] = S::zero();
            }
        }
        pivot_cols.push(col);
        r += 1;
    }
    (0..n)
        .filter(|j| !pivot_cols.contains(j))
        .map(|j| {
            let mut v = vec![S::zero(); n];
            v[j] = S::one();
            for (i, &pc) in pivot_cols.iter().enumerate() {
                v[pc] = -rows[i][j];
            }
            v
        })
        .collect()
}

/// Basis of the mean-ambiguity-free subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceBasis<S: Scalar> {
    basis_vectors: Vec<ContingentPlan<S>>,
    dimension: usize,
}

impl<S: Scalar> SubspaceBasis<S> {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn basis_vectors(&self) -> &[ContingentPlan<S>] {
        &self.basis_vectors
    }

    /// Membership check by Gram-Schmidt projection: true when the
    /// residual of `x` against the span has max-norm at most `tol`.
    pub fn span_contains(&self, x: &ContingentPlan<S>, tol: S) -> bool {
        let mut ortho: Vec<Vec<S>> = Vec::with_capacity(self.basis_vectors.len());
        for b in &self.basis_vectors {
            let mut v = b.values().to_vec();
            for q in &ortho {
                let c = dot(&v, q);
                for (vi, &qi) in v.iter_mut().zip(q) {
                    *vi = *vi - c * qi;
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm > fp(1e-12) {
                for vi in v.iter_mut() {
                    *vi = *vi / norm;
                }
                ortho.push(v);
            }
        }
        let mut resid = x.values().to_vec();
        for q in &ortho {
            let c = dot(&resid, q);
            for (ri, &qi) in resid.iter_mut().zip(q) {
                *ri = *ri - c * qi;
            }
        }
        resid.iter().all(|&r| r.abs() <= tol)
    }
}

/// A nonnegative per-state price vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePrice<S: Scalar> {
    values: Vec<S>,
}

impl<S: Scalar> StatePrice<S> {
    /// Builds a price, rejecting negative or non-finite entries.
    pub fn new(values: Vec<S>) -> Result<Self> {
        if values.is_empty() {
            return Err(KwError::EmptyStateSpace);
        }
        for (state, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(KwError::InvalidParameter {
                    name: "state price",
                    reason: format!("non-finite entry at state {state}"),
                });
            }
            if v < S::zero() {
                return Err(KwError::NegativeEntry {
                    what: "state price",
                    value: v.to_f64().unwrap_or(f64::NAN),
                    state,
                });
            }
        }
        Ok(Self { values })
    }

    pub fn from_slice(values: &[S]) -> Result<Self> {
        Self::new(values.to_vec())
    }

    /// All-ones price (the unit forward price in every state).
    pub fn ones(states: usize) -> Self {
        Self {
            values: vec![S::one(); states],
        }
    }

    /// Barycentric price `1/n` per state; the canonical starting point
    /// for solvers.
    pub fn uniform(states: usize) -> Self {
        let inv = S::one() / fp::<S>(states as f64);
        Self {
            values: vec![inv; states],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn total(&self) -> S {
        self.values.iter().copied().sum()
    }

    /// Canonical form: entries rescaled to sum to one. Fails on the
    /// zero price, which has no canonical form.
    pub fn normalized(&self) -> Result<Self> {
        let s = self.total();
        if s <= S::zero() {
            return Err(KwError::InvalidParameter {
                name: "state price",
                reason: "zero price has no canonical form".into(),
            });
        }
        Ok(Self {
            values: self.values.iter().map(|&v| v / s).collect(),
        })
    }

    /// True when the entries lie in the simplex within `tol`.
    pub fn is_normalized(&self, tol: S) -> bool {
        (self.total() - S::one()).abs() <= tol
    }

    /// True when max and min entries differ by at most `tol`.
    pub fn is_constant(&self, tol: S) -> bool {
        let max = self.values.iter().copied().fold(S::neg_infinity(), S::max);
        let min = self.values.iter().copied().fold(S::infinity(), S::min);
        max - min <= tol
    }

    /// Statewise product `psi ⊙ x` as a plan.
    pub fn hadamard(&self, x: &ContingentPlan<S>) -> ContingentPlan<S> {
        assert_eq!(self.len(), x.len(), "price and plan dimensions must match");
        ContingentPlan {
            values: self
                .values
                .iter()
                .zip(x.values())
                .map(|(&p, &v)| p * v)
                .collect(),
        }
    }

    /// Coherent forward price of `x`: the worst-case expectation of
    /// `psi ⊙ x`.
    pub fn price(&self, priors: &PriorSet<S>, x: &ContingentPlan<S>) -> Result<S> {
        if self.len() != priors.state_count() {
            return Err(KwError::DimensionMismatch {
                expected: priors.state_count(),
                got: self.len(),
            });
        }
        Ok(priors.sublinear_expectation(&self.hadamard(x))?.0)
    }

    pub fn as_plan(&self) -> ContingentPlan<S> {
        ContingentPlan {
            values: self.values.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn eps_family(eps: f64) -> PriorSet<f64> {
        PriorSet::interval_family(eps).unwrap()
    }

    #[test]
    fn interval_family_emits_extreme_vertices() {
        let p = eps_family(0.1);
        assert_eq!(p.vertices(), &[vec![0.4, 0.6], vec![0.6, 0.4]]);
        assert!(!p.is_simplex_closure());
    }

    #[test]
    fn interval_family_at_zero_collapses_to_singleton() {
        let p = eps_family(0.0);
        assert!(p.is_singleton());
        assert_eq!(p.vertex(0), &[0.5, 0.5]);
    }

    #[test]
    fn interval_family_rejects_out_of_range_eps() {
        assert!(PriorSet::interval_family(0.5_f64).is_err());
        assert!(PriorSet::interval_family(-0.01_f64).is_err());
    }

    #[test]
    fn construction_rejects_zero_entries_and_bad_mass() {
        assert!(matches!(
            PriorSet::from_vertices(vec![vec![1.0, 0.0]]),
            Err(KwError::InvalidProbability { index: 0, .. })
        ));
        assert!(PriorSet::from_vertices(vec![vec![0.7, 0.4]]).is_err());
        assert!(PriorSet::from_vertices(vec![vec![0.5, 0.5], vec![0.3, 0.3, 0.4]]).is_err());
        assert!(PriorSet::<f64>::from_vertices(vec![]).is_err());
    }

    #[test]
    fn construction_deduplicates_vertices() {
        let p = PriorSet::from_vertices(vec![
            vec![0.4, 0.6],
            vec![0.4 + 1e-12, 0.6 - 1e-12],
            vec![0.6, 0.4],
        ])
        .unwrap();
        assert_eq!(p.num_vertices(), 2);
    }

    #[test]
    fn full_ambiguity_keeps_dirac_vertices() {
        let p = PriorSet::<f64>::full_ambiguity(3).unwrap();
        assert!(p.is_simplex_closure());
        assert_eq!(p.num_vertices(), 3);
        assert_eq!(p.vertex(0), &[1.0, 0.0, 0.0]);
        let x = ContingentPlan::from_slice(&[1.0, -2.0, 0.5]).unwrap();
        let (v, k) = p.sublinear_expectation(&x).unwrap();
        assert_eq!((v, k), (1.0, 0));
    }

    #[test]
    fn sublinear_expectation_picks_max_vertex() {
        let p = eps_family(0.1);
        let x = ContingentPlan::from_slice(&[1.0, 0.0]).unwrap();
        let (v, k) = p.sublinear_expectation(&x).unwrap();
        assert_abs_diff_eq!(v, 0.6, epsilon = 1e-15);
        assert_eq!(k, 1);
        assert_eq!(p.vertex(k), &[0.6, 0.4]);
    }

    #[test]
    fn sublinear_expectation_preserves_constants() {
        let p = eps_family(0.1);
        let x = ContingentPlan::constant(2, 3.0);
        let (v, _) = p.sublinear_expectation(&x).unwrap();
        assert_abs_diff_eq!(v, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn spread_of_one_minus_one_bet_detects_ambiguity() {
        let p = eps_family(0.1);
        let x = ContingentPlan::from_slice(&[1.0, -1.0]).unwrap();
        let neg = x.scale(-1.0);
        let (up, _) = p.sublinear_expectation(&x).unwrap();
        let (un, _) = p.sublinear_expectation(&neg).unwrap();
        assert_abs_diff_eq!(up, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(un, 0.2, epsilon = 1e-12);
        assert!(!p.is_mean_ambiguity_free(&x, 1e-9).unwrap());
    }

    #[test]
    fn ties_break_to_lowest_vertex_index() {
        let p = eps_family(0.1);
        let x = ContingentPlan::constant(2, 1.0);
        let (_, k) = p.sublinear_expectation(&x).unwrap();
        assert_eq!(k, 0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = eps_family(0.1);
        let x = ContingentPlan::from_slice(&[1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            p.sublinear_expectation(&x),
            Err(KwError::DimensionMismatch {
                expected: 2,
                got: 3
            })
        ));
    }

    #[test]
    fn forward_price_of_supported_trade_is_zero() {
        let p = eps_family(0.1);
        let psi = StatePrice::ones(2);
        let c = ContingentPlan::from_slice(&[7.0 / 15.0, 7.0 / 15.0]).unwrap();
        let e = ContingentPlan::from_slice(&[1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let v = psi.price(&p, &c.sub(&e)).unwrap();
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn forward_price_of_full_insurance_trade() {
        let p = eps_family(0.1);
        let psi = StatePrice::ones(2);
        let c = ContingentPlan::from_slice(&[0.5, 0.5]).unwrap();
        let e = ContingentPlan::from_slice(&[1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let v = psi.price(&p, &c.sub(&e)).unwrap();
        assert_abs_diff_eq!(v, 1.0 / 30.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_price_prices_everything_at_zero() {
        let p = eps_family(0.1);
        let psi = StatePrice::new(vec![0.0, 0.0]).unwrap();
        let x = ContingentPlan::from_slice(&[5.0, -3.0]).unwrap();
        assert_eq!(psi.price(&p, &x).unwrap(), 0.0);
    }

    #[test]
    fn state_price_rejects_negative_entries() {
        assert!(matches!(
            StatePrice::new(vec![0.5, -0.1]),
            Err(KwError::NegativeEntry { state: 1, .. })
        ));
    }

    #[test]
    fn normalization_gives_canonical_form() {
        let psi = StatePrice::new(vec![2.0, 2.0]).unwrap();
        let n = psi.normalized().unwrap();
        assert_eq!(n.values(), &[0.5, 0.5]);
        assert!(n.is_normalized(1e-12));
        assert!(StatePrice::new(vec![0.0, 0.0]).unwrap().normalized().is_err());
    }

    #[test]
    fn constants_are_mean_ambiguity_free() {
        let p = eps_family(0.1);
        let c = ContingentPlan::constant(2, 3.0);
        assert!(p.is_mean_ambiguity_free(&c, 1e-9).unwrap());
        let x = ContingentPlan::from_slice(&[1.0, 0.0]).unwrap();
        assert!(!p.is_mean_ambiguity_free(&x, 1e-9).unwrap());
    }

    #[test]
    fn singleton_prior_makes_every_plan_ambiguity_free() {
        let p = PriorSet::singleton(vec![0.3, 0.7]).unwrap();
        let x = ContingentPlan::from_slice(&[42.0, -17.0]).unwrap();
        assert!(p.is_mean_ambiguity_free(&x, 1e-9).unwrap());
        assert_eq!(p.mean_ambiguity_free_basis().dimension(), 2);
    }

    #[test]
    fn two_state_interval_family_has_full_insurance_line() {
        let basis = eps_family(0.1).mean_ambiguity_free_basis();
        assert_eq!(basis.dimension(), 1);
        assert_eq!(basis.basis_vectors()[0].values(), &[1.0, 1.0]);
    }

    #[test]
    fn three_state_kernel_is_integer_friendly() {
        let p = PriorSet::from_vertices(vec![
            vec![0.5, 0.25, 0.25],
            vec![0.25, 0.5, 0.25],
        ])
        .unwrap();
        let basis = p.mean_ambiguity_free_basis();
        assert_eq!(basis.dimension(), 2);
        assert_eq!(basis.basis_vectors()[0].values(), &[1.0, 1.0, 0.0]);
        assert_eq!(basis.basis_vectors()[1].values(), &[0.0, 0.0, 1.0]);
        let member = ContingentPlan::from_slice(&[2.0, 2.0, -5.0]).unwrap();
        assert!(basis.span_contains(&member, 1e-9));
        let outsider = ContingentPlan::from_slice(&[1.0, 0.0, 0.0]).unwrap();
        assert!(!basis.span_contains(&outsider, 1e-9));
    }

    #[test]
    fn minimizing_vertices_reports_all_near_ties() {
        let p = eps_family(0.1);
        let flat = ContingentPlan::constant(2, 2.0);
        assert_eq!(p.minimizing_vertices(&flat, 1e-9).unwrap(), vec![0, 1]);
        let tilted = ContingentPlan::from_slice(&[1.0, 0.0]).unwrap();
        assert_eq!(p.minimizing_vertices(&tilted, 1e-9).unwrap(), vec![0]);
    }

    #[test]
    fn centroid_averages_vertices() {
        let p = eps_family(0.1);
        let c = p.centroid();
        assert_abs_diff_eq!(c[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c[1], 0.5, epsilon = 1e-15);
    }
}
