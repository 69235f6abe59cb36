//! Dense two-phase simplex kernel with Farkas infeasibility
//! certificates.
//!
//! The solver is generic over [`LinearScalar`], so the same pivoting
//! code runs on floating-point scalars (with a small pivot tolerance)
//! and on rational scalars (with tolerance zero, hence exact output).
//! Bland's rule is used in both phases, which rules out cycling.
//!
//! Problems are stated as `maximize c·x` subject to rows `a·x <= b`,
//! `a·x = b`, or `a·x >= b`, with every variable nonnegative unless
//! flagged free. Sizes here are tiny (tens of rows), so the tableau is
//! dense and rows are owned vectors.

use num_traits::{Num, Zero};

use crate::error::KwError;
use crate::Result;

/// Scalar usable by the LP kernel: ordered field arithmetic plus a
/// pivot tolerance. Exact types report a zero tolerance.
pub trait LinearScalar:
    Clone + PartialOrd + Num + std::ops::Neg<Output = Self> + std::fmt::Debug
{
    /// Magnitudes at or below this are treated as zero when pivoting.
    fn pivot_eps() -> Self;

    fn abs_val(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }
}

impl LinearScalar for f64 {
    fn pivot_eps() -> f64 {
        1e-9
    }
}

impl LinearScalar for f32 {
    fn pivot_eps() -> f32 {
        1e-4
    }
}

impl<T> LinearScalar for num_rational::Ratio<T>
where
    num_rational::Ratio<T>:
        Clone + PartialOrd + Num + std::ops::Neg<Output = num_rational::Ratio<T>> + std::fmt::Debug,
{
    fn pivot_eps() -> Self {
        Self::zero()
    }
}

/// Row sense.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// One linear constraint `coeffs · x (relation) rhs`.
#[derive(Debug, Clone)]
pub struct Constraint<S> {
    pub coeffs: Vec<S>,
    pub relation: Relation,
    pub rhs: S,
}

/// A linear program in inequality form.
#[derive(Debug, Clone)]
pub struct LinearProgram<S> {
    /// Objective coefficients; the solver maximizes.
    pub maximize: Vec<S>,
    pub constraints: Vec<Constraint<S>>,
    /// Per-variable freeness; a missing entry means nonnegative.
    pub free: Vec<bool>,
}

impl<S: LinearScalar> LinearProgram<S> {
    /// Program over `n` nonnegative variables with a zero objective.
    pub fn new(n: usize) -> Self {
        Self {
            maximize: vec![S::zero(); n],
            constraints: Vec::new(),
            free: vec![false; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.maximize.len()
    }

    pub fn set_objective(&mut self, maximize: Vec<S>) {
        assert_eq!(maximize.len(), self.num_vars());
        self.maximize = maximize;
    }

    pub fn mark_free(&mut self, var: usize) {
        self.free[var] = true;
    }

    pub fn add(&mut self, coeffs: Vec<S>, relation: Relation, rhs: S) {
        assert_eq!(coeffs.len(), self.num_vars(), "constraint width mismatch");
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn add_le(&mut self, coeffs: Vec<S>, rhs: S) {
        self.add(coeffs, Relation::Le, rhs);
    }

    pub fn add_eq(&mut self, coeffs: Vec<S>, rhs: S) {
        self.add(coeffs, Relation::Eq, rhs);
    }

    pub fn add_ge(&mut self, coeffs: Vec<S>, rhs: S) {
        self.add(coeffs, Relation::Ge, rhs);
    }
}

/// Outcome of a solve.
#[derive(Debug, Clone)]
pub enum LpSolution<S> {
    Optimal {
        x: Vec<S>,
        value: S,
    },
    /// Farkas certificate `y`, one entry per original constraint row:
    /// `y_i >= 0` on `<=` rows, `y_i <= 0` on `>=` rows, `y·A >= 0` on
    /// nonnegative columns and `= 0` on free columns, yet `y·b < 0`.
    Infeasible {
        certificate: Vec<S>,
    },
    /// Feasible improving ray in original variables.
    Unbounded {
        ray: Vec<S>,
    },
}

/// Feasibility-only view of [`LpSolution`].
#[derive(Debug, Clone)]
pub enum Feasibility<S> {
    Feasible { witness: Vec<S> },
    Infeasible { certificate: Vec<S> },
}

/// Checks a Farkas certificate against the stated program.
pub fn verify_farkas<S: LinearScalar>(lp: &LinearProgram<S>, y: &[S]) -> bool {
    if y.len() != lp.constraints.len() {
        return false;
    }
    let tol = S::pivot_eps();
    for (c, yi) in lp.constraints.iter().zip(y) {
        match c.relation {
            Relation::Le if *yi < -tol.clone() => return false,
            Relation::Ge if *yi > tol.clone() => return false,
            _ => {}
        }
    }
    for j in 0..lp.num_vars() {
        let mut combo = S::zero();
        for (c, yi) in lp.constraints.iter().zip(y) {
            combo = combo + yi.clone() * c.coeffs[j].clone();
        }
        if lp.free[j] {
            if combo.abs_val() > tol.clone() {
                return false;
            }
        } else if combo < -tol.clone() {
            return false;
        }
    }
    let mut yb = S::zero();
    for (c, yi) in lp.constraints.iter().zip(y) {
        yb = yb + yi.clone() * c.rhs.clone();
    }
    yb < S::zero()
}

/// Solves a feasibility problem: the objective of `lp` is ignored.
pub fn lp_feasibility<S: LinearScalar>(lp: &LinearProgram<S>) -> Result<Feasibility<S>> {
    let mut probe = lp.clone();
    probe.maximize = vec![S::zero(); lp.num_vars()];
    match solve_lp(&probe)? {
        LpSolution::Optimal { x, .. } => Ok(Feasibility::Feasible { witness: x }),
        LpSolution::Infeasible { certificate } => Ok(Feasibility::Infeasible { certificate }),
        LpSolution::Unbounded { .. } => unreachable!("zero objective cannot be unbounded"),
    }
}

struct Tableau<S> {
    /// `m x (cols + 1)`; the last column is the right-hand side.
    rows: Vec<Vec<S>>,
    /// Reduced costs `c_j - z_j`, one per column.
    reduced: Vec<S>,
    basis: Vec<usize>,
    banned: Vec<bool>,
}

impl<S: LinearScalar> Tableau<S> {
    fn rhs(&self, i: usize) -> S {
        self.rows[i].last().expect("row has rhs").clone()
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.rows[r].len();
        let p = self.rows[r][c].clone();
        for j in 0..width {
            self.rows[r][j] = self.rows[r][j].clone() / p.clone();
        }
        self.rows[r][c] = S::one();
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c].clone();
            if f != S::zero() {
                for j in 0..width {
                    let delta = f.clone() * self.rows[r][j].clone();
                    self.rows[i][j] = self.rows[i][j].clone() - delta;
                }
                self.rows[i][c] = S::zero();
            }
        }
        let f = self.reduced[c].clone();
        if f != S::zero() {
            for j in 0..width - 1 {
                let delta = f.clone() * self.rows[r][j].clone();
                self.reduced[j] = self.reduced[j].clone() - delta;
            }
            self.reduced[c] = S::zero();
        }
        self.basis[r] = c;
    }

    /// Canonicalizes the reduced-cost row for objective `costs` under
    /// the current basis.
    fn install_objective(&mut self, costs: &[S]) {
        self.reduced = costs.to_vec();
        for (i, &b) in self.basis.iter().enumerate() {
            let f = self.reduced[b].clone();
            if f != S::zero() {
                let width = self.rows[i].len();
                for j in 0..width - 1 {
                    let delta = f.clone() * self.rows[i][j].clone();
                    self.reduced[j] = self.reduced[j].clone() - delta;
                }
                self.reduced[b] = S::zero();
            }
        }
    }

    /// Bland-rule pivoting until optimal or unbounded. Returns the
    /// entering column on unboundedness.
    ///
    /// With `allow_unbounded` false (phase 1, whose objective is bounded
    /// by construction) a column without an eligible pivot row is a
    /// numerical artifact; it is banned and the search continues.
    fn run(&mut self, allow_unbounded: bool) -> Result<std::result::Result<(), usize>> {
        let eps = S::pivot_eps();
        let cols = self.reduced.len();
        for _ in 0..200_000 {
            let entering = (0..cols)
                .find(|&j| !self.banned[j] && self.reduced[j] > eps.clone());
            let Some(c) = entering else {
                return Ok(Ok(()));
            };
            let mut leave: Option<(usize, S)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c].clone();
                if a > eps.clone() {
                    let ratio = self.rhs(i) / a;
                    let better = match &leave {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr.clone()
                                || (ratio == lr.clone() && self.basis[i] < self.basis[*li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, c),
                None if allow_unbounded => return Ok(Err(c)),
                None => self.banned[c] = true,
            }
        }
        Err(KwError::InvalidParameter {
            name: "lp",
            reason: "pivot cap exceeded".into(),
        })
    }
}

/// Solves the program. `Err` is reserved for malformed input; every
/// well-posed program returns one of the three [`LpSolution`] variants.
pub fn solve_lp<S: LinearScalar>(lp: &LinearProgram<S>) -> Result<LpSolution<S>> {
    let n = lp.num_vars();
    if lp.free.len() != n {
        return Err(KwError::DimensionMismatch {
            expected: n,
            got: lp.free.len(),
        });
    }
    // Column layout: per-variable positive part (and negative part for
    // free variables), then slack/surplus columns, then artificials.
    let mut col_of_var: Vec<usize> = Vec::with_capacity(n);
    let mut neg_col_of_var: Vec<Option<usize>> = Vec::with_capacity(n);
    let mut next = 0;
    for j in 0..n {
        col_of_var.push(next);
        next += 1;
        if lp.free[j] {
            neg_col_of_var.push(Some(next));
            next += 1;
        } else {
            neg_col_of_var.push(None);
        }
    }
    let struct_cols = next;
    let m = lp.constraints.len();

    // Orient rows to nonnegative rhs, remembering flips.
    let mut flipped = vec![false; m];
    let mut oriented: Vec<(Vec<S>, Relation, S)> = Vec::with_capacity(m);
    for (i, c) in lp.constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(KwError::DimensionMismatch {
                expected: n,
                got: c.coeffs.len(),
            });
        }
        if c.rhs < S::zero() {
            flipped[i] = true;
            let coeffs = c.coeffs.iter().map(|a| -a.clone()).collect();
            let relation = match c.relation {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
            oriented.push((coeffs, relation, -c.rhs.clone()));
        } else {
            oriented.push((c.coeffs.clone(), c.relation, c.rhs.clone()));
        }
    }

    let mut slack_col: Vec<Option<usize>> = vec![None; m];
    let mut art_col: Vec<Option<usize>> = vec![None; m];
    let mut cols = struct_cols;
    for (i, (_, rel, _)) in oriented.iter().enumerate() {
        match rel {
            Relation::Le | Relation::Ge => {
                slack_col[i] = Some(cols);
                cols += 1;
            }
            Relation::Eq => {}
        }
    }
    for (i, (_, rel, _)) in oriented.iter().enumerate() {
        if matches!(rel, Relation::Ge | Relation::Eq) {
            art_col[i] = Some(cols);
            cols += 1;
        }
    }

    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    for (i, (coeffs, rel, rhs)) in oriented.iter().enumerate() {
        let mut row = vec![S::zero(); cols + 1];
        for j in 0..n {
            row[col_of_var[j]] = coeffs[j].clone();
            if let Some(nc) = neg_col_of_var[j] {
                row[nc] = -coeffs[j].clone();
            }
        }
        match rel {
            Relation::Le => row[slack_col[i].unwrap()] = S::one(),
            Relation::Ge => row[slack_col[i].unwrap()] = -S::one(),
            Relation::Eq => {}
        }
        if let Some(a) = art_col[i] {
            row[a] = S::one();
        }
        row[cols] = rhs.clone();
        basis.push(match (art_col[i], slack_col[i]) {
            (Some(a), _) => a,
            (None, Some(s)) => s,
            (None, None) => unreachable!("every row has an initial basic column"),
        });
        rows.push(row);
    }

    let mut t = Tableau {
        rows,
        reduced: vec![S::zero(); cols],
        basis,
        banned: vec![false; cols],
    };

    let has_artificials = art_col.iter().any(Option::is_some);
    if has_artificials {
        let mut phase1 = vec![S::zero(); cols];
        for a in art_col.iter().flatten() {
            phase1[*a] = -S::one();
        }
        t.install_objective(&phase1);
        match t.run(false)? {
            Ok(()) => {}
            Err(_) => unreachable!("phase 1 never reports unbounded"),
        }
        let mut infeas = S::zero();
        for (i, &b) in t.basis.iter().enumerate() {
            if art_col.iter().flatten().any(|&a| a == b) {
                infeas = infeas + t.rhs(i);
            }
        }
        if infeas > S::pivot_eps() {
            // Dual prices off the initial identity columns certify
            // infeasibility of the oriented system; un-flip to report
            // against the caller's rows.
            let mut y = Vec::with_capacity(m);
            for i in 0..m {
                let yi = match (art_col[i], slack_col[i]) {
                    (Some(a), _) => -S::one() - t.reduced[a].clone(),
                    (None, Some(s)) => -t.reduced[s].clone(),
                    (None, None) => unreachable!(),
                };
                y.push(if flipped[i] { -yi } else { yi });
            }
            return Ok(LpSolution::Infeasible { certificate: y });
        }
        // Drive any degenerate artificial out of the basis; a row
        // with no eligible pivot is redundant and dropped. Phase-1
        // bans are numerical and do not carry over.
        t.banned.fill(false);
        for a in art_col.iter().flatten() {
            t.banned[*a] = true;
        }
        let mut i = 0;
        while i < t.rows.len() {
            if t.banned[t.basis[i]] {
                let eps = S::pivot_eps();
                let swap = (0..struct_cols)
                    .chain(slack_col.iter().flatten().copied())
                    .find(|&j| t.rows[i][j].abs_val() > eps.clone());
                match swap {
                    Some(c) => t.pivot(i, c),
                    None => {
                        t.rows.remove(i);
                        t.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    let mut phase2 = vec![S::zero(); cols];
    for j in 0..n {
        phase2[col_of_var[j]] = lp.maximize[j].clone();
        if let Some(nc) = neg_col_of_var[j] {
            phase2[nc] = -lp.maximize[j].clone();
        }
    }
    t.install_objective(&phase2);
    let unbounded = match t.run(true)? {
        Ok(()) => None,
        Err(col) => Some(col),
    };

    let read_var = |ext: &[S], j: usize| -> S {
        let pos = ext[col_of_var[j]].clone();
        match neg_col_of_var[j] {
            Some(nc) => pos - ext[nc].clone(),
            None => pos,
        }
    };

    if let Some(col) = unbounded {
        let mut ext = vec![S::zero(); cols];
        ext[col] = S::one();
        for (i, &b) in t.basis.iter().enumerate() {
            ext[b] = -t.rows[i][col].clone();
        }
        let ray = (0..n).map(|j| read_var(&ext, j)).collect();
        return Ok(LpSolution::Unbounded { ray });
    }

    let mut ext = vec![S::zero(); cols];
    for (i, &b) in t.basis.iter().enumerate() {
        ext[b] = t.rhs(i);
    }
    let x: Vec<S> = (0..n).map(|j| read_var(&ext, j)).collect();
    let mut value = S::zero();
    for j in 0..n {
        value = value + lp.maximize[j].clone() * x[j].clone();
    }
    Ok(LpSolution::Optimal { x, value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn r(n: i64, d: i64) -> Ratio<i64> {
        Ratio::new(n, d)
    }

    #[test]
    fn corner_solution_on_the_simplex() {
        let mut lp = LinearProgram::<f64>::new(2);
        lp.set_objective(vec![1.0, 2.0]);
        lp.add_le(vec![1.0, 1.0], 1.0);
        match solve_lp(&lp).unwrap() {
            LpSolution::Optimal { x, value } => {
                assert!((value - 2.0).abs() < 1e-12);
                assert!((x[0] - 0.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn equality_and_ge_rows() {
        let mut lp = LinearProgram::<f64>::new(2);
        lp.set_objective(vec![3.0, 1.0]);
        lp.add_eq(vec![1.0, 1.0], 4.0);
        lp.add_ge(vec![1.0, 0.0], 1.0);
        lp.add_le(vec![1.0, 0.0], 3.0);
        match solve_lp(&lp).unwrap() {
            LpSolution::Optimal { x, value } => {
                assert!((x[0] - 3.0).abs() < 1e-12);
                assert!((x[1] - 1.0).abs() < 1e-12);
                assert!((value - 10.0).abs() < 1e-12);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_interval_yields_valid_certificate() {
        let mut lp = LinearProgram::<f64>::new(1);
        lp.add_ge(vec![1.0], 1.0);
        lp.add_le(vec![1.0], 0.0);
        match solve_lp(&lp).unwrap() {
            LpSolution::Infeasible { certificate } => {
                assert!(verify_farkas(&lp, &certificate), "bad certificate {certificate:?}");
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_equalities_yield_valid_certificate() {
        let mut lp = LinearProgram::<f64>::new(2);
        lp.add_eq(vec![1.0, 1.0], 1.0);
        lp.add_eq(vec![2.0, 2.0], 3.0);
        match solve_lp(&lp).unwrap() {
            LpSolution::Infeasible { certificate } => {
                assert!(verify_farkas(&lp, &certificate));
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_ray_is_reported() {
        let mut lp = LinearProgram::<f64>::new(2);
        lp.set_objective(vec![1.0, 0.0]);
        lp.add_le(vec![0.0, 1.0], 5.0);
        match solve_lp(&lp).unwrap() {
            LpSolution::Unbounded { ray } => {
                assert!(ray[0] > 0.5);
            }
            other => panic!("expected unbounded, got {other:?}"),
        }
    }

    #[test]
    fn free_variables_can_go_negative() {
        let mut lp = LinearProgram::<f64>::new(1);
        lp.mark_free(0);
        lp.set_objective(vec![1.0]);
        lp.add_le(vec![1.0], -2.0);
        match solve_lp(&lp).unwrap() {
            LpSolution::Optimal { x, value } => {
                assert!((x[0] + 2.0).abs() < 1e-12);
                assert!((value + 2.0).abs() < 1e-12);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn beale_cycling_example_terminates_at_the_optimum() {
        let mut lp = LinearProgram::<f64>::new(4);
        lp.set_objective(vec![0.75, -150.0, 0.02, -6.0]);
        lp.add_le(vec![0.25, -60.0, -0.04, 9.0], 0.0);
        lp.add_le(vec![0.5, -90.0, -0.02, 3.0], 0.0);
        lp.add_le(vec![0.0, 0.0, 1.0, 0.0], 1.0);
        match solve_lp(&lp).unwrap() {
            LpSolution::Optimal { value, .. } => {
                assert!((value - 0.05).abs() < 1e-9, "value {value}");
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn rational_pivoting_is_exact() {
        let mut lp = LinearProgram::<Ratio<i64>>::new(2);
        lp.set_objective(vec![r(1, 1), r(1, 1)]);
        lp.add_le(vec![r(2, 1), r(1, 1)], r(2, 1));
        lp.add_le(vec![r(1, 1), r(3, 1)], r(3, 1));
        match solve_lp(&lp).unwrap() {
            LpSolution::Optimal { x, value } => {
                assert_eq!(x, vec![r(3, 5), r(4, 5)]);
                assert_eq!(value, r(7, 5));
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn rational_infeasibility_is_exact() {
        let mut lp = LinearProgram::<Ratio<i64>>::new(1);
        lp.add_ge(vec![r(1, 1)], r(1, 3));
        lp.add_le(vec![r(1, 1)], r(1, 4));
        match solve_lp(&lp).unwrap() {
            LpSolution::Infeasible { certificate } => {
                assert!(verify_farkas(&lp, &certificate));
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn feasibility_wrapper_returns_a_checked_witness() {
        let mut lp = LinearProgram::<f64>::new(2);
        lp.add_le(vec![1.0, 0.0], 1.0);
        lp.add_ge(vec![0.0, 1.0], 0.25);
        match lp_feasibility(&lp).unwrap() {
            Feasibility::Feasible { witness } => {
                assert!(witness[0] <= 1.0 + 1e-10);
                assert!(witness[1] >= 0.25 - 1e-10);
                assert!(witness.iter().all(|&v| v >= -1e-10));
            }
            other => panic!("expected feasible, got {other:?}"),
        }
    }
}
