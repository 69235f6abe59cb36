//! Concave maximization over polyhedral feasible sets, an exhaustive
//! grid oracle, and the LP kernel.
//!
//! The engine runs projected supergradient ascent with a restarted
//! Polyak step rule: the step targets `best value + delta`, and `delta`
//! halves whenever a patience window passes without matching
//! improvement. Projections onto the box-and-halfspace intersection use
//! Dykstra's alternating method, so iterates stay feasible throughout.
//! A final stationarity LP produces a KKT certificate: the gap is the
//! max-norm distance between the convex hull of objective supergradients
//! and the cone of active constraint normals.

pub mod simplex;

pub use simplex::{
    lp_feasibility, solve_lp, verify_farkas, Constraint, Feasibility, LinearProgram,
    LinearScalar, LpSolution, Relation,
};

use crate::error::KwError;
use crate::scalar::{dot, fp, linf_norm, Scalar};
use crate::Result;

/// One halfspace `normal · x <= offset`.
#[derive(Debug, Clone)]
pub struct LinearConstraint<S> {
    pub normal: Vec<S>,
    pub offset: S,
}

/// Objective oracle: value and one supergradient at a point.
pub type ObjectiveFn<'a, S> = Box<dyn Fn(&[S]) -> (S, Vec<S>) + 'a>;
/// Supergradient generator oracle for set-valued superdifferentials
/// (all active pieces of a min-of-concave objective).
pub type GeneratorFn<'a, S> = Box<dyn Fn(&[S]) -> Vec<Vec<S>> + 'a>;

/// A concave maximization problem over `box ∩ halfspaces`.
pub struct ConcaveProgram<'a, S: Scalar> {
    pub objective: ObjectiveFn<'a, S>,
    /// When absent, the certificate uses the single supergradient from
    /// `objective`.
    pub generators: Option<GeneratorFn<'a, S>>,
    pub constraints: Vec<LinearConstraint<S>>,
    pub lower: Vec<S>,
    pub upper: Vec<S>,
}

impl<'a, S: Scalar> ConcaveProgram<'a, S> {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

/// Engine tolerances and budgets.
#[derive(Debug, Clone)]
pub struct SolveConfig<S> {
    pub max_iters: usize,
    /// Constraint violation allowed at the returned point.
    pub feas_tol: S,
    /// Certificate gap below which the result counts as optimal.
    pub stat_tol: S,
    /// Slack for deciding which constraints are active at the optimum.
    pub active_tol: S,
    /// Initial Polyak target gap; `None` scales `0.1` by the starting
    /// objective magnitude.
    pub delta0: Option<S>,
    /// Iterations without sufficient improvement before halving delta.
    pub patience: usize,
    /// Ascent stops once delta falls below this floor.
    pub delta_floor: S,
    pub start: Option<Vec<S>>,
    pub dykstra_max_sweeps: usize,
    pub dykstra_tol: S,
}

impl<S: Scalar> Default for SolveConfig<S> {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            feas_tol: fp(1e-9),
            stat_tol: fp(1e-7),
            active_tol: fp(1e-6),
            delta0: None,
            patience: 40,
            delta_floor: fp(1e-15),
            start: None,
            dykstra_max_sweeps: 400,
            dykstra_tol: fp(1e-14),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    Infeasible,
}

/// Engine output.
///
/// `kkt_multipliers` holds one nonnegative multiplier per constraint in
/// the order: linear constraints, then lower bounds, then upper bounds.
/// `generator_weights` are the convex weights on the supergradient
/// generators used by the certificate, in generator order.
#[derive(Debug, Clone)]
pub struct SolveResult<S> {
    pub point: Vec<S>,
    pub value: S,
    pub kkt_multipliers: Vec<S>,
    pub generator_weights: Vec<S>,
    pub status: SolveStatus,
    pub certificate_gap: S,
}

/// Dykstra projection onto `box ∩ halfspaces`.
///
/// The box is processed last in each sweep, so the output respects the
/// bounds exactly; halfspace violations shrink with the sweep residual.
pub fn project_polyhedron<S: Scalar>(
    point: &[S],
    constraints: &[LinearConstraint<S>],
    lower: &[S],
    upper: &[S],
    tol: S,
    max_sweeps: usize,
) -> Vec<S> {
    let n = point.len();
    let clamp_box = |x: &mut [S]| {
        for j in 0..n {
            x[j] = x[j].max(lower[j]).min(upper[j]);
        }
    };
    if constraints.is_empty() {
        let mut x = point.to_vec();
        clamp_box(&mut x);
        return x;
    }
    let norms2: Vec<S> = constraints.iter().map(|c| dot(&c.normal, &c.normal)).collect();
    let mut x = point.to_vec();
    let mut corr: Vec<Vec<S>> = vec![vec![S::zero(); n]; constraints.len() + 1];
    for _ in 0..max_sweeps {
        let mut movement = S::zero();
        for (ci, c) in constraints.iter().enumerate() {
            if norms2[ci] <= fp(1e-30) {
                continue;
            }
            let mut y: Vec<S> = (0..n).map(|j| x[j] + corr[ci][j]).collect();
            let slack = dot(&c.normal, &y) - c.offset;
            if slack > S::zero() {
                let scale = slack / norms2[ci];
                for j in 0..n {
                    y[j] = y[j] - scale * c.normal[j];
                }
            }
            for j in 0..n {
                corr[ci][j] = x[j] + corr[ci][j] - y[j];
                movement = movement.max((y[j] - x[j]).abs());
                x[j] = y[j];
            }
        }
        let bi = constraints.len();
        let mut y: Vec<S> = (0..n).map(|j| x[j] + corr[bi][j]).collect();
        clamp_box(&mut y);
        for j in 0..n {
            corr[bi][j] = x[j] + corr[bi][j] - y[j];
            movement = movement.max((y[j] - x[j]).abs());
            x[j] = y[j];
        }
        if movement <= tol {
            break;
        }
    }
    x
}

fn max_violation<S: Scalar>(x: &[S], constraints: &[LinearConstraint<S>]) -> S {
    constraints
        .iter()
        .fold(S::zero(), |m, c| m.max(dot(&c.normal, x) - c.offset))
}

/// Solves the square system `A y = b` by Gaussian elimination with
/// partial pivoting; `None` when a pivot degenerates.
pub(crate) fn solve_dense<S: Scalar>(a: &[Vec<S>], b: &[S]) -> Option<Vec<S>> {
    let n = b.len();
    let mut m: Vec<Vec<S>> = a.to_vec();
    let mut rhs = b.to_vec();
    let scale = m
        .iter()
        .flatten()
        .fold(S::zero(), |acc, v| acc.max(v.abs()))
        .max(S::one());
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[i][col]
                .abs()
                .partial_cmp(&m[j][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[pivot][col].abs() <= fp::<S>(1e-13) * scale {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for r in col + 1..n {
            let factor = m[r][col] / m[col][col];
            if factor == S::zero() {
                continue;
            }
            for k in col..n {
                m[r][k] = m[r][k] - factor * m[col][k];
            }
            rhs[r] = rhs[r] - factor * rhs[col];
        }
    }
    let mut y = vec![S::zero(); n];
    for col in (0..n).rev() {
        let mut acc = rhs[col];
        for k in col + 1..n {
            acc = acc - m[col][k] * y[k];
        }
        y[col] = acc / m[col][col];
    }
    Some(y)
}

/// Maximizes a concave objective over `box ∩ halfspaces`.
///
/// Infeasibility and iteration exhaustion are reported through the
/// result status; `Err` is reserved for malformed programs.
pub fn maximize_concave<S: Scalar + LinearScalar>(
    program: &ConcaveProgram<S>,
    config: &SolveConfig<S>,
) -> Result<SolveResult<S>> {
    let n = program.dim();
    if program.upper.len() != n {
        return Err(KwError::DimensionMismatch {
            expected: n,
            got: program.upper.len(),
        });
    }
    for c in &program.constraints {
        if c.normal.len() != n {
            return Err(KwError::DimensionMismatch {
                expected: n,
                got: c.normal.len(),
            });
        }
    }
    let infeasible = || SolveResult {
        point: vec![S::zero(); n],
        value: S::neg_infinity(),
        kkt_multipliers: vec![S::zero(); program.constraints.len() + 2 * n],
        generator_weights: Vec::new(),
        status: SolveStatus::Infeasible,
        certificate_gap: S::infinity(),
    };
    if (0..n).any(|j| program.lower[j] > program.upper[j]) {
        return Ok(infeasible());
    }

    // Phase-1 LP feasibility in shifted coordinates s = x - lower >= 0.
    let witness = {
        let mut lp = LinearProgram::<S>::new(n);
        for c in &program.constraints {
            let shift = dot(&c.normal, &program.lower);
            lp.add_le(c.normal.clone(), c.offset - shift);
        }
        for j in 0..n {
            let mut row = vec![S::zero(); n];
            row[j] = S::one();
            lp.add_le(row, program.upper[j] - program.lower[j]);
        }
        match lp_feasibility(&lp)? {
            Feasibility::Feasible { witness } => witness
                .iter()
                .zip(&program.lower)
                .map(|(&s, &l)| s + l)
                .collect::<Vec<S>>(),
            Feasibility::Infeasible { .. } => return Ok(infeasible()),
        }
    };

    let project = |x: &[S]| -> Vec<S> {
        let p = project_polyhedron(
            x,
            &program.constraints,
            &program.lower,
            &program.upper,
            config.dykstra_tol,
            config.dykstra_max_sweeps,
        );
        if max_violation(&p, &program.constraints) > config.feas_tol / fp(2.0) {
            project_polyhedron(
                &p,
                &program.constraints,
                &program.lower,
                &program.upper,
                config.dykstra_tol,
                config.dykstra_max_sweeps * 4,
            )
        } else {
            p
        }
    };

    let mut x = project(config.start.as_deref().unwrap_or(&witness));
    let (f0, _) = (program.objective)(&x);
    let mut x_best = x.clone();
    let mut f_best = f0;
    let mut delta = config
        .delta0
        .unwrap_or_else(|| fp::<S>(0.1) * f0.abs().max(S::one()));
    let mut f_mark = f_best;
    let mut since_mark = 0usize;
    let mut iters = 0usize;
    while iters < config.max_iters {
        iters += 1;
        let (f, g) = (program.objective)(&x);
        if f > f_best {
            f_best = f;
            x_best = x.clone();
        }
        let g2 = dot(&g, &g);
        if g2 <= fp(1e-28) {
            break;
        }
        let step = (f_best + delta - f) / g2;
        let proposal: Vec<S> = (0..n).map(|j| x[j] + step * g[j]).collect();
        x = project(&proposal);
        since_mark += 1;
        if since_mark >= config.patience {
            let gain = f_best - f_mark;
            if gain < delta / fp(2.0) {
                // A dead window collapses delta faster than a slow one.
                delta = if gain <= S::zero() {
                    delta / fp(8.0)
                } else {
                    delta / fp(2.0)
                };
                if delta <= config.delta_floor * f_best.abs().max(S::one()) {
                    break;
                }
            }
            f_mark = f_best;
            since_mark = 0;
        }
    }

    polish(program, config, &project, &mut x_best, &mut f_best);

    let (gap, multipliers, weights) = stationarity_certificate(program, &x_best, config)?;
    let grad_scale = {
        let (_, g) = (program.objective)(&x_best);
        linf_norm(&g).max(S::one())
    };
    let status = if gap <= config.stat_tol * grad_scale {
        SolveStatus::Optimal
    } else {
        SolveStatus::MaxIterations
    };
    let (value, _) = (program.objective)(&x_best);
    Ok(SolveResult {
        point: x_best,
        value,
        kkt_multipliers: multipliers,
        generator_weights: weights,
        status,
        certificate_gap: gap,
    })
}

/// Monotone sharpening pass: projected-gradient ascent with a
/// backtracking line search, started from the incumbent.
///
/// The Polyak schedule can stall short of a constrained optimum when
/// the supergradient is mostly orthogonal to the active face, because
/// halving triggers on the projected (small) per-window gain. The
/// polish deflates the step direction along active faces so progress
/// survives the projection, and only ever accepts improvements. At a
/// kink of a min-of-concave objective the line search fails fast and
/// the incumbent is kept.
fn polish<S: Scalar>(
    program: &ConcaveProgram<S>,
    config: &SolveConfig<S>,
    project: &dyn Fn(&[S]) -> Vec<S>,
    x_best: &mut Vec<S>,
    f_best: &mut S,
) {
    let n = program.dim();
    let mut t_guess = S::one();
    for _ in 0..400 {
        let (f, g) = (program.objective)(x_best);
        let mut d = g.clone();
        for _ in 0..3 {
            for c in &program.constraints {
                let n2 = dot(&c.normal, &c.normal);
                if n2 <= fp(1e-30) {
                    continue;
                }
                let scale = c.offset.abs().max(S::one());
                if dot(&c.normal, x_best) - c.offset >= -config.active_tol * scale {
                    let push = dot(&c.normal, &d);
                    if push > S::zero() {
                        for j in 0..n {
                            d[j] = d[j] - push / n2 * c.normal[j];
                        }
                    }
                }
            }
            for j in 0..n {
                let lo_scale = program.lower[j].abs().max(S::one());
                if x_best[j] - program.lower[j] <= config.active_tol * lo_scale && d[j] < S::zero()
                {
                    d[j] = S::zero();
                }
                let hi_scale = program.upper[j].abs().max(S::one());
                if program.upper[j] - x_best[j] <= config.active_tol * hi_scale && d[j] > S::zero()
                {
                    d[j] = S::zero();
                }
            }
        }
        if linf_norm(&d) <= fp::<S>(1e-12) * linf_norm(&g).max(S::one()) {
            break;
        }
        let mut t = t_guess;
        let mut accepted = false;
        for _ in 0..60 {
            let proposal: Vec<S> = (0..n).map(|j| x_best[j] + t * d[j]).collect();
            let y = project(&proposal);
            let (fy, _) = (program.objective)(&y);
            let advance: S = (0..n).map(|j| d[j] * (y[j] - x_best[j])).sum();
            if fy > f && fy - f >= fp::<S>(1e-4) * advance.max(S::zero()) {
                *x_best = y;
                *f_best = (*f_best).max(fy);
                t_guess = t * fp(2.0);
                accepted = true;
                break;
            }
            t = t * fp(0.5);
            if t <= fp(1e-16) {
                break;
            }
        }
        if !accepted {
            break;
        }
    }
}

/// Stationarity certificate at `x`: minimizes the max-norm residual of
/// `convex-combination(generators) - cone(active normals)` by LP.
///
/// Returns the gap, the multipliers (linear constraints, then lower
/// bounds, then upper bounds), and the generator weights. Callable at
/// any feasible point, not just engine output, so downstream code can
/// certify points produced by closed-form shortcuts.
pub fn stationarity_certificate<S: Scalar + LinearScalar>(
    program: &ConcaveProgram<S>,
    x: &[S],
    config: &SolveConfig<S>,
) -> Result<(S, Vec<S>, Vec<S>)> {
    let n = program.dim();
    let generators: Vec<Vec<S>> = match &program.generators {
        Some(gen) => (gen)(x),
        None => vec![(program.objective)(x).1],
    };
    let m = program.constraints.len();
    // Active normals: (slot index in the multiplier vector, normal).
    let mut active: Vec<(usize, Vec<S>)> = Vec::new();
    for (i, c) in program.constraints.iter().enumerate() {
        let scale = c.offset.abs().max(S::one());
        if (dot(&c.normal, x) - c.offset).abs() <= config.active_tol * scale {
            active.push((i, c.normal.clone()));
        }
    }
    for j in 0..n {
        let scale = program.lower[j].abs().max(S::one());
        if (x[j] - program.lower[j]).abs() <= config.active_tol * scale {
            let mut normal = vec![S::zero(); n];
            normal[j] = -S::one();
            active.push((m + j, normal));
        }
        let scale = program.upper[j].abs().max(S::one());
        if (program.upper[j] - x[j]).abs() <= config.active_tol * scale {
            let mut normal = vec![S::zero(); n];
            normal[j] = S::one();
            active.push((m + n + j, normal));
        }
    }

    // Variables: w (generators), mu (active normals), t.
    let r = generators.len();
    let a = active.len();
    let nv = r + a + 1;
    let mut lp = LinearProgram::<S>::new(nv);
    let mut obj = vec![S::zero(); nv];
    obj[nv - 1] = -S::one();
    lp.set_objective(obj);
    let mut simplex_row = vec![S::zero(); nv];
    for slot in simplex_row.iter_mut().take(r) {
        *slot = S::one();
    }
    lp.add_eq(simplex_row, S::one());
    for j in 0..n {
        let mut row = vec![S::zero(); nv];
        for (gi, g) in generators.iter().enumerate() {
            row[gi] = g[j];
        }
        for (ai, (_, normal)) in active.iter().enumerate() {
            row[r + ai] = -normal[j];
        }
        row[nv - 1] = -S::one();
        lp.add_le(row.clone(), S::zero());
        let flipped: Vec<S> = row
            .iter()
            .enumerate()
            .map(|(k, v)| if k == nv - 1 { *v } else { -*v })
            .collect();
        lp.add_le(flipped, S::zero());
    }
    match solve_lp(&lp)? {
        LpSolution::Optimal { x: sol, value } => {
            let gap = -value;
            let mut multipliers = vec![S::zero(); m + 2 * n];
            for (ai, (slot, _)) in active.iter().enumerate() {
                multipliers[*slot] = sol[r + ai];
            }
            Ok((gap, multipliers, sol[..r].to_vec()))
        }
        _ => Ok((S::infinity(), vec![S::zero(); m + 2 * n], Vec::new())),
    }
}

/// Exhaustive evaluation over a uniform grid on the box, keeping the
/// best constraint-feasible point (earliest wins on ties).
///
/// When every constraint normal is nonnegative, rounding the true
/// optimum down to the grid stays feasible, so the best grid value is
/// within `sum_j L_j * h_j` of the optimum for any per-coordinate
/// Lipschitz bounds `L_j` (`h_j` = grid step). The evaluation budget is
/// capped at twenty million points.
pub fn grid_oracle<S: Scalar>(
    program: &ConcaveProgram<S>,
    resolution: usize,
) -> Result<SolveResult<S>> {
    let n = program.dim();
    if resolution < 2 {
        return Err(KwError::InvalidParameter {
            name: "resolution",
            reason: "need at least two points per axis".into(),
        });
    }
    let total = (resolution as f64).powi(n as i32);
    if total > 2e7 {
        return Err(KwError::InvalidParameter {
            name: "resolution",
            reason: format!("{total:.0} grid points exceed the 2e7 budget"),
        });
    }
    let steps: Vec<S> = (0..n)
        .map(|j| (program.upper[j] - program.lower[j]) / fp::<S>((resolution - 1) as f64))
        .collect();
    let mut idx = vec![0usize; n];
    let mut best: Option<(S, Vec<S>)> = None;
    loop {
        let x: Vec<S> = (0..n)
            .map(|j| program.lower[j] + steps[j] * fp::<S>(idx[j] as f64))
            .collect();
        if max_violation(&x, &program.constraints) <= fp(1e-9) {
            let (v, _) = (program.objective)(&x);
            if best.as_ref().map_or(true, |(bv, _)| v > *bv) {
                best = Some((v, x));
            }
        }
        let mut j = 0;
        loop {
            if j == n {
                let result = match best {
                    Some((value, point)) => SolveResult {
                        point,
                        value,
                        kkt_multipliers: vec![S::zero(); program.constraints.len() + 2 * n],
                        generator_weights: Vec::new(),
                        status: SolveStatus::Optimal,
                        certificate_gap: S::infinity(),
                    },
                    None => SolveResult {
                        point: vec![S::zero(); n],
                        value: S::neg_infinity(),
                        kkt_multipliers: vec![S::zero(); program.constraints.len() + 2 * n],
                        generator_weights: Vec::new(),
                        status: SolveStatus::Infeasible,
                        certificate_gap: S::infinity(),
                    },
                };
                return Ok(result);
            }
            idx[j] += 1;
            if idx[j] < resolution {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quadratic_program<'a>(
        center: &'a [f64],
        constraints: Vec<LinearConstraint<f64>>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> ConcaveProgram<'a, f64> {
        ConcaveProgram {
            objective: Box::new(move |x: &[f64]| {
                let v = -x
                    .iter()
                    .zip(center)
                    .map(|(&xi, &ci)| (xi - ci) * (xi - ci))
                    .sum::<f64>();
                let g = x
                    .iter()
                    .zip(center)
                    .map(|(&xi, &ci)| -2.0 * (xi - ci))
                    .collect();
                (v, g)
            }),
            generators: None,
            constraints,
            lower,
            upper,
        }
    }

    #[test]
    fn interior_quadratic_peak_is_found() {
        let center = [0.3, -0.2];
        let prog = quadratic_program(&center, vec![], vec![-1.0, -1.0], vec![1.0, 1.0]);
        let res = maximize_concave(&prog, &SolveConfig::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(res.value, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(res.point[0], 0.3, epsilon = 1e-5);
        assert_abs_diff_eq!(res.point[1], -0.2, epsilon = 1e-5);
        assert!(res.certificate_gap <= 1e-7);
    }

    #[test]
    fn binding_halfspace_produces_a_kkt_multiplier() {
        // Peak (1,1) cut off by x+y <= 1; optimum (0.5,0.5), gradient
        // (1,1) equals 1.0 times the normal.
        let center = [1.0, 1.0];
        let prog = quadratic_program(
            &center,
            vec![LinearConstraint {
                normal: vec![1.0, 1.0],
                offset: 1.0,
            }],
            vec![0.0, 0.0],
            vec![2.0, 2.0],
        );
        let res = maximize_concave(&prog, &SolveConfig::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(res.point[0], 0.5, epsilon = 1e-5);
        assert_abs_diff_eq!(res.point[1], 0.5, epsilon = 1e-5);
        assert_abs_diff_eq!(res.kkt_multipliers[0], 1.0, epsilon = 1e-3);
        assert!(res.certificate_gap <= 1e-7);
    }

    #[test]
    fn infeasible_program_is_flagged_not_erred() {
        let center = [0.0];
        let prog = quadratic_program(
            &center,
            vec![LinearConstraint {
                normal: vec![1.0],
                offset: -1.0,
            }],
            vec![0.0],
            vec![1.0],
        );
        let res = maximize_concave(&prog, &SolveConfig::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Infeasible);
        let grid = grid_oracle(&prog, 11).unwrap();
        assert_eq!(grid.status, SolveStatus::Infeasible);
    }

    #[test]
    fn grid_oracle_matches_constant_objective() {
        let prog = ConcaveProgram {
            objective: Box::new(|_: &[f64]| (42.0, vec![0.0, 0.0])),
            generators: None,
            constraints: vec![],
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
        };
        let res = grid_oracle(&prog, 5).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert_eq!(res.value, 42.0);
        assert_eq!(res.point, vec![0.0, 0.0]);
    }

    #[test]
    fn grid_oracle_rejects_oversized_grids() {
        let prog = quadratic_program(&[0.0, 0.0, 0.0], vec![], vec![0.0; 3], vec![1.0; 3]);
        assert!(grid_oracle(&prog, 40).is_ok());
        assert!(grid_oracle(&prog, 3000).is_err());
    }

    #[test]
    fn dykstra_projection_lands_on_the_intersection() {
        let constraints = vec![
            LinearConstraint {
                normal: vec![1.0, 1.0],
                offset: 1.0,
            },
            LinearConstraint {
                normal: vec![1.0, -1.0],
                offset: 0.25,
            },
        ];
        let p = project_polyhedron(&[2.0, 0.5], &constraints, &[0.0, 0.0], &[5.0, 5.0], 1e-14, 400);
        assert!(p[0] + p[1] <= 1.0 + 1e-9);
        assert!(p[0] - p[1] <= 0.25 + 1e-9);
        assert!(p[0] >= -1e-12 && p[1] >= -1e-12);
        let q = project_polyhedron(&[0.1, 0.2], &constraints, &[0.0, 0.0], &[5.0, 5.0], 1e-14, 400);
        assert_abs_diff_eq!(q[0], 0.1, epsilon = 1e-10);
        assert_abs_diff_eq!(q[1], 0.2, epsilon = 1e-10);
    }

    #[test]
    fn linear_objective_reaches_a_simplex_vertex() {
        let prog = ConcaveProgram {
            objective: Box::new(|x: &[f64]| (x[0] + 2.0 * x[1], vec![1.0, 2.0])),
            generators: None,
            constraints: vec![LinearConstraint {
                normal: vec![1.0, 1.0],
                offset: 1.0,
            }],
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
        };
        let res = maximize_concave(&prog, &SolveConfig::default()).unwrap();
        assert_abs_diff_eq!(res.value, 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(res.point[1], 1.0, epsilon = 1e-6);
    }
}
