//! Engine-versus-grid agreement on seeded random concave programs, plus
//! KKT multiplier self-consistency.
//!
//! Constraint normals are kept nonnegative so the grid oracle's
//! down-rounding guarantee applies: the best grid value is within
//! `sum_j L_j h_j` of the true optimum.

use knight_walras::optimization::{
    grid_oracle, maximize_concave, ConcaveProgram, LinearConstraint, SolveConfig, SolveStatus,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Quadratic {
    weights: Vec<f64>,
    center: Vec<f64>,
}

impl Quadratic {
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let v = -x
            .iter()
            .zip(&self.center)
            .zip(&self.weights)
            .map(|((&xi, &ci), &wi)| wi * (xi - ci) * (xi - ci))
            .sum::<f64>();
        let g = x
            .iter()
            .zip(&self.center)
            .zip(&self.weights)
            .map(|((&xi, &ci), &wi)| -2.0 * wi * (xi - ci))
            .collect();
        (v, g)
    }
}

fn seeded_program(rng: &mut StdRng) -> (Quadratic, Vec<LinearConstraint<f64>>, Vec<f64>, Vec<f64>) {
    let dim = rng.gen_range(1..=3);
    let lower: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..0.0)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + rng.gen_range(0.5..2.0)).collect();
    let center: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let weights: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.5..3.0)).collect();
    let mut constraints = Vec::new();
    for _ in 0..rng.gen_range(0..=2) {
        let normal: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
        // Offset chosen between the constraint's value at the lower
        // corner and at the upper corner, so the cut is nontrivial but
        // the lower corner stays feasible.
        let at_lower: f64 = normal.iter().zip(&lower).map(|(&a, &l)| a * l).sum();
        let at_upper: f64 = normal.iter().zip(&upper).map(|(&a, &u)| a * u).sum();
        let offset = at_lower + rng.gen_range(0.3..1.0) * (at_upper - at_lower);
        constraints.push(LinearConstraint { normal, offset });
    }
    (Quadratic { weights, center }, constraints, lower, upper)
}

#[test]
fn engine_agrees_with_grid_on_seeded_programs() {
    let mut rng = StdRng::seed_from_u64(2024);
    for trial in 0..20 {
        let (quad, constraints, lower, upper) = seeded_program(&mut rng);
        let dim = lower.len();
        let resolution = 81usize;
        let prog = ConcaveProgram {
            objective: Box::new(|x: &[f64]| quad.eval(x)),
            generators: None,
            constraints: constraints.clone(),
            lower: lower.clone(),
            upper: upper.clone(),
        };
        let engine = maximize_concave(&prog, &SolveConfig::default()).unwrap();
        let grid = grid_oracle(&prog, resolution).unwrap();
        assert_eq!(grid.status, SolveStatus::Optimal, "trial {trial}: no feasible grid point");
        // Per-coordinate Lipschitz bound of the quadratic over the box.
        let lipschitz_step: f64 = (0..dim)
            .map(|j| {
                let reach = (upper[j] - quad.center[j])
                    .abs()
                    .max((lower[j] - quad.center[j]).abs());
                let h = (upper[j] - lower[j]) / (resolution - 1) as f64;
                2.0 * quad.weights[j] * reach * h
            })
            .sum();
        let diff = (engine.value - grid.value).abs();
        assert!(
            diff <= lipschitz_step + 1e-6,
            "trial {trial}: engine {} vs grid {} (allowance {})",
            engine.value,
            grid.value,
            lipschitz_step + 1e-6
        );
        assert!(
            engine.value >= grid.value - 1e-6,
            "trial {trial}: engine must not lose to the grid"
        );
    }
}

#[test]
fn reported_multipliers_reproduce_the_stationarity_residual() {
    let mut rng = StdRng::seed_from_u64(7);
    let mut checked = 0;
    for _ in 0..20 {
        let (quad, constraints, lower, upper) = seeded_program(&mut rng);
        let dim = lower.len();
        let prog = ConcaveProgram {
            objective: Box::new(|x: &[f64]| quad.eval(x)),
            generators: None,
            constraints: constraints.clone(),
            lower: lower.clone(),
            upper: upper.clone(),
        };
        let res = maximize_concave(&prog, &SolveConfig::default()).unwrap();
        if res.status != SolveStatus::Optimal {
            continue;
        }
        let (_, g) = quad.eval(&res.point);
        let mut residual = g;
        let m = constraints.len();
        for (i, c) in constraints.iter().enumerate() {
            for j in 0..dim {
                residual[j] -= res.kkt_multipliers[i] * c.normal[j];
            }
        }
        for j in 0..dim {
            residual[j] -= res.kkt_multipliers[m + j] * -1.0;
            residual[j] -= res.kkt_multipliers[m + dim + j] * 1.0;
        }
        let linf = residual.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        assert!(
            linf <= 1e-7 * (1.0 + linf.max(1.0)),
            "stationarity residual {linf} from reported multipliers"
        );
        assert!((linf - res.certificate_gap).abs() <= 1e-6);
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} programs certified optimal");
}

#[test]
fn every_optimal_point_passes_an_independent_feasibility_recheck() {
    let mut rng = StdRng::seed_from_u64(99);
    for _ in 0..20 {
        let (quad, constraints, lower, upper) = seeded_program(&mut rng);
        let prog = ConcaveProgram {
            objective: Box::new(|x: &[f64]| quad.eval(x)),
            generators: None,
            constraints: constraints.clone(),
            lower: lower.clone(),
            upper: upper.clone(),
        };
        let res = maximize_concave(&prog, &SolveConfig::default()).unwrap();
        for (j, &xj) in res.point.iter().enumerate() {
            assert!(xj >= lower[j] - 1e-9 && xj <= upper[j] + 1e-9);
        }
        for c in &constraints {
            let lhs: f64 = c.normal.iter().zip(&res.point).map(|(&a, &x)| a * x).sum();
            assert!(lhs <= c.offset + 1e-9);
        }
    }
}
