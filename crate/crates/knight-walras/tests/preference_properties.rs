//! Property tests for the preference functionals: concavity,
//! monotonicity, worst-case duality, supergradient inequalities, and
//! the smooth-model gradient against finite differences.

use knight_walras::preferences::{
    AmbiguityIndex, BernoulliSpec, PreferenceKind, PreferenceSpec,
};
use knight_walras::state_space::{ContingentPlan, PriorSet};
use proptest::prelude::*;

fn bernoulli_strategy() -> impl Strategy<Value = BernoulliSpec<f64>> {
    prop_oneof![
        (0.3f64..0.9).prop_map(|gamma| BernoulliSpec::Power { gamma }),
        (1.2f64..3.0).prop_map(|gamma| BernoulliSpec::Power { gamma }),
        (0.5f64..3.0).prop_map(|a| BernoulliSpec::Exponential { a }),
        Just(BernoulliSpec::SquareRoot),
        Just(BernoulliSpec::Logarithmic),
        Just(BernoulliSpec::PiecewiseLinear {
            kinks: vec![1.0, 2.5],
            slopes: vec![3.0, 1.5, 0.5],
        }),
    ]
}

fn prior_set_strategy() -> impl Strategy<Value = PriorSet<f64>> {
    (2usize..=4, 1usize..=3).prop_flat_map(|(states, verts)| {
        proptest::collection::vec(
            proptest::collection::vec(0.1f64..1.0, states),
            verts,
        )
        .prop_map(|raw| {
            let vertices = raw
                .into_iter()
                .map(|v| {
                    let s: f64 = v.iter().sum();
                    v.into_iter().map(|x| x / s).collect::<Vec<_>>()
                })
                .collect();
            PriorSet::from_vertices(vertices).unwrap()
        })
    })
}

#[derive(Debug, Clone)]
struct Case {
    priors: PriorSet<f64>,
    spec: PreferenceSpec<f64>,
    c: ContingentPlan<f64>,
    d: ContingentPlan<f64>,
}

fn kind_strategy(
    priors: PriorSet<f64>,
) -> impl Strategy<Value = PreferenceKind<f64>> {
    let k = priors.num_vertices();
    let n = priors.state_count();
    prop_oneof![
        Just(PreferenceKind::Maxmin { selection: None }),
        proptest::collection::vec(0.05f64..1.0, k).prop_map(move |raw| {
            let s: f64 = raw.iter().sum();
            PreferenceKind::Smooth {
                weights: raw.into_iter().map(|w| w / s).collect(),
                ambiguity: AmbiguityIndex::NegativeExponential { theta: 1.3 },
            }
        }),
        proptest::collection::vec(0.2f64..3.0, n).prop_map(|anchor| {
            PreferenceKind::Anchored {
                anchor: ContingentPlan::new(anchor).unwrap(),
            }
        }),
    ]
}

fn case_strategy() -> impl Strategy<Value = Case> {
    (prior_set_strategy(), bernoulli_strategy()).prop_flat_map(|(priors, bernoulli)| {
        let n = priors.state_count();
        (
            Just(priors.clone()),
            Just(bernoulli),
            kind_strategy(priors),
            proptest::collection::vec(0.1f64..5.0, n),
            proptest::collection::vec(0.1f64..5.0, n),
        )
            .prop_map(|(priors, bernoulli, kind, c, d)| Case {
                priors,
                spec: PreferenceSpec { bernoulli, kind },
                c: ContingentPlan::new(c).unwrap(),
                d: ContingentPlan::new(d).unwrap(),
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn concave(case in case_strategy(), lambda in 0.0f64..=1.0) {
        let mix = case.c.scale(lambda).add(&case.d.scale(1.0 - lambda));
        let u_mix = case.spec.utility(&case.priors, &mix).unwrap();
        let u_c = case.spec.utility(&case.priors, &case.c).unwrap();
        let u_d = case.spec.utility(&case.priors, &case.d).unwrap();
        prop_assert!(u_mix >= lambda * u_c + (1.0 - lambda) * u_d - 1e-10);
    }

    #[test]
    fn monotone(case in case_strategy(), bump in proptest::collection::vec(0.0f64..2.0, 4)) {
        let d = ContingentPlan::new(
            case.c.values().iter().zip(&bump).map(|(&a, &b)| a + b).collect()
        ).unwrap();
        let u_c = case.spec.utility(&case.priors, &case.c).unwrap();
        let u_d = case.spec.utility(&case.priors, &d).unwrap();
        prop_assert!(u_c <= u_d + 1e-12);
    }

    #[test]
    fn supergradient_inequality(case in case_strategy()) {
        let gens = case.spec.superdifferential(&case.priors, &case.c, 1e-9).unwrap();
        prop_assert!(!gens.is_empty());
        let u_c = case.spec.utility(&case.priors, &case.c).unwrap();
        let u_d = case.spec.utility(&case.priors, &case.d).unwrap();
        let step = case.d.sub(&case.c);
        for g in &gens {
            let linear: f64 = g
                .values()
                .iter()
                .zip(step.values())
                .map(|(&gi, &si)| gi * si)
                .sum();
            prop_assert!(
                u_d <= u_c + linear + 1e-8,
                "u(d)={u_d} exceeds linearization {}",
                u_c + linear
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn worst_case_duality(
        priors in prior_set_strategy(),
        c in proptest::collection::vec(0.1f64..5.0, 4),
    ) {
        let spec = PreferenceSpec::maxmin(BernoulliSpec::SquareRoot);
        let c = ContingentPlan::new(c[..priors.state_count()].to_vec()).unwrap();
        let u = spec.utility(&priors, &c).unwrap();
        let neg_u_plan = c.map(|x| -x.sqrt());
        let dual = -priors.sublinear_expectation(&neg_u_plan).unwrap().0;
        prop_assert!((u - dual).abs() <= 1e-12);
    }

    #[test]
    fn smooth_gradient_matches_finite_differences(
        priors in prior_set_strategy(),
        c in proptest::collection::vec(0.5f64..4.0, 4),
        theta in 0.5f64..2.0,
    ) {
        let n = priors.state_count();
        let k = priors.num_vertices();
        let spec = PreferenceSpec {
            bernoulli: BernoulliSpec::Power { gamma: 2.0 },
            kind: PreferenceKind::Smooth {
                weights: vec![1.0 / k as f64; k],
                ambiguity: AmbiguityIndex::NegativeExponential { theta },
            },
        };
        let c = ContingentPlan::new(c[..n].to_vec()).unwrap();
        let gens = spec.superdifferential(&priors, &c, 1e-9).unwrap();
        prop_assert_eq!(gens.len(), 1);
        let h = 1e-6;
        for w in 0..n {
            let mut up = c.values().to_vec();
            let mut dn = c.values().to_vec();
            up[w] += h;
            dn[w] -= h;
            let fd = (spec.utility(&priors, &ContingentPlan::new(up).unwrap()).unwrap()
                - spec.utility(&priors, &ContingentPlan::new(dn).unwrap()).unwrap())
                / (2.0 * h);
            let g = gens[0][w];
            prop_assert!(
                (fd - g).abs() <= 1e-4 * g.abs().max(1e-3),
                "state {w}: finite diff {fd} vs gradient {g}"
            );
        }
    }
}
