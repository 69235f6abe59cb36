//! Property checks for budget sets and the demand correspondence:
//! degree-zero homogeneity in the price, the weak Walras law, convexity
//! of the budget set, and dominance of the returned plan over random
//! feasible plans.

use knight_walras::markets::{budget_value, demand, excess_demand, ClearingConvention, Economy};
use knight_walras::preferences::{
    Agent, AmbiguityIndex, BernoulliSpec, PreferenceKind, PreferenceSpec,
};
use knight_walras::state_space::{ContingentPlan, PriorSet, StatePrice};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn bernoulli() -> impl Strategy<Value = BernoulliSpec<f64>> {
    prop_oneof![
        Just(BernoulliSpec::SquareRoot),
        (0.5f64..3.0).prop_map(|a| BernoulliSpec::Exponential { a }),
        (0.3f64..0.9).prop_map(|gamma| BernoulliSpec::Power { gamma }),
        (1.5f64..4.0).prop_map(|gamma| BernoulliSpec::Power { gamma }),
        Just(BernoulliSpec::Logarithmic),
    ]
}

/// Families whose utility is bounded below near zero consumption. The
/// negative-exponential index exponentiates the utility scale, so the
/// unbounded families push it past f64 range.
fn tame_bernoulli() -> impl Strategy<Value = BernoulliSpec<f64>> {
    prop_oneof![
        Just(BernoulliSpec::SquareRoot),
        (0.5f64..3.0).prop_map(|a| BernoulliSpec::Exponential { a }),
        (0.3f64..0.9).prop_map(|gamma| BernoulliSpec::Power { gamma }),
    ]
}

prop_compose! {
    fn scenario()(
        eps in 0.0f64..0.35,
        bern in bernoulli(),
        bern_tame in tame_bernoulli(),
        kind_pick in 0u8..3,
        e0 in 0.25f64..1.4,
        e1 in 0.25f64..1.4,
        p0 in 0.1f64..1.0,
        p1 in 0.1f64..1.0,
        theta in 0.5f64..2.0,
        w0 in 0.1f64..0.9,
    ) -> (Agent<f64>, PriorSet<f64>, StatePrice<f64>) {
        let priors = PriorSet::interval_family(eps).unwrap();
        let weights = if priors.num_vertices() == 2 {
            vec![w0, 1.0 - w0]
        } else {
            vec![1.0]
        };
        let (kind, family) = match kind_pick {
            0 => (PreferenceKind::Maxmin { selection: None }, bern),
            1 => (
                PreferenceKind::Smooth {
                    weights,
                    ambiguity: AmbiguityIndex::Identity,
                },
                bern,
            ),
            _ => (
                PreferenceKind::Smooth {
                    weights,
                    ambiguity: AmbiguityIndex::NegativeExponential { theta },
                },
                bern_tame,
            ),
        };
        let agent = Agent::new(
            ContingentPlan::new(vec![e0, e1]).unwrap(),
            PreferenceSpec { bernoulli: family, kind },
        )
        .unwrap();
        let psi = StatePrice::new(vec![p0, p1]).unwrap();
        (agent, priors, psi)
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 40, ..ProptestConfig::default() })]

    #[test]
    fn demand_ignores_the_price_scale(
        (agent, priors, psi) in scenario(),
        lambda in 0.2f64..8.0,
    ) {
        let cap = ContingentPlan::constant(2, 3.0);
        let base = demand(&agent, &priors, &psi, &cap).unwrap();
        let scaled_psi =
            StatePrice::new(psi.values().iter().map(|&v| v * lambda).collect()).unwrap();
        let scaled = demand(&agent, &priors, &scaled_psi, &cap).unwrap();
        for w in 0..2 {
            prop_assert!(
                (base.plan[w] - scaled.plan[w]).abs() <= 1e-9,
                "state {w}: {} vs {}",
                base.plan[w],
                scaled.plan[w]
            );
        }
    }

    #[test]
    fn excess_demand_satisfies_the_weak_walras_law(
        (agent_a, priors, _) in scenario(),
        bern_b in bernoulli(),
        eb0 in 0.25f64..1.4,
        eb1 in 0.25f64..1.4,
        q in 0.05f64..0.95,
    ) {
        // The second agent is built against the first agent's priors so
        // the economy is coherent.
        let agent_b = Agent::new(
            ContingentPlan::new(vec![eb0, eb1]).unwrap(),
            PreferenceSpec {
                bernoulli: bern_b,
                kind: PreferenceKind::Maxmin { selection: None },
            },
        )
        .unwrap();
        let economy = Economy::new(
            vec![agent_a, agent_b],
            priors,
            ClearingConvention::FreeDisposal,
        )
        .unwrap();
        let psi = StatePrice::new(vec![q, 1.0 - q]).unwrap();
        let (z, per_agent) = excess_demand(&economy, &psi).unwrap();
        let value = psi.price(economy.priors(), &z).unwrap();
        prop_assert!(value <= 1e-7, "priced excess demand {value} > 0");
        for (i, d) in per_agent.iter().enumerate() {
            let slack = budget_value(
                &psi,
                economy.priors(),
                &economy.agents()[i].endowment,
                &d.plan,
            )
            .unwrap();
            prop_assert!(slack <= 1e-9, "agent {i} budget violated: {slack}");
            prop_assert!(slack.abs() <= 1e-7, "agent {i} budget not binding: {slack}");
        }
    }

    #[test]
    fn budget_sets_are_convex(
        (agent, priors, psi) in scenario(),
        seed in any::<u64>(),
        lam in 0.0f64..1.0,
    ) {
        let e = &agent.endowment;
        let mut rng = StdRng::seed_from_u64(seed);
        let mut feasible = Vec::new();
        for _ in 0..4000 {
            if feasible.len() == 2 {
                break;
            }
            let c = ContingentPlan::new(vec![
                rng.gen_range(0.0..3.0),
                rng.gen_range(0.0..3.0),
            ])
            .unwrap();
            if budget_value(&psi, &priors, e, &c).unwrap() <= 0.0 {
                feasible.push(c);
            }
        }
        prop_assume!(feasible.len() == 2);
        let mix = feasible[0].scale(lam).add(&feasible[1].scale(1.0 - lam));
        let value = budget_value(&psi, &priors, e, &mix).unwrap();
        prop_assert!(value <= 1e-12, "convex combination leaves the budget: {value}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 20, ..ProptestConfig::default() })]

    #[test]
    fn demand_dominates_random_feasible_plans(
        (agent, priors, psi) in scenario(),
        seed in any::<u64>(),
    ) {
        let cap = ContingentPlan::constant(2, 3.0);
        let d = demand(&agent, &priors, &psi, &cap).unwrap();
        let own_slack = budget_value(&psi, &priors, &agent.endowment, &d.plan).unwrap();
        prop_assert!(own_slack <= 1e-9, "returned plan violates the budget: {own_slack}");
        let mut rng = StdRng::seed_from_u64(seed);
        let mut checked = 0usize;
        for _ in 0..20_000 {
            if checked == 1000 {
                break;
            }
            let c = ContingentPlan::new(vec![
                rng.gen_range(0.0..3.0),
                rng.gen_range(0.0..3.0),
            ])
            .unwrap();
            if budget_value(&psi, &priors, &agent.endowment, &c).unwrap() > 0.0 {
                continue;
            }
            checked += 1;
            let u = agent
                .preference
                .utility_clamped(&priors, &c, 1e-12)
                .unwrap();
            prop_assert!(
                d.utility_value >= u - 1e-7,
                "plan with utility {u} beats demand at {}",
                d.utility_value
            );
        }
        prop_assert!(checked >= 200, "only {checked} feasible draws");
    }
}
