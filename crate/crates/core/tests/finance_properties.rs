use std::collections::BTreeMap;

use proptest::prelude::*;
use stochdp::dp::backward_pass;
use stochdp::finance::{
    build_consumption, check_thm_ocp_conditions, duality_gap, leaf_gains, no_arbitrage_check, no_scalable_arbitrage_check, solve_consumption,
    solve_consumption_dual, superhedge_cost, ConeMarket, DualIndex, DualValue, LiquidMarket, UtilitySpec,
};
use stochdp::instances::InstanceGen;
use stochdp::oracle::Endowment;
use stochdp::polyhedra::{ConeRep, Halfspace, PolyFunc, Polyhedron};
use stochdp::rational::{frac, int, vec_of, Rational};
use stochdp::tree::{NodeId, Policy, ScenarioTree};
use stochdp::DpError;

/// Integer price paths where every branching node has a child above and a child below.
fn two_sided_market(seed: u64, horizon: usize) -> LiquidMarket {
    let mut g = InstanceGen::new(seed);
    let tree = g.tree(horizon, 3);
    let mut prices: BTreeMap<NodeId, Vec<Rational>> = [(tree.root(), vec_of(&[g.int_in(2, 6)]))].into();
    for n in tree.nodes() {
        let s = prices[&n.id][0].clone();
        let (up, down) = (g.int_in(1, 3), g.int_in(1, 3));
        for (i, c) in n.children.iter().enumerate() {
            let step = match (n.children.len(), i) {
                (1, _) => 0,
                (_, 0) => up,
                (_, 1) => -down,
                _ => g.int_in(-down, up),
            };
            prices.insert(*c, vec![&s + int(step)]);
        }
    }
    LiquidMarket { tree, prices }
}

fn frictionless(seed: u64) -> (ConeMarket, BTreeMap<NodeId, Rational>) {
    let mkt = two_sided_market(seed, 2);
    let stock: BTreeMap<NodeId, Rational> = mkt.prices.iter().map(|(v, s)| (*v, s[0].clone())).collect();
    (ConeMarket::frictionless(mkt.tree, &stock), stock)
}

/// `{λ(1, s) : λ ≥ 0}` written out directly.
fn price_ray(s: &Rational) -> ConeRep {
    ConeRep::new(2, vec![vec_of(&[-1, 0])], vec![vec![s.clone(), int(-1)]])
}

fn zero_utility(tree: &ScenarioTree) -> UtilitySpec {
    // U ≡ 0 on cash-only nonnegative consumption.
    let dom = Polyhedron::new(
        2,
        vec![Halfspace::new(vec_of(&[-1, 0]), int(0))],
        vec![Halfspace::new(vec_of(&[0, 1]), int(0))],
    );
    let f = PolyFunc::indicator(&dom).unwrap();
    UtilitySpec {
        neg_utility: tree.nodes().iter().map(|n| (n.id, f.clone())).collect(),
        upper_bound: tree.nodes().iter().map(|n| (n.id, int(0))).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn frictionless_polar_is_the_price_ray(seed in any::<u64>()) {
        let (mkt, stock) = frictionless(seed);
        for n in mkt.tree.nodes() {
            prop_assert!(mkt.c_cones[&n.id].polar().same_cone(&price_ray(&stock[&n.id])));
        }
    }

    #[test]
    fn frictionless_dual_prices_are_proportional(seed in any::<u64>(), cap in 1i64..=3, cash in 0i64..=2) {
        let (mkt, stock) = frictionless(seed);
        let util = UtilitySpec::capped_cash(&mkt.tree, 2, &int(cap)).unwrap();
        let u: Endowment = [(mkt.tree.root(), vec_of(&[-cash, 0]))].into();
        let sol = solve_consumption_dual(&mkt, &util, &u, DualIndex::Derivation).unwrap();
        let y = sol.y.expect("finite dual");
        for n in mkt.tree.nodes() {
            prop_assert!(price_ray(&stock[&n.id]).contains(y.get(n.id).unwrap()));
        }
    }

    #[test]
    fn weak_duality_on_cone_markets(seed in any::<u64>()) {
        let (mkt, util, u) = InstanceGen::new(seed).cone_market(2);
        let r = duality_gap(&mkt, &util, &u, DualIndex::Derivation);
        // Spreads usually make the cost-free directions one-sided.
        prop_assume!(!matches!(r, Err(DpError::LinearityViolated { .. })));
        let r = r.unwrap();
        prop_assert!(r.weak_duality);
        if let (Some(p), DualValue::Finite(q)) = (&r.primal_value, &r.dual.value) {
            prop_assert!(p + q <= int(0));
        }
    }

    #[test]
    fn zero_utility_has_zero_value(seed in any::<u64>()) {
        let (mkt, _, u) = InstanceGen::new(seed).cone_market(2);
        let util = zero_utility(&mkt.tree);
        let r = solve_consumption(&mkt, &util, &u);
        prop_assume!(!matches!(r, Err(DpError::LinearityViolated { .. })));
        prop_assert_eq!(r.unwrap().primal_value, int(0));
    }

    #[test]
    fn cost_free_directions_ignore_the_endowment(seed in any::<u64>()) {
        let (mkt, util, u) = InstanceGen::new(seed).cone_market(2);
        let with = backward_pass(&mkt.tree, &build_consumption(&mkt, &util, &u).unwrap());
        let without = backward_pass(&mkt.tree, &build_consumption(&mkt, &util, &BTreeMap::new()).unwrap());
        if let (Ok(a), Ok(b)) = (with, without) {
            for n in mkt.tree.nodes() {
                prop_assert!(a.entry(n.id).n_cone.same_cone(&b.entry(n.id).n_cone));
            }
        }
    }

    #[test]
    fn two_sided_moves_admit_no_arbitrage(seed in any::<u64>()) {
        let mkt = two_sided_market(seed, 2);
        prop_assert!(no_arbitrage_check(&mkt).unwrap().holds);
        let zero = mkt.tree.leaves().iter().map(|&l| (l, int(0))).collect();
        prop_assert_eq!(superhedge_cost(&mkt, &zero).unwrap().cost, int(0));
    }

    #[test]
    fn replicable_claims_cost_nothing(seed in any::<u64>(), zs in prop::collection::vec(-3i64..=3, 1..8)) {
        let mkt = two_sided_market(seed, 2);
        let mut z = Policy::new();
        for (k, n) in mkt.tree.nodes().iter().enumerate() {
            z.set(n.id, vec_of(&[zs[k % zs.len()]]));
        }
        let claim = leaf_gains(&mkt, &z);
        prop_assert_eq!(superhedge_cost(&mkt, &claim).unwrap().cost, int(0));
    }
}

fn binomial(steps: [i64; 2]) -> LiquidMarket {
    let tree = ScenarioTree::uniform(&[vec![frac(1, 2), frac(1, 2)]]).unwrap();
    let l = tree.leaves().to_vec();
    let prices = [(tree.root(), vec_of(&[5])), (l[0], vec_of(&[5 + steps[0]])), (l[1], vec_of(&[5 + steps[1]]))].into();
    LiquidMarket { tree, prices }
}

#[test]
fn constant_prices_admit_no_arbitrage() {
    assert!(no_arbitrage_check(&binomial([0, 0])).unwrap().holds);
}

#[test]
fn symmetric_steps_admit_no_arbitrage() {
    assert!(no_arbitrage_check(&binomial([1, -1])).unwrap().holds);
}

#[test]
fn upward_steps_are_an_arbitrage() {
    let mkt = binomial([1, 2]);
    let r = no_arbitrage_check(&mkt).unwrap();
    assert!(!r.holds);
    let gains = leaf_gains(&mkt, &r.witness.unwrap());
    assert!(gains.values().all(|g| *g >= int(0)));
    assert!(gains.values().any(|g| *g > int(0)));
}

fn closed_market(tree: ScenarioTree) -> ConeMarket {
    let c_cones = tree.nodes().iter().map(|n| (n.id, ConeRep::origin(2))).collect();
    let d_cones = tree.nodes().iter().map(|n| (n.id, ConeRep::origin(2))).collect();
    ConeMarket {
        tree,
        assets: 2,
        c_cones,
        d_cones,
    }
}

#[test]
fn no_trading_and_no_short_holdings_rule_out_scalable_arbitrage() {
    let tree = ScenarioTree::uniform(&[vec![frac(1, 2), frac(1, 2)]]).unwrap();
    let c_cones = tree.nodes().iter().map(|n| (n.id, ConeRep::nonpos_orthant(2))).collect();
    let d_cones = tree.nodes().iter().map(|n| (n.id, ConeRep::origin(2))).collect();
    let mkt = ConeMarket {
        tree,
        assets: 2,
        c_cones,
        d_cones,
    };
    assert!(no_scalable_arbitrage_check(&mkt).unwrap().holds);
}

#[test]
fn unpayable_debt_is_infeasible() {
    let tree = ScenarioTree::uniform(&[vec![int(1)]]).unwrap();
    let mkt = closed_market(tree);
    let util = UtilitySpec::capped_cash(&mkt.tree, 2, &int(1)).unwrap();
    // Owing one unit of cash with nothing to trade.
    let u: Endowment = [(mkt.tree.root(), vec_of(&[1, 0]))].into();
    assert!(matches!(solve_consumption(&mkt, &util, &u), Err(DpError::Infeasible)));
    let r = duality_gap(&mkt, &util, &u, DualIndex::Derivation).unwrap();
    assert_eq!(r.primal_value, None);
    assert_eq!(r.dual.value, DualValue::PlusInfinity);
}

#[test]
fn unbounded_utility_fails_the_growth_condition() {
    let tree = ScenarioTree::uniform(&[vec![int(1)]]).unwrap();
    let mkt = closed_market(tree);
    let dom = Polyhedron::new(
        2,
        vec![Halfspace::new(vec_of(&[-1, 0]), int(0))],
        vec![Halfspace::new(vec_of(&[0, 1]), int(0))],
    );
    // U(c) = c_0 keeps growing.
    let f = PolyFunc::max_affine(2, &[(vec_of(&[-1, 0]), int(0))], &dom).unwrap();
    let util = UtilitySpec {
        neg_utility: mkt.tree.nodes().iter().map(|n| (n.id, f.clone())).collect(),
        upper_bound: mkt.tree.nodes().iter().map(|n| (n.id, int(0))).collect(),
    };
    let r = check_thm_ocp_conditions(&mkt, &util).unwrap();
    assert!(!r.growth_holds());
    assert!(!r.bounds_hold());
}

#[test]
fn displayed_index_can_overshoot_the_primal() {
    // Same instance under both indexings of the holding constraint.
    let (mkt, util, u) = InstanceGen::new(7331980935667780285).cone_market(2);
    let derivation = duality_gap(&mkt, &util, &u, DualIndex::Derivation).unwrap();
    assert_eq!(derivation.primal_value, Some(int(6)));
    assert_eq!(derivation.dual.value, DualValue::Finite(int(-6)));
    assert!(derivation.zero_gap);
    let displayed = duality_gap(&mkt, &util, &u, DualIndex::Displayed).unwrap();
    assert_eq!(displayed.dual.value, DualValue::Finite(frac(-23, 5)));
    assert!(!displayed.weak_duality);
}
