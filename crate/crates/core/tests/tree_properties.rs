use std::collections::BTreeMap;

use proptest::prelude::*;
use stochdp::instances::InstanceGen;
use stochdp::rational::{frac, int, Rational};
use stochdp::tree::{NodeId, NodeSpec, ScenarioTree, TreeError};

fn random_tree(seed: u64) -> ScenarioTree {
    let mut g = InstanceGen::new(seed);
    let horizon = g.int_in(0, 3) as usize;
    g.tree(horizon, 3)
}

fn leaf_values(tree: &ScenarioTree, vals: &[i64]) -> BTreeMap<NodeId, Rational> {
    tree.leaves()
        .iter()
        .enumerate()
        .map(|(i, &l)| (l, int(vals[i % vals.len()])))
        .collect()
}

proptest! {
    #[test]
    fn tower_property(seed in any::<u64>(), vals in prop::collection::vec(-20i64..20, 1..30)) {
        let tree = random_tree(seed);
        let x = leaf_values(&tree, &vals);
        for r in 0..=tree.horizon() {
            let er = tree.cond_exp_scalars(r, &x).unwrap();
            // E_r X as a leaf function.
            let lifted: BTreeMap<NodeId, Rational> =
                tree.leaves().iter().map(|&l| (l, er[&tree.ancestor(l, r)].clone())).collect();
            for s in 0..=r {
                prop_assert_eq!(tree.cond_exp_scalars(s, &lifted).unwrap(), tree.cond_exp_scalars(s, &x).unwrap());
            }
        }
    }

    #[test]
    fn expectation_of_one_is_one(seed in any::<u64>()) {
        let tree = random_tree(seed);
        let ones = leaf_values(&tree, &[1]);
        for s in 0..=tree.horizon() {
            prop_assert!(tree.cond_exp_scalars(s, &ones).unwrap().values().all(|v| *v == int(1)));
        }
    }

    #[test]
    fn stage_probabilities_sum_to_one(seed in any::<u64>()) {
        let tree = random_tree(seed);
        for t in 0..=tree.horizon() {
            let total: Rational = tree.stage_nodes(t).iter().map(|v| tree.node(*v).abs_prob.clone()).sum();
            prop_assert_eq!(total, int(1));
        }
    }
}

fn spec(name: &str, stage: usize, parent: Option<&str>, prob: Rational) -> NodeSpec {
    NodeSpec {
        name: name.into(),
        stage,
        parent: parent.map(Into::into),
        prob,
    }
}

#[test]
fn root_value_is_the_weighted_sum() {
    let tree = ScenarioTree::uniform(&[vec![frac(1, 2), frac(1, 2)]]).unwrap();
    let x = leaf_values(&tree, &[3, 0]);
    assert_eq!(tree.expectation(&x).unwrap(), frac(3, 2));
}

#[test]
fn single_children_copy_values_up() {
    let tree = ScenarioTree::uniform(&[vec![int(1)], vec![int(1)]]).unwrap();
    let x = leaf_values(&tree, &[7]);
    for s in 0..=2 {
        assert!(tree.cond_exp_scalars(s, &x).unwrap().values().all(|v| *v == int(7)));
    }
}

#[test]
fn probabilities_must_sum_to_one() {
    let r = ScenarioTree::new(
        1,
        vec![
            spec("r", 0, None, int(1)),
            spec("a", 1, Some("r"), frac(1, 2)),
            spec("b", 1, Some("r"), frac(1, 3)),
        ],
    );
    assert!(matches!(r, Err(TreeError::NonUnitProbability { sum, .. }) if sum == frac(5, 6)));
}

#[test]
fn degenerate_tree_is_valid() {
    let tree = ScenarioTree::new(0, vec![spec("r", 0, None, int(1))]).unwrap();
    assert_eq!(tree.leaves(), &[tree.root()]);
}

#[test]
fn missing_leaf_value_is_reported() {
    let tree = ScenarioTree::uniform(&[vec![frac(1, 2), frac(1, 2)]]).unwrap();
    let x: BTreeMap<NodeId, Rational> = [(tree.leaves()[0], int(1))].into();
    assert!(matches!(tree.expectation(&x), Err(TreeError::MissingValue { .. })));
}
