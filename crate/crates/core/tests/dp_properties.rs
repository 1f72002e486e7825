use proptest::prelude::*;
use stochdp::dp::{backward_pass, check_linearity_l, forward_policy, stage_value, verify_optimality, IntegrandSpec, LowerBound};
use stochdp::instances::InstanceGen;
use stochdp::oracle::flat_objective;
use stochdp::polyhedra::{PolyFunc, Polyhedron};
use stochdp::rational::{dot, frac, int, vec_of, zeros, ExtReal, Rational};
use stochdp::tree::{Policy, ScenarioTree};
use stochdp::DpError;

fn solved(seed: u64) -> Option<(ScenarioTree, IntegrandSpec, stochdp::dp::NodeFunctionTable, Policy)> {
    let (tree, spec) = InstanceGen::new(seed).integrand(2, 2, 3);
    let table = backward_pass(&tree, &spec).ok()?;
    let (policy, _) = forward_policy(&tree, &table).ok()?;
    Some((tree, spec, table, policy))
}

fn shifted(policy: &Policy, shifts: &[i64]) -> Policy {
    let mut out = Policy::new();
    for (k, (v, x)) in policy.iter().enumerate() {
        let y = x
            .iter()
            .enumerate()
            .map(|(i, xi)| xi + int(shifts[(k + i) % shifts.len()]))
            .collect();
        out.set(*v, y);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn stage_values_increase_along_any_policy(seed in 0u64..5_000, shifts in prop::collection::vec(-2i64..=2, 1..8)) {
        let Some((tree, spec, table, policy)) = solved(seed) else { return Ok(()) };
        let x = shifted(&policy, &shifts);
        let values: Vec<ExtReal> = (0..=tree.horizon()).map(|t| stage_value(&tree, &table, &x, t).unwrap()).collect();
        prop_assert!(ExtReal::Finite(table.value.clone()) <= values[0]);
        for w in values.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        prop_assert_eq!(values.last().unwrap().clone(), flat_objective(&tree, &spec, &x).unwrap());
    }

    #[test]
    fn recovered_policy_is_optimal_and_orthogonal(seed in 0u64..5_000) {
        let Some((tree, spec, table, policy)) = solved(seed) else { return Ok(()) };
        prop_assert_eq!(flat_objective(&tree, &spec, &policy).unwrap(), ExtReal::Finite(table.value.clone()));
        prop_assert!(verify_optimality(&tree, &table, &policy).unwrap().holds());
        for (v, x) in policy.iter() {
            for b in &table.entry(*v).lineality.basis {
                prop_assert_eq!(dot(x, b), int(0));
            }
        }
    }

    #[test]
    fn linearity_routes_agree(seed in 0u64..5_000) {
        let (tree, spec) = InstanceGen::new(seed).integrand(2, 2, 3);
        match check_linearity_l(&tree, &spec) {
            Ok(r) => prop_assert!(r.agree()),
            Err(DpError::Infeasible) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}

fn certificate(tree: &ScenarioTree, m: i64) -> LowerBound {
    LowerBound::Certificate(tree.leaves().iter().map(|&l| (l, int(m))).collect())
}

fn abs_of(a: &[i64], b: i64) -> Vec<(Vec<Rational>, Rational)> {
    let neg: Vec<i64> = a.iter().map(|v| -v).collect();
    vec![(vec_of(a), int(b)), (vec_of(&neg), int(-b))]
}

#[test]
fn suboptimal_root_decision_fails_at_stage_zero() {
    // Binomial step ΔS = ±1, claim (1, 0); leaf cost |V0 + z·ΔS − u|.
    let tree = ScenarioTree::uniform(&[vec![frac(1, 2), frac(1, 2)]]).unwrap();
    let u = Polyhedron::universe(3);
    let leaves = tree.leaves().to_vec();
    let spec = IntegrandSpec {
        dims: vec![2, 1],
        leaf_funcs: [
            (leaves[0], PolyFunc::max_affine(3, &abs_of(&[1, 1, 0], -1), &u).unwrap()),
            (leaves[1], PolyFunc::max_affine(3, &abs_of(&[1, -1, 0], 0), &u).unwrap()),
        ]
        .into(),
        lower_bound: certificate(&tree, 0),
    };
    let table = backward_pass(&tree, &spec).unwrap();
    let (policy, value) = forward_policy(&tree, &table).unwrap();
    assert_eq!(value, int(0));
    assert_eq!(policy.get(tree.root()).unwrap(), &[frac(1, 2), frac(1, 2)][..]);

    let mut bad = policy.clone();
    bad.set(tree.root(), vec_of(&[2, 0]));
    let report = verify_optimality(&tree, &table, &bad).unwrap();
    assert!(!report.holds());
    assert!(!report.stage_equal[0]);
}

#[test]
fn symmetric_increments_give_a_linear_cone() {
    let tree = ScenarioTree::uniform(&[vec![frac(1, 2), frac(1, 2)]]).unwrap();
    let u = Polyhedron::universe(2);
    let leaves = tree.leaves().to_vec();
    // Gains z·ΔS with ΔS = ±1 must cover a zero claim.
    let spec = IntegrandSpec {
        dims: vec![1, 1],
        leaf_funcs: [
            (leaves[0], PolyFunc::max_affine(2, &[(vec_of(&[-1, 0]), int(0))], &u).unwrap()),
            (leaves[1], PolyFunc::max_affine(2, &[(vec_of(&[1, 0]), int(0))], &u).unwrap()),
        ]
        .into(),
        lower_bound: LowerBound::CheckedDuringPass,
    };
    let r = check_linearity_l(&tree, &spec).unwrap();
    assert!(r.is_linear());
}

#[test]
fn one_sided_increments_are_rejected() {
    let tree = ScenarioTree::uniform(&[vec![frac(1, 2), frac(1, 2)]]).unwrap();
    let u = Polyhedron::universe(2);
    let leaves = tree.leaves().to_vec();
    // ΔS ∈ {1, 2}: buying is a free lunch.
    let spec = IntegrandSpec {
        dims: vec![1, 1],
        leaf_funcs: [
            (leaves[0], PolyFunc::max_affine(2, &[(vec_of(&[-1, 0]), int(0))], &u).unwrap()),
            (leaves[1], PolyFunc::max_affine(2, &[(vec_of(&[-2, 0]), int(0))], &u).unwrap()),
        ]
        .into(),
        lower_bound: LowerBound::CheckedDuringPass,
    };
    let r = check_linearity_l(&tree, &spec).unwrap();
    assert!(!r.node_wise && !r.direct);
    assert!(matches!(backward_pass(&tree, &spec), Err(DpError::LinearityViolated { .. })));
}

#[test]
fn empty_domain_is_infeasible() {
    let tree = ScenarioTree::uniform(&[]).unwrap();
    let spec = IntegrandSpec {
        dims: vec![1],
        leaf_funcs: [(tree.root(), PolyFunc::infinite(1))].into(),
        lower_bound: LowerBound::CheckedDuringPass,
    };
    assert!(matches!(backward_pass(&tree, &spec), Err(DpError::Infeasible)));
}

#[test]
fn zero_stage_dimension_is_allowed() {
    let tree = ScenarioTree::uniform(&[vec![int(1)]]).unwrap();
    let leaf = tree.leaves()[0];
    let spec = IntegrandSpec {
        dims: vec![0, 1],
        leaf_funcs: [(leaf, PolyFunc::max_affine(1, &abs_of(&[1], -3), &Polyhedron::universe(1)).unwrap())].into(),
        lower_bound: certificate(&tree, 0),
    };
    let table = backward_pass(&tree, &spec).unwrap();
    let (policy, value) = forward_policy(&tree, &table).unwrap();
    assert_eq!(value, int(0));
    assert_eq!(policy.get(tree.root()).unwrap(), &zeros(0)[..]);
    assert_eq!(policy.get(leaf).unwrap(), &vec_of(&[3])[..]);
}
