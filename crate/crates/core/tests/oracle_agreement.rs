use std::mem::discriminant;

use stochdp::dp::{backward_pass, bellman_pass, forward_policy};
use stochdp::instances::InstanceGen;
use stochdp::oracle::{flat_objective, flatten_solve};
use stochdp::rational::ExtReal;

#[test]
fn backward_pass_matches_flat_program() {
    let mut compared = 0;
    for seed in 0..30u64 {
        let (tree, spec) = InstanceGen::new(90_000 + seed).integrand(2, 2, 3);
        let dp = backward_pass(&tree, &spec).and_then(|t| forward_policy(&tree, &t));
        let flat = flatten_solve(&tree, &spec);
        match (dp, flat) {
            (Ok((policy, value)), Ok(sol)) => {
                assert_eq!(value, sol.value, "seed {seed}");
                // Each minimizer is optimal for the other side's objective.
                assert_eq!(flat_objective(&tree, &spec, &policy).unwrap(), ExtReal::Finite(sol.value.clone()));
                assert_eq!(flat_objective(&tree, &spec, &sol.minimizer).unwrap(), ExtReal::Finite(value));
                compared += 1;
            }
            // A linearity failure is a verdict the flat program cannot reach.
            (Err(stochdp::DpError::LinearityViolated { .. }), _) => {}
            (Err(a), Err(b)) => assert_eq!(discriminant(&a), discriminant(&b), "seed {seed}: {a} vs {b}"),
            (a, b) => panic!("seed {seed}: {a:?} vs {:?}", b.map(|s| s.value)),
        }
    }
    assert!(compared >= 15, "only {compared} instances compared");
}

#[test]
fn bellman_recursion_matches_generic_pass() {
    for seed in 0..12u64 {
        let (tree, spec) = InstanceGen::new(95_000 + seed).bellman(2, 2, 2);
        let integrand = spec.to_integrand_spec(&tree).unwrap();
        let generic = backward_pass(&tree, &integrand).and_then(|t| forward_policy(&tree, &t));
        match (bellman_pass(&tree, &spec), generic) {
            (Ok(b), Ok((_, v))) => {
                assert_eq!(b.value, v, "seed {seed}");
                let flat = flatten_solve(&tree, &integrand).unwrap();
                assert_eq!(b.value, flat.value, "seed {seed}");
            }
            (Err(a), Err(b)) => assert_eq!(discriminant(&a), discriminant(&b), "seed {seed}"),
            (a, b) => panic!("seed {seed}: {:?} vs {:?}", a.map(|r| r.value), b.map(|r| r.1)),
        }
    }
}
