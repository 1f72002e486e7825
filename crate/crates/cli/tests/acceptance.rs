//! Acceptance suite: ten exact checks, one PASS/FAIL line each.
//!
//! Run with `cargo test -p stochdp-cli --test acceptance -- --nocapture`.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use num_traits::{Signed, Zero};
use stochdp::dp::{
    backward_pass, bellman_pass, check_linearity_l, forward_policy, perturb_off_argmin, recession_commutation_check,
    verify_optimality, NodeFunctionTable,
};
use stochdp::finance::{
    build_consumption, build_superhedge, check_thm_ocp_conditions, duality_gap, leaf_gains, no_arbitrage_check,
    superhedge_cost, ConeMarket, DualIndex, DualValue, LiquidMarket, UtilitySpec,
};
use stochdp::instances::InstanceGen;
use stochdp::oracle::{
    data_radius, flat_objective, flatten_solve, least_squares_oracle, line_grid, phi_probe, Endowment, FlatLayout,
};
use stochdp::quad::{variance_hedge_solve, HedgeProblem};
use stochdp::rational::{frac, int, ExtReal, Rational};
use stochdp::tree::{Policy, ScenarioTree};
use stochdp::DpError;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Outcome {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

struct Solved {
    tree: ScenarioTree,
    table: NodeFunctionTable,
    policy: Policy,
}

/// Random integrands on which the backward pass completes, with the oracle run on each.
fn oracle_equivalence(solved: &mut Vec<Solved>) -> Outcome {
    let start = Instant::now();
    let mut agree = 0;
    let mut skipped = 0;
    let mut seed = 0u64;
    while solved.len() < 100 {
        let (tree, spec) = InstanceGen::new(seed).integrand(3, 2, 3);
        seed += 1;
        let table = match backward_pass(&tree, &spec) {
            Ok(t) => t,
            Err(DpError::LinearityViolated { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Outcome::new(false, format!("seed {}: backward pass failed: {e}", seed - 1)),
        };
        let (policy, value) = match forward_policy(&tree, &table) {
            Ok(r) => r,
            Err(e) => return Outcome::new(false, format!("seed {}: forward policy failed: {e}", seed - 1)),
        };
        let flat = match flatten_solve(&tree, &spec) {
            Ok(s) => s,
            Err(e) => return Outcome::new(false, format!("seed {}: oracle failed: {e}", seed - 1)),
        };
        let cross = flat_objective(&tree, &spec, &policy) == Ok(ExtReal::Finite(value.clone()));
        if flat.value == value && cross {
            agree += 1;
        }
        solved.push(Solved { tree, table, policy });
    }
    let elapsed = start.elapsed();
    Outcome::new(
        agree == 100 && elapsed < Duration::from_secs(60),
        format!("{agree}/100 agree, {skipped} non-linear instances skipped, {:.1}s", elapsed.as_secs_f64()),
    )
}

fn optimality_conditions(solved: &[Solved]) -> Outcome {
    let mut holds = 0;
    let mut perturbed = 0;
    let mut broken = 0;
    for s in solved {
        match verify_optimality(&s.tree, &s.table, &s.policy) {
            Ok(r) if r.holds() && r.stage_equal.iter().all(|&b| b) => holds += 1,
            _ => continue,
        }
        for node in s.tree.nodes() {
            let Ok(Some(p)) = perturb_off_argmin(&s.tree, &s.table, &s.policy, node.id) else {
                continue;
            };
            perturbed += 1;
            if let Ok(r) = verify_optimality(&s.tree, &s.table, &p) {
                if r.stage_equal.iter().any(|&b| !b) {
                    broken += 1;
                }
            }
        }
    }
    Outcome::new(
        holds == solved.len() && broken == perturbed && perturbed > 0,
        format!(
            "stage equalities on {holds}/{} instances, {broken}/{perturbed} perturbations break one",
            solved.len()
        ),
    )
}

fn linearity_equivalence() -> Outcome {
    let mut agree = 0;
    let mut linear = 0;
    for seed in 0..50u64 {
        let mut g = InstanceGen::new(10_000 + seed);
        let (tree, spec) = if seed % 2 == 0 {
            let mkt = g.liquid_market(3, 2);
            let claim = mkt.tree.leaves().iter().map(|&l| (l, int(g.int_in(0, 4)))).collect();
            match build_superhedge(&mkt, &claim) {
                Ok(spec) => (mkt.tree, spec),
                Err(e) => return Outcome::new(false, format!("seed {seed}: {e}")),
            }
        } else {
            let (mkt, util, u) = g.cone_market(2);
            match build_consumption(&mkt, &util, &u) {
                Ok(spec) => (mkt.tree, spec),
                Err(e) => return Outcome::new(false, format!("seed {seed}: {e}")),
            }
        };
        match check_linearity_l(&tree, &spec) {
            Ok(r) => {
                agree += usize::from(r.agree());
                linear += usize::from(r.is_linear());
            }
            Err(e) => return Outcome::new(false, format!("seed {seed}: {e}")),
        }
    }
    Outcome::new(agree == 50, format!("{agree}/50 agree ({linear} linear)"))
}

fn recession_commutation(solved: &[Solved]) -> Outcome {
    let mut nodes = 0;
    let mut equal = 0;
    for s in solved {
        match recession_commutation_check(&s.tree, &s.table) {
            Ok(r) => {
                nodes += r.epigraphs_equal.len();
                equal += r
                    .epigraphs_equal
                    .iter()
                    .filter(|(v, &e)| e && r.level_sets_equal[v])
                    .count();
            }
            Err(e) => return Outcome::new(false, e.to_string()),
        }
    }
    Outcome::new(equal == nodes, format!("{equal}/{nodes} internal nodes"))
}

fn binomial(up: Rational, down: Rational) -> LiquidMarket {
    let tree = ScenarioTree::uniform(&[vec![frac(1, 2), frac(1, 2)]]).unwrap();
    let l = tree.leaves().to_vec();
    let prices = [(tree.root(), vec![int(4)]), (l[0], vec![up]), (l[1], vec![down])].into();
    LiquidMarket { tree, prices }
}

fn superhedging() -> Outcome {
    let mkt = binomial(int(8), int(2));
    let l = mkt.tree.leaves().to_vec();
    let claim = [(l[0], int(3)), (l[1], int(0))].into();
    let cost_ok = match superhedge_cost(&mkt, &claim) {
        Ok(r) => r.cost == int(1) && r.policy.get(mkt.tree.root()).map(|x| x[1].clone()) == Some(frac(1, 2)),
        Err(_) => false,
    };
    let arb = binomial(int(5), frac(9, 2));
    let zero = arb.tree.leaves().iter().map(|&l| (l, int(0))).collect();
    let violated = matches!(superhedge_cost(&arb, &zero), Err(DpError::LinearityViolated { .. }));
    let witness_ok = match no_arbitrage_check(&arb) {
        Ok(r) => r.witness.is_some_and(|w| {
            let g = leaf_gains(&arb, &w);
            g.values().all(|x| !x.is_negative()) && g.values().any(|x| !x.is_zero())
        }),
        Err(_) => false,
    };
    Outcome::new(
        cost_ok && violated && witness_ok,
        format!("cost 1 with z_0 = 1/2: {cost_ok}, violation: {violated}, witness gain: {witness_ok}"),
    )
}

fn variance_hedging() -> Outcome {
    let mut agree = 0;
    let mut redundant = 0;
    for seed in 0..50u64 {
        let hp = InstanceGen::new(20_000 + seed).hedge(3, 2);
        let root = &hp.prices[&hp.tree.root()];
        if root.len() == 2 && hp.prices.values().all(|s| &s[1] * &root[0] == &s[0] * &root[1]) {
            redundant += 1;
        }
        let (Ok(dp), Ok(lsq)) = (variance_hedge_solve(&hp), least_squares_oracle(&hp)) else {
            continue;
        };
        let x = FlatLayout::new(&hp.tree, &hp.dims()).flatten(&hp.tree, &dp.policy);
        let cross = x.is_some_and(|x| lsq.objective.evaluate(&x) == dp.value);
        agree += usize::from(dp.value == lsq.value && cross);
    }
    let tree = ScenarioTree::uniform(&[vec![frac(1, 2), frac(1, 2)]]).unwrap();
    let l = tree.leaves().to_vec();
    let hp = HedgeProblem {
        prices: [(tree.root(), vec![int(4)]), (l[0], vec![int(8)]), (l[1], vec![int(2)])].into(),
        claim: [(l[0], int(3)), (l[1], int(0))].into(),
        tree,
    };
    let complete = variance_hedge_solve(&hp).is_ok_and(|s| s.value.is_zero());
    Outcome::new(
        agree == 50 && redundant > 0 && complete,
        format!("{agree}/50 agree ({redundant} with redundant assets), complete binomial value 0: {complete}"),
    )
}

struct Consumption {
    mkt: ConeMarket,
    util: UtilitySpec,
    endowment: Endowment,
    dual: Option<(Policy, Rational)>,
}

fn zero_duality_gap(passing: &mut Vec<Consumption>) -> Outcome {
    let mut seen = 0;
    let mut weak = 0;
    let mut gap_zero = 0;
    let mut seed = 0u64;
    while passing.len() < 10 && seed < 200 {
        let (mkt, util, endowment) = InstanceGen::new(30_000 + seed).cone_market(2);
        seed += 1;
        let rep = match duality_gap(&mkt, &util, &endowment, DualIndex::Derivation) {
            Ok(r) => r,
            Err(DpError::LinearityViolated { .. }) => continue,
            Err(e) => return Outcome::new(false, format!("seed {}: {e}", seed - 1)),
        };
        seen += 1;
        weak += usize::from(rep.weak_duality);
        let ocp = match check_thm_ocp_conditions(&mkt, &util) {
            Ok(o) => o,
            Err(e) => return Outcome::new(false, format!("seed {}: {e}", seed - 1)),
        };
        if !ocp.passes() || rep.primal_value.is_none() {
            continue;
        }
        gap_zero += usize::from(rep.zero_gap);
        let dual = match (&rep.dual.value, &rep.dual.y) {
            (DualValue::Finite(v), Some(y)) => Some((y.clone(), v.clone())),
            _ => None,
        };
        passing.push(Consumption {
            mkt,
            util,
            endowment,
            dual,
        });
    }
    Outcome::new(
        passing.len() == 10 && gap_zero == 10 && weak == seen,
        format!(
            "zero gap on {gap_zero}/{} passing instances, weak duality on {weak}/{seen}",
            passing.len()
        ),
    )
}

fn bellman_consistency() -> Outcome {
    let mut ok = 0;
    let mut total = 0;
    let mut seed = 0u64;
    while total < 25 && seed < 500 {
        let (tree, spec) = InstanceGen::new(40_000 + seed).bellman(3, 2, 3);
        seed += 1;
        let Ok(integrand) = spec.to_integrand_spec(&tree) else {
            return Outcome::new(false, format!("seed {}: conversion failed", seed - 1));
        };
        let b = bellman_pass(&tree, &spec);
        let d = backward_pass(&tree, &integrand).and_then(|t| forward_policy(&tree, &t));
        match (b, d) {
            (Ok(b), Ok((_, v))) => {
                total += 1;
                let objective = flat_objective(&tree, &integrand, &b.policy);
                if b.value == v && objective == Ok(ExtReal::Finite(v)) {
                    ok += 1;
                }
            }
            (Err(a), Err(b)) if std::mem::discriminant(&a) == std::mem::discriminant(&b) => {}
            (b, d) => {
                return Outcome::new(
                    false,
                    format!("seed {}: bellman {:?} vs backward {:?}", seed - 1, b.err(), d.err()),
                )
            }
        }
    }
    Outcome::new(ok == 25 && total == 25, format!("{ok}/{total} instances"))
}

fn phi_probe_check(instances: &[Consumption]) -> Outcome {
    let mut good = 0;
    for c in instances {
        let tree = &c.mkt.tree;
        let radius = data_radius(c.endowment.values().flatten());
        let grid = line_grid(tree.root(), c.mkt.assets, 0, &radius);
        let build = |delta: &Endowment| {
            let mut u = c.endowment.clone();
            for (v, dv) in delta {
                let e = u.entry(*v).or_insert_with(|| vec![Rational::zero(); dv.len()]);
                for (a, b) in e.iter_mut().zip(dv) {
                    *a += b;
                }
            }
            build_consumption(&c.mkt, &c.util, &u)
        };
        let dual = c.dual.as_ref().map(|(y, g)| (y, g));
        let Ok(rep) = phi_probe(tree, &build, &grid, radius, dual) else {
            continue;
        };
        let fenchel = rep
            .fenchel
            .as_ref()
            .is_some_and(|f| f.inequality && f.equality_at_zero == Some(true));
        good += usize::from(rep.attained && rep.midpoint_convex && fenchel);
    }
    Outcome::new(
        good == instances.len() && !instances.is_empty(),
        format!("{good}/{} instances", instances.len()),
    )
}

fn write_fixture(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn strip_timing(out: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(out).unwrap_or(serde_json::Value::Null);
    if let Some(o) = v.as_object_mut() {
        o.remove("timing");
    }
    v
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("stochdp-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let runs: Vec<(&str, &str)> = vec![
        ("solve", "integrand.json"),
        ("oracle-compare", "integrand.json"),
        ("check-linearity", "integrand.json"),
        ("phi-probe", "binomial_call.json"),
        ("bellman", "bellman.json"),
        ("superhedge", "binomial_call.json"),
        ("no-arbitrage", "arbitrage.json"),
        ("check-linearity", "arbitrage.json"),
        ("varhedge", "hedge.json"),
        ("consume", "consumption.json"),
        ("dual", "consumption.json"),
        ("duality-gap", "consumption.json"),
        ("phi-probe", "consumption.json"),
    ];
    let mut same = 0;
    for (cmd, file) in &runs {
        let mut outs = Vec::new();
        for k in 0..2 {
            let out = write_fixture(&dir, &format!("{cmd}-{k}.json"), "");
            let status = Command::new(env!("CARGO_BIN_EXE_stochdp"))
                .arg(cmd)
                .arg("--instance")
                .arg(fixtures.join(file))
                .arg("--out")
                .arg(&out)
                .arg("--check-level")
                .arg("full")
                .stderr(Stdio::null())
                .status()
                .expect("binary runs");
            outs.push((status.code(), strip_timing(&std::fs::read(&out).unwrap())));
        }
        if outs[0] == outs[1] && !outs[0].1.is_null() {
            same += 1;
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    Outcome::new(same == runs.len(), format!("{same}/{} command runs identical", runs.len()))
}

#[test]
fn acceptance() {
    let mut solved = Vec::new();
    let mut consumption = Vec::new();
    let mut results: Vec<(&str, Outcome, f64)> = Vec::new();
    let mut timed = |name, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        results.push((name, o, t.elapsed().as_secs_f64()));
    };
    timed("oracle equivalence", &mut || oracle_equivalence(&mut solved));
    timed("optimality conditions", &mut || optimality_conditions(&solved));
    timed("linearity equivalence", &mut linearity_equivalence);
    timed("recession commutation", &mut || recession_commutation(&solved));
    timed("superhedging", &mut superhedging);
    timed("variance hedging", &mut variance_hedging);
    timed("zero duality gap", &mut || zero_duality_gap(&mut consumption));
    timed("bellman consistency", &mut bellman_consistency);
    timed("phi probe", &mut || phi_probe_check(&consumption));
    timed("determinism", &mut determinism);
    for (i, (name, o, secs)) in results.iter().enumerate() {
        println!("{} {:>2} {name}: {} [{secs:.1}s]", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    let failed: Vec<&str> = results.iter().filter(|(_, o, _)| !o.pass).map(|(n, _, _)| *n).collect();
    assert!(failed.is_empty(), "failed: {failed:?}");
}
