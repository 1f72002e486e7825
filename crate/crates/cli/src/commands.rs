//! One function per command; each returns the JSON body of the result file.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value};

use stochdp::dp::{
    backward_pass, bellman_pass, check_linearity_l, forward_policy, recession_commutation_check, stage_value,
    verify_optimality, IntegrandSpec, NodeFunctionTable,
};
use stochdp::finance::{
    build_consumption, build_superhedge, check_thm_ocp_conditions, duality_gap, leaf_gains, no_arbitrage_check,
    no_scalable_arbitrage_check, solve_consumption, solve_consumption_dual, superhedge_cost, DualIndex, DualValue,
    OcpReport,
};
use stochdp::oracle::{data_radius, flat_objective, flatten_solve, least_squares_oracle, line_grid, phi_probe, Endowment};
use stochdp::quad::variance_hedge_solve;
use stochdp::rational::{ExtReal, Rational};
use stochdp::tree::{NodeId, Policy, ScenarioTree};
use stochdp::DpError;

use crate::render;
use crate::schema::{CheckLevel, FileOptions, Instance, Model, PhiProbeOptions};
use crate::{CliError, Flags};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Solve,
    Bellman,
    CheckLinearity,
    NoArbitrage,
    Superhedge,
    Varhedge,
    Consume,
    Dual,
    DualityGap,
    OracleCompare,
    PhiProbe,
}

impl Command {
    pub const ALL: [Command; 11] = [
        Command::Solve,
        Command::Bellman,
        Command::CheckLinearity,
        Command::NoArbitrage,
        Command::Superhedge,
        Command::Varhedge,
        Command::Consume,
        Command::Dual,
        Command::DualityGap,
        Command::OracleCompare,
        Command::PhiProbe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Bellman => "bellman",
            Command::CheckLinearity => "check-linearity",
            Command::NoArbitrage => "no-arbitrage",
            Command::Superhedge => "superhedge",
            Command::Varhedge => "varhedge",
            Command::Consume => "consume",
            Command::Dual => "dual",
            Command::DualityGap => "duality-gap",
            Command::OracleCompare => "oracle-compare",
            Command::PhiProbe => "phi-probe",
        }
    }

    pub fn from_name(s: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.name() == s)
    }
}

pub struct Options {
    pub full: bool,
    pub dual_index: DualIndex,
    pub phi: Option<PhiProbeOptions>,
}

impl Options {
    pub fn resolve(file: &FileOptions, flags: &Flags) -> Options {
        let level = flags.check_level.or(file.check_level).unwrap_or_default();
        let index = flags.dual_index.or(file.dual_index).unwrap_or_default();
        Options {
            full: level == CheckLevel::Full,
            dual_index: index.into(),
            phi: file.phi_probe.clone(),
        }
    }
}

/// Body fields plus an error that still lets the body be reported.
pub struct Report {
    pub body: Map<String, Value>,
    pub failure: Option<CliError>,
}

impl Report {
    fn ok(body: Map<String, Value>) -> Report {
        Report { body, failure: None }
    }
}

pub fn execute(cmd: Command, inst: &Instance, opts: &Options) -> Result<Report, CliError> {
    match cmd {
        Command::Solve => solve(inst, opts),
        Command::Bellman => bellman(inst, opts),
        Command::CheckLinearity => check_linearity(inst),
        Command::NoArbitrage => no_arbitrage(inst),
        Command::Superhedge => superhedge(inst, opts),
        Command::Varhedge => varhedge(inst, opts),
        Command::Consume => consume(inst, opts),
        Command::Dual => dual(inst, opts),
        Command::DualityGap => gap(inst, opts),
        Command::OracleCompare => oracle_compare(inst),
        Command::PhiProbe => probe(inst, opts),
    }
}

/// The integrand of any model that has one.
fn integrand_spec(inst: &Instance) -> Result<IntegrandSpec, CliError> {
    match &inst.file.model {
        Model::Integrand { .. } => inst.integrand(),
        Model::Bellman { .. } => Ok(inst.bellman()?.to_integrand_spec(&inst.tree)?),
        Model::LiquidMarket { .. } | Model::Hedge { .. } => {
            let mkt = inst.liquid_market()?;
            let claim = match inst.file.claim {
                Some(_) => inst.claim()?,
                None => inst.tree.leaves().iter().map(|&l| (l, Rational::default())).collect(),
            };
            Ok(build_superhedge(&mkt, &claim)?)
        }
        Model::ConeMarket { .. } => {
            let mkt = inst.cone_market()?;
            let util = inst.utilities(mkt.assets)?;
            Ok(build_consumption(&mkt, &util, &inst.endowment(mkt.assets)?)?)
        }
    }
}

fn lineality_map(tree: &ScenarioTree, table: &NodeFunctionTable) -> Value {
    render::node_map(tree, table.entries.iter().map(|(v, e)| (*v, &e.lineality)), render::lineality)
}

fn reevaluation(tree: &ScenarioTree, spec: &IntegrandSpec, policy: &Policy, value: &Rational) -> Result<Value, CliError> {
    let got = flat_objective(tree, spec, policy)?;
    Ok(json!({ "value": render::ext(&got), "matches": got == ExtReal::Finite(value.clone()) }))
}

fn full_checks(tree: &ScenarioTree, spec: &IntegrandSpec, table: &NodeFunctionTable, policy: &Policy) -> Result<Map<String, Value>, CliError> {
    let mut checks = Map::new();
    let opt = verify_optimality(tree, table, policy)?;
    checks.insert(
        "optimality".into(),
        json!({
            "holds": opt.holds(),
            "stage_values": opt.stage_values.iter().map(render::ext).collect::<Vec<_>>(),
            "stage_equal": opt.stage_equal,
        }),
    );
    let comm = recession_commutation_check(tree, table)?;
    checks.insert(
        "recession_commutation".into(),
        json!({
            "holds": comm.holds(),
            "epigraphs_equal": render::node_map(tree, comm.epigraphs_equal.clone(), |b| json!(b)),
            "level_sets_equal": render::node_map(tree, comm.level_sets_equal.clone(), |b| json!(b)),
        }),
    );
    let lin = check_linearity_l(tree, spec)?;
    checks.insert(
        "linearity".into(),
        json!({ "node_wise": lin.node_wise, "direct": lin.direct, "agree": lin.agree() }),
    );
    Ok(checks)
}

fn solve(inst: &Instance, opts: &Options) -> Result<Report, CliError> {
    let tree = &inst.tree;
    let spec = integrand_spec(inst)?;
    let table = backward_pass(tree, &spec)?;
    let (policy, value) = forward_policy(tree, &table)?;
    let mut checks = Map::new();
    checks.insert("policy_reevaluation".into(), reevaluation(tree, &spec, &policy, &value)?);
    if opts.full {
        checks.extend(full_checks(tree, &spec, &table, &policy)?);
    }
    let mut body = Map::new();
    body.insert("value".into(), render::value(&value));
    body.insert("policy".into(), render::policy(tree, &policy));
    body.insert("lineality".into(), lineality_map(tree, &table));
    body.insert("checks".into(), Value::Object(checks));
    Ok(Report::ok(body))
}

fn bellman(inst: &Instance, opts: &Options) -> Result<Report, CliError> {
    let tree = &inst.tree;
    let spec = inst.bellman()?;
    let res = bellman_pass(tree, &spec)?;
    let integrand = spec.to_integrand_spec(tree)?;
    let mut checks = Map::new();
    checks.insert("policy_reevaluation".into(), reevaluation(tree, &integrand, &res.policy, &res.value)?);
    if opts.full {
        let table = backward_pass(tree, &integrand)?;
        checks.insert(
            "backward_pass".into(),
            json!({ "value": render::value(&table.value), "agree": table.value == res.value }),
        );
        checks.extend(full_checks(tree, &integrand, &table, &res.policy)?);
    }
    let mut body = Map::new();
    body.insert("value".into(), render::value(&res.value));
    body.insert("policy".into(), render::policy(tree, &res.policy));
    body.insert("lineality".into(), render::node_map(tree, res.lineality.iter().map(|(v, l)| (*v, l)), render::lineality));
    body.insert("checks".into(), Value::Object(checks));
    Ok(Report::ok(body))
}

fn check_linearity(inst: &Instance) -> Result<Report, CliError> {
    let tree = &inst.tree;
    let spec = integrand_spec(inst)?;
    let rep = check_linearity_l(tree, &spec)?;
    let mut body = Map::new();
    body.insert(
        "linearity".into(),
        json!({
            "linear": rep.is_linear(),
            "node_wise": rep.node_wise,
            "direct": rep.direct,
            "agree": rep.agree(),
            "node_witness": rep.node_witness.as_ref().map(|(n, w)| json!({ "node": n, "direction": render::vector(w) })),
            "witness": rep.witness.as_ref().map(|w| render::policy(tree, w)),
        }),
    );
    let failure = (!rep.is_linear()).then(|| violation(&rep.node_witness));
    Ok(Report { body, failure })
}

fn violation(node_witness: &Option<(String, Vec<Rational>)>) -> CliError {
    let (node, witness) = node_witness.clone().unwrap_or_default();
    CliError::Dp(DpError::LinearityViolated { node, witness })
}

fn no_arbitrage(inst: &Instance) -> Result<Report, CliError> {
    let tree = &inst.tree;
    let mut body = Map::new();
    if let Model::ConeMarket { .. } = inst.file.model {
        let rep = no_scalable_arbitrage_check(&inst.cone_market()?)?;
        body.insert(
            "no_scalable_arbitrage".into(),
            json!({ "holds": rep.holds, "witness": rep.witness.as_ref().map(|w| render::policy(tree, w)) }),
        );
        return Ok(Report::ok(body));
    }
    let mkt = inst.liquid_market()?;
    let rep = no_arbitrage_check(&mkt)?;
    let gains = rep.witness.as_ref().map(|w| {
        let g = leaf_gains(&mkt, w);
        render::node_map(tree, g.iter().map(|(v, x)| (*v, x)), render::rational)
    });
    body.insert(
        "no_arbitrage".into(),
        json!({
            "holds": rep.holds,
            "witness": rep.witness.as_ref().map(|w| render::policy(tree, w)),
            "witness_gains": gains,
            "node_wise": rep.linearity.node_wise,
            "direct": rep.linearity.direct,
        }),
    );
    let failure = (!rep.holds).then(|| violation(&rep.linearity.node_witness));
    Ok(Report { body, failure })
}

fn superhedge(inst: &Instance, opts: &Options) -> Result<Report, CliError> {
    let tree = &inst.tree;
    let mkt = inst.liquid_market()?;
    let claim = inst.claim()?;
    let res = superhedge_cost(&mkt, &claim)?;
    let spec = build_superhedge(&mkt, &claim)?;
    let mut checks = Map::new();
    checks.insert("policy_reevaluation".into(), reevaluation(tree, &spec, &res.policy, &res.cost)?);
    if opts.full {
        let flat = flatten_solve(tree, &spec)?;
        checks.insert(
            "oracle".into(),
            json!({ "value": render::value(&flat.value), "agree": flat.value == res.cost }),
        );
    }
    let mut body = Map::new();
    body.insert("value".into(), render::value(&res.cost));
    body.insert("policy".into(), render::policy(tree, &res.policy));
    body.insert("checks".into(), Value::Object(checks));
    Ok(Report::ok(body))
}

fn varhedge(inst: &Instance, opts: &Options) -> Result<Report, CliError> {
    let tree = &inst.tree;
    let hp = inst.hedge()?;
    let res = variance_hedge_solve(&hp)?;
    let mut checks = Map::new();
    if opts.full {
        let lsq = least_squares_oracle(&hp)?;
        checks.insert(
            "least_squares_oracle".into(),
            json!({ "value": render::value(&lsq.value), "agree": lsq.value == res.value }),
        );
    }
    let mut body = Map::new();
    body.insert("value".into(), render::value(&res.value));
    body.insert("initial_capital".into(), render::value(&res.initial_capital));
    body.insert("policy".into(), render::policy(tree, &res.policy));
    body.insert(
        "lineality".into(),
        render::node_map(tree, res.null_bases.iter().map(|(v, b)| (*v, b)), |b| render::basis(b)),
    );
    body.insert("checks".into(), Value::Object(checks));
    Ok(Report::ok(body))
}

fn ocp_json(tree: &ScenarioTree, r: &OcpReport) -> Value {
    json!({
        "passes": r.passes(),
        "z_set_linear": r.z_set_linear,
        "growth": render::node_map(tree, r.growth.clone(), |b| json!(b)),
        "upper_bound": render::node_map(tree, r.upper_bound.clone(), |b| json!(b)),
        "no_scalable_arbitrage": r.no_scalable_arbitrage,
        "consumption_set_linear": r.consumption_set_linear,
        "direction_cone_linear": r.direction_cone_linear,
        "routes": {
            "growth": r.theorem_route(),
            "consumption_set": r.consumption_set_route(),
            "direction_cone": r.direction_cone_route(),
        },
    })
}

fn consume(inst: &Instance, opts: &Options) -> Result<Report, CliError> {
    let tree = &inst.tree;
    let mkt = inst.cone_market()?;
    let util = inst.utilities(mkt.assets)?;
    let u = inst.endowment(mkt.assets)?;
    let res = solve_consumption(&mkt, &util, &u)?;
    let mut checks = Map::new();
    let spec = build_consumption(&mkt, &util, &u)?;
    let neg = -res.primal_value.clone();
    checks.insert("policy_reevaluation".into(), reevaluation(tree, &spec, &res.policy, &neg)?);
    if opts.full {
        checks.insert("duality_conditions".into(), ocp_json(tree, &check_thm_ocp_conditions(&mkt, &util)?));
    }
    let mut body = Map::new();
    body.insert("value".into(), render::value(&res.primal_value));
    body.insert("policy".into(), render::policy(tree, &res.policy));
    body.insert("checks".into(), Value::Object(checks));
    Ok(Report::ok(body))
}

fn index_name(i: DualIndex) -> &'static str {
    match i {
        DualIndex::Derivation => "derivation",
        DualIndex::Displayed => "displayed",
    }
}

fn dual(inst: &Instance, opts: &Options) -> Result<Report, CliError> {
    let tree = &inst.tree;
    let mkt = inst.cone_market()?;
    let util = inst.utilities(mkt.assets)?;
    let u = inst.endowment(mkt.assets)?;
    let sol = solve_consumption_dual(&mkt, &util, &u, opts.dual_index)?;
    let mut body = Map::new();
    body.insert("dual_index".into(), json!(index_name(opts.dual_index)));
    body.insert("value".into(), render::dual(&sol.value));
    body.insert("dual_process".into(), json!(sol.y.as_ref().map(|y| render::policy(tree, y))));
    Ok(Report::ok(body))
}

fn gap(inst: &Instance, opts: &Options) -> Result<Report, CliError> {
    let tree = &inst.tree;
    let mkt = inst.cone_market()?;
    let util = inst.utilities(mkt.assets)?;
    let u = inst.endowment(mkt.assets)?;
    let rep = duality_gap(&mkt, &util, &u, opts.dual_index)?;
    let ocp = check_thm_ocp_conditions(&mkt, &util)?;
    let gap = match (&rep.primal_value, &rep.dual.value) {
        (Some(p), DualValue::Finite(d)) => Some(render::value(&(p + d))),
        _ => None,
    };
    let mut body = Map::new();
    body.insert("dual_index".into(), json!(index_name(opts.dual_index)));
    body.insert(
        "primal".into(),
        json!({
            "value": rep.primal_value.as_ref().map_or(json!({ "exact": "-inf" }), render::value),
            "policy": rep.primal_policy.as_ref().map(|p| render::policy(tree, p)),
        }),
    );
    body.insert(
        "dual".into(),
        json!({
            "value": render::dual(&rep.dual.value),
            "dual_process": rep.dual.y.as_ref().map(|y| render::policy(tree, y)),
        }),
    );
    body.insert(
        "duality_gap".into(),
        json!({ "primal_plus_dual": gap, "weak_duality": rep.weak_duality, "zero_gap": rep.zero_gap }),
    );
    body.insert("duality_conditions".into(), ocp_json(tree, &ocp));
    Ok(Report::ok(body))
}

fn oracle_compare(inst: &Instance) -> Result<Report, CliError> {
    let tree = &inst.tree;
    let mut body = Map::new();
    if let Model::Hedge { .. } = inst.file.model {
        let hp = inst.hedge()?;
        let dp = variance_hedge_solve(&hp)?;
        let lsq = least_squares_oracle(&hp)?;
        body.insert("dp".into(), json!({ "value": render::value(&dp.value) }));
        body.insert("oracle".into(), json!({ "value": render::value(&lsq.value) }));
        body.insert("discrepancy".into(), render::rational(&(&dp.value - &lsq.value)));
        body.insert("agree".into(), json!(dp.value == lsq.value));
        return Ok(Report::ok(body));
    }
    let spec = integrand_spec(inst)?;
    let flat = flatten_solve(tree, &spec)?;
    body.insert(
        "oracle".into(),
        json!({ "value": render::value(&flat.value), "minimizer": render::policy(tree, &flat.minimizer) }),
    );
    let dp = backward_pass(tree, &spec).and_then(|t| forward_policy(tree, &t).map(|r| (t, r)));
    let (table, (policy, value)) = match dp {
        Ok(r) => r,
        Err(e) => {
            body.insert("agree".into(), json!(false));
            return Ok(Report {
                body,
                failure: Some(e.into()),
            });
        }
    };
    let dp_of_flat = stage_value(tree, &table, &flat.minimizer, tree.horizon())?;
    let flat_of_dp = flat_objective(tree, &spec, &policy)?;
    body.insert("dp".into(), json!({ "value": render::value(&value), "policy": render::policy(tree, &policy) }));
    body.insert("discrepancy".into(), render::rational(&(&value - &flat.value)));
    body.insert(
        "cross_evaluation".into(),
        json!({
            "dp_policy_in_oracle": render::ext(&flat_of_dp),
            "oracle_minimizer_in_dp": render::ext(&dp_of_flat),
        }),
    );
    let agree = value == flat.value
        && flat_of_dp == ExtReal::Finite(value.clone())
        && dp_of_flat == ExtReal::Finite(value);
    body.insert("agree".into(), json!(agree));
    Ok(Report::ok(body))
}

fn add_at(base: &Endowment, delta: &Endowment) -> Endowment {
    let mut u = base.clone();
    for (v, dv) in delta {
        let e = u.entry(*v).or_insert_with(|| vec![Rational::default(); dv.len()]);
        for (a, b) in e.iter_mut().zip(dv) {
            *a += b;
        }
    }
    u
}

fn probe(inst: &Instance, opts: &Options) -> Result<Report, CliError> {
    let tree = &inst.tree;
    let phi_node = |default: NodeId| -> Result<(NodeId, usize), CliError> {
        match &opts.phi {
            Some(p) => Ok((inst.node(&p.node)?, p.coord)),
            None => Ok((default, 0)),
        }
    };
    let explicit_radius = opts.phi.as_ref().and_then(|p| p.radius.as_ref()).map(|r| r.0.clone());
    let report = match &inst.file.model {
        Model::ConeMarket { .. } => {
            let mkt = inst.cone_market()?;
            let util = inst.utilities(mkt.assets)?;
            let base = inst.endowment(mkt.assets)?;
            let (node, coord) = phi_node(tree.root())?;
            if coord >= mkt.assets {
                return Err(CliError::Schema(format!("coordinate {coord} out of range")));
            }
            let radius = explicit_radius.unwrap_or_else(|| data_radius(base.values().flatten()));
            let grid = line_grid(node, mkt.assets, coord, &radius);
            let sol = solve_consumption_dual(&mkt, &util, &base, opts.dual_index)?;
            let dual = match (&sol.value, &sol.y) {
                (DualValue::Finite(g), Some(y)) => Some((y.clone(), g.clone())),
                _ => None,
            };
            let build = |delta: &Endowment| build_consumption(&mkt, &util, &add_at(&base, delta));
            phi_probe(tree, &build, &grid, radius, dual.as_ref().map(|(y, g)| (y, g)))?
        }
        Model::LiquidMarket { .. } | Model::Hedge { .. } => {
            let mkt = inst.liquid_market()?;
            let claim = inst.claim()?;
            let (node, coord) = phi_node(tree.leaves()[0])?;
            if coord != 0 || !tree.node(node).children.is_empty() {
                return Err(CliError::Schema("the claim can only be perturbed at a leaf, coordinate 0".into()));
            }
            let radius = explicit_radius.unwrap_or_else(|| data_radius(claim.values()));
            let grid = line_grid(node, 1, 0, &radius);
            let build = |delta: &Endowment| {
                let c: BTreeMap<NodeId, Rational> = claim
                    .iter()
                    .map(|(v, x)| (*v, delta.get(v).map_or_else(|| x.clone(), |d| x + &d[0])))
                    .collect();
                build_superhedge(&mkt, &c)
            };
            phi_probe(tree, &build, &grid, radius, None)?
        }
        _ => {
            return Err(CliError::Schema(format!(
                "phi-probe needs a market model, found `{}`",
                inst.file.model.kind()
            )))
        }
    };
    let points: Vec<Value> = report
        .points
        .iter()
        .map(|p| {
            json!({
                "u": render::endowment(tree, &p.u),
                "value": render::phi(&p.value),
                "minimizer": p.minimizer.as_ref().map(|m| render::policy(tree, m)),
            })
        })
        .collect();
    let mut body = Map::new();
    body.insert("radius".into(), render::rational(&report.radius));
    body.insert("points".into(), Value::Array(points));
    body.insert("attained".into(), json!(report.attained));
    body.insert("midpoint_convex".into(), json!(report.midpoint_convex));
    body.insert(
        "fenchel".into(),
        json!(report
            .fenchel
            .as_ref()
            .map(|f| json!({ "inequality": f.inequality, "equality_at_zero": f.equality_at_zero }))),
    );
    Ok(Report::ok(body))
}

