//! Backward recursion over a scenario tree, recession cones `N_t`, optimal
//! policy recovery and optimality verification.
//!
//! At stage `T` the node function is the leaf integrand `h`. At an internal node
//! `h_t = Σ_c p_c h̃_t(c)` and `h̃_{t−1} = inf_{x_t} h_t`. Every node records the
//! cone `N_t = {x_t : h_t^∞(0, x_t) ≤ 0}`; the pass stops unless it is a subspace.

mod bellman;
mod linearity;

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};

pub use bellman::{bellman_pass, BellmanResult, BellmanSpec};
pub use linearity::{
    check_linearity_l, recession_commutation_check, AdaptedLayout, CommutationReport, LinearityReport,
};

use crate::error::DpError;
use crate::polyhedra::{
    cone_lineality, project_orthogonal, ConeRep, Halfspace, Lineality, LpOutcome, PolyError, PolyFunc, Polyhedron,
};
use crate::rational::{dot, zeros, ExtReal, Rational};
use crate::tree::{NodeId, Policy, ScenarioTree};

/// Evidence that the leaf integrands are bounded below.
#[derive(Clone, Debug, PartialEq)]
pub enum LowerBound {
    /// `h(·, ω) ≥ m(ω)` per node, verified by LP before the pass.
    Certificate(BTreeMap<NodeId, Rational>),
    /// No certificate; every partial minimization is checked for `−∞` instead.
    CheckedDuringPass,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegrandSpec {
    /// Stage dimensions `n_0, …, n_T`.
    pub dims: Vec<usize>,
    /// One function of the full decision vector `x = (x_0, …, x_T)` per leaf.
    pub leaf_funcs: BTreeMap<NodeId, PolyFunc>,
    pub lower_bound: LowerBound,
}

impl IntegrandSpec {
    pub fn total_dim(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Length of the history `x^t = (x_0, …, x_t)`.
    pub fn prefix_len(&self, t: usize) -> usize {
        self.dims[..=t].iter().sum()
    }

    pub fn validate(&self, tree: &ScenarioTree) -> Result<(), DpError> {
        if self.dims.len() != tree.horizon() + 1 {
            return Err(DpError::Spec(format!(
                "expected {} stage dimensions, found {}",
                tree.horizon() + 1,
                self.dims.len()
            )));
        }
        let n = self.total_dim();
        for &l in tree.leaves() {
            let f = self.leaf_funcs.get(&l).ok_or_else(|| {
                DpError::Spec(format!("no integrand for leaf `{}`", tree.node(l).name))
            })?;
            if f.dim() != n {
                return Err(DpError::Spec(format!(
                    "integrand at leaf `{}` has dimension {}, expected {n}",
                    tree.node(l).name,
                    f.dim()
                )));
            }
        }
        if self.leaf_funcs.len() != tree.leaves().len() {
            return Err(DpError::Spec("integrands given for non-leaf nodes".into()));
        }
        Ok(())
    }

    /// The integrand with every leaf function replaced by its recession function.
    pub fn recession_spec(&self) -> Result<IntegrandSpec, DpError> {
        let mut leaf_funcs = BTreeMap::new();
        for (&l, f) in &self.leaf_funcs {
            if f.is_infinite() {
                return Err(DpError::Infeasible);
            }
            leaf_funcs.insert(l, f.recession()?);
        }
        Ok(IntegrandSpec {
            dims: self.dims.clone(),
            leaf_funcs,
            lower_bound: LowerBound::CheckedDuringPass,
        })
    }
}

/// Everything the backward pass computes at one node of stage `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeEntry {
    pub stage: usize,
    /// `h_t` over `x^t`.
    pub h: PolyFunc,
    /// `h̃_{t−1} = inf_{x_t} h_t` over `x^{t−1}`.
    pub h_tilde: PolyFunc,
    pub recession: PolyFunc,
    /// `N_t` in `R^{n_t}`.
    pub n_cone: ConeRep,
    pub lineality: Lineality,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeFunctionTable {
    pub dims: Vec<usize>,
    pub entries: BTreeMap<NodeId, NodeEntry>,
    /// `inf (P)`.
    pub value: Rational,
}

impl NodeFunctionTable {
    pub fn entry(&self, v: NodeId) -> &NodeEntry {
        &self.entries[&v]
    }
}

fn node_name(tree: &ScenarioTree, v: NodeId) -> String {
    tree.node(v).name.clone()
}

fn check_certificates(tree: &ScenarioTree, funcs: &BTreeMap<NodeId, PolyFunc>, lb: &LowerBound) -> Result<(), DpError> {
    let LowerBound::Certificate(m) = lb else {
        return Ok(());
    };
    for (v, f) in funcs {
        let bound = m
            .get(v)
            .ok_or_else(|| DpError::LowerBoundViolated { node: node_name(tree, *v) })?;
        match f.infimum() {
            Ok(ExtReal::Finite(inf)) if inf >= *bound => {}
            Ok(ExtReal::PlusInfinity) => {}
            _ => return Err(DpError::LowerBoundViolated { node: node_name(tree, *v) }),
        }
    }
    Ok(())
}

/// `N_t` for a function of `x^t` whose last `n_t` coordinates are `x_t`.
pub(crate) fn last_block_cone(rec: &PolyFunc, n_t: usize) -> Result<ConeRep, DpError> {
    let lead = rec.dim() - n_t;
    let level = rec.sublevel_zero().fix_leading(&zeros(lead));
    Ok(ConeRep::from_polyhedron(&level.homogenized())?)
}

/// Probability-weighted sum of functions sharing a dimension.
pub(crate) fn weighted_sum(parts: &[(Rational, &PolyFunc)]) -> Result<PolyFunc, PolyError> {
    let mut acc: Option<PolyFunc> = None;
    for (p, f) in parts {
        let term = if p.is_one() { (*f).clone() } else { f.scale(p) };
        acc = Some(match acc {
            None => term,
            Some(a) => a.sum(&term)?,
        });
    }
    Ok(acc.expect("at least one child"))
}

/// Runs the backward recursion.
pub fn backward_pass(tree: &ScenarioTree, spec: &IntegrandSpec) -> Result<NodeFunctionTable, DpError> {
    spec.validate(tree)?;
    if spec.leaf_funcs.values().any(PolyFunc::is_infinite) {
        return Err(DpError::Infeasible);
    }
    check_certificates(tree, &spec.leaf_funcs, &spec.lower_bound)?;
    let mut entries: BTreeMap<NodeId, NodeEntry> = BTreeMap::new();
    for t in (0..=tree.horizon()).rev() {
        let len = spec.prefix_len(t);
        let n_t = spec.dims[t];
        for &v in tree.stage_nodes(t) {
            let node = tree.node(v);
            let h = if node.children.is_empty() {
                spec.leaf_funcs[&v].clone()
            } else {
                let parts: Vec<(Rational, &PolyFunc)> = node
                    .children
                    .iter()
                    .map(|c| (tree.node(*c).prob.clone(), &entries[c].h_tilde))
                    .collect();
                weighted_sum(&parts)?
            };
            if h.is_infinite() {
                return Err(DpError::Infeasible);
            }
            let recession = h.recession()?;
            let n_cone = last_block_cone(&recession, n_t)?;
            let lineality = cone_lineality(&n_cone);
            if !lineality.is_linear {
                return Err(DpError::LinearityViolated {
                    node: node.name.clone(),
                    witness: lineality.witness.clone().unwrap_or_default(),
                });
            }
            let coords: Vec<usize> = (len - n_t..len).collect();
            let h_tilde = h.partial_min(&coords).map_err(|e| match e {
                PolyError::UnboundedBelow { ray } => DpError::UnboundedBelow {
                    node: node.name.clone(),
                    ray,
                },
                other => DpError::Poly(other),
            })?;
            entries.insert(
                v,
                NodeEntry {
                    stage: t,
                    h,
                    h_tilde,
                    recession,
                    n_cone,
                    lineality,
                },
            );
        }
    }
    let root = &entries[&tree.root()].h_tilde;
    let value = match root.evaluate(&[])? {
        ExtReal::Finite(v) => v,
        ExtReal::PlusInfinity => return Err(DpError::Infeasible),
    };
    Ok(NodeFunctionTable {
        dims: spec.dims.clone(),
        entries,
        value,
    })
}

/// Recovers an optimal adapted policy with `x_t ⊥ N_t` at every node.
pub fn forward_policy(tree: &ScenarioTree, table: &NodeFunctionTable) -> Result<(Policy, Rational), DpError> {
    let mut policy = Policy::new();
    for t in 0..=tree.horizon() {
        for &v in tree.stage_nodes(t) {
            let e = table.entry(v);
            let prefix = match tree.node(v).parent {
                Some(p) => policy.history(tree, p).expect("parent decided"),
                None => Vec::new(),
            };
            let m = e.h.argmin_slice(&prefix, &e.lineality.basis)?;
            let x = m.point.ok_or(DpError::Infeasible)?;
            let x = project_orthogonal(&x, &e.lineality.basis);
            let expect = e.h_tilde.evaluate(&prefix)?;
            if m.value != expect {
                return Err(DpError::Spec(format!(
                    "argmin at node `{}` attains {} but the value function gives {}",
                    tree.node(v).name,
                    m.value,
                    expect
                )));
            }
            policy.set(v, x);
        }
    }
    let value = expected_leaf_value(tree, table, &policy)?;
    if value != ExtReal::Finite(table.value.clone()) {
        return Err(DpError::Spec(format!(
            "policy value {value} differs from the root value {}",
            table.value
        )));
    }
    Ok((policy, table.value.clone()))
}

fn expected_leaf_value(tree: &ScenarioTree, table: &NodeFunctionTable, policy: &Policy) -> Result<ExtReal, DpError> {
    stage_value(tree, table, policy, tree.horizon())
}

/// `E h_t(x^t)`.
pub fn stage_value(tree: &ScenarioTree, table: &NodeFunctionTable, policy: &Policy, t: usize) -> Result<ExtReal, DpError> {
    let mut total = ExtReal::zero();
    for &v in tree.stage_nodes(t) {
        let x = policy
            .history(tree, v)
            .ok_or_else(|| DpError::Spec(format!("policy has no decision on the path to `{}`", tree.node(v).name)))?;
        let hv = table.entry(v).h.evaluate(&x)?;
        total = total + hv.scale(&tree.node(v).abs_prob);
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    MissingDecision { node: String },
    NotArgmin { node: String, attained: ExtReal, minimum: ExtReal },
    StageValue { stage: usize, value: ExtReal },
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimalityReport {
    pub optimal_value: Rational,
    /// `E h_t(x^t)` for `t = 0, …, T`.
    pub stage_values: Vec<ExtReal>,
    pub stage_equal: Vec<bool>,
    pub argmin_ok: BTreeMap<NodeId, bool>,
    pub first_violation: Option<Violation>,
}

impl OptimalityReport {
    pub fn holds(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Checks the argmin condition node by node and `E h_t(x^t) = inf (P)` stage by stage.
pub fn verify_optimality(tree: &ScenarioTree, table: &NodeFunctionTable, policy: &Policy) -> Result<OptimalityReport, DpError> {
    let inf = ExtReal::Finite(table.value.clone());
    let mut argmin_ok = BTreeMap::new();
    let mut first: Option<Violation> = None;
    for node in tree.nodes() {
        let v = node.id;
        let Some(x) = policy.history(tree, v) else {
            argmin_ok.insert(v, false);
            first.get_or_insert(Violation::MissingDecision { node: node.name.clone() });
            continue;
        };
        let e = table.entry(v);
        if x.len() != e.h.dim() {
            return Err(DpError::Spec(format!("decision at `{}` has the wrong dimension", node.name)));
        }
        let attained = e.h.evaluate(&x)?;
        let minimum = e.h_tilde.evaluate(&x[..x.len() - table.dims[node.stage]])?;
        let ok = attained == minimum;
        argmin_ok.insert(v, ok);
        if !ok {
            first.get_or_insert(Violation::NotArgmin {
                node: node.name.clone(),
                attained,
                minimum,
            });
        }
    }
    let mut stage_values = Vec::new();
    let mut stage_equal = Vec::new();
    for t in 0..=tree.horizon() {
        let complete = tree
            .stage_nodes(t)
            .iter()
            .all(|&v| policy.history(tree, v).is_some());
        let val = if complete {
            stage_value(tree, table, policy, t)?
        } else {
            ExtReal::PlusInfinity
        };
        let eq = val == inf;
        if !eq {
            first.get_or_insert(Violation::StageValue { stage: t, value: val.clone() });
        }
        stage_values.push(val);
        stage_equal.push(eq);
    }
    Ok(OptimalityReport {
        optimal_value: table.value.clone(),
        stage_values,
        stage_equal,
        argmin_ok,
        first_violation: first,
    })
}

/// Moves the decision at `node` off the argmin set along a direction orthogonal
/// to `N_t`, keeping every other decision. Returns `None` when `N_t` is the
/// whole space (every direction is cost-free there).
pub fn perturb_off_argmin(
    tree: &ScenarioTree,
    table: &NodeFunctionTable,
    policy: &Policy,
    node: NodeId,
) -> Result<Option<Policy>, DpError> {
    let e = table.entry(node);
    let n_t = table.dims[e.stage];
    if n_t == 0 || e.lineality.basis.len() == n_t {
        return Ok(None);
    }
    let x = policy.get(node).expect("decision present").to_vec();
    let prefix = match tree.node(node).parent {
        Some(p) => policy.history(tree, p).expect("parent decided"),
        None => Vec::new(),
    };
    let best = e.h_tilde.evaluate(&prefix)?;
    let ExtReal::Finite(best) = best else {
        return Err(DpError::Infeasible);
    };
    // Argmin set A = {x_t : h(prefix, x_t) ≤ best}.
    let slice = e.h.epigraph().fix_leading(&prefix);
    let argmin = {
        let fix_alpha = |h: &Halfspace| Halfspace::new(h.coeffs[..n_t].to_vec(), &h.rhs - &h.coeffs[n_t] * &best);
        Polyhedron::new(
            n_t,
            slice.ineqs().iter().map(fix_alpha).collect(),
            slice.eqs().iter().map(fix_alpha).collect(),
        )
    };
    for i in 0..n_t {
        let mut d = zeros(n_t);
        d[i] = Rational::one();
        let d = project_orthogonal(&d, &e.lineality.basis);
        if d.iter().all(Zero::is_zero) {
            continue;
        }
        for sign in [1i64, -1] {
            let dir: Vec<Rational> = d.iter().map(|v| v * crate::rational::int(sign)).collect();
            // Largest s with x + s·dir ∈ A.
            let shifted = {
                let row = |h: &Halfspace| {
                    let slope = dot(&h.coeffs, &dir);
                    Halfspace::new(vec![slope], &h.rhs - dot(&h.coeffs, &x))
                };
                Polyhedron::new(
                    1,
                    argmin.ineqs().iter().map(row).collect(),
                    argmin.eqs().iter().map(row).collect(),
                )
            };
            let step = match shifted.maximize(&[Rational::one()]) {
                LpOutcome::Optimal { value, .. } => value + Rational::one(),
                LpOutcome::Unbounded { .. } => continue,
                LpOutcome::Infeasible => Rational::one(),
            };
            debug_assert!(step.is_positive());
            let moved: Vec<Rational> = x.iter().zip(&dir).map(|(a, b)| a + &step * b).collect();
            let mut p = policy.clone();
            p.set(node, moved);
            return Ok(Some(p));
        }
    }
    Ok(None)
}
