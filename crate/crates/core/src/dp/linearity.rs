//! The linearity condition on the cone of cost-free adapted directions, decided
//! two ways, and the commutation of recession with conditional expectation.

use std::collections::BTreeMap;

use super::{backward_pass, weighted_sum, IntegrandSpec, NodeFunctionTable};
use crate::error::DpError;
use crate::polyhedra::{cone_lineality, ConeRep, LpOutcome, PolyFunc, Polyhedron};
use crate::rational::{zeros, Rational};
use crate::tree::{NodeId, Policy, ScenarioTree};

/// Coordinates of the adapted decision process: one block of `n_t` entries per stage-`t` node.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedLayout {
    dims: Vec<usize>,
    offsets: BTreeMap<NodeId, usize>,
    total: usize,
}

impl AdaptedLayout {
    pub fn new(tree: &ScenarioTree, dims: &[usize]) -> AdaptedLayout {
        let mut offsets = BTreeMap::new();
        let mut total = 0;
        for node in tree.nodes() {
            offsets.insert(node.id, total);
            total += dims[node.stage];
        }
        AdaptedLayout {
            dims: dims.to_vec(),
            offsets,
            total,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Global coordinates of `x = (x_0, …, x_T)` along the path to `leaf`.
    pub fn path_positions(&self, tree: &ScenarioTree, leaf: NodeId) -> Vec<usize> {
        tree.path(leaf)
            .into_iter()
            .enumerate()
            .flat_map(|(t, v)| {
                let o = self.offsets[&v];
                o..o + self.dims[t]
            })
            .collect()
    }

    pub fn to_policy(&self, tree: &ScenarioTree, w: &[Rational]) -> Policy {
        let mut p = Policy::new();
        for node in tree.nodes() {
            let o = self.offsets[&node.id];
            p.set(node.id, w[o..o + self.dims[node.stage]].to_vec());
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearityReport {
    /// Verdict of the node-wise route: every `N_t` is a subspace.
    pub node_wise: bool,
    /// Verdict of the direct route: the cone of adapted cost-free directions equals its negative.
    pub direct: bool,
    /// Node where the node-wise route found a one-sided direction, with that direction.
    pub node_witness: Option<(String, Vec<Rational>)>,
    /// An adapted direction `x` in the cone with `−x` outside it.
    pub witness: Option<Policy>,
}

impl LinearityReport {
    pub fn agree(&self) -> bool {
        self.node_wise == self.direct
    }

    pub fn is_linear(&self) -> bool {
        self.node_wise && self.direct
    }
}

/// Decides whether `{x adapted : h^∞(x(ω), ω) ≤ 0 for every leaf ω}` is a linear space.
pub fn check_linearity_l(tree: &ScenarioTree, spec: &IntegrandSpec) -> Result<LinearityReport, DpError> {
    spec.validate(tree)?;
    if spec.leaf_funcs.values().any(PolyFunc::is_infinite) {
        return Err(DpError::Infeasible);
    }
    let layout = AdaptedLayout::new(tree, &spec.dims);
    let n = layout.total();

    let mut domain = Polyhedron::universe(n);
    for &l in tree.leaves() {
        let pos = layout.path_positions(tree, l);
        domain = domain.intersect(&spec.leaf_funcs[&l].domain().embed(n, &pos));
    }
    if domain.maximize(&zeros(n)) == LpOutcome::Infeasible {
        return Err(DpError::Infeasible);
    }

    let rec = spec.recession_spec()?;
    let (node_wise, node_witness) = match backward_pass(tree, &rec) {
        Ok(_) => (true, None),
        Err(DpError::LinearityViolated { node, witness }) => (false, Some((node, witness))),
        Err(e) => return Err(e),
    };

    let mut cone = Polyhedron::universe(n);
    for &l in tree.leaves() {
        let pos = layout.path_positions(tree, l);
        cone = cone.intersect(&rec.leaf_funcs[&l].sublevel_zero().homogenized().embed(n, &pos));
    }
    let lin = cone_lineality(&ConeRep::from_polyhedron(&cone)?);
    Ok(LinearityReport {
        node_wise,
        direct: lin.is_linear,
        node_witness,
        witness: lin.witness.map(|w| layout.to_policy(tree, &w)),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CommutationReport {
    /// Per internal node: recession of the expectation equals the expectation of recessions.
    pub epigraphs_equal: BTreeMap<NodeId, bool>,
    /// Per internal node: the zero sublevel sets of both sides coincide.
    pub level_sets_equal: BTreeMap<NodeId, bool>,
}

impl CommutationReport {
    pub fn holds(&self) -> bool {
        self.epigraphs_equal.values().all(|&b| b) && self.level_sets_equal.values().all(|&b| b)
    }
}

/// Compares `(Σ_c p_c h̃_c)^∞` with `Σ_c p_c (h̃_c)^∞` at every internal node of a completed pass.
pub fn recession_commutation_check(tree: &ScenarioTree, table: &NodeFunctionTable) -> Result<CommutationReport, DpError> {
    let mut epigraphs_equal = BTreeMap::new();
    let mut level_sets_equal = BTreeMap::new();
    for node in tree.nodes() {
        if node.children.is_empty() {
            continue;
        }
        let lhs = &table.entry(node.id).recession;
        let recs: Vec<(Rational, PolyFunc)> = node
            .children
            .iter()
            .map(|c| Ok((tree.node(*c).prob.clone(), table.entry(*c).h_tilde.recession()?)))
            .collect::<Result<_, DpError>>()?;
        let parts: Vec<(Rational, &PolyFunc)> = recs.iter().map(|(p, f)| (p.clone(), f)).collect();
        let rhs = weighted_sum(&parts)?;
        epigraphs_equal.insert(node.id, lhs.same_function(&rhs));
        level_sets_equal.insert(node.id, lhs.sublevel_zero().same_set(&rhs.sublevel_zero()));
    }
    Ok(CommutationReport {
        epigraphs_equal,
        level_sets_equal,
    })
}
