//! Bellman form for separable objectives `Σ_t k_t(x_{t−1}, x_t)` with a fixed
//! initial state `x_{−1}`.

use std::collections::BTreeMap;

use super::{check_certificates, last_block_cone, weighted_sum, IntegrandSpec, LowerBound};
use crate::error::DpError;
use crate::polyhedra::{cone_lineality, project_orthogonal, Lineality, PolyError, PolyFunc};
use crate::rational::{ExtReal, Rational};
use crate::tree::{NodeId, Policy, ScenarioTree};

#[derive(Clone, Debug, PartialEq)]
pub struct BellmanSpec {
    pub dims: Vec<usize>,
    pub initial_state: Vec<Rational>,
    /// `k_v(x_{t−1}, x_t)` per node.
    pub costs: BTreeMap<NodeId, PolyFunc>,
    /// Certificates, when given, are keyed by node and bound `k_v` from below.
    pub lower_bound: LowerBound,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BellmanResult {
    /// `V_v(x_t)`, the conditional expectation of the children's `Ṽ`.
    pub value_functions: BTreeMap<NodeId, PolyFunc>,
    /// `Ṽ_v(x_{t−1}) = inf_{x_t} k_v(x_{t−1}, x_t) + V_v(x_t)`.
    pub tilde: BTreeMap<NodeId, PolyFunc>,
    pub lineality: BTreeMap<NodeId, Lineality>,
    pub policy: Policy,
    pub value: Rational,
}

impl BellmanSpec {
    fn prev_dim(&self, t: usize) -> usize {
        if t == 0 {
            self.initial_state.len()
        } else {
            self.dims[t - 1]
        }
    }

    fn validate(&self, tree: &ScenarioTree) -> Result<(), DpError> {
        if self.dims.len() != tree.horizon() + 1 {
            return Err(DpError::Spec("stage dimensions do not match the horizon".into()));
        }
        for node in tree.nodes() {
            let k = self
                .costs
                .get(&node.id)
                .ok_or_else(|| DpError::Spec(format!("no stage cost at node `{}`", node.name)))?;
            let want = self.prev_dim(node.stage) + self.dims[node.stage];
            if k.dim() != want {
                return Err(DpError::Spec(format!(
                    "stage cost at `{}` has dimension {}, expected {want}",
                    node.name,
                    k.dim()
                )));
            }
        }
        Ok(())
    }

    /// The equivalent integrand `h(x, ω) = Σ_t k_t(x_{t−1}, x_t, ω)` on each leaf.
    pub fn to_integrand_spec(&self, tree: &ScenarioTree) -> Result<IntegrandSpec, DpError> {
        self.validate(tree)?;
        let n: usize = self.dims.iter().sum();
        let offsets: Vec<usize> = (0..self.dims.len())
            .map(|t| self.dims[..t].iter().sum())
            .collect();
        let mut leaf_funcs = BTreeMap::new();
        let mut bounds = BTreeMap::new();
        for &l in tree.leaves() {
            let mut acc = PolyFunc::zero(n);
            let mut bound = Rational::from_integer(0.into());
            for (t, v) in tree.path(l).into_iter().enumerate() {
                let k = &self.costs[&v];
                let part = if t == 0 {
                    let fixed = PolyFunc::from_epigraph(k.epigraph().fix_leading(&self.initial_state))?;
                    let pos: Vec<usize> = (0..self.dims[0]).collect();
                    fixed.embed(n, &pos)
                } else {
                    let pos: Vec<usize> = (offsets[t - 1]..offsets[t] + self.dims[t]).collect();
                    k.embed(n, &pos)
                };
                acc = acc.sum(&part)?;
                if let LowerBound::Certificate(m) = &self.lower_bound {
                    bound += m.get(&v).cloned().unwrap_or_default();
                }
            }
            leaf_funcs.insert(l, acc);
            bounds.insert(l, bound);
        }
        let lower_bound = match self.lower_bound {
            LowerBound::Certificate(_) => LowerBound::Certificate(bounds),
            LowerBound::CheckedDuringPass => LowerBound::CheckedDuringPass,
        };
        Ok(IntegrandSpec {
            dims: self.dims.clone(),
            leaf_funcs,
            lower_bound,
        })
    }
}

/// Backward Bellman recursion followed by forward policy recovery.
pub fn bellman_pass(tree: &ScenarioTree, spec: &BellmanSpec) -> Result<BellmanResult, DpError> {
    spec.validate(tree)?;
    check_certificates(tree, &spec.costs, &spec.lower_bound)?;
    let mut value_functions: BTreeMap<NodeId, PolyFunc> = BTreeMap::new();
    let mut tilde: BTreeMap<NodeId, PolyFunc> = BTreeMap::new();
    let mut stage_costs: BTreeMap<NodeId, PolyFunc> = BTreeMap::new();
    let mut lineality = BTreeMap::new();
    for t in (0..=tree.horizon()).rev() {
        let n_t = spec.dims[t];
        let prev = spec.prev_dim(t);
        for &v in tree.stage_nodes(t) {
            let node = tree.node(v);
            let vf = if node.children.is_empty() {
                PolyFunc::zero(n_t)
            } else {
                let parts: Vec<(Rational, &PolyFunc)> = node
                    .children
                    .iter()
                    .map(|c| (tree.node(*c).prob.clone(), &tilde[c]))
                    .collect();
                weighted_sum(&parts)?
            };
            if vf.is_infinite() {
                return Err(DpError::Infeasible);
            }
            let pos: Vec<usize> = (prev..prev + n_t).collect();
            let w = spec.costs[&v].sum(&vf.embed(prev + n_t, &pos))?;
            if w.is_infinite() {
                return Err(DpError::Infeasible);
            }
            let cone = last_block_cone(&w.recession()?, n_t)?;
            let lin = cone_lineality(&cone);
            if !lin.is_linear {
                return Err(DpError::LinearityViolated {
                    node: node.name.clone(),
                    witness: lin.witness.unwrap_or_default(),
                });
            }
            let coords: Vec<usize> = (prev..prev + n_t).collect();
            let vt = w.partial_min(&coords).map_err(|e| match e {
                PolyError::UnboundedBelow { ray } => DpError::UnboundedBelow {
                    node: node.name.clone(),
                    ray,
                },
                other => DpError::Poly(other),
            })?;
            value_functions.insert(v, vf);
            tilde.insert(v, vt);
            stage_costs.insert(v, w);
            lineality.insert(v, lin);
        }
    }
    let root = tree.root();
    let value = match tilde[&root].evaluate(&spec.initial_state)? {
        ExtReal::Finite(v) => v,
        ExtReal::PlusInfinity => return Err(DpError::Infeasible),
    };

    let mut policy = Policy::new();
    let mut total = ExtReal::zero();
    for t in 0..=tree.horizon() {
        for &v in tree.stage_nodes(t) {
            let prev = match tree.node(v).parent {
                Some(p) => policy.get(p).expect("parent decided").to_vec(),
                None => spec.initial_state.clone(),
            };
            let basis = &lineality[&v].basis;
            let m = stage_costs[&v].argmin_slice(&prev, basis)?;
            let expect = tilde[&v].evaluate(&prev)?;
            if m.value != expect {
                return Err(DpError::Spec(format!(
                    "Bellman argmin at `{}` attains {} instead of {}",
                    tree.node(v).name,
                    m.value,
                    expect
                )));
            }
            let x = project_orthogonal(&m.point.ok_or(DpError::Infeasible)?, basis);
            let mut arg = prev.clone();
            arg.extend(x.iter().cloned());
            total = total + spec.costs[&v].evaluate(&arg)?.scale(&tree.node(v).abs_prob);
            policy.set(v, x);
        }
    }
    if total != ExtReal::Finite(value.clone()) {
        return Err(DpError::Spec(format!("Bellman policy cost {total} differs from value {value}")));
    }
    Ok(BellmanResult {
        value_functions,
        tilde,
        lineality,
        policy,
        value,
    })
}
