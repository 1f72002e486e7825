//! Finite scenario trees with rational conditional probabilities, and adapted policies.

use std::collections::{BTreeMap, HashMap};

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::rational::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("children of node `{node}` have probabilities summing to {sum}, not 1")]
    NonUnitProbability { node: String, sum: Rational },
    #[error("node `{node}` has nonpositive probability {prob}")]
    NonPositiveProbability { node: String, prob: Rational },
    #[error("node `{node}` has no valid parent")]
    OrphanNode { node: String },
    #[error("node `{node}` breaks the stage sequence")]
    StageGap { node: String },
    #[error("node id `{node}` appears more than once")]
    DuplicateNode { node: String },
    #[error("tree must have exactly one root at stage 0, found {count}")]
    RootCount { count: usize },
    #[error("no value supplied for node `{node}`")]
    MissingValue { node: String },
}

/// Input record for one node; `prob` is the conditional probability given the parent.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec {
    pub name: String,
    pub stage: usize,
    pub parent: Option<String>,
    pub prob: Rational,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub stage: usize,
    pub parent: Option<NodeId>,
    /// Conditional probability given the parent (1 at the root).
    pub prob: Rational,
    /// Unconditional probability of reaching this node.
    pub abs_prob: Rational,
    pub children: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioTree {
    horizon: usize,
    nodes: Vec<Node>,
    stages: Vec<Vec<NodeId>>,
}

impl ScenarioTree {
    /// Validates and indexes a tree. Node ids are assigned stage by stage in input order.
    pub fn new(horizon: usize, specs: Vec<NodeSpec>) -> Result<ScenarioTree, TreeError> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, s) in specs.iter().enumerate() {
            if seen.insert(s.name.as_str(), i).is_some() {
                return Err(TreeError::DuplicateNode { node: s.name.clone() });
            }
        }
        let roots: Vec<&NodeSpec> = specs.iter().filter(|s| s.parent.is_none()).collect();
        for r in &roots {
            if r.stage != 0 {
                return Err(TreeError::OrphanNode { node: r.name.clone() });
            }
        }
        if roots.len() != 1 {
            return Err(TreeError::RootCount { count: roots.len() });
        }
        for s in &specs {
            if s.stage > horizon {
                return Err(TreeError::StageGap { node: s.name.clone() });
            }
            if let Some(p) = &s.parent {
                let Some(&pi) = seen.get(p.as_str()) else {
                    return Err(TreeError::OrphanNode { node: s.name.clone() });
                };
                if specs[pi].stage + 1 != s.stage {
                    return Err(TreeError::StageGap { node: s.name.clone() });
                }
                if !s.prob.is_positive() {
                    return Err(TreeError::NonPositiveProbability {
                        node: s.name.clone(),
                        prob: s.prob.clone(),
                    });
                }
            }
        }

        let mut order: Vec<usize> = (0..specs.len()).collect();
        order.sort_by_key(|&i| specs[i].stage);
        let mut id_of: HashMap<&str, NodeId> = HashMap::new();
        for (k, &i) in order.iter().enumerate() {
            id_of.insert(specs[i].name.as_str(), NodeId(k));
        }
        let mut nodes: Vec<Node> = order
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let s = &specs[i];
                Node {
                    id: NodeId(k),
                    name: s.name.clone(),
                    stage: s.stage,
                    parent: s.parent.as_ref().map(|p| id_of[p.as_str()]),
                    prob: if s.parent.is_some() { s.prob.clone() } else { Rational::one() },
                    abs_prob: Rational::zero(),
                    children: Vec::new(),
                }
            })
            .collect();
        for k in 0..nodes.len() {
            if let Some(NodeId(p)) = nodes[k].parent {
                nodes[p].children.push(NodeId(k));
            }
        }
        for k in 0..nodes.len() {
            nodes[k].abs_prob = match nodes[k].parent {
                None => Rational::one(),
                Some(NodeId(p)) => &nodes[p].abs_prob * &nodes[k].prob,
            };
            if nodes[k].children.is_empty() {
                if nodes[k].stage != horizon {
                    return Err(TreeError::StageGap { node: nodes[k].name.clone() });
                }
            } else {
                let sum: Rational = nodes[k].children.iter().map(|c| nodes[c.0].prob.clone()).sum();
                if !sum.is_one() {
                    return Err(TreeError::NonUnitProbability {
                        node: nodes[k].name.clone(),
                        sum,
                    });
                }
            }
        }
        let mut stages = vec![Vec::new(); horizon + 1];
        for n in &nodes {
            stages[n.stage].push(n.id);
        }
        Ok(ScenarioTree {
            horizon,
            nodes,
            stages,
        })
    }

    /// A tree where every stage-`t` node branches with conditional probabilities `branching[t]`.
    pub fn uniform(branching: &[Vec<Rational>]) -> Result<ScenarioTree, TreeError> {
        let mut specs = vec![NodeSpec {
            name: "r".into(),
            stage: 0,
            parent: None,
            prob: Rational::one(),
        }];
        let mut frontier = vec!["r".to_string()];
        for (t, probs) in branching.iter().enumerate() {
            let mut next = Vec::new();
            for parent in &frontier {
                for (k, p) in probs.iter().enumerate() {
                    let name = format!("{parent}.{k}");
                    specs.push(NodeSpec {
                        name: name.clone(),
                        stage: t + 1,
                        parent: Some(parent.clone()),
                        prob: p.clone(),
                    });
                    next.push(name);
                }
            }
            frontier = next;
        }
        ScenarioTree::new(branching.len(), specs)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn stage_nodes(&self, t: usize) -> &[NodeId] {
        &self.stages[t]
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.stages[self.horizon]
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.name == name).map(|n| n.id)
    }

    /// Nodes from the root down to `id`, inclusive.
    pub fn path(&self, id: NodeId) -> Vec<NodeId> {
        let mut p = vec![id];
        let mut cur = id;
        while let Some(par) = self.nodes[cur.0].parent {
            p.push(par);
            cur = par;
        }
        p.reverse();
        p
    }

    /// The stage-`s` ancestor of `id` (itself when `s` is its stage).
    pub fn ancestor(&self, id: NodeId, s: usize) -> NodeId {
        self.path(id)[s]
    }

    /// `E[X | F_s]` for a leaf-measurable `X` given by `leaf_values`, as a map on stage-`s` nodes.
    pub fn cond_exp_scalars(
        &self,
        s: usize,
        leaf_values: &BTreeMap<NodeId, Rational>,
    ) -> Result<BTreeMap<NodeId, Rational>, TreeError> {
        let mut vals: BTreeMap<NodeId, Rational> = BTreeMap::new();
        for &l in self.leaves() {
            let v = leaf_values.get(&l).ok_or_else(|| TreeError::MissingValue {
                node: self.nodes[l.0].name.clone(),
            })?;
            vals.insert(l, v.clone());
        }
        for t in (s..self.horizon).rev() {
            for &v in &self.stages[t] {
                let e = self.nodes[v.0]
                    .children
                    .iter()
                    .map(|c| &self.nodes[c.0].prob * &vals[c])
                    .sum();
                vals.insert(v, e);
            }
        }
        Ok(self.stages[s].iter().map(|v| (*v, vals[v].clone())).collect())
    }

    /// `E[X]` for a leaf-measurable `X`.
    pub fn expectation(&self, leaf_values: &BTreeMap<NodeId, Rational>) -> Result<Rational, TreeError> {
        Ok(self.cond_exp_scalars(0, leaf_values)?[&self.root()].clone())
    }
}

/// An adapted strategy: one decision vector per node.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Policy {
    decisions: BTreeMap<NodeId, Vec<Rational>>,
}

impl Policy {
    pub fn new() -> Policy {
        Policy::default()
    }

    pub fn set(&mut self, node: NodeId, x: Vec<Rational>) {
        self.decisions.insert(node, x);
    }

    pub fn get(&self, node: NodeId) -> Option<&[Rational]> {
        self.decisions.get(&node).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &Vec<Rational>)> {
        self.decisions.iter()
    }

    /// Concatenated decisions along the path to `node`, or `None` if one is missing.
    pub fn history(&self, tree: &ScenarioTree, node: NodeId) -> Option<Vec<Rational>> {
        let mut h = Vec::new();
        for v in tree.path(node) {
            h.extend_from_slice(self.decisions.get(&v)?);
        }
        Some(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{frac, int};

    fn spec(name: &str, stage: usize, parent: Option<&str>, p: Rational) -> NodeSpec {
        NodeSpec {
            name: name.into(),
            stage,
            parent: parent.map(Into::into),
            prob: p,
        }
    }

    #[test]
    fn rejects_bad_probabilities() {
        let r = ScenarioTree::new(
            1,
            vec![
                spec("r", 0, None, int(1)),
                spec("a", 1, Some("r"), frac(1, 2)),
                spec("b", 1, Some("r"), frac(1, 3)),
            ],
        );
        assert!(matches!(r, Err(TreeError::NonUnitProbability { .. })));
    }

    #[test]
    fn rejects_orphans_and_gaps() {
        let orphan = ScenarioTree::new(1, vec![spec("r", 0, None, int(1)), spec("a", 1, Some("x"), int(1))]);
        assert!(matches!(orphan, Err(TreeError::OrphanNode { .. })));
        let gap = ScenarioTree::new(2, vec![spec("r", 0, None, int(1)), spec("a", 2, Some("r"), int(1))]);
        assert!(matches!(gap, Err(TreeError::StageGap { .. })));
        let short = ScenarioTree::new(2, vec![spec("r", 0, None, int(1)), spec("a", 1, Some("r"), int(1))]);
        assert!(matches!(short, Err(TreeError::StageGap { .. })));
    }

    #[test]
    fn conditional_expectation_on_binomial_tree() {
        let t = ScenarioTree::uniform(&[vec![frac(1, 2), frac(1, 2)], vec![frac(1, 4), frac(3, 4)]]).unwrap();
        let leaf: BTreeMap<NodeId, Rational> =
            t.leaves().iter().enumerate().map(|(k, &l)| (l, int(k as i64))).collect();
        let e1 = t.cond_exp_scalars(1, &leaf).unwrap();
        let vals: Vec<Rational> = e1.values().cloned().collect();
        assert_eq!(vals, vec![frac(3, 4), frac(11, 4)]);
        assert_eq!(t.expectation(&leaf).unwrap(), frac(7, 4));
    }
}
