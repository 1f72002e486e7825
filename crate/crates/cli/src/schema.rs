//! Instance files: JSON with exact rationals as `"p/q"` strings or integers.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;

use stochdp::dp::{BellmanSpec, IntegrandSpec, LowerBound};
use stochdp::finance::{ConeMarket, DualIndex, LiquidMarket, UtilitySpec};
use stochdp::oracle::Endowment;
use stochdp::polyhedra::{ConeRep, Halfspace, PolyFunc, Polyhedron};
use stochdp::quad::HedgeProblem;
use stochdp::rational::{parse_rational, Rational};
use stochdp::tree::{NodeId, NodeSpec, ScenarioTree};

use crate::CliError;

pub const SCHEMA_VERSION: u64 = 1;

/// An exact number on the wire.
#[derive(Clone, Debug, PartialEq)]
pub struct Num(pub Rational);

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Num, D::Error> {
        struct NumVisitor;
        impl Visitor<'_> for NumVisitor {
            type Value = Num;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an integer or a rational string matching -?[0-9]+(/[1-9][0-9]*)?")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Num, E> {
                Ok(Num(Rational::from_integer(v.into())))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Num, E> {
                Ok(Num(Rational::from_integer(v.into())))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Num, E> {
                parse_rational(v).map(Num).map_err(E::custom)
            }
        }
        d.deserialize_any(NumVisitor)
    }
}

fn nums(v: &[Num]) -> Vec<Rational> {
    v.iter().map(|n| n.0.clone()).collect()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub schema: u64,
    pub tree: TreeSection,
    pub model: Model,
    #[serde(default)]
    pub utilities: Option<Utilities>,
    /// Perturbation `u` per node for market models.
    #[serde(default)]
    pub endowment: Option<BTreeMap<String, Vec<Num>>>,
    /// Claim per leaf for liquid markets and hedging problems.
    #[serde(default)]
    pub claim: Option<BTreeMap<String, Num>>,
    #[serde(default)]
    pub options: FileOptions,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSection {
    pub horizon: usize,
    pub nodes: Vec<NodeEntry>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub name: String,
    pub stage: usize,
    #[serde(default)]
    pub parent: Option<String>,
    /// Conditional probability given the parent; defaults to 1.
    #[serde(default)]
    pub prob: Option<Num>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Model {
    Integrand {
        dims: Vec<usize>,
        leaves: BTreeMap<String, FuncJson>,
        #[serde(default)]
        lower_bound: Option<BTreeMap<String, Num>>,
    },
    Bellman {
        dims: Vec<usize>,
        initial_state: Vec<Num>,
        costs: BTreeMap<String, FuncJson>,
        #[serde(default)]
        lower_bound: Option<BTreeMap<String, Num>>,
    },
    LiquidMarket {
        prices: BTreeMap<String, Vec<Num>>,
    },
    ConeMarket {
        assets: usize,
        c_cones: BTreeMap<String, ConeJson>,
        #[serde(default)]
        d_cones: BTreeMap<String, ConeJson>,
    },
    Hedge {
        prices: BTreeMap<String, Vec<Num>>,
    },
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Integrand { .. } => "integrand",
            Model::Bellman { .. } => "bellman",
            Model::LiquidMarket { .. } => "liquid_market",
            Model::ConeMarket { .. } => "cone_market",
            Model::Hedge { .. } => "hedge",
        }
    }
}

/// `a·x ≤ b`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowJson {
    pub a: Vec<Num>,
    pub b: Num,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyJson {
    #[serde(default)]
    pub ineqs: Vec<RowJson>,
    #[serde(default)]
    pub eqs: Vec<RowJson>,
}

/// `max_i (a_i·x + b_i)` on `domain`; no pieces means the indicator of `domain`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuncJson {
    #[serde(default)]
    pub pieces: Vec<RowJson>,
    #[serde(default)]
    pub domain: Option<PolyJson>,
}

/// A cone `{x : a·x ≤ 0 (ineqs), a·x = 0 (eqs)}` or one of the names
/// `whole`, `origin`, `nonneg`, `nonpos`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ConeJson {
    Named(String),
    Rows {
        #[serde(default)]
        ineqs: Vec<Vec<Num>>,
        #[serde(default)]
        eqs: Vec<Vec<Num>>,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Utilities {
    /// `U(c) = min(c_0, cap)` on `{c_0 ≥ 0, c_k = 0}` at every node.
    CappedCash { cap: Num },
    /// `−U_v` per node with bounds `U_v ≤ m_v`.
    Explicit {
        neg_utility: BTreeMap<String, FuncJson>,
        upper_bound: BTreeMap<String, Num>,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckLevel {
    #[default]
    Fast,
    Full,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualIndexOpt {
    #[default]
    Derivation,
    Displayed,
}

impl From<DualIndexOpt> for DualIndex {
    fn from(d: DualIndexOpt) -> DualIndex {
        match d {
            DualIndexOpt::Derivation => DualIndex::Derivation,
            DualIndexOpt::Displayed => DualIndex::Displayed,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileOptions {
    #[serde(default)]
    pub check_level: Option<CheckLevel>,
    #[serde(default)]
    pub dual_index: Option<DualIndexOpt>,
    #[serde(default)]
    pub phi_probe: Option<PhiProbeOptions>,
}

/// Grid `u + s·radius·e_coord` at `node` for `s ∈ {−1, −1/2, 0, 1/2, 1}`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiProbeOptions {
    pub node: String,
    #[serde(default)]
    pub coord: usize,
    #[serde(default)]
    pub radius: Option<Num>,
}

/// Reads and checks the version of an instance file.
pub fn parse_instance(text: &str) -> Result<InstanceFile, CliError> {
    let inst: InstanceFile = serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
    if inst.schema != SCHEMA_VERSION {
        return Err(CliError::Schema(format!(
            "unsupported schema version {} (expected {SCHEMA_VERSION})",
            inst.schema
        )));
    }
    Ok(inst)
}

pub fn build_tree(t: &TreeSection) -> Result<ScenarioTree, CliError> {
    let specs = t
        .nodes
        .iter()
        .map(|n| NodeSpec {
            name: n.name.clone(),
            stage: n.stage,
            parent: n.parent.clone(),
            prob: n.prob.as_ref().map_or_else(|| Rational::from_integer(1.into()), |p| p.0.clone()),
        })
        .collect();
    ScenarioTree::new(t.horizon, specs).map_err(|e| CliError::Schema(e.to_string()))
}

fn node(tree: &ScenarioTree, name: &str) -> Result<NodeId, CliError> {
    tree.find(name)
        .ok_or_else(|| CliError::Schema(format!("unknown node `{name}`")))
}

/// Node-keyed data, requiring an entry for every node in `required`.
fn keyed<T, U>(
    tree: &ScenarioTree,
    map: &BTreeMap<String, T>,
    required: &[NodeId],
    what: &str,
    conv: impl Fn(&T) -> Result<U, CliError>,
) -> Result<BTreeMap<NodeId, U>, CliError> {
    let mut out = BTreeMap::new();
    for (name, v) in map {
        out.insert(node(tree, name)?, conv(v)?);
    }
    for v in required {
        if !out.contains_key(v) {
            return Err(CliError::Schema(format!("missing {what} for node `{}`", tree.node(*v).name)));
        }
    }
    Ok(out)
}

fn row(r: &RowJson, dim: usize) -> Result<Halfspace, CliError> {
    if r.a.len() != dim {
        return Err(CliError::Schema(format!("row has {} coefficients, expected {dim}", r.a.len())));
    }
    Ok(Halfspace::new(nums(&r.a), r.b.0.clone()))
}

pub fn polyhedron(p: &PolyJson, dim: usize) -> Result<Polyhedron, CliError> {
    let ineqs = p.ineqs.iter().map(|r| row(r, dim)).collect::<Result<_, _>>()?;
    let eqs = p.eqs.iter().map(|r| row(r, dim)).collect::<Result<_, _>>()?;
    Ok(Polyhedron::new(dim, ineqs, eqs))
}

pub fn func(f: &FuncJson, dim: usize) -> Result<PolyFunc, CliError> {
    let domain = match &f.domain {
        Some(p) => polyhedron(p, dim)?,
        None => Polyhedron::universe(dim),
    };
    let pieces: Vec<(Vec<Rational>, Rational)> = if f.pieces.is_empty() {
        vec![(vec![Rational::default(); dim], Rational::default())]
    } else {
        f.pieces
            .iter()
            .map(|r| row(r, dim).map(|h| (h.coeffs, h.rhs)))
            .collect::<Result<_, _>>()?
    };
    PolyFunc::max_affine(dim, &pieces, &domain).map_err(|e| CliError::Schema(e.to_string()))
}

fn cone(c: &ConeJson, dim: usize) -> Result<ConeRep, CliError> {
    match c {
        ConeJson::Named(s) => match s.as_str() {
            "whole" => Ok(ConeRep::whole(dim)),
            "origin" => Ok(ConeRep::origin(dim)),
            "nonneg" => Ok(ConeRep::nonneg_orthant(dim)),
            "nonpos" => Ok(ConeRep::nonpos_orthant(dim)),
            other => Err(CliError::Schema(format!("unknown cone name `{other}`"))),
        },
        ConeJson::Rows { ineqs, eqs } => {
            if ineqs.iter().chain(eqs).any(|r| r.len() != dim) {
                return Err(CliError::Schema(format!("cone rows must have {dim} coefficients")));
            }
            Ok(ConeRep::new(
                dim,
                ineqs.iter().map(|r| nums(r)).collect(),
                eqs.iter().map(|r| nums(r)).collect(),
            ))
        }
    }
}

fn lower_bound(tree: &ScenarioTree, lb: &Option<BTreeMap<String, Num>>) -> Result<LowerBound, CliError> {
    match lb {
        None => Ok(LowerBound::CheckedDuringPass),
        Some(m) => Ok(LowerBound::Certificate(keyed(tree, m, &[], "lower bound", |n| Ok(n.0.clone()))?)),
    }
}

fn prices(tree: &ScenarioTree, p: &BTreeMap<String, Vec<Num>>) -> Result<BTreeMap<NodeId, Vec<Rational>>, CliError> {
    let all: Vec<NodeId> = tree.nodes().iter().map(|n| n.id).collect();
    keyed(tree, p, &all, "prices", |v| Ok(nums(v)))
}

/// The parsed instance with its tree built.
pub struct Instance {
    pub file: InstanceFile,
    pub tree: ScenarioTree,
}

impl Instance {
    pub fn new(file: InstanceFile) -> Result<Instance, CliError> {
        let tree = build_tree(&file.tree)?;
        Ok(Instance { file, tree })
    }

    pub fn integrand(&self) -> Result<IntegrandSpec, CliError> {
        let Model::Integrand {
            dims,
            leaves,
            lower_bound: lb,
        } = &self.file.model
        else {
            return Err(self.wrong_model("integrand"));
        };
        let n: usize = dims.iter().sum();
        let leaf_funcs = keyed(&self.tree, leaves, self.tree.leaves(), "leaf function", |f| func(f, n))?;
        Ok(IntegrandSpec {
            dims: dims.clone(),
            leaf_funcs,
            lower_bound: lower_bound(&self.tree, lb)?,
        })
    }

    pub fn bellman(&self) -> Result<BellmanSpec, CliError> {
        let Model::Bellman {
            dims,
            initial_state,
            costs,
            lower_bound: lb,
        } = &self.file.model
        else {
            return Err(self.wrong_model("bellman"));
        };
        if dims.len() != self.tree.horizon() + 1 {
            return Err(CliError::Schema(format!(
                "expected {} stage dimensions, found {}",
                self.tree.horizon() + 1,
                dims.len()
            )));
        }
        let mut out = BTreeMap::new();
        for n in self.tree.nodes() {
            let f = costs
                .get(&n.name)
                .ok_or_else(|| CliError::Schema(format!("missing stage cost for node `{}`", n.name)))?;
            let prev = if n.stage == 0 { initial_state.len() } else { dims[n.stage - 1] };
            out.insert(n.id, func(f, prev + dims[n.stage])?);
        }
        if let Some(unknown) = costs.keys().find(|k| self.tree.find(k).is_none()) {
            return Err(CliError::Schema(format!("unknown node `{unknown}`")));
        }
        Ok(BellmanSpec {
            dims: dims.clone(),
            initial_state: nums(initial_state),
            costs: out,
            lower_bound: lower_bound(&self.tree, lb)?,
        })
    }

    pub fn liquid_market(&self) -> Result<LiquidMarket, CliError> {
        match &self.file.model {
            Model::LiquidMarket { prices: p } | Model::Hedge { prices: p } => Ok(LiquidMarket {
                tree: self.tree.clone(),
                prices: prices(&self.tree, p)?,
            }),
            _ => Err(self.wrong_model("liquid_market")),
        }
    }

    pub fn claim(&self) -> Result<BTreeMap<NodeId, Rational>, CliError> {
        let c = self
            .file
            .claim
            .as_ref()
            .ok_or_else(|| CliError::Schema("this command needs a `claim` section".into()))?;
        keyed(&self.tree, c, self.tree.leaves(), "claim", |n| Ok(n.0.clone()))
    }

    pub fn hedge(&self) -> Result<HedgeProblem, CliError> {
        let mkt = self.liquid_market()?;
        Ok(HedgeProblem {
            tree: mkt.tree,
            prices: mkt.prices,
            claim: self.claim()?,
        })
    }

    pub fn cone_market(&self) -> Result<ConeMarket, CliError> {
        let Model::ConeMarket { assets, c_cones, d_cones } = &self.file.model else {
            return Err(self.wrong_model("cone_market"));
        };
        let all: Vec<NodeId> = self.tree.nodes().iter().map(|n| n.id).collect();
        let c = keyed(&self.tree, c_cones, &all, "cone C", |c| cone(c, *assets))?;
        let mut d = keyed(&self.tree, d_cones, &[], "cone D", |c| cone(c, *assets))?;
        for &v in &all {
            d.entry(v).or_insert_with(|| ConeRep::whole(*assets));
        }
        Ok(ConeMarket {
            tree: self.tree.clone(),
            assets: *assets,
            c_cones: c,
            d_cones: d,
        })
    }

    pub fn utilities(&self, assets: usize) -> Result<UtilitySpec, CliError> {
        let u = self
            .file
            .utilities
            .as_ref()
            .ok_or_else(|| CliError::Schema("this command needs a `utilities` section".into()))?;
        match u {
            Utilities::CappedCash { cap } => {
                UtilitySpec::capped_cash(&self.tree, assets, &cap.0).map_err(|e| CliError::Schema(e.to_string()))
            }
            Utilities::Explicit {
                neg_utility,
                upper_bound,
            } => {
                let all: Vec<NodeId> = self.tree.nodes().iter().map(|n| n.id).collect();
                Ok(UtilitySpec {
                    neg_utility: keyed(&self.tree, neg_utility, &all, "utility", |f| func(f, assets))?,
                    upper_bound: keyed(&self.tree, upper_bound, &all, "utility bound", |n| Ok(n.0.clone()))?,
                })
            }
        }
    }

    /// The perturbation `u`; absent nodes are zero.
    pub fn endowment(&self, assets: usize) -> Result<Endowment, CliError> {
        let Some(e) = &self.file.endowment else {
            return Ok(Endowment::new());
        };
        keyed(&self.tree, e, &[], "endowment", |v| {
            if v.len() != assets {
                return Err(CliError::Schema(format!("endowment vectors must have {assets} entries")));
            }
            Ok(nums(v))
        })
    }

    pub fn node(&self, name: &str) -> Result<NodeId, CliError> {
        node(&self.tree, name)
    }

    fn wrong_model(&self, expected: &str) -> CliError {
        CliError::Schema(format!(
            "this command needs a `{expected}` model, found `{}`",
            self.file.model.kind()
        ))
    }
}
