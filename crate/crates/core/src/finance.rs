//! Market models: superhedging in a liquid market and optimal consumption in a
//! conical market, with the consumption dual over consistent price systems.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};

use crate::dp::{backward_pass, check_linearity_l, forward_policy, AdaptedLayout, IntegrandSpec, LinearityReport, LowerBound};
use crate::error::DpError;
use crate::polyhedra::fm_eliminate;
use crate::polyhedra::{cone_lineality, ConeRep, Halfspace, LpOutcome, PolyFunc, Polyhedron};
use crate::rational::{int, zeros, ExtReal, Rational};
use crate::tree::{NodeId, Policy, ScenarioTree};

/// Frictionless prices `S_t ∈ R^d` per node.
#[derive(Clone, Debug, PartialEq)]
pub struct LiquidMarket {
    pub tree: ScenarioTree,
    pub prices: BTreeMap<NodeId, Vec<Rational>>,
}

impl LiquidMarket {
    pub fn assets(&self) -> usize {
        self.prices.get(&self.tree.root()).map_or(0, Vec::len)
    }

    fn validate(&self) -> Result<(), DpError> {
        let d = self.assets();
        for n in self.tree.nodes() {
            match self.prices.get(&n.id) {
                Some(s) if s.len() == d => {}
                _ => return Err(DpError::Spec(format!("missing or malformed price at `{}`", n.name))),
            }
        }
        Ok(())
    }

    /// Trading dimensions `z_0, …, z_{T−1}`, with nothing at `T`.
    fn trade_dims(&self) -> Vec<usize> {
        let t_max = self.tree.horizon();
        (0..=t_max).map(|t| if t < t_max { self.assets() } else { 0 }).collect()
    }

    /// `(ΔS_1, …, ΔS_T)` along the path to `leaf`, so that gains are `coeffs · z`.
    fn increments(&self, leaf: NodeId) -> Vec<Rational> {
        let path = self.tree.path(leaf);
        (0..self.tree.horizon())
            .flat_map(|t| {
                let s0 = &self.prices[&path[t]];
                let s1 = &self.prices[&path[t + 1]];
                s1.iter().zip(s0).map(|(a, b)| a - b).collect::<Vec<_>>()
            })
            .collect()
    }
}

fn leaf_claim(tree: &ScenarioTree, claim: &BTreeMap<NodeId, Rational>) -> Result<(), DpError> {
    for &l in tree.leaves() {
        if !claim.contains_key(&l) {
            return Err(DpError::Spec(format!("no claim at leaf `{}`", tree.node(l).name)));
        }
    }
    Ok(())
}

/// Minimal initial capital `V_0` such that `V_0 + Σ z_t·ΔS_{t+1} ≥ u` on every leaf.
/// The decision at the root is `(V_0, z_0)`.
pub fn build_superhedge(mkt: &LiquidMarket, claim: &BTreeMap<NodeId, Rational>) -> Result<IntegrandSpec, DpError> {
    mkt.validate()?;
    leaf_claim(&mkt.tree, claim)?;
    let mut dims = mkt.trade_dims();
    dims[0] += 1;
    let n: usize = dims.iter().sum();
    let mut leaf_funcs = BTreeMap::new();
    for &l in mkt.tree.leaves() {
        let mut gain = vec![int(-1)];
        gain.extend(mkt.increments(l).into_iter().map(|v| -v));
        let dom = Polyhedron::new(n, vec![Halfspace::new(gain, -&claim[&l])], vec![]);
        let mut cost = zeros(n);
        cost[0] = int(1);
        leaf_funcs.insert(l, PolyFunc::max_affine(n, &[(cost, Rational::zero())], &dom)?);
    }
    Ok(IntegrandSpec {
        dims,
        leaf_funcs,
        lower_bound: LowerBound::CheckedDuringPass,
    })
}

/// `δ{Σ z_t·ΔS_{t+1} ≥ u}`: zero exactly when `u` is superhedged without cost.
pub fn build_superhedge_feasibility(
    mkt: &LiquidMarket,
    claim: &BTreeMap<NodeId, Rational>,
) -> Result<IntegrandSpec, DpError> {
    mkt.validate()?;
    leaf_claim(&mkt.tree, claim)?;
    let dims = mkt.trade_dims();
    let n: usize = dims.iter().sum();
    let mut leaf_funcs = BTreeMap::new();
    let mut bounds = BTreeMap::new();
    for &l in mkt.tree.leaves() {
        let gain: Vec<Rational> = mkt.increments(l).into_iter().map(|v| -v).collect();
        let dom = Polyhedron::new(n, vec![Halfspace::new(gain, -&claim[&l])], vec![]);
        leaf_funcs.insert(l, PolyFunc::indicator(&dom)?);
        bounds.insert(l, Rational::zero());
    }
    Ok(IntegrandSpec {
        dims,
        leaf_funcs,
        lower_bound: LowerBound::Certificate(bounds),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuperhedgeResult {
    pub cost: Rational,
    pub policy: Policy,
}

pub fn superhedge_cost(mkt: &LiquidMarket, claim: &BTreeMap<NodeId, Rational>) -> Result<SuperhedgeResult, DpError> {
    let spec = build_superhedge(mkt, claim)?;
    let table = backward_pass(&mkt.tree, &spec)?;
    let (policy, cost) = forward_policy(&mkt.tree, &table)?;
    Ok(SuperhedgeResult { cost, policy })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArbitrageReport {
    pub holds: bool,
    /// A strategy with nonnegative gains that are positive somewhere.
    pub witness: Option<Policy>,
    pub linearity: LinearityReport,
}

/// No-arbitrage holds iff `{z : Σ z_t·ΔS_{t+1} ≥ 0}` is a linear space.
pub fn no_arbitrage_check(mkt: &LiquidMarket) -> Result<ArbitrageReport, DpError> {
    let claim = mkt.tree.leaves().iter().map(|&l| (l, Rational::zero())).collect();
    let spec = build_superhedge_feasibility(mkt, &claim)?;
    let linearity = check_linearity_l(&mkt.tree, &spec)?;
    Ok(ArbitrageReport {
        holds: linearity.is_linear(),
        witness: linearity.witness.clone(),
        linearity,
    })
}

/// Gains `Σ z_t·ΔS_{t+1}` of a trading strategy at each leaf.
pub fn leaf_gains(mkt: &LiquidMarket, z: &Policy) -> BTreeMap<NodeId, Rational> {
    mkt.tree
        .leaves()
        .iter()
        .map(|&l| {
            let mut zs = Vec::new();
            for v in mkt.tree.path(l).into_iter().take(mkt.tree.horizon()) {
                zs.extend_from_slice(z.get(v).unwrap_or(&[]));
            }
            let inc = mkt.increments(l);
            let g = inc.iter().zip(&zs).map(|(a, b)| a * b).sum();
            (l, g)
        })
        .collect()
}

/// Conical market: available portfolios `C_t` and admissible holdings `D_t` per node.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeMarket {
    pub tree: ScenarioTree,
    pub assets: usize,
    pub c_cones: BTreeMap<NodeId, ConeRep>,
    /// Holdings cones; leaves are always treated as `{0}`.
    pub d_cones: BTreeMap<NodeId, ConeRep>,
}

impl ConeMarket {
    /// `C_t = {x : x·(1, s_t) ≤ 0}` with cash as asset 0 and `D_t = R^2`.
    pub fn frictionless(tree: ScenarioTree, stock: &BTreeMap<NodeId, Rational>) -> ConeMarket {
        let mut c_cones = BTreeMap::new();
        let mut d_cones = BTreeMap::new();
        for n in tree.nodes() {
            c_cones.insert(n.id, ConeRep::new(2, vec![vec![int(1), stock[&n.id].clone()]], vec![]));
            d_cones.insert(n.id, ConeRep::whole(2));
        }
        ConeMarket {
            tree,
            assets: 2,
            c_cones,
            d_cones,
        }
    }

    fn d_cone(&self, v: NodeId) -> ConeRep {
        if self.tree.node(v).children.is_empty() {
            ConeRep::origin(self.assets)
        } else {
            self.d_cones[&v].clone()
        }
    }

    fn validate(&self) -> Result<(), DpError> {
        for n in self.tree.nodes() {
            let c = self
                .c_cones
                .get(&n.id)
                .ok_or_else(|| DpError::Spec(format!("no cone C at `{}`", n.name)))?;
            if c.dim() != self.assets {
                return Err(DpError::Spec(format!("cone C at `{}` has the wrong dimension", n.name)));
            }
            if !n.children.is_empty() {
                let d = self
                    .d_cones
                    .get(&n.id)
                    .ok_or_else(|| DpError::Spec(format!("no cone D at `{}`", n.name)))?;
                if d.dim() != self.assets {
                    return Err(DpError::Spec(format!("cone D at `{}` has the wrong dimension", n.name)));
                }
            }
        }
        Ok(())
    }
}

/// Concave utilities stored as the convex functions `−U_v`, with `U_v ≤ m_v`.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilitySpec {
    pub neg_utility: BTreeMap<NodeId, PolyFunc>,
    pub upper_bound: BTreeMap<NodeId, Rational>,
}

impl UtilitySpec {
    /// `U_v(c) = min(c_0, cap)` on `{c_0 ≥ 0, c_k = 0 for k > 0}`: only cash is consumed.
    pub fn capped_cash(tree: &ScenarioTree, assets: usize, cap: &Rational) -> Result<UtilitySpec, DpError> {
        let mut dom_ineqs = Vec::new();
        let mut dom_eqs = Vec::new();
        let mut e0 = zeros(assets);
        e0[0] = int(-1);
        dom_ineqs.push(Halfspace::new(e0.clone(), Rational::zero()));
        for k in 1..assets {
            let mut e = zeros(assets);
            e[k] = int(1);
            dom_eqs.push(Halfspace::new(e, Rational::zero()));
        }
        let dom = Polyhedron::new(assets, dom_ineqs, dom_eqs);
        let f = PolyFunc::max_affine(assets, &[(e0, Rational::zero()), (zeros(assets), -cap)], &dom)?;
        Ok(UtilitySpec {
            neg_utility: tree.nodes().iter().map(|n| (n.id, f.clone())).collect(),
            upper_bound: tree.nodes().iter().map(|n| (n.id, cap.clone())).collect(),
        })
    }
}

/// Per node `(z, c)` layout offsets inside the stage block.
fn consumption_dims(tree: &ScenarioTree, d: usize) -> Vec<usize> {
    vec![2 * d; tree.horizon() + 1]
}

/// Integrand `−Σ_t U_t(c_t)` subject to `z_t − z_{t−1} + c_t + u_t ∈ C_t`, `z_t ∈ D_t`,
/// with `x_t = (z_t, c_t)` and `z_{−1} = 0`.
pub fn build_consumption(
    mkt: &ConeMarket,
    util: &UtilitySpec,
    endowment: &BTreeMap<NodeId, Vec<Rational>>,
) -> Result<IntegrandSpec, DpError> {
    mkt.validate()?;
    let d = mkt.assets;
    let tree = &mkt.tree;
    let dims = consumption_dims(tree, d);
    let n: usize = dims.iter().sum();
    let mut leaf_funcs = BTreeMap::new();
    let mut bounds = BTreeMap::new();
    for &l in tree.leaves() {
        let mut f = PolyFunc::zero(n);
        let mut cons = Polyhedron::universe(n);
        let mut bound = Rational::zero();
        for (t, v) in tree.path(l).into_iter().enumerate() {
            let z_at = |s: usize| 2 * d * s;
            let c_pos: Vec<usize> = (z_at(t) + d..z_at(t) + 2 * d).collect();
            let neg_u = util
                .neg_utility
                .get(&v)
                .ok_or_else(|| DpError::Spec(format!("no utility at `{}`", tree.node(v).name)))?;
            f = f.sum(&neg_u.embed(n, &c_pos))?;
            bound -= util
                .upper_bound
                .get(&v)
                .ok_or_else(|| DpError::Spec(format!("no utility bound at `{}`", tree.node(v).name)))?;
            let u = endowment.get(&v).cloned().unwrap_or_else(|| zeros(d));
            // a·(z_t − z_{t−1} + c_t) ≤ −a·u_t for each row a of C_t.
            let lift = |a: &[Rational]| {
                let mut row = zeros(n);
                for k in 0..d {
                    row[z_at(t) + k] += &a[k];
                    row[z_at(t) + d + k] += &a[k];
                    if t > 0 {
                        row[z_at(t - 1) + k] -= &a[k];
                    }
                }
                let rhs: Rational = -a.iter().zip(&u).map(|(x, y)| x * y).sum::<Rational>();
                Halfspace::new(row, rhs)
            };
            let cp = mkt.c_cones[&v].as_polyhedron();
            for h in cp.ineqs() {
                cons.add_ineq(lift(&h.coeffs));
            }
            for h in cp.eqs() {
                cons.add_eq(lift(&h.coeffs));
            }
            let z_pos: Vec<usize> = (z_at(t)..z_at(t) + d).collect();
            cons = cons.intersect(&mkt.d_cone(v).as_polyhedron().embed(n, &z_pos));
        }
        leaf_funcs.insert(l, f.restrict(&cons)?);
        bounds.insert(l, bound);
    }
    Ok(IntegrandSpec {
        dims,
        leaf_funcs,
        lower_bound: LowerBound::Certificate(bounds),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsumptionResult {
    /// `sup E Σ U_t(c_t)`, the negative of the minimized integrand.
    pub primal_value: Rational,
    pub policy: Policy,
}

pub fn solve_consumption(
    mkt: &ConeMarket,
    util: &UtilitySpec,
    endowment: &BTreeMap<NodeId, Vec<Rational>>,
) -> Result<ConsumptionResult, DpError> {
    let spec = build_consumption(mkt, util, endowment)?;
    let table = backward_pass(&mkt.tree, &spec)?;
    let (policy, v) = forward_policy(&mkt.tree, &table)?;
    Ok(ConsumptionResult {
        primal_value: -v,
        policy,
    })
}

/// Adds `Δz_v + c_v ∈ C_v` and `z_v ∈ D_v` for every node over a per-node block layout.
fn add_market_rows(
    mkt: &ConeMarket,
    p: &mut Polyhedron,
    z_of: &dyn Fn(NodeId) -> usize,
    c_of: &dyn Fn(NodeId) -> Option<usize>,
) {
    let d = mkt.assets;
    let n = p.dim();
    for node in mkt.tree.nodes() {
        let v = node.id;
        let lift = |a: &[Rational]| {
            let mut row = zeros(n);
            for k in 0..d {
                row[z_of(v) + k] += &a[k];
                if let Some(c) = c_of(v) {
                    row[c + k] += &a[k];
                }
                if let Some(par) = node.parent {
                    row[z_of(par) + k] -= &a[k];
                }
            }
            Halfspace::new(row, Rational::zero())
        };
        let cp = mkt.c_cones[&v].as_polyhedron();
        for h in cp.ineqs() {
            p.add_ineq(lift(&h.coeffs));
        }
        for h in cp.eqs() {
            p.add_eq(lift(&h.coeffs));
        }
        let z_pos: Vec<usize> = (z_of(v)..z_of(v) + d).collect();
        *p = p.intersect(&mkt.d_cone(v).as_polyhedron().embed(n, &z_pos));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalableArbitrageReport {
    pub holds: bool,
    /// Nonzero nonnegative consumption financed by the recession cones.
    pub witness: Option<Policy>,
}

/// Maximizes total consumption over `{c ≥ 0, c ≤ 1 : ∃z, Δz_t + c_t ∈ C_t, z_t ∈ D_t}`.
pub fn no_scalable_arbitrage_check(mkt: &ConeMarket) -> Result<ScalableArbitrageReport, DpError> {
    mkt.validate()?;
    let d = mkt.assets;
    let nodes = mkt.tree.len();
    let n = 2 * d * nodes;
    let z_of = |v: NodeId| 2 * d * v.0;
    let c_of = |v: NodeId| Some(2 * d * v.0 + d);
    let mut p = Polyhedron::universe(n);
    add_market_rows(mkt, &mut p, &z_of, &c_of);
    let mut objective = zeros(n);
    for v in 0..nodes {
        for k in 0..d {
            let i = 2 * d * v + d + k;
            let mut lo = zeros(n);
            lo[i] = int(-1);
            p.add_ineq(Halfspace::new(lo, Rational::zero()));
            let mut hi = zeros(n);
            hi[i] = int(1);
            p.add_ineq(Halfspace::new(hi, Rational::one()));
            objective[i] = int(1);
        }
    }
    match p.maximize(&objective) {
        LpOutcome::Optimal { value, point } if value.is_positive() => {
            let mut w = Policy::new();
            for node in mkt.tree.nodes() {
                let c = 2 * d * node.id.0 + d;
                w.set(node.id, point[c..c + d].to_vec());
            }
            Ok(ScalableArbitrageReport {
                holds: false,
                witness: Some(w),
            })
        }
        _ => Ok(ScalableArbitrageReport {
            holds: true,
            witness: None,
        }),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OcpReport {
    /// `{z : Δz_t ∈ C_t, z_t ∈ D_t}` is linear.
    pub z_set_linear: bool,
    /// `U_t^∞ = 0` on the nonnegative orthant and `−∞` elsewhere, per node.
    pub growth: BTreeMap<NodeId, bool>,
    /// `U_t ≤ m_t` verified per node.
    pub upper_bound: BTreeMap<NodeId, bool>,
    pub no_scalable_arbitrage: bool,
    /// Linearity of the consumption set financed with `Σ U_t^∞(c_t) ≥ 0`.
    pub consumption_set_linear: bool,
    /// Linearity of the cost-free direction cone of the consumption integrand.
    pub direction_cone_linear: bool,
}

impl OcpReport {
    pub fn growth_holds(&self) -> bool {
        self.growth.values().all(|&b| b)
    }

    pub fn bounds_hold(&self) -> bool {
        self.upper_bound.values().all(|&b| b)
    }

    /// Growth condition, no scalable arbitrage, linear z-set and bounds.
    pub fn theorem_route(&self) -> bool {
        self.growth_holds() && self.no_scalable_arbitrage && self.z_set_linear && self.bounds_hold()
    }

    /// The consumption-set route replacing growth and no scalable arbitrage.
    pub fn consumption_set_route(&self) -> bool {
        self.consumption_set_linear && self.z_set_linear && self.bounds_hold()
    }

    pub fn direction_cone_route(&self) -> bool {
        self.direction_cone_linear && self.bounds_hold()
    }

    pub fn passes(&self) -> bool {
        self.theorem_route() || self.consumption_set_route() || self.direction_cone_route()
    }
}

/// Evaluates the hypotheses under which primal and dual values coincide.
pub fn check_thm_ocp_conditions(mkt: &ConeMarket, util: &UtilitySpec) -> Result<OcpReport, DpError> {
    mkt.validate()?;
    let d = mkt.assets;
    let tree = &mkt.tree;
    let nodes = tree.len();

    let zn = d * nodes;
    let mut zp = Polyhedron::universe(zn);
    add_market_rows(mkt, &mut zp, &|v: NodeId| d * v.0, &|_| None);
    let z_set_linear = cone_lineality(&ConeRep::from_polyhedron(&zp)?).is_linear;

    let orthant = PolyFunc::indicator(ConeRep::nonneg_orthant(d).as_polyhedron())?;
    let mut growth = BTreeMap::new();
    let mut upper_bound = BTreeMap::new();
    for node in tree.nodes() {
        let f = util
            .neg_utility
            .get(&node.id)
            .ok_or_else(|| DpError::Spec(format!("no utility at `{}`", node.name)))?;
        growth.insert(node.id, f.recession()?.same_function(&orthant));
        let ok = match (f.infimum(), util.upper_bound.get(&node.id)) {
            (Ok(ExtReal::Finite(inf)), Some(m)) => inf >= -m,
            (Ok(ExtReal::PlusInfinity), Some(_)) => true,
            _ => false,
        };
        upper_bound.insert(node.id, ok);
    }

    let no_scalable_arbitrage = no_scalable_arbitrage_check(mkt)?.holds;

    // Variables per node: z (d), c (d), τ (1) with τ_v ≥ (−U_v)^∞(c_v) and leafwise Σ τ ≤ 0.
    let block = 2 * d + 1;
    let n = block * nodes;
    let z_of = |v: NodeId| block * v.0;
    let c_of = |v: NodeId| Some(block * v.0 + d);
    let mut p = Polyhedron::universe(n);
    add_market_rows(mkt, &mut p, &z_of, &c_of);
    for node in tree.nodes() {
        let rec = util.neg_utility[&node.id].recession()?;
        let mut pos: Vec<usize> = (block * node.id.0 + d..block * node.id.0 + 2 * d).collect();
        pos.push(block * node.id.0 + 2 * d);
        p = p.intersect(&rec.epigraph().embed(n, &pos));
    }
    for &l in tree.leaves() {
        let mut row = zeros(n);
        for v in tree.path(l) {
            row[block * v.0 + 2 * d] = int(1);
        }
        p.add_ineq(Halfspace::new(row, Rational::zero()));
    }
    let drop: Vec<usize> = (0..n).filter(|i| i % block < d || i % block == 2 * d).collect();
    let projected = fm_eliminate(&p, &drop)?;
    let consumption_set_linear = cone_lineality(&ConeRep::from_polyhedron(&projected)?).is_linear;

    let zero_u = BTreeMap::new();
    let spec = build_consumption(mkt, util, &zero_u)?;
    let direction_cone_linear = match check_linearity_l(tree, &spec) {
        Ok(r) => r.is_linear(),
        Err(DpError::Infeasible) => false,
        Err(e) => return Err(e),
    };

    Ok(OcpReport {
        z_set_linear,
        growth,
        upper_bound,
        no_scalable_arbitrage,
        consumption_set_linear,
        direction_cone_linear,
    })
}

/// Which increment of the dual process must lie in the polar of `D_t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DualIndex {
    /// `E_t y_{t+1} − y_t ∈ D_t^*` for `t < T`, as produced by the Lagrangian derivation.
    #[default]
    Derivation,
    /// `y_t − y_{t−1} ∈ D_t^*` with `y_{−1} = 0`, the constraint as displayed with the dual problem.
    Displayed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DualValue {
    MinusInfinity,
    Finite(Rational),
    PlusInfinity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub value: DualValue,
    /// An optimal consistent price system when the value is finite.
    pub y: Option<Policy>,
}

/// `U^*(y) = inf_c {c·y − U(c)} = −(−U)^*(−y)`: the rows of `{(y, τ) : τ ≤ U^*(y)}`.
fn concave_conjugate_rows(neg_u: &PolyFunc) -> Result<(Vec<Halfspace>, Vec<Halfspace>), DpError> {
    let g = neg_u.conjugate()?;
    let flip = |h: &Halfspace| Halfspace::new(h.coeffs.iter().map(|c| -c).collect(), h.rhs.clone());
    Ok((
        g.epigraph().ineqs().iter().map(flip).collect(),
        g.epigraph().eqs().iter().map(flip).collect(),
    ))
}

/// Maximizes `E Σ_t [U_t^*(y_t) + u_t·y_t]` over adapted consistent price systems.
pub fn solve_consumption_dual(
    mkt: &ConeMarket,
    util: &UtilitySpec,
    endowment: &BTreeMap<NodeId, Vec<Rational>>,
    index: DualIndex,
) -> Result<DualSolution, DpError> {
    mkt.validate()?;
    let d = mkt.assets;
    let tree = &mkt.tree;
    let block = d + 1;
    let n = block * tree.len();
    let y_of = |v: NodeId| block * v.0;
    let mut p = Polyhedron::universe(n);
    let mut objective = zeros(n);
    for node in tree.nodes() {
        let v = node.id;
        let neg_u = util
            .neg_utility
            .get(&v)
            .ok_or_else(|| DpError::Spec(format!("no utility at `{}`", node.name)))?;
        let (ineqs, eqs) = concave_conjugate_rows(neg_u)?;
        let pos: Vec<usize> = (y_of(v)..y_of(v) + block).collect();
        for h in ineqs {
            p.add_ineq(h.embedded(n, &pos));
        }
        for h in eqs {
            p.add_eq(h.embedded(n, &pos));
        }
        let y_pos: Vec<usize> = (y_of(v)..y_of(v) + d).collect();
        p = p.intersect(&mkt.c_cones[&v].polar().as_polyhedron().embed(n, &y_pos));

        // Rows of D_v^* applied to the relevant increment of y.
        let increment: Option<Vec<(NodeId, Rational)>> = match index {
            DualIndex::Derivation if !node.children.is_empty() => {
                let mut terms: Vec<(NodeId, Rational)> =
                    node.children.iter().map(|c| (*c, tree.node(*c).prob.clone())).collect();
                terms.push((v, int(-1)));
                Some(terms)
            }
            DualIndex::Derivation => None,
            DualIndex::Displayed => {
                let mut terms = vec![(v, int(1))];
                if let Some(par) = node.parent {
                    terms.push((par, int(-1)));
                }
                Some(terms)
            }
        };
        if let Some(terms) = increment {
            let dpol = mkt.d_cone(v).polar();
            let lift = |a: &[Rational]| {
                let mut row = zeros(n);
                for (w, coef) in &terms {
                    for k in 0..d {
                        row[y_of(*w) + k] += coef * &a[k];
                    }
                }
                Halfspace::new(row, Rational::zero())
            };
            for h in dpol.as_polyhedron().ineqs() {
                p.add_ineq(lift(&h.coeffs));
            }
            for h in dpol.as_polyhedron().eqs() {
                p.add_eq(lift(&h.coeffs));
            }
        }

        let pv = &node.abs_prob;
        objective[y_of(v) + d] = pv.clone();
        if let Some(u) = endowment.get(&v) {
            for k in 0..d {
                objective[y_of(v) + k] = pv * &u[k];
            }
        }
    }
    Ok(match p.maximize(&objective) {
        LpOutcome::Infeasible => DualSolution {
            value: DualValue::MinusInfinity,
            y: None,
        },
        LpOutcome::Unbounded { .. } => DualSolution {
            value: DualValue::PlusInfinity,
            y: None,
        },
        LpOutcome::Optimal { value, point } => {
            let mut y = Policy::new();
            for node in tree.nodes() {
                y.set(node.id, point[y_of(node.id)..y_of(node.id) + d].to_vec());
            }
            DualSolution {
                value: DualValue::Finite(value),
                y: Some(y),
            }
        }
    })
}

/// `E Σ_t U_t^*(y_t)` for a given adapted `y`, `−∞` outside the conjugate domains.
pub fn dual_objective(mkt: &ConeMarket, util: &UtilitySpec, y: &Policy) -> Result<DualValue, DpError> {
    let mut total = Rational::zero();
    for node in mkt.tree.nodes() {
        let g = util.neg_utility[&node.id].conjugate()?;
        let yv = y
            .get(node.id)
            .ok_or_else(|| DpError::Spec(format!("dual process missing at `{}`", node.name)))?;
        let neg: Vec<Rational> = yv.iter().map(|v| -v).collect();
        match g.evaluate(&neg)? {
            ExtReal::Finite(v) => total -= &node.abs_prob * v,
            ExtReal::PlusInfinity => return Ok(DualValue::MinusInfinity),
        }
    }
    Ok(DualValue::Finite(total))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualityReport {
    /// `None` when the primal problem is infeasible (value `−∞` for the maximization).
    pub primal_value: Option<Rational>,
    pub primal_policy: Option<Policy>,
    pub dual: DualSolution,
    /// `primal + dual ≤ 0`.
    pub weak_duality: bool,
    /// `primal + dual = 0`.
    pub zero_gap: bool,
}

/// Solves primal and dual and compares them.
pub fn duality_gap(
    mkt: &ConeMarket,
    util: &UtilitySpec,
    endowment: &BTreeMap<NodeId, Vec<Rational>>,
    index: DualIndex,
) -> Result<DualityReport, DpError> {
    let (primal_value, primal_policy) = match solve_consumption(mkt, util, endowment) {
        Ok(r) => (Some(r.primal_value), Some(r.policy)),
        Err(DpError::Infeasible) => (None, None),
        Err(e) => return Err(e),
    };
    let dual = solve_consumption_dual(mkt, util, endowment, index)?;
    let (weak_duality, zero_gap) = match (&primal_value, &dual.value) {
        (Some(p), DualValue::Finite(q)) => {
            let s = p + q;
            (!s.is_positive(), s.is_zero())
        }
        (Some(_), DualValue::MinusInfinity) => (true, false),
        (Some(_), DualValue::PlusInfinity) => (false, false),
        (None, DualValue::PlusInfinity) => (true, true),
        (None, _) => (true, false),
    };
    Ok(DualityReport {
        primal_value,
        primal_policy,
        dual,
        weak_duality,
        zero_gap,
    })
}

/// Adapted layout of the consumption integrand, for callers flattening it.
pub fn consumption_layout(mkt: &ConeMarket) -> AdaptedLayout {
    AdaptedLayout::new(&mkt.tree, &consumption_dims(&mkt.tree, mkt.assets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{frac, vec_of};

    fn binomial(up: Rational, down: Rational) -> LiquidMarket {
        let tree = ScenarioTree::uniform(&[vec![frac(1, 2), frac(1, 2)]]).unwrap();
        let l = tree.leaves().to_vec();
        let prices = [(tree.root(), vec_of(&[4])), (l[0], vec![up]), (l[1], vec![down])].into();
        LiquidMarket { tree, prices }
    }

    #[test]
    fn binomial_call_costs_one() {
        let mkt = binomial(int(8), int(2));
        let l = mkt.tree.leaves().to_vec();
        let claim = [(l[0], int(3)), (l[1], int(0))].into();
        let r = superhedge_cost(&mkt, &claim).unwrap();
        assert_eq!(r.cost, int(1));
        assert_eq!(r.policy.get(mkt.tree.root()).unwrap(), &[int(1), frac(1, 2)][..]);
    }

    #[test]
    fn arbitrage_is_detected_with_witness() {
        let mkt = binomial(int(5), frac(9, 2));
        match superhedge_cost(&mkt, &mkt.tree.leaves().iter().map(|&l| (l, int(0))).collect()) {
            Err(DpError::LinearityViolated { .. }) => {}
            other => panic!("expected violation, got {other:?}"),
        }
        let rep = no_arbitrage_check(&mkt).unwrap();
        assert!(!rep.holds);
        let w = rep.witness.unwrap();
        assert_eq!(w.get(mkt.tree.root()).unwrap(), &vec_of(&[1])[..]);
        let gains = leaf_gains(&mkt, &w);
        assert!(gains.values().all(|g| !g.is_negative()));
        assert!(gains.values().any(|g| g.is_positive()));
    }

    #[test]
    fn symmetric_market_has_no_arbitrage() {
        let rep = no_arbitrage_check(&binomial(int(5), int(3))).unwrap();
        assert!(rep.holds && rep.linearity.agree());
    }

    #[test]
    fn frictionless_consumption_has_zero_gap() {
        let tree = ScenarioTree::uniform(&[vec![frac(1, 2), frac(1, 2)]]).unwrap();
        let l = tree.leaves().to_vec();
        let stock = [(tree.root(), int(2)), (l[0], int(3)), (l[1], int(1))].into();
        let mkt = ConeMarket::frictionless(tree.clone(), &stock);
        let util = UtilitySpec::capped_cash(&tree, 2, &int(1)).unwrap();
        let endowment: BTreeMap<NodeId, Vec<Rational>> =
            [(tree.root(), vec_of(&[-1, 0])), (l[1], vec_of(&[0, -1]))].into();
        let ocp = check_thm_ocp_conditions(&mkt, &util).unwrap();
        assert!(ocp.passes());
        let rep = duality_gap(&mkt, &util, &endowment, DualIndex::Derivation).unwrap();
        assert!(rep.weak_duality);
        assert!(rep.zero_gap, "{rep:?}");
        assert_eq!(rep.primal_value, Some(frac(3, 2)));
    }

    #[test]
    fn free_consumption_is_scalable_arbitrage() {
        let tree = ScenarioTree::uniform(&[vec![int(1)]]).unwrap();
        let mkt = ConeMarket {
            c_cones: tree.nodes().iter().map(|n| (n.id, ConeRep::whole(1))).collect(),
            d_cones: tree.nodes().iter().map(|n| (n.id, ConeRep::whole(1))).collect(),
            tree,
            assets: 1,
        };
        let r = no_scalable_arbitrage_check(&mkt).unwrap();
        assert!(!r.holds);
        assert!(r.witness.is_some());
    }
}
