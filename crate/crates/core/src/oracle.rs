//! Brute-force ground truth. Every instance is written as one exact program over
//! all adapted variables and solved without the backward recursion.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};

use crate::dp::IntegrandSpec;
use crate::error::DpError;
use crate::linalg::{nullspace, solve};
use crate::polyhedra::fm::{eliminate_step, EliminationStep, Prune};
use crate::polyhedra::{Halfspace, LpOutcome, PolyError, Polyhedron};
use crate::quad::{HedgeProblem, QuadError, QuadFunc};
use crate::rational::{dot, int, zeros, ExtReal, Rational};
use crate::tree::{NodeId, Policy, ScenarioTree};

/// One block of variables per node, in node order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlatLayout {
    pub offsets: Vec<usize>,
    pub sizes: Vec<usize>,
    pub total: usize,
}

impl FlatLayout {
    pub fn new(tree: &ScenarioTree, dims: &[usize]) -> FlatLayout {
        let mut offsets = Vec::with_capacity(tree.len());
        let mut sizes = Vec::with_capacity(tree.len());
        let mut total = 0;
        for n in tree.nodes() {
            offsets.push(total);
            sizes.push(dims[n.stage]);
            total += dims[n.stage];
        }
        FlatLayout { offsets, sizes, total }
    }

    pub fn block(&self, v: NodeId) -> std::ops::Range<usize> {
        self.offsets[v.0]..self.offsets[v.0] + self.sizes[v.0]
    }

    /// Flat positions of `(x_0, …, x_T)` along the path to `leaf`.
    pub fn path(&self, tree: &ScenarioTree, leaf: NodeId) -> Vec<usize> {
        tree.path(leaf).into_iter().flat_map(|v| self.block(v)).collect()
    }

    pub fn policy(&self, tree: &ScenarioTree, w: &[Rational]) -> Policy {
        let mut p = Policy::new();
        for n in tree.nodes() {
            p.set(n.id, w[self.block(n.id)].to_vec());
        }
        p
    }

    pub fn flatten(&self, tree: &ScenarioTree, policy: &Policy) -> Option<Vec<Rational>> {
        let mut w = zeros(self.total);
        for n in tree.nodes() {
            let x = policy.get(n.id)?;
            if x.len() != self.sizes[n.id.0] {
                return None;
            }
            w[self.block(n.id)].clone_from_slice(x);
        }
        Some(w)
    }
}

/// The flat program `min Σ_leaves P(ω) h(x^T(ω), ω)` as a lifted epigraph.
///
/// Variables are the adapted decisions followed by one epigraph variable `α_v`
/// per node, tied by `Σ_c p_c α_c ≤ α_v` at internal nodes.
#[derive(Clone, Debug)]
pub struct FlatProgram {
    pub layout: FlatLayout,
    pub system: Polyhedron,
}

impl FlatProgram {
    pub fn build(tree: &ScenarioTree, spec: &IntegrandSpec) -> Result<FlatProgram, DpError> {
        spec.validate(tree)?;
        let layout = FlatLayout::new(tree, &spec.dims);
        let n = layout.total + tree.len();
        let alpha = |v: NodeId| layout.total + v.0;
        let mut system = Polyhedron::universe(n);
        for &l in tree.leaves() {
            let f = &spec.leaf_funcs[&l];
            if f.is_infinite() {
                return Err(DpError::Infeasible);
            }
            let mut pos = layout.path(tree, l);
            pos.push(alpha(l));
            system = system.intersect(&f.epigraph().embed(n, &pos));
        }
        for node in tree.nodes() {
            if node.children.is_empty() {
                continue;
            }
            let mut row = zeros(n);
            for &c in &node.children {
                row[alpha(c)] = tree.node(c).prob.clone();
            }
            row[alpha(node.id)] = int(-1);
            system.add_ineq(Halfspace::new(row, Rational::zero()));
        }
        Ok(FlatProgram { layout, system })
    }

    fn root_alpha(&self) -> usize {
        self.layout.total
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlatSolution {
    pub value: Rational,
    pub minimizer: Policy,
}

/// Solves the flat program by eliminating every variable except the root value.
pub fn flatten_solve(tree: &ScenarioTree, spec: &IntegrandSpec) -> Result<FlatSolution, DpError> {
    let prog = FlatProgram::build(tree, spec)?;
    let layout = &prog.layout;
    let alpha = |v: NodeId| layout.total + v.0;

    let mut order = Vec::new();
    for t in (0..=tree.horizon()).rev() {
        for &v in tree.stage_nodes(t) {
            order.extend(tree.node(v).children.iter().map(|&c| alpha(c)));
            order.extend(layout.block(v));
        }
    }

    let mut q = prog.system.clone();
    let mut steps: Vec<EliminationStep> = Vec::with_capacity(order.len());
    for var in order {
        let (next, step) = eliminate_step(&q, var, Prune::Local)?;
        q = next;
        steps.push(step);
        if q.is_trivially_empty() {
            return Err(DpError::Infeasible);
        }
    }

    let a = prog.root_alpha();
    let mut lower: Option<Rational> = None;
    let mut upper: Option<Rational> = None;
    for h in q.ineqs() {
        let c = &h.coeffs[a];
        if c.is_zero() {
            if h.rhs.is_negative() {
                return Err(DpError::Infeasible);
            }
            continue;
        }
        let b = &h.rhs / c;
        if c.is_negative() {
            lower = Some(lower.map_or(b.clone(), |l| l.max(b)));
        } else {
            upper = Some(upper.map_or(b.clone(), |u| u.min(b)));
        }
    }
    for h in q.eqs() {
        let c = &h.coeffs[a];
        if c.is_zero() {
            if !h.rhs.is_zero() {
                return Err(DpError::Infeasible);
            }
            continue;
        }
        let b = &h.rhs / c;
        lower = Some(lower.map_or(b.clone(), |l| l.max(b.clone())));
        upper = Some(upper.map_or(b.clone(), |u| u.min(b)));
    }
    let value = match lower {
        Some(v) => v,
        None => {
            let mut obj = zeros(prog.system.dim());
            obj[a] = int(1);
            let ray = match prog.system.minimize(&obj) {
                LpOutcome::Unbounded { ray, .. } => ray[..layout.total].to_vec(),
                _ => Vec::new(),
            };
            return Err(DpError::UnboundedBelow {
                node: tree.node(tree.root()).name.clone(),
                ray,
            });
        }
    };
    if upper.is_some_and(|u| u < value) {
        return Err(DpError::Infeasible);
    }

    let mut w = zeros(prog.system.dim());
    w[a] = value.clone();
    for step in steps.iter().rev() {
        w[step.var] = step.choose_value(&w);
    }
    let minimizer = layout.policy(tree, &w);
    match flat_objective(tree, spec, &minimizer)? {
        ExtReal::Finite(v) if v == value => Ok(FlatSolution { value, minimizer }),
        other => Err(DpError::Spec(format!(
            "flat minimizer attains {other} instead of {value}"
        ))),
    }
}

/// `Σ_leaves P(ω) h(x^T(ω), ω)` for an adapted decision process.
pub fn flat_objective(tree: &ScenarioTree, spec: &IntegrandSpec, policy: &Policy) -> Result<ExtReal, DpError> {
    let layout = FlatLayout::new(tree, &spec.dims);
    let w = layout
        .flatten(tree, policy)
        .ok_or_else(|| DpError::Spec("decision process does not match the stage dimensions".into()))?;
    let mut total = ExtReal::zero();
    for &l in tree.leaves() {
        let x: Vec<Rational> = layout.path(tree, l).into_iter().map(|i| w[i].clone()).collect();
        total = total + spec.leaf_funcs[&l].evaluate(&x)?.scale(&tree.node(l).abs_prob);
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LeastSquaresSolution {
    pub value: Rational,
    pub minimizer: Policy,
    pub objective: QuadFunc,
}

/// `E (V_0 + Σ z_t·ΔS_{t+1} − u)²` over all adapted `(V_0, z)` through the normal
/// equations, completed to the minimum-norm solution on singular systems.
pub fn least_squares_oracle(hp: &HedgeProblem) -> Result<LeastSquaresSolution, QuadError> {
    hp.validate()?;
    let tree = &hp.tree;
    let t_max = tree.horizon();
    let d = hp.prices[&tree.root()].len();
    let dims: Vec<usize> = (0..=t_max)
        .map(|t| {
            let z = if t < t_max { d } else { 0 };
            if t == 0 {
                z + 1
            } else {
                z
            }
        })
        .collect();
    let layout = FlatLayout::new(tree, &dims);
    let n = layout.total;

    let mut objective = QuadFunc::zero(n);
    for &l in tree.leaves() {
        let path = tree.path(l);
        let mut a = zeros(n);
        a[layout.offsets[0]] = int(1);
        for t in 0..t_max {
            let (v, c) = (path[t], path[t + 1]);
            for k in 0..d {
                let off = layout.offsets[v.0] + usize::from(t == 0) + k;
                a[off] = &hp.prices[&c][k] - &hp.prices[&v][k];
            }
        }
        let term = QuadFunc::squared_residual(&a, &hp.claim[&l]).scale(&tree.node(l).abs_prob);
        objective = objective.add(&term);
    }

    // ∇ = 2Qx + b = 0, plus orthogonality to ker Q.
    let mut rows: Vec<Vec<Rational>> = objective.q().iter().map(|r| r.iter().map(|v| v * int(2)).collect()).collect();
    let mut rhs: Vec<Rational> = objective.b().iter().map(|v| -v).collect();
    for k in nullspace(objective.q(), n) {
        rows.push(k);
        rhs.push(Rational::zero());
    }
    let x = solve(&rows, &rhs, n).ok_or(QuadError::UnboundedBelow)?;
    let value = objective.evaluate(&x);
    Ok(LeastSquaresSolution {
        value,
        minimizer: layout.policy(tree, &x),
        objective,
    })
}

pub type Endowment = BTreeMap<NodeId, Vec<Rational>>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PhiValue {
    Finite(Rational),
    PlusInfinity,
    MinusInfinity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhiPoint {
    pub u: Endowment,
    pub value: PhiValue,
    pub minimizer: Option<Policy>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FenchelCheck {
    /// `φ(u) ≥ ⟨u, y⟩ + g(y)` at every grid point.
    pub inequality: bool,
    /// Equality at `u = 0`, when zero is on the grid.
    pub equality_at_zero: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhiReport {
    pub radius: Rational,
    pub points: Vec<PhiPoint>,
    /// Every finite grid value came with a minimizer attaining it.
    pub attained: bool,
    pub midpoint_convex: bool,
    pub fenchel: Option<FenchelCheck>,
}

/// `Σ_v P(v) u_v·y_v`.
pub fn pairing(tree: &ScenarioTree, u: &Endowment, y: &Policy) -> Rational {
    let mut s = Rational::zero();
    for n in tree.nodes() {
        if let (Some(a), Some(b)) = (u.get(&n.id), y.get(n.id)) {
            s += &n.abs_prob * dot(a, b);
        }
    }
    s
}

/// `s·r·e_k` at `node` for `s ∈ {−1, −1/2, 0, 1/2, 1}`.
pub fn line_grid(node: NodeId, dim: usize, k: usize, radius: &Rational) -> Vec<Endowment> {
    (-2..=2)
        .map(|s| {
            let mut v = zeros(dim);
            v[k] = radius * Rational::new(s.into(), 2.into());
            [(node, v)].into()
        })
        .collect()
}

/// Largest absolute value among the given data, at least one.
pub fn data_radius<'a>(values: impl IntoIterator<Item = &'a Rational>) -> Rational {
    values.into_iter().map(|v| v.abs()).fold(int(1), |a, b| a.max(b))
}

fn midpoint(a: &Endowment, b: &Endowment) -> Endowment {
    let half = Rational::new(1.into(), 2.into());
    let mut out = Endowment::new();
    for key in a.keys().chain(b.keys()) {
        let len = a.get(key).or(b.get(key)).map_or(0, Vec::len);
        let za = zeros(len);
        let va = a.get(key).unwrap_or(&za);
        let vb = b.get(key).unwrap_or(&za);
        out.insert(*key, va.iter().zip(vb).map(|(x, y)| (x + y) * &half).collect());
    }
    out
}

fn is_zero(u: &Endowment) -> bool {
    u.values().all(|v| v.iter().all(Zero::is_zero))
}

fn phi_at(
    tree: &ScenarioTree,
    build: &dyn Fn(&Endowment) -> Result<IntegrandSpec, DpError>,
    u: &Endowment,
) -> Result<PhiPoint, DpError> {
    let spec = match build(u) {
        Ok(s) => s,
        Err(DpError::Poly(PolyError::UnboundedBelow { .. })) => {
            return Ok(PhiPoint {
                u: u.clone(),
                value: PhiValue::MinusInfinity,
                minimizer: None,
            })
        }
        Err(e) => return Err(e),
    };
    let (value, minimizer) = match flatten_solve(tree, &spec) {
        Ok(s) => (PhiValue::Finite(s.value), Some(s.minimizer)),
        Err(DpError::Infeasible) => (PhiValue::PlusInfinity, None),
        Err(DpError::UnboundedBelow { .. }) => (PhiValue::MinusInfinity, None),
        Err(e) => return Err(e),
    };
    Ok(PhiPoint {
        u: u.clone(),
        value,
        minimizer,
    })
}

/// Samples `φ(u) = inf_x E f(x, u)` on `grid` and checks convexity and, given a dual
/// point `(y, g(y))`, the Fenchel inequality.
pub fn phi_probe(
    tree: &ScenarioTree,
    build: &dyn Fn(&Endowment) -> Result<IntegrandSpec, DpError>,
    grid: &[Endowment],
    radius: Rational,
    dual: Option<(&Policy, &Rational)>,
) -> Result<PhiReport, DpError> {
    let mut points = Vec::with_capacity(grid.len());
    for u in grid {
        points.push(phi_at(tree, build, u)?);
    }
    let attained = points.iter().all(|p| match (&p.value, &p.minimizer) {
        (PhiValue::Finite(v), Some(m)) => {
            let spec = build(&p.u);
            matches!(spec.map(|s| flat_objective(tree, &s, m)), Ok(Ok(ExtReal::Finite(ref w))) if w == v)
        }
        (PhiValue::Finite(_), None) => false,
        _ => true,
    });

    let mut midpoint_convex = true;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let (PhiValue::Finite(a), PhiValue::Finite(b)) = (&points[i].value, &points[j].value) else {
                continue;
            };
            let m = midpoint(&points[i].u, &points[j].u);
            let bound = (a + b) / int(2);
            let ok = match phi_at(tree, build, &m)?.value {
                PhiValue::Finite(v) => v <= bound,
                PhiValue::MinusInfinity => true,
                PhiValue::PlusInfinity => false,
            };
            midpoint_convex &= ok;
        }
    }

    let fenchel = dual.map(|(y, g)| {
        let mut inequality = true;
        let mut equality_at_zero = None;
        for p in &points {
            let lower = pairing(tree, &p.u, y) + g;
            let holds = match &p.value {
                PhiValue::Finite(v) => *v >= lower,
                PhiValue::PlusInfinity => true,
                PhiValue::MinusInfinity => false,
            };
            inequality &= holds;
            if is_zero(&p.u) {
                equality_at_zero = Some(p.value == PhiValue::Finite(lower));
            }
        }
        FenchelCheck {
            inequality,
            equality_at_zero,
        }
    });

    Ok(PhiReport {
        radius,
        points,
        attained,
        midpoint_convex,
        fenchel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{backward_pass, forward_policy, LowerBound};
    use crate::polyhedra::PolyFunc;
    use crate::rational::{frac, vec_of};

    fn abs1() -> PolyFunc {
        PolyFunc::max_affine(1, &[(vec_of(&[1]), int(0)), (vec_of(&[-1]), int(0))], &Polyhedron::universe(1)).unwrap()
    }

    #[test]
    fn single_node_absolute_value() {
        let tree = ScenarioTree::uniform(&[]).unwrap();
        let spec = IntegrandSpec {
            dims: vec![1],
            leaf_funcs: [(tree.root(), abs1())].into(),
            lower_bound: LowerBound::Certificate([(tree.root(), int(0))].into()),
        };
        let s = flatten_solve(&tree, &spec).unwrap();
        assert_eq!(s.value, int(0));
        assert_eq!(s.minimizer.get(tree.root()).unwrap(), &vec_of(&[0])[..]);
    }

    fn binomial_superhedge() -> (ScenarioTree, IntegrandSpec) {
        // min V s.t. V + 4z ≥ 3, V − 2z ≥ 0.
        let tree = ScenarioTree::uniform(&[vec![frac(1, 2), frac(1, 2)]]).unwrap();
        let mut funcs = BTreeMap::new();
        for (&l, (ds, u)) in tree.leaves().iter().zip([(4, 3), (-2, 0)]) {
            let dom = Polyhedron::new(2, vec![Halfspace::new(vec![int(-1), int(-ds)], int(-u))], vec![]);
            funcs.insert(l, PolyFunc::max_affine(2, &[(vec_of(&[1, 0]), int(0))], &dom).unwrap());
        }
        let spec = IntegrandSpec {
            dims: vec![2, 0],
            leaf_funcs: funcs,
            lower_bound: LowerBound::CheckedDuringPass,
        };
        (tree, spec)
    }

    #[test]
    fn binomial_superhedge_costs_one() {
        let (tree, spec) = binomial_superhedge();
        let s = flatten_solve(&tree, &spec).unwrap();
        assert_eq!(s.value, int(1));
        assert_eq!(s.minimizer.get(tree.root()).unwrap(), &[int(1), frac(1, 2)][..]);
        let table = backward_pass(&tree, &spec).unwrap();
        assert_eq!(forward_policy(&tree, &table).unwrap().1, s.value);
    }

    #[test]
    fn unbounded_and_infeasible() {
        let tree = ScenarioTree::uniform(&[]).unwrap();
        let lin = PolyFunc::affine(vec_of(&[1]), int(0));
        let spec = IntegrandSpec {
            dims: vec![1],
            leaf_funcs: [(tree.root(), lin)].into(),
            lower_bound: LowerBound::CheckedDuringPass,
        };
        match flatten_solve(&tree, &spec) {
            Err(DpError::UnboundedBelow { ray, .. }) => assert!(ray[0].is_negative()),
            other => panic!("{other:?}"),
        }
        let empty = Polyhedron::new(1, vec![Halfspace::new(vec_of(&[1]), int(-1)), Halfspace::new(vec_of(&[-1]), int(0))], vec![]);
        let spec = IntegrandSpec {
            dims: vec![1],
            leaf_funcs: [(tree.root(), PolyFunc::indicator(&empty).unwrap())].into(),
            lower_bound: LowerBound::CheckedDuringPass,
        };
        assert!(matches!(flatten_solve(&tree, &spec), Err(DpError::Infeasible)));
    }

    #[test]
    fn least_squares_replicates_binomial_call() {
        let tree = ScenarioTree::uniform(&[vec![frac(1, 2), frac(1, 2)]]).unwrap();
        let l = tree.leaves().to_vec();
        let hp = HedgeProblem {
            prices: [(tree.root(), vec_of(&[4])), (l[0], vec_of(&[8])), (l[1], vec_of(&[2]))].into(),
            claim: [(l[0], int(3)), (l[1], int(0))].into(),
            tree,
        };
        let s = least_squares_oracle(&hp).unwrap();
        assert_eq!(s.value, int(0));
        assert_eq!(s.minimizer.get(hp.tree.root()).unwrap(), &[int(1), frac(1, 2)][..]);
    }

    #[test]
    fn zero_claim_has_zero_residual() {
        let tree = ScenarioTree::uniform(&[vec![frac(1, 3), frac(1, 3), frac(1, 3)]]).unwrap();
        let l = tree.leaves().to_vec();
        let hp = HedgeProblem {
            prices: [(tree.root(), vec_of(&[4, 4])), (l[0], vec_of(&[8, 8])), (l[1], vec_of(&[4, 4])), (l[2], vec_of(&[2, 2]))].into(),
            claim: l.iter().map(|&v| (v, int(0))).collect(),
            tree,
        };
        let s = least_squares_oracle(&hp).unwrap();
        assert_eq!(s.value, int(0));
        assert!(s.minimizer.get(hp.tree.root()).unwrap().iter().all(Zero::is_zero));
    }

    #[test]
    fn superhedge_phi_is_an_indicator() {
        // φ(u) = 0 iff a claim u at the up state is superhedged for free.
        let (tree, _) = binomial_superhedge();
        let l = tree.leaves().to_vec();
        let t2 = tree.clone();
        let build = move |u: &Endowment| -> Result<IntegrandSpec, DpError> {
            let mut funcs = BTreeMap::new();
            for (&leaf, ds) in t2.leaves().iter().zip([4, -2]) {
                let claim = u.get(&leaf).map_or(int(0), |v| v[0].clone());
                let dom = Polyhedron::new(1, vec![Halfspace::new(vec![int(-ds)], -claim)], vec![]);
                funcs.insert(leaf, PolyFunc::indicator(&dom)?);
            }
            Ok(IntegrandSpec {
                dims: vec![1, 0],
                leaf_funcs: funcs,
                lower_bound: LowerBound::CheckedDuringPass,
            })
        };
        let grid = line_grid(l[0], 1, 0, &int(2));
        let rep = phi_probe(&tree, &build, &grid, int(2), None).unwrap();
        let values: Vec<PhiValue> = rep.points.iter().map(|p| p.value.clone()).collect();
        assert_eq!(
            values,
            vec![
                PhiValue::Finite(int(0)),
                PhiValue::Finite(int(0)),
                PhiValue::Finite(int(0)),
                PhiValue::PlusInfinity,
                PhiValue::PlusInfinity
            ]
        );
        assert!(rep.attained && rep.midpoint_convex);
    }
}
