//! Exact recursion for convex quadratic integrands and variance-optimal hedging.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::linalg;
use crate::rational::{dot, int, zeros, Rational};
use crate::tree::{NodeId, Policy, ScenarioTree};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("quadratic form is not symmetric")]
    NotSymmetric,
    #[error("quadratic form is not positive semidefinite")]
    NotPsd,
    #[error("quadratic is unbounded below in the minimized block")]
    UnboundedBelow,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("hedging problem is missing data at node `{0}`")]
    MissingData(String),
}

/// `x ↦ xᵀQx + b·x + c` with `Q` symmetric positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadFunc {
    q: Vec<Vec<Rational>>,
    b: Vec<Rational>,
    c: Rational,
}

/// Pivots of a symmetric LDLᵀ factorization with diagonal pivoting.
pub fn ldl_pivots(q: &[Vec<Rational>]) -> Result<Vec<Rational>, QuadError> {
    let n = q.len();
    let mut a: Vec<Vec<Rational>> = q.to_vec();
    let mut alive: Vec<usize> = (0..n).collect();
    let mut pivots = Vec::new();
    while !alive.is_empty() {
        if alive.iter().any(|&i| a[i][i].is_negative()) {
            return Err(QuadError::NotPsd);
        }
        let Some(pos) = alive.iter().position(|&i| !a[i][i].is_zero()) else {
            let clean = alive.iter().all(|&i| alive.iter().all(|&j| a[i][j].is_zero()));
            return if clean { Ok(pivots) } else { Err(QuadError::NotPsd) };
        };
        let k = alive.remove(pos);
        let d = a[k][k].clone();
        for &i in &alive {
            let f = &a[i][k] / &d;
            if f.is_zero() {
                continue;
            }
            for &j in &alive {
                let delta = &f * &a[k][j];
                a[i][j] -= delta;
            }
        }
        pivots.push(d);
    }
    Ok(pivots)
}

impl QuadFunc {
    pub fn new(q: Vec<Vec<Rational>>, b: Vec<Rational>, c: Rational) -> Result<QuadFunc, QuadError> {
        let n = b.len();
        if q.len() != n || q.iter().any(|r| r.len() != n) {
            return Err(QuadError::DimensionMismatch {
                expected: n,
                found: q.len(),
            });
        }
        for i in 0..n {
            for j in 0..i {
                if q[i][j] != q[j][i] {
                    return Err(QuadError::NotSymmetric);
                }
            }
        }
        ldl_pivots(&q)?;
        Ok(QuadFunc { q, b, c })
    }

    /// `(a·x − u)²`.
    pub fn squared_residual(a: &[Rational], u: &Rational) -> QuadFunc {
        let q = a.iter().map(|ai| a.iter().map(|aj| ai * aj).collect()).collect();
        let b = a.iter().map(|ai| int(-2) * u * ai).collect();
        QuadFunc { q, b, c: u * u }
    }

    pub fn zero(n: usize) -> QuadFunc {
        QuadFunc {
            q: vec![zeros(n); n],
            b: zeros(n),
            c: Rational::zero(),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn q(&self) -> &[Vec<Rational>] {
        &self.q
    }

    pub fn b(&self) -> &[Rational] {
        &self.b
    }

    pub fn c(&self) -> &Rational {
        &self.c
    }

    pub fn evaluate(&self, x: &[Rational]) -> Rational {
        let qx = linalg::mat_vec(&self.q, x);
        dot(x, &qx) + dot(&self.b, x) + &self.c
    }

    pub fn scale(&self, p: &Rational) -> QuadFunc {
        QuadFunc {
            q: self.q.iter().map(|r| r.iter().map(|v| v * p).collect()).collect(),
            b: self.b.iter().map(|v| v * p).collect(),
            c: &self.c * p,
        }
    }

    pub fn add(&self, other: &QuadFunc) -> QuadFunc {
        QuadFunc {
            q: self
                .q
                .iter()
                .zip(&other.q)
                .map(|(r, s)| r.iter().zip(s).map(|(a, b)| a + b).collect())
                .collect(),
            b: self.b.iter().zip(&other.b).map(|(a, b)| a + b).collect(),
            c: &self.c + &other.c,
        }
    }
}

/// Result of minimizing over a trailing block `w` of `x = (y, w)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadMin {
    pub func: QuadFunc,
    /// Basis of the null space of the `w`-block, the flat directions.
    pub null_basis: Vec<Vec<Rational>>,
    /// Minimum-norm minimizer `w*(y) = lin·y + constant`.
    pub lin: Vec<Vec<Rational>>,
    pub constant: Vec<Rational>,
}

impl QuadMin {
    pub fn minimizer(&self, y: &[Rational]) -> Vec<Rational> {
        linalg::mat_vec(&self.lin, y)
            .into_iter()
            .zip(&self.constant)
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// `y ↦ min_w q(y, w)` over the last `m` coordinates, by a Schur complement.
pub fn quad_partial_min(q: &QuadFunc, m: usize) -> Result<QuadMin, QuadError> {
    let n = q.dim();
    let k = n - m;
    let a: Vec<Vec<Rational>> = (0..k).map(|i| q.q[i][..k].to_vec()).collect();
    let bmat: Vec<Vec<Rational>> = (0..k).map(|i| q.q[i][k..].to_vec()).collect();
    let cmat: Vec<Vec<Rational>> = (k..n).map(|i| q.q[i][k..].to_vec()).collect();
    let (b_y, b_w) = q.b.split_at(k);
    let null_basis = linalg::nullspace(&cmat, m);
    // Minimum-norm solution of C w = r, for r in the range of C.
    let pinv_solve = |r: &[Rational]| -> Option<Vec<Rational>> {
        let w = linalg::solve(&cmat, r, m)?;
        Some(linalg::project_out(&w, &null_basis))
    };
    let g = pinv_solve(b_w).ok_or(QuadError::UnboundedBelow)?;
    // Columns of W = C⁺Bᵀ, one per y coordinate.
    let mut wcols: Vec<Vec<Rational>> = Vec::with_capacity(k);
    for i in 0..k {
        wcols.push(pinv_solve(&bmat[i]).ok_or(QuadError::NotPsd)?);
    }
    let mut qn = a;
    for i in 0..k {
        for j in 0..k {
            qn[i][j] -= dot(&bmat[i], &wcols[j]);
        }
    }
    let bn: Vec<Rational> = (0..k).map(|i| &b_y[i] - dot(&bmat[i], &g)).collect();
    let cn = &q.c - dot(b_w, &g) / int(4);
    let lin: Vec<Vec<Rational>> = (0..m).map(|r| (0..k).map(|j| -&wcols[j][r]).collect()).collect();
    let constant: Vec<Rational> = g.iter().map(|v| -v / int(2)).collect();
    Ok(QuadMin {
        func: QuadFunc {
            q: qn,
            b: bn,
            c: cn,
        },
        null_basis,
        lin,
        constant,
    })
}

/// Probability-weighted average of the children's functions at every stage-`t` node.
pub fn quad_cond_exp(
    tree: &ScenarioTree,
    t: usize,
    child_funcs: &BTreeMap<NodeId, QuadFunc>,
) -> Result<BTreeMap<NodeId, QuadFunc>, QuadError> {
    let mut out = BTreeMap::new();
    for &v in tree.stage_nodes(t) {
        let mut acc: Option<QuadFunc> = None;
        for c in &tree.node(v).children {
            let f = child_funcs
                .get(c)
                .ok_or_else(|| QuadError::MissingData(tree.node(*c).name.clone()))?;
            let term = f.scale(&tree.node(*c).prob);
            acc = Some(match acc {
                None => term,
                Some(a) => a.add(&term),
            });
        }
        if let Some(a) = acc {
            out.insert(v, a);
        }
    }
    Ok(out)
}

/// Price process and claim for variance-optimal hedging.
#[derive(Clone, Debug, PartialEq)]
pub struct HedgeProblem {
    pub tree: ScenarioTree,
    /// `S_t` per node, all of the same length `d`.
    pub prices: BTreeMap<NodeId, Vec<Rational>>,
    /// Claim `u` per leaf.
    pub claim: BTreeMap<NodeId, Rational>,
}

impl HedgeProblem {
    pub fn assets(&self) -> usize {
        self.prices.get(&self.tree.root()).map_or(0, Vec::len)
    }

    /// Stage dimensions: `(V_0, z_0)` at the root, `z_t` up to `T − 1`, nothing at `T`.
    pub fn dims(&self) -> Vec<usize> {
        let d = self.assets();
        let t_max = self.tree.horizon();
        (0..=t_max)
            .map(|t| {
                let z = if t < t_max { d } else { 0 };
                if t == 0 {
                    1 + z
                } else {
                    z
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), QuadError> {
        let d = self.assets();
        for n in self.tree.nodes() {
            let s = self
                .prices
                .get(&n.id)
                .ok_or_else(|| QuadError::MissingData(n.name.clone()))?;
            if s.len() != d {
                return Err(QuadError::DimensionMismatch {
                    expected: d,
                    found: s.len(),
                });
            }
        }
        for &l in self.tree.leaves() {
            if !self.claim.contains_key(&l) {
                return Err(QuadError::MissingData(self.tree.node(l).name.clone()));
            }
        }
        Ok(())
    }

    /// Coefficients `a` with `V_0 + Σ_t z_t·ΔS_{t+1} = a·x` along the path to `leaf`.
    pub fn gain_coefficients(&self, leaf: NodeId) -> Vec<Rational> {
        let path = self.tree.path(leaf);
        let mut a = vec![int(1)];
        for t in 0..self.tree.horizon() {
            let s0 = &self.prices[&path[t]];
            let s1 = &self.prices[&path[t + 1]];
            a.extend(s1.iter().zip(s0).map(|(x, y)| x - y));
        }
        a
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HedgeSolution {
    pub value: Rational,
    pub initial_capital: Rational,
    pub policy: Policy,
    /// Flat directions `N_t` per node.
    pub null_bases: BTreeMap<NodeId, Vec<Vec<Rational>>>,
}

/// Minimizes `E (V_0 + Σ z_t·ΔS_{t+1} − u)²` over adapted `(V_0, z)`.
pub fn variance_hedge_solve(hp: &HedgeProblem) -> Result<HedgeSolution, QuadError> {
    hp.validate()?;
    let tree = &hp.tree;
    let dims = hp.dims();
    let mut node_fn: BTreeMap<NodeId, QuadFunc> = BTreeMap::new();
    for &l in tree.leaves() {
        node_fn.insert(l, QuadFunc::squared_residual(&hp.gain_coefficients(l), &hp.claim[&l]));
    }
    let mut mins: BTreeMap<NodeId, QuadMin> = BTreeMap::new();
    for t in (0..=tree.horizon()).rev() {
        if t < tree.horizon() {
            let tilde: BTreeMap<NodeId, QuadFunc> = tree
                .stage_nodes(t + 1)
                .iter()
                .map(|c| (*c, mins[c].func.clone()))
                .collect();
            node_fn.extend(quad_cond_exp(tree, t, &tilde)?);
        }
        for &v in tree.stage_nodes(t) {
            let m = quad_partial_min(&node_fn[&v], dims[t])?;
            mins.insert(v, m);
        }
    }
    let value = mins[&tree.root()].func.c.clone();
    let mut policy = Policy::new();
    for t in 0..=tree.horizon() {
        for &v in tree.stage_nodes(t) {
            let y = match tree.node(v).parent {
                Some(p) => policy.history(tree, p).expect("parent decided"),
                None => Vec::new(),
            };
            policy.set(v, mins[&v].minimizer(&y));
        }
    }
    let achieved: Rational = tree
        .leaves()
        .iter()
        .map(|&l| {
            let x = policy.history(tree, l).expect("complete policy");
            &tree.node(l).abs_prob * QuadFunc::squared_residual(&hp.gain_coefficients(l), &hp.claim[&l]).evaluate(&x)
        })
        .sum();
    assert_eq!(achieved, value, "recovered hedge must attain the recursion value");
    Ok(HedgeSolution {
        value,
        initial_capital: policy.get(tree.root()).expect("root decided")[0].clone(),
        null_bases: mins.into_iter().map(|(v, m)| (v, m.null_basis)).collect(),
        policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{frac, vec_of};

    fn qf(q: &[&[i64]], b: &[i64], c: i64) -> QuadFunc {
        QuadFunc::new(q.iter().map(|r| vec_of(r)).collect(), vec_of(b), int(c)).unwrap()
    }

    #[test]
    fn rejects_indefinite_forms() {
        let q = vec![vec_of(&[0, 1]), vec_of(&[1, 0])];
        assert_eq!(QuadFunc::new(q, vec_of(&[0, 0]), int(0)), Err(QuadError::NotPsd));
    }

    #[test]
    fn schur_examples() {
        // (x − y)² → 0
        let m = quad_partial_min(&qf(&[&[1, -1], &[-1, 1]], &[0, 0], 0), 1).unwrap();
        assert_eq!(m.func, QuadFunc::zero(1));
        // x² + y² → x²
        let m = quad_partial_min(&qf(&[&[1, 0], &[0, 1]], &[0, 0], 0), 1).unwrap();
        assert_eq!(m.func.q, vec![vec_of(&[1])]);
        // (x + 2y)² + y² → x²/5 with y* = −2x/5
        let m = quad_partial_min(&qf(&[&[1, 2], &[2, 5]], &[0, 0], 0), 1).unwrap();
        assert_eq!(m.func.q, vec![vec![frac(1, 5)]]);
        assert_eq!(m.minimizer(&vec_of(&[5])), vec_of(&[-2]));
    }

    #[test]
    fn linear_term_outside_range_is_unbounded() {
        let f = qf(&[&[1, 0], &[0, 0]], &[0, 1], 0);
        assert_eq!(quad_partial_min(&f, 1), Err(QuadError::UnboundedBelow));
    }

    #[test]
    fn cond_exp_of_two_parabolas() {
        let tree = ScenarioTree::uniform(&[vec![frac(1, 2), frac(1, 2)]]).unwrap();
        let kids: BTreeMap<NodeId, QuadFunc> = tree
            .leaves()
            .iter()
            .zip([qf(&[&[1]], &[0], 0), qf(&[&[1]], &[-4], 4)])
            .map(|(l, f)| (*l, f))
            .collect();
        let e = quad_cond_exp(&tree, 0, &kids).unwrap();
        assert_eq!(e[&tree.root()], qf(&[&[1]], &[-2], 2));
    }

    #[test]
    fn complete_binomial_replicates() {
        let tree = ScenarioTree::uniform(&[vec![frac(1, 2), frac(1, 2)]]).unwrap();
        let leaves = tree.leaves().to_vec();
        let prices = [(tree.root(), vec_of(&[4])), (leaves[0], vec_of(&[8])), (leaves[1], vec_of(&[2]))].into();
        let claim = [(leaves[0], int(3)), (leaves[1], int(0))].into();
        let sol = variance_hedge_solve(&HedgeProblem { tree: tree.clone(), prices, claim }).unwrap();
        assert_eq!(sol.value, int(0));
        assert_eq!(sol.initial_capital, int(1));
        assert_eq!(sol.policy.get(tree.root()).unwrap(), &[int(1), frac(1, 2)][..]);
    }
}
