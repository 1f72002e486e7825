//! Seeded random instances at desk scale, for cross-checking the solvers.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dp::{BellmanSpec, IntegrandSpec, LowerBound};
use crate::finance::{ConeMarket, LiquidMarket, UtilitySpec};
use crate::oracle::Endowment;
use crate::polyhedra::{ConeRep, Halfspace, PolyFunc, Polyhedron};
use crate::quad::HedgeProblem;
use crate::rational::{frac, int, zeros, Rational};
use crate::tree::{NodeId, NodeSpec, ScenarioTree};

/// Leaf functions live on the whole path; keep them at most five-dimensional.
fn cap_path_dim(dims: &mut [usize]) {
    while dims.iter().sum::<usize>() > 5 {
        let t = dims.iter().rposition(|&d| d > 1).expect("horizon is at most four");
        dims[t] -= 1;
    }
}

pub struct InstanceGen {
    rng: ChaCha8Rng,
}

impl InstanceGen {
    pub fn new(seed: u64) -> InstanceGen {
        InstanceGen {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn int_in(&mut self, lo: i64, hi: i64) -> i64 {
        self.rng.gen_range(lo..=hi)
    }

    pub fn coin(&mut self, num: u32, den: u32) -> bool {
        self.rng.gen_ratio(num, den)
    }

    fn rat(&mut self, lo: i64, hi: i64, den: i64) -> Rational {
        frac(self.int_in(lo * den, hi * den), den)
    }

    /// Branching probabilities from random positive weights.
    fn probs(&mut self, k: usize) -> Vec<Rational> {
        let w: Vec<i64> = (0..k).map(|_| self.int_in(1, 4)).collect();
        let s: i64 = w.iter().sum();
        w.into_iter().map(|x| frac(x, s)).collect()
    }

    /// Tree of the given horizon; every internal node has between one and
    /// `max_branch` children.
    pub fn tree(&mut self, horizon: usize, max_branch: usize) -> ScenarioTree {
        let mut specs = vec![NodeSpec {
            name: "r".into(),
            stage: 0,
            parent: None,
            prob: int(1),
        }];
        let mut frontier = vec!["r".to_string()];
        for t in 1..=horizon {
            let mut next = Vec::new();
            for parent in &frontier {
                let k = self.int_in(1, max_branch as i64) as usize;
                for (j, p) in self.probs(k).into_iter().enumerate() {
                    let name = format!("{parent}.{j}");
                    specs.push(NodeSpec {
                        name: name.clone(),
                        stage: t,
                        parent: Some(parent.clone()),
                        prob: p,
                    });
                    next.push(name);
                }
            }
            frontier = next;
        }
        ScenarioTree::new(horizon, specs).expect("generated tree is valid")
    }

    /// `max` of a constant `m`, random affine pieces, and `±w(x_i − c_i)` on a random
    /// subset of coordinates, on an optional box. Returns the function and `m`.
    fn max_affine(&mut self, n: usize, abs_coords: &[usize]) -> (PolyFunc, Rational) {
        let m = int(self.int_in(-3, 0));
        let mut pieces = vec![(zeros(n), m.clone())];
        for _ in 0..self.int_in(0, 1) {
            let a = (0..n).map(|_| int(self.int_in(-2, 2))).collect();
            pieces.push((a, int(self.int_in(-3, 3))));
        }
        for &i in abs_coords {
            let w = int(self.int_in(1, 2));
            let c = self.rat(-2, 2, 2);
            let mut a = zeros(n);
            a[i] = w.clone();
            pieces.push((a.clone(), -&w * &c));
            a[i] = -&w;
            pieces.push((a, &w * &c));
        }
        let mut dom = Polyhedron::universe(n);
        if n > 0 && self.coin(1, 3) {
            let i = self.int_in(0, n as i64 - 1) as usize;
            let b = int(self.int_in(1, 3));
            let mut e = zeros(n);
            e[i] = int(1);
            dom.add_ineq(Halfspace::new(e.clone(), b.clone()));
            e[i] = int(-1);
            dom.add_ineq(Halfspace::new(e, b));
        }
        let f = PolyFunc::max_affine(n, &pieces, &dom).expect("bounded below by a constant piece");
        (f, m)
    }

    fn stage_dims(&mut self, horizon: usize, max_dim: usize) -> Vec<usize> {
        (0..=horizon).map(|_| self.int_in(1, max_dim as i64) as usize).collect()
    }

    /// Random polyhedral integrand with lower-bound certificates.
    pub fn integrand(&mut self, max_horizon: usize, max_dim: usize, max_branch: usize) -> (ScenarioTree, IntegrandSpec) {
        let horizon = self.int_in(0, max_horizon as i64) as usize;
        // Keep the leaf count near the desk scale for long horizons.
        let branch = if horizon == 3 { max_branch.min(2) } else { max_branch };
        let tree = self.tree(horizon, branch);
        let mut dims = self.stage_dims(horizon, max_dim);
        cap_path_dim(&mut dims);
        let n: usize = dims.iter().sum();
        let mut leaf_funcs = BTreeMap::new();
        let mut bounds = BTreeMap::new();
        for &l in tree.leaves() {
            let abs: Vec<usize> = (0..n).filter(|_| self.coin(4, 5)).collect();
            let (f, m) = self.max_affine(n, &abs);
            leaf_funcs.insert(l, f);
            bounds.insert(l, m);
        }
        let spec = IntegrandSpec {
            dims,
            leaf_funcs,
            lower_bound: LowerBound::Certificate(bounds),
        };
        (tree, spec)
    }

    fn prices(&mut self, tree: &ScenarioTree, d: usize, lo: i64, hi: i64) -> BTreeMap<NodeId, Vec<Rational>> {
        tree.nodes()
            .iter()
            .map(|n| (n.id, (0..d).map(|_| int(self.int_in(lo, hi))).collect()))
            .collect()
    }

    /// Liquid market with integer prices; arbitrage is possible.
    pub fn liquid_market(&mut self, max_horizon: usize, max_assets: usize) -> LiquidMarket {
        let horizon = self.int_in(1, max_horizon as i64) as usize;
        let tree = self.tree(horizon, 3);
        let d = self.int_in(1, max_assets as i64) as usize;
        let prices = self.prices(&tree, d, 1, 6);
        LiquidMarket { tree, prices }
    }

    /// Separable stage costs `k_v(x_{t−1}, x_t)` with per-node certificates.
    pub fn bellman(&mut self, max_horizon: usize, max_dim: usize, max_branch: usize) -> (ScenarioTree, BellmanSpec) {
        let horizon = self.int_in(0, max_horizon as i64) as usize;
        let branch = if horizon == 3 { max_branch.min(2) } else { max_branch };
        let tree = self.tree(horizon, branch);
        let mut dims = self.stage_dims(horizon, max_dim);
        cap_path_dim(&mut dims);
        let init_dim = self.int_in(1, max_dim as i64) as usize;
        let initial_state = (0..init_dim).map(|_| int(self.int_in(-2, 2))).collect();
        let mut costs = BTreeMap::new();
        let mut bounds = BTreeMap::new();
        for node in tree.nodes() {
            let prev = if node.stage == 0 { init_dim } else { dims[node.stage - 1] };
            let n = prev + dims[node.stage];
            let abs: Vec<usize> = (prev..n).collect();
            let (f, m) = self.max_affine(n, &abs);
            costs.insert(node.id, f);
            bounds.insert(node.id, m);
        }
        let spec = BellmanSpec {
            dims,
            initial_state,
            costs,
            lower_bound: LowerBound::Certificate(bounds),
        };
        (tree, spec)
    }

    /// Hedging problem; with two assets the second one is sometimes a multiple of the first.
    pub fn hedge(&mut self, max_horizon: usize, max_assets: usize) -> HedgeProblem {
        let horizon = self.int_in(0, max_horizon as i64) as usize;
        let branch = if horizon == 3 { 2 } else { 3 };
        let tree = self.tree(horizon, branch);
        let d = self.int_in(1, max_assets as i64) as usize;
        let mut prices = self.prices(&tree, d, 1, 9);
        if d == 2 && self.coin(1, 2) {
            let k = int(self.int_in(1, 2));
            for v in prices.values_mut() {
                v[1] = &v[0] * &k;
            }
        }
        let claim = tree.leaves().iter().map(|&l| (l, int(self.int_in(0, 6)))).collect();
        HedgeProblem { tree, prices, claim }
    }

    /// Two-asset conical market with bid-ask spreads, optional short-sale ban, cash-only
    /// capped utility, and a random nonnegative holding passed as a perturbation `u = −e`.
    pub fn cone_market(&mut self, max_horizon: usize) -> (ConeMarket, UtilitySpec, Endowment) {
        let horizon = self.int_in(1, max_horizon as i64) as usize;
        let branch = if horizon >= 2 { 2 } else { 3 };
        let tree = self.tree(horizon, branch);
        let no_short = self.coin(1, 3);
        let mut c_cones = BTreeMap::new();
        let mut d_cones = BTreeMap::new();
        for n in tree.nodes() {
            let bid = int(self.int_in(1, 5));
            let ask = &bid + self.rat(0, 1, 2);
            c_cones.insert(n.id, ConeRep::new(2, vec![vec![int(1), bid], vec![int(1), ask]], vec![]));
            let d = if no_short {
                ConeRep::new(2, vec![vec![int(0), int(-1)]], vec![])
            } else {
                ConeRep::whole(2)
            };
            d_cones.insert(n.id, d);
        }
        let cap = int(self.int_in(1, 3));
        let util = UtilitySpec::capped_cash(&tree, 2, &cap).expect("valid utility");
        let mut endowment = Endowment::new();
        endowment.insert(tree.root(), vec![int(-self.int_in(0, 2)), int(0)]);
        for n in tree.nodes().iter().skip(1) {
            if self.coin(1, 3) {
                endowment.insert(n.id, vec![int(0), int(-self.int_in(1, 2))]);
            }
        }
        let mkt = ConeMarket {
            tree,
            assets: 2,
            c_cones,
            d_cones,
        };
        (mkt, util, endowment)
    }
}
