//! Exact polyhedral calculus in halfspace representation.
//!
//! A [`Polyhedron`] is `{w : a_i·w ≤ β_i, e_j·w = γ_j}`. Everything above it
//! (projection, convex polyhedral functions, cones, conjugates) is built on the
//! exact LP in [`lp`] and on Fourier–Motzkin elimination in [`fm`].

pub mod cone;
pub mod dd;
pub mod fm;
pub mod func;
pub mod lp;

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::rational::{dot, zeros, Rational};
pub use cone::{cone_lineality, project_orthogonal, ConeRep, Lineality};
pub use fm::{fm_eliminate, fm_row_cap};
pub use func::PolyFunc;
pub use lp::LpOutcome;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolyError {
    #[error("Fourier-Motzkin elimination exceeded the row cap of {cap} intermediate rows (set STOCHDP_FM_ROW_CAP to raise it)")]
    RowCapExceeded { cap: usize },
    #[error("function is unbounded below (value -inf) along direction {}", crate::rational::format_vector(.ray))]
    UnboundedBelow { ray: Vec<Rational> },
    #[error("operation requires a proper function but the input is identically +inf")]
    ImproperInput,
    #[error("epigraph does not recede in the +alpha direction")]
    NotAnEpigraph,
    #[error("dimension {dim} exceeds the double-description budget of {budget}")]
    DimensionBudgetExceeded { dim: usize, budget: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// One row `coeffs · w ≤ rhs` (or `= rhs` when stored as an equality).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Halfspace {
    pub coeffs: Vec<Rational>,
    pub rhs: Rational,
}

impl Halfspace {
    pub fn new(coeffs: Vec<Rational>, rhs: Rational) -> Self {
        Halfspace { coeffs, rhs }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    pub fn value_at(&self, w: &[Rational]) -> Rational {
        dot(&self.coeffs, w)
    }

    pub fn satisfied_by(&self, w: &[Rational]) -> bool {
        self.value_at(w) <= self.rhs
    }

    /// Scales by a positive factor so the coefficients are coprime integers.
    pub fn normalized(&self) -> Halfspace {
        if self.is_trivial() {
            return self.clone();
        }
        let lcm = self
            .coeffs
            .iter()
            .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        let ints: Vec<BigInt> = self
            .coeffs
            .iter()
            .map(|c| (c * Rational::from_integer(lcm.clone())).to_integer())
            .collect();
        let gcd = ints
            .iter()
            .filter(|v| !v.is_zero())
            .fold(BigInt::zero(), |acc, v| acc.gcd(v));
        let factor = Rational::new(lcm, gcd);
        Halfspace {
            coeffs: self.coeffs.iter().map(|c| c * &factor).collect(),
            rhs: &self.rhs * &factor,
        }
    }

    /// Normalized with the first nonzero coefficient positive (for equalities).
    pub fn normalized_eq(&self) -> Halfspace {
        let h = self.normalized();
        match h.coeffs.iter().find(|c| !c.is_zero()) {
            Some(c) if c.is_negative() => h.negated(),
            _ => h,
        }
    }

    pub fn negated(&self) -> Halfspace {
        Halfspace {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
            rhs: -&self.rhs,
        }
    }

    pub fn homogenized(&self) -> Halfspace {
        Halfspace {
            coeffs: self.coeffs.clone(),
            rhs: Rational::zero(),
        }
    }

    /// Re-indexes the coefficients into a space of dimension `new_dim`.
    pub fn embedded(&self, new_dim: usize, positions: &[usize]) -> Halfspace {
        let mut coeffs = zeros(new_dim);
        for (c, &p) in self.coeffs.iter().zip(positions) {
            coeffs[p] = c.clone();
        }
        Halfspace {
            coeffs,
            rhs: self.rhs.clone(),
        }
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.coeffs.len()).filter(|&i| !self.coeffs[i].is_zero()).collect()
    }
}

/// Convex polyhedron `{w ∈ R^dim : ineqs, eqs}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Polyhedron {
    dim: usize,
    ineqs: Vec<Halfspace>,
    eqs: Vec<Halfspace>,
}

impl Polyhedron {
    /// Builds a polyhedron, normalizing rows and dropping trivially satisfied ones.
    pub fn new(dim: usize, ineqs: Vec<Halfspace>, eqs: Vec<Halfspace>) -> Polyhedron {
        let mut p = Polyhedron {
            dim,
            ineqs: Vec::new(),
            eqs: Vec::new(),
        };
        for h in ineqs {
            p.add_ineq(h);
        }
        for h in eqs {
            p.add_eq(h);
        }
        p
    }

    pub fn universe(dim: usize) -> Polyhedron {
        Polyhedron {
            dim,
            ineqs: Vec::new(),
            eqs: Vec::new(),
        }
    }

    /// Canonical empty set: the single row `0 ≤ -1`.
    pub fn empty(dim: usize) -> Polyhedron {
        Polyhedron {
            dim,
            ineqs: vec![Halfspace::new(zeros(dim), -Rational::one())],
            eqs: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ineqs(&self) -> &[Halfspace] {
        &self.ineqs
    }

    pub fn eqs(&self) -> &[Halfspace] {
        &self.eqs
    }

    pub fn row_count(&self) -> usize {
        self.ineqs.len() + self.eqs.len()
    }

    pub fn add_ineq(&mut self, h: Halfspace) {
        assert_eq!(h.dim(), self.dim, "row dimension");
        if self.is_trivially_empty() {
            return;
        }
        if h.is_trivial() {
            if h.rhs.is_negative() {
                *self = Polyhedron::empty(self.dim);
            }
            return;
        }
        self.ineqs.push(h.normalized());
    }

    pub fn add_eq(&mut self, h: Halfspace) {
        assert_eq!(h.dim(), self.dim, "row dimension");
        if self.is_trivially_empty() {
            return;
        }
        if h.is_trivial() {
            if !h.rhs.is_zero() {
                *self = Polyhedron::empty(self.dim);
            }
            return;
        }
        self.eqs.push(h.normalized_eq());
    }

    pub fn is_trivially_empty(&self) -> bool {
        self.ineqs
            .iter()
            .any(|h| h.is_trivial() && h.rhs.is_negative())
    }

    pub fn contains_point(&self, w: &[Rational]) -> bool {
        self.ineqs.iter().all(|h| h.satisfied_by(w))
            && self.eqs.iter().all(|h| h.value_at(w) == h.rhs)
    }

    pub fn maximize(&self, objective: &[Rational]) -> LpOutcome {
        let ineqs: Vec<&Halfspace> = self.ineqs.iter().collect();
        let eqs: Vec<&Halfspace> = self.eqs.iter().collect();
        lp::maximize(self.dim, objective, &ineqs, &eqs)
    }

    pub fn minimize(&self, objective: &[Rational]) -> LpOutcome {
        let ineqs: Vec<&Halfspace> = self.ineqs.iter().collect();
        let eqs: Vec<&Halfspace> = self.eqs.iter().collect();
        lp::minimize(self.dim, objective, &ineqs, &eqs)
    }

    pub fn feasible_point(&self) -> Option<Vec<Rational>> {
        if self.is_trivially_empty() {
            return None;
        }
        self.maximize(&zeros(self.dim)).point().map(<[Rational]>::to_vec)
    }

    pub fn is_empty(&self) -> bool {
        self.feasible_point().is_none()
    }

    /// Removes duplicate, dominated and LP-redundant rows. Returns the canonical
    /// empty polyhedron when infeasible.
    pub fn reduce(&self) -> Polyhedron {
        if self.is_trivially_empty() {
            return Polyhedron::empty(self.dim);
        }
        let eqs = match independent_equalities(&self.eqs) {
            Some(e) => e,
            None => return Polyhedron::empty(self.dim),
        };
        let ineqs = dominance_filter(&self.ineqs);
        if ineqs.is_empty() {
            return Polyhedron {
                dim: self.dim,
                ineqs,
                eqs,
            };
        }
        let eq_refs: Vec<&Halfspace> = eqs.iter().collect();
        {
            let all: Vec<&Halfspace> = ineqs.iter().collect();
            if lp::maximize(self.dim, &zeros(self.dim), &all, &eq_refs) == LpOutcome::Infeasible {
                return Polyhedron::empty(self.dim);
            }
        }
        let Some(alive) = drop_redundant(self.dim, &ineqs, &eqs, &vec![true; ineqs.len()]) else {
            return Polyhedron::empty(self.dim);
        };
        let ineqs = ineqs.into_iter().zip(alive).filter_map(|(h, a)| a.then_some(h)).collect();
        Polyhedron {
            dim: self.dim,
            ineqs,
            eqs,
        }
    }

    /// `other ⊆ self`, decided by one LP per row of `self`.
    pub fn includes(&self, other: &Polyhedron) -> bool {
        assert_eq!(self.dim, other.dim);
        if other.is_empty() {
            return true;
        }
        let bounded_by = |h: &Halfspace| match other.maximize(&h.coeffs) {
            LpOutcome::Optimal { value, .. } => value <= h.rhs,
            LpOutcome::Unbounded { .. } => false,
            LpOutcome::Infeasible => true,
        };
        self.ineqs.iter().all(bounded_by)
            && self
                .eqs
                .iter()
                .all(|h| bounded_by(h) && bounded_by(&h.negated()))
    }

    pub fn same_set(&self, other: &Polyhedron) -> bool {
        self.includes(other) && other.includes(self)
    }

    pub fn intersect(&self, other: &Polyhedron) -> Polyhedron {
        assert_eq!(self.dim, other.dim);
        let mut p = self.clone();
        for h in &other.ineqs {
            p.add_ineq(h.clone());
        }
        for h in &other.eqs {
            p.add_eq(h.clone());
        }
        p
    }

    /// Maps coordinate `k` to coordinate `positions[k]` of a `new_dim`-space.
    pub fn embed(&self, new_dim: usize, positions: &[usize]) -> Polyhedron {
        assert_eq!(positions.len(), self.dim);
        Polyhedron {
            dim: new_dim,
            ineqs: self.ineqs.iter().map(|h| h.embedded(new_dim, positions)).collect(),
            eqs: self.eqs.iter().map(|h| h.embedded(new_dim, positions)).collect(),
        }
    }

    /// Fixes the leading `values.len()` coordinates and drops them.
    pub fn fix_leading(&self, values: &[Rational]) -> Polyhedron {
        let k = values.len();
        assert!(k <= self.dim);
        let fix = |h: &Halfspace| {
            let shift = dot(&h.coeffs[..k], values);
            Halfspace::new(h.coeffs[k..].to_vec(), &h.rhs - shift)
        };
        Polyhedron::new(
            self.dim - k,
            self.ineqs.iter().map(fix).collect(),
            self.eqs.iter().map(fix).collect(),
        )
    }

    /// The recession cone `{w : A w ≤ 0, E w = 0}`, valid for nonempty polyhedra.
    pub fn homogenized(&self) -> Polyhedron {
        Polyhedron {
            dim: self.dim,
            ineqs: self.ineqs.iter().map(Halfspace::homogenized).collect(),
            eqs: self.eqs.iter().map(Halfspace::homogenized).collect(),
        }
    }

    /// Keeps only the listed coordinates, which must not appear in any other column.
    pub(crate) fn select_columns(&self, keep: &[usize]) -> Polyhedron {
        let pick = |h: &Halfspace| {
            debug_assert!(
                (0..self.dim).all(|c| keep.contains(&c) || h.coeffs[c].is_zero()),
                "dropped column still in use"
            );
            Halfspace::new(keep.iter().map(|&c| h.coeffs[c].clone()).collect(), h.rhs.clone())
        };
        Polyhedron::new(
            keep.len(),
            self.ineqs.iter().map(pick).collect(),
            self.eqs.iter().map(pick).collect(),
        )
    }

    pub(crate) fn from_parts_unchecked(
        dim: usize,
        ineqs: Vec<Halfspace>,
        eqs: Vec<Halfspace>,
    ) -> Polyhedron {
        Polyhedron { dim, ineqs, eqs }
    }
}

impl fmt::Display for Polyhedron {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = |h: &Halfspace, op: &str| {
            let cs: Vec<String> = h.coeffs.iter().map(|c| c.to_string()).collect();
            format!("[{}] {} {}", cs.join(", "), op, h.rhs)
        };
        writeln!(f, "polyhedron in R^{}", self.dim)?;
        for h in &self.ineqs {
            writeln!(f, "  {}", row(h, "<="))?;
        }
        for h in &self.eqs {
            writeln!(f, "  {}", row(h, "="))?;
        }
        Ok(())
    }
}

/// Removes the rows flagged in `test` that are implied by the other surviving rows.
/// Each LP sees only a working set, grown by the most violated rows until the
/// verdict is settled; confirmed facets join the working set. `None` if infeasible.
pub(crate) fn drop_redundant(
    dim: usize,
    rows: &[Halfspace],
    eqs: &[Halfspace],
    test: &[bool],
) -> Option<Vec<bool>> {
    const BATCH: usize = 4;
    let n = rows.len();
    let eq_refs: Vec<&Halfspace> = eqs.iter().collect();
    let mut alive = vec![true; n];
    let mut work = vec![false; n];
    for i in (0..n).filter(|&i| test[i]) {
        let target = &rows[i];
        let mut cap = target.clone();
        cap.rhs += Rational::one();
        loop {
            let active: Vec<&Halfspace> = (0..n)
                .filter(|&k| k != i && alive[k] && work[k])
                .map(|k| &rows[k])
                .chain(std::iter::once(&cap))
                .collect();
            match lp::maximize(dim, &target.coeffs, &active, &eq_refs) {
                LpOutcome::Infeasible => return None,
                LpOutcome::Optimal { value, .. } if value <= target.rhs => {
                    alive[i] = false;
                    break;
                }
                LpOutcome::Optimal { point, .. } => {
                    let mut violated: Vec<(Rational, usize)> = (0..n)
                        .filter(|&k| k != i && alive[k] && !work[k])
                        .filter_map(|k| {
                            let excess = rows[k].value_at(&point) - &rows[k].rhs;
                            excess.is_positive().then_some((excess, k))
                        })
                        .collect();
                    if violated.is_empty() {
                        work[i] = true;
                        break;
                    }
                    violated.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
                    for &(_, k) in violated.iter().take(BATCH) {
                        work[k] = true;
                    }
                }
                LpOutcome::Unbounded { .. } => {
                    work[i] = true;
                    break;
                }
            }
        }
    }
    Some(alive)
}

fn dominance_filter(rows: &[Halfspace]) -> Vec<Halfspace> {
    let mut best: BTreeMap<Vec<Rational>, Rational> = BTreeMap::new();
    let mut order: Vec<Vec<Rational>> = Vec::new();
    for h in rows {
        let n = h.normalized();
        match best.get_mut(&n.coeffs) {
            Some(rhs) => {
                if n.rhs < *rhs {
                    *rhs = n.rhs;
                }
            }
            None => {
                order.push(n.coeffs.clone());
                best.insert(n.coeffs, n.rhs);
            }
        }
    }
    order
        .into_iter()
        .map(|c| {
            let rhs = best[&c].clone();
            Halfspace::new(c, rhs)
        })
        .collect()
}

/// Drops linearly dependent equalities; `None` if the system is inconsistent.
fn independent_equalities(rows: &[Halfspace]) -> Option<Vec<Halfspace>> {
    let mut echelon: Vec<(usize, Halfspace)> = Vec::new();
    let mut kept = Vec::new();
    for h in rows {
        let mut r = h.clone();
        for (col, e) in &echelon {
            if !r.coeffs[*col].is_zero() {
                let f = &r.coeffs[*col] / &e.coeffs[*col];
                for k in 0..r.coeffs.len() {
                    let delta = &f * &e.coeffs[k];
                    r.coeffs[k] -= delta;
                }
                r.rhs -= &f * &e.rhs;
            }
        }
        match r.coeffs.iter().position(|c| !c.is_zero()) {
            Some(col) => {
                echelon.push((col, r));
                kept.push(h.normalized_eq());
            }
            None if r.rhs.is_zero() => {}
            None => return None,
        }
    }
    Some(kept)
}
