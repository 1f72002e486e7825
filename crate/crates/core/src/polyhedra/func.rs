//! Convex polyhedral functions `R^n → R ∪ {+∞}` stored by their epigraphs.
//!
//! The epigraph lives in `R^{n+1}` with the value `α` as the last coordinate.
//! Every inequality row has a nonpositive `α` coefficient and every equality
//! row a zero one, so the epigraph recedes along `+α`. Rows with `α`
//! coefficient zero describe the effective domain.

use num_traits::{One, Signed, Zero};

use super::dd::polyhedron_generators;
use super::fm::{eliminate_step, Prune};
use super::{Halfspace, LpOutcome, PolyError, Polyhedron};
use crate::rational::{dot, zeros, ExtReal, Rational};

/// Largest `n + 1` for which conjugation by vertex enumeration is attempted.
pub const DD_BUDGET: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct PolyFunc {
    dim: usize,
    epi: Polyhedron,
    infinite: bool,
}

/// Minimum of a function on a slice, with the chosen minimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceMin {
    pub value: ExtReal,
    pub point: Option<Vec<Rational>>,
}

fn alpha_down(dim: usize) -> Vec<Rational> {
    let mut r = zeros(dim + 1);
    r[dim] = -Rational::one();
    r
}

impl PolyFunc {
    /// Validates an epigraph and prunes it.
    pub fn from_epigraph(epi: Polyhedron) -> Result<PolyFunc, PolyError> {
        let n = epi
            .dim()
            .checked_sub(1)
            .ok_or(PolyError::NotAnEpigraph)?;
        if epi.ineqs().iter().any(|h| h.coeffs[n].is_positive())
            || epi.eqs().iter().any(|h| !h.coeffs[n].is_zero())
        {
            return Err(PolyError::NotAnEpigraph);
        }
        PolyFunc::finalize(n, epi.reduce(), None)
    }

    /// Assumes `epi` is already reduced (emptiness is then explicit).
    fn finalize(n: usize, epi: Polyhedron, source: Option<&Polyhedron>) -> Result<PolyFunc, PolyError> {
        if epi.is_trivially_empty() {
            return Ok(PolyFunc::infinite(n));
        }
        if !epi.ineqs().iter().any(|h| h.coeffs[n].is_negative()) {
            let ray = match source.map(|s| s.minimize(&unit(s.dim(), s.dim() - 1))) {
                Some(LpOutcome::Unbounded { ray, .. }) => ray,
                _ => alpha_down(n),
            };
            return Err(PolyError::UnboundedBelow { ray });
        }
        Ok(PolyFunc {
            dim: n,
            epi,
            infinite: false,
        })
    }

    /// The identically `+∞` function.
    pub fn infinite(dim: usize) -> PolyFunc {
        PolyFunc {
            dim,
            epi: Polyhedron::empty(dim + 1),
            infinite: true,
        }
    }

    pub fn zero(dim: usize) -> PolyFunc {
        PolyFunc::constant(dim, Rational::zero())
    }

    pub fn constant(dim: usize, c: Rational) -> PolyFunc {
        PolyFunc::affine(zeros(dim), c)
    }

    pub fn affine(a: Vec<Rational>, b: Rational) -> PolyFunc {
        let dim = a.len();
        let mut row = a;
        row.push(-Rational::one());
        PolyFunc {
            dim,
            epi: Polyhedron::new(dim + 1, vec![Halfspace::new(row, -b)], vec![]),
            infinite: false,
        }
    }

    /// `δ_D`: zero on `domain`, `+∞` elsewhere.
    pub fn indicator(domain: &Polyhedron) -> Result<PolyFunc, PolyError> {
        PolyFunc::max_affine(domain.dim(), &[(zeros(domain.dim()), Rational::zero())], domain)
    }

    /// `x ↦ max_i (a_i·x + b_i)` on `domain`, `+∞` outside.
    pub fn max_affine(
        dim: usize,
        pieces: &[(Vec<Rational>, Rational)],
        domain: &Polyhedron,
    ) -> Result<PolyFunc, PolyError> {
        if domain.dim() != dim {
            return Err(PolyError::DimensionMismatch {
                expected: dim,
                found: domain.dim(),
            });
        }
        let positions: Vec<usize> = (0..dim).collect();
        let mut epi = domain.embed(dim + 1, &positions);
        for (a, b) in pieces {
            if a.len() != dim {
                return Err(PolyError::DimensionMismatch {
                    expected: dim,
                    found: a.len(),
                });
            }
            let mut row = a.clone();
            row.push(-Rational::one());
            epi.add_ineq(Halfspace::new(row, -b));
        }
        PolyFunc::finalize(dim, epi.reduce(), None)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn epigraph(&self) -> &Polyhedron {
        &self.epi
    }

    pub fn is_infinite(&self) -> bool {
        self.infinite
    }

    /// Effective domain.
    pub fn domain(&self) -> Polyhedron {
        if self.infinite {
            return Polyhedron::empty(self.dim);
        }
        let n = self.dim;
        let strip = |h: &Halfspace| Halfspace::new(h.coeffs[..n].to_vec(), h.rhs.clone());
        Polyhedron::new(
            n,
            self.epi
                .ineqs()
                .iter()
                .filter(|h| h.coeffs[n].is_zero())
                .map(strip)
                .collect(),
            self.epi.eqs().iter().map(strip).collect(),
        )
    }

    /// Affine pieces `(a, b)` with `f = max(a·x + b)` on the domain.
    pub fn pieces(&self) -> Vec<(Vec<Rational>, Rational)> {
        let n = self.dim;
        self.epi
            .ineqs()
            .iter()
            .filter(|h| h.coeffs[n].is_negative())
            .map(|h| {
                let g = -&h.coeffs[n];
                (h.coeffs[..n].iter().map(|c| c / &g).collect(), -&h.rhs / &g)
            })
            .collect()
    }

    pub fn evaluate(&self, x: &[Rational]) -> Result<ExtReal, PolyError> {
        if x.len() != self.dim {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        if self.infinite {
            return Ok(ExtReal::PlusInfinity);
        }
        let n = self.dim;
        let part = |h: &Halfspace| dot(&h.coeffs[..n], x);
        if self.epi.eqs().iter().any(|h| part(h) != h.rhs) {
            return Ok(ExtReal::PlusInfinity);
        }
        let mut best: Option<Rational> = None;
        for h in self.epi.ineqs() {
            let g = &h.coeffs[n];
            let lhs = part(h);
            if g.is_zero() {
                if lhs > h.rhs {
                    return Ok(ExtReal::PlusInfinity);
                }
            } else {
                let v = (lhs - &h.rhs) / -g;
                if best.as_ref().map_or(true, |b| v > *b) {
                    best = Some(v);
                }
            }
        }
        best.map(ExtReal::Finite)
            .ok_or_else(|| PolyError::UnboundedBelow { ray: alpha_down(n) })
    }

    /// `p·f` for `p > 0`.
    pub fn scale(&self, p: &Rational) -> PolyFunc {
        assert!(p.is_positive(), "scale factor must be positive");
        if self.infinite {
            return self.clone();
        }
        let n = self.dim;
        let sc = |h: &Halfspace| {
            let mut c = h.coeffs.clone();
            c[n] = &c[n] / p;
            Halfspace::new(c, h.rhs.clone())
        };
        PolyFunc {
            dim: n,
            epi: Polyhedron::new(
                n + 1,
                self.epi.ineqs().iter().map(sc).collect(),
                self.epi.eqs().iter().map(sc).collect(),
            ),
            infinite: false,
        }
    }

    /// `x ↦ f(x) + c`.
    pub fn shift(&self, c: &Rational) -> PolyFunc {
        if self.infinite {
            return self.clone();
        }
        let n = self.dim;
        let sh = |h: &Halfspace| Halfspace::new(h.coeffs.clone(), &h.rhs + &h.coeffs[n] * c);
        PolyFunc {
            dim: n,
            epi: Polyhedron::from_parts_unchecked(
                n + 1,
                self.epi.ineqs().iter().map(sh).collect(),
                self.epi.eqs().to_vec(),
            ),
            infinite: false,
        }
    }

    /// `f + g`. An empty common domain yields the identically `+∞` function.
    pub fn sum(&self, other: &PolyFunc) -> Result<PolyFunc, PolyError> {
        if self.dim != other.dim {
            return Err(PolyError::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        if self.infinite || other.infinite {
            return Ok(PolyFunc::infinite(self.dim));
        }
        let n = self.dim;
        // Variables (x, α, β) with β ≥ g(x) and α − β ≥ f(x).
        let lift_f = |h: &Halfspace| {
            let mut c = h.coeffs.clone();
            c.push(-&h.coeffs[n]);
            Halfspace::new(c, h.rhs.clone())
        };
        let lift_g = |h: &Halfspace| {
            let mut c = h.coeffs[..n].to_vec();
            c.push(Rational::zero());
            c.push(h.coeffs[n].clone());
            Halfspace::new(c, h.rhs.clone())
        };
        let ineqs = self
            .epi
            .ineqs()
            .iter()
            .map(lift_f)
            .chain(other.epi.ineqs().iter().map(lift_g))
            .collect();
        let eqs = self
            .epi
            .eqs()
            .iter()
            .map(lift_f)
            .chain(other.epi.eqs().iter().map(lift_g))
            .collect();
        let lifted = Polyhedron::new(n + 2, ineqs, eqs);
        let (q, _) = eliminate_step(&lifted, n + 1, Prune::Full)?;
        let keep: Vec<usize> = (0..=n).collect();
        PolyFunc::finalize(n, q.select_columns(&keep), None)
    }

    /// `f ∘ embed`: the function on `R^new_dim` reading argument `k` from `positions[k]`.
    pub fn embed(&self, new_dim: usize, positions: &[usize]) -> PolyFunc {
        if self.infinite {
            return PolyFunc::infinite(new_dim);
        }
        let mut pos = positions.to_vec();
        pos.push(new_dim);
        PolyFunc {
            dim: new_dim,
            epi: self.epi.embed(new_dim + 1, &pos),
            infinite: false,
        }
    }

    /// `f + δ_D`.
    pub fn restrict(&self, domain: &Polyhedron) -> Result<PolyFunc, PolyError> {
        if self.infinite {
            return Ok(self.clone());
        }
        let positions: Vec<usize> = (0..self.dim).collect();
        let epi = self.epi.intersect(&domain.embed(self.dim + 1, &positions));
        PolyFunc::finalize(self.dim, epi.reduce(), None)
    }

    /// `y ↦ inf_{coords} f`, a function of the remaining coordinates (in order).
    pub fn partial_min(&self, coords: &[usize]) -> Result<PolyFunc, PolyError> {
        let n = self.dim;
        let keep: Vec<usize> = (0..=n).filter(|c| !coords.contains(c)).collect();
        if self.infinite {
            return Ok(PolyFunc::infinite(keep.len() - 1));
        }
        let mut q = self.epi.clone();
        for &c in coords {
            assert!(c < n, "cannot eliminate the value coordinate");
            q = eliminate_step(&q, c, Prune::Full)?.0;
        }
        PolyFunc::finalize(keep.len() - 1, q.select_columns(&keep), Some(&self.epi))
    }

    /// `f^∞`, the recession function, whose epigraph is the recession cone of `epi f`.
    pub fn recession(&self) -> Result<PolyFunc, PolyError> {
        if self.infinite {
            return Err(PolyError::ImproperInput);
        }
        PolyFunc::finalize(self.dim, self.epi.homogenized().reduce(), None)
    }

    /// `f^*(y) = sup_x (x·y − f(x))` by enumerating the generators of `epi f`.
    pub fn conjugate(&self) -> Result<PolyFunc, PolyError> {
        if self.infinite {
            return Err(PolyError::ImproperInput);
        }
        let n = self.dim;
        if n + 1 > DD_BUDGET {
            return Err(PolyError::DimensionBudgetExceeded {
                dim: n + 1,
                budget: DD_BUDGET,
            });
        }
        let g = polyhedron_generators(&self.epi);
        let mut ineqs = Vec::new();
        for v in &g.vertices {
            let mut c = v[..n].to_vec();
            c.push(-Rational::one());
            ineqs.push(Halfspace::new(c, v[n].clone()));
        }
        for r in &g.rays {
            let mut c = r[..n].to_vec();
            c.push(Rational::zero());
            ineqs.push(Halfspace::new(c, r[n].clone()));
        }
        let eqs = g
            .lines
            .iter()
            .map(|l| {
                let mut c = l[..n].to_vec();
                c.push(Rational::zero());
                Halfspace::new(c, l[n].clone())
            })
            .collect();
        PolyFunc::from_epigraph(Polyhedron::new(n + 1, ineqs, eqs))
    }

    /// `inf f`, or an `UnboundedBelow` error.
    pub fn infimum(&self) -> Result<ExtReal, PolyError> {
        if self.infinite {
            return Ok(ExtReal::PlusInfinity);
        }
        match self.epi.minimize(&unit(self.dim + 1, self.dim)) {
            LpOutcome::Optimal { value, .. } => Ok(ExtReal::Finite(value)),
            LpOutcome::Unbounded { ray, .. } => Err(PolyError::UnboundedBelow { ray }),
            LpOutcome::Infeasible => Ok(ExtReal::PlusInfinity),
        }
    }

    /// Minimizes `f(prefix, ·)` over the trailing coordinates, optionally restricted
    /// to the orthogonal complement of `span(orth)`. Among minimizers the
    /// lexicographically smallest one is returned, skipping coordinates that are
    /// unbounded below on the argmin set.
    pub fn argmin_slice(&self, prefix: &[Rational], orth: &[Vec<Rational>]) -> Result<SliceMin, PolyError> {
        let n = self.dim;
        assert!(prefix.len() <= n);
        let m = n - prefix.len();
        if self.infinite {
            return Ok(SliceMin {
                value: ExtReal::PlusInfinity,
                point: None,
            });
        }
        let mut slice = self.epi.fix_leading(prefix);
        for b in orth {
            let mut c = b.clone();
            c.push(Rational::zero());
            slice.add_eq(Halfspace::new(c, Rational::zero()));
        }
        let value = match slice.minimize(&unit(m + 1, m)) {
            LpOutcome::Infeasible => {
                return Ok(SliceMin {
                    value: ExtReal::PlusInfinity,
                    point: None,
                })
            }
            LpOutcome::Unbounded { ray, .. } => return Err(PolyError::UnboundedBelow { ray }),
            LpOutcome::Optimal { value, .. } => value,
        };
        slice.add_eq(Halfspace::new(unit(m + 1, m), value.clone()));
        for i in 0..m {
            if let LpOutcome::Optimal { value: v, .. } = slice.minimize(&unit(m + 1, i)) {
                slice.add_eq(Halfspace::new(unit(m + 1, i), v));
            }
        }
        let point = slice
            .feasible_point()
            .expect("argmin set is nonempty");
        Ok(SliceMin {
            value: ExtReal::Finite(value),
            point: Some(point[..m].to_vec()),
        })
    }

    /// `{x : f(x) ≤ 0}`.
    pub fn sublevel_zero(&self) -> Polyhedron {
        if self.infinite {
            return Polyhedron::empty(self.dim);
        }
        let fixed = |h: &Halfspace| Halfspace::new(h.coeffs[..self.dim].to_vec(), h.rhs.clone());
        Polyhedron::new(
            self.dim,
            self.epi.ineqs().iter().map(fixed).collect(),
            self.epi.eqs().iter().map(fixed).collect(),
        )
    }

    /// Equality as functions, decided by mutual epigraph inclusion.
    pub fn same_function(&self, other: &PolyFunc) -> bool {
        if self.dim != other.dim {
            return false;
        }
        match (self.infinite, other.infinite) {
            (true, true) => true,
            (false, false) => self.epi.same_set(&other.epi),
            _ => false,
        }
    }
}

pub(crate) fn unit(dim: usize, i: usize) -> Vec<Rational> {
    let mut v = zeros(dim);
    v[i] = Rational::one();
    v
}
