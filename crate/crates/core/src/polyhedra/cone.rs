//! Polyhedral cones, their lineality spaces and orthogonal projection.

use num_traits::{One, Signed, Zero};

use super::dd::cone_generators;
use super::{Halfspace, LpOutcome, PolyError, Polyhedron};
use crate::linalg;
use crate::rational::{zeros, Rational};

/// A cone `{x : a_i·x ≤ 0, e_j·x = 0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeRep {
    poly: Polyhedron,
}

/// Lineality data of a cone. When the cone is not a subspace, `witness` is a
/// member outside the lineality space, scaled so its largest entry in absolute
/// value is 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Lineality {
    pub basis: Vec<Vec<Rational>>,
    pub is_linear: bool,
    pub witness: Option<Vec<Rational>>,
}

impl ConeRep {
    pub fn new(dim: usize, ineqs: Vec<Vec<Rational>>, eqs: Vec<Vec<Rational>>) -> ConeRep {
        let h = |c: Vec<Rational>| Halfspace::new(c, Rational::zero());
        ConeRep {
            poly: Polyhedron::new(dim, ineqs.into_iter().map(h).collect(), eqs.into_iter().map(h).collect()),
        }
    }

    /// Accepts a polyhedron whose rows all have zero right-hand side.
    pub fn from_polyhedron(p: &Polyhedron) -> Result<ConeRep, PolyError> {
        if p.ineqs().iter().chain(p.eqs()).any(|h| !h.rhs.is_zero()) {
            return Err(PolyError::NotAnEpigraph);
        }
        Ok(ConeRep { poly: p.clone() })
    }

    /// Recession cone of a nonempty polyhedron.
    pub fn recession_of(p: &Polyhedron) -> ConeRep {
        ConeRep {
            poly: p.homogenized(),
        }
    }

    pub fn whole(dim: usize) -> ConeRep {
        ConeRep::new(dim, vec![], vec![])
    }

    pub fn origin(dim: usize) -> ConeRep {
        ConeRep::new(dim, vec![], unit_rows(dim, Rational::one()))
    }

    pub fn nonneg_orthant(dim: usize) -> ConeRep {
        ConeRep::new(dim, unit_rows(dim, -Rational::one()), vec![])
    }

    pub fn nonpos_orthant(dim: usize) -> ConeRep {
        ConeRep::new(dim, unit_rows(dim, Rational::one()), vec![])
    }

    pub fn dim(&self) -> usize {
        self.poly.dim()
    }

    pub fn as_polyhedron(&self) -> &Polyhedron {
        &self.poly
    }

    pub fn contains(&self, x: &[Rational]) -> bool {
        self.poly.contains_point(x)
    }

    pub fn lineality(&self) -> Lineality {
        cone_lineality(self)
    }

    /// Polar cone `{y : y·x ≤ 0 ∀x ∈ C}` computed from the generators of `C`.
    pub fn polar(&self) -> ConeRep {
        let ineqs: Vec<Vec<Rational>> = self.poly.ineqs().iter().map(|h| h.coeffs.clone()).collect();
        let eqs: Vec<Vec<Rational>> = self.poly.eqs().iter().map(|h| h.coeffs.clone()).collect();
        let g = cone_generators(self.dim(), &ineqs, &eqs);
        ConeRep::new(self.dim(), g.rays, g.lines)
    }

    /// Dual cone `C^* = {y : y·x ≥ 0 ∀x ∈ C}`.
    pub fn dual(&self) -> ConeRep {
        let p = self.polar();
        let neg = |h: &Halfspace| h.coeffs.iter().map(|c| -c).collect();
        ConeRep::new(
            self.dim(),
            p.poly.ineqs().iter().map(neg).collect(),
            p.poly.eqs().iter().map(|h| h.coeffs.clone()).collect(),
        )
    }

    pub fn same_cone(&self, other: &ConeRep) -> bool {
        self.poly.same_set(&other.poly)
    }
}

fn unit_rows(dim: usize, sign: Rational) -> Vec<Vec<Rational>> {
    (0..dim)
        .map(|i| {
            let mut v = zeros(dim);
            v[i] = sign.clone();
            v
        })
        .collect()
}

/// Lineality space of `n` and whether `n` equals it.
pub fn cone_lineality(n: &ConeRep) -> Lineality {
    let dim = n.dim();
    let stacked: Vec<Vec<Rational>> = n
        .poly
        .ineqs()
        .iter()
        .chain(n.poly.eqs())
        .map(|h| h.coeffs.clone())
        .collect();
    let basis = linalg::nullspace(&stacked, dim);
    if n.poly.ineqs().is_empty() {
        return Lineality {
            basis,
            is_linear: true,
            witness: None,
        };
    }
    // A point of N is outside the lineality space iff some a_i·x < 0.
    let mut slack = zeros(dim);
    for h in n.poly.ineqs() {
        for (s, a) in slack.iter_mut().zip(&h.coeffs) {
            *s -= a;
        }
    }
    let mut p = n.poly.clone();
    p.add_ineq(Halfspace::new(slack.clone(), Rational::one()));
    match p.maximize(&slack) {
        LpOutcome::Optimal { value, point } if value.is_positive() => {
            let scale = point
                .iter()
                .map(|v| v.abs())
                .max()
                .expect("nonzero witness");
            Lineality {
                basis,
                is_linear: false,
                witness: Some(point.iter().map(|v| v / &scale).collect()),
            }
        }
        _ => Lineality {
            basis,
            is_linear: true,
            witness: None,
        },
    }
}

/// Orthogonal projection onto the complement of `span(basis)`.
pub fn project_orthogonal(x: &[Rational], basis: &[Vec<Rational>]) -> Vec<Rational> {
    linalg::project_out(x, basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{frac, vec_of};

    #[test]
    fn diagonal_is_linear() {
        let n = ConeRep::new(2, vec![], vec![vec_of(&[1, -1])]);
        let l = cone_lineality(&n);
        assert!(l.is_linear);
        assert_eq!(l.basis, vec![vec_of(&[1, 1])]);
    }

    #[test]
    fn halfline_is_not_linear() {
        let n = ConeRep::new(1, vec![vec_of(&[-1])], vec![]);
        let l = cone_lineality(&n);
        assert!(!l.is_linear);
        assert!(l.basis.is_empty());
        assert_eq!(l.witness, Some(vec_of(&[1])));
    }

    #[test]
    fn polar_of_orthant() {
        let p = ConeRep::nonneg_orthant(2).polar();
        assert!(p.same_cone(&ConeRep::nonpos_orthant(2)));
        assert!(ConeRep::whole(3).polar().same_cone(&ConeRep::origin(3)));
        assert!(ConeRep::nonneg_orthant(2).dual().same_cone(&ConeRep::nonneg_orthant(2)));
    }

    #[test]
    fn projection_example() {
        let p = project_orthogonal(&vec_of(&[2, 0]), &[vec_of(&[1, 1])]);
        assert_eq!(p, vec_of(&[1, -1]));
        let q = project_orthogonal(&vec_of(&[1, 0]), &[vec_of(&[1, 1])]);
        assert_eq!(q, vec![frac(1, 2), frac(-1, 2)]);
    }
}
