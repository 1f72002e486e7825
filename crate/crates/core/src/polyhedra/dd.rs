//! Double description: generators of `{x : A x ≤ 0, E x = 0}` and of polyhedra.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use super::Polyhedron;
use crate::rational::{dot, zeros, Rational};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConeGenerators {
    pub rays: Vec<Vec<Rational>>,
    pub lines: Vec<Vec<Rational>>,
}

/// `P = conv(vertices) + cone(rays) + span(lines)`. No vertices means `P` is empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Generators {
    pub vertices: Vec<Vec<Rational>>,
    pub rays: Vec<Vec<Rational>>,
    pub lines: Vec<Vec<Rational>>,
}

struct Ray {
    v: Vec<Rational>,
    zero: Vec<u64>,
}

fn bit_set(bits: &mut Vec<u64>, k: usize) {
    if bits.len() <= k / 64 {
        bits.resize(k / 64 + 1, 0);
    }
    bits[k / 64] |= 1 << (k % 64);
}

fn bits_and(a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(x, y)| x & y).collect()
}

fn bits_subset(a: &[u64], b: &[u64]) -> bool {
    a.iter()
        .enumerate()
        .all(|(i, x)| x & !b.get(i).copied().unwrap_or(0) == 0)
}

fn bits_count(a: &[u64]) -> usize {
    a.iter().map(|x| x.count_ones() as usize).sum()
}

/// Positive rescaling to coprime integers.
fn primitive(v: Vec<Rational>) -> Vec<Rational> {
    if v.iter().all(Zero::is_zero) {
        return v;
    }
    let lcm = v.iter().fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
    let ints: Vec<BigInt> = v
        .iter()
        .map(|c| (c * Rational::from_integer(lcm.clone())).to_integer())
        .collect();
    let g = ints.iter().fold(BigInt::zero(), |acc, x| acc.gcd(x));
    ints.into_iter()
        .map(|x| Rational::from_integer(x / &g))
        .collect()
}

fn combine(a: &Rational, x: &[Rational], b: &Rational, y: &[Rational]) -> Vec<Rational> {
    x.iter().zip(y).map(|(xi, yi)| a * xi + b * yi).collect()
}

/// Extreme rays and a lineality basis of the cone `{x : a·x ≤ 0 ∀a ∈ ineqs, e·x = 0 ∀e ∈ eqs}`.
pub fn cone_generators(dim: usize, ineqs: &[Vec<Rational>], eqs: &[Vec<Rational>]) -> ConeGenerators {
    let mut constraints: Vec<Vec<Rational>> = Vec::new();
    for e in eqs {
        constraints.push(e.clone());
        constraints.push(e.iter().map(|c| -c).collect());
    }
    constraints.extend(ineqs.iter().cloned());

    let mut lines: Vec<Vec<Rational>> = (0..dim)
        .map(|i| {
            let mut v = zeros(dim);
            v[i] = Rational::one();
            v
        })
        .collect();
    let mut rays: Vec<Ray> = Vec::new();

    for (k, c) in constraints.iter().enumerate() {
        if let Some(li) = lines.iter().position(|l| !dot(c, l).is_zero()) {
            let pivot = lines.remove(li);
            let cp = dot(c, &pivot);
            for l in lines.iter_mut() {
                let f = dot(c, l) / &cp;
                if !f.is_zero() {
                    *l = primitive(combine(&Rational::one(), l, &-f, &pivot));
                }
            }
            for r in rays.iter_mut() {
                let f = dot(c, &r.v) / &cp;
                if !f.is_zero() {
                    r.v = primitive(combine(&Rational::one(), &r.v, &-f, &pivot));
                }
                bit_set(&mut r.zero, k);
            }
            let v = if cp.is_positive() {
                pivot.iter().map(|x| -x).collect()
            } else {
                pivot
            };
            let mut zero = Vec::new();
            for prev in 0..k {
                bit_set(&mut zero, prev);
            }
            rays.push(Ray { v: primitive(v), zero });
            continue;
        }

        let vals: Vec<Rational> = rays.iter().map(|r| dot(c, &r.v)).collect();
        let plus: Vec<usize> = (0..rays.len()).filter(|&i| vals[i].is_positive()).collect();
        let minus: Vec<usize> = (0..rays.len()).filter(|&i| vals[i].is_negative()).collect();
        let mut next: Vec<Ray> = Vec::new();
        let min_common = dim.saturating_sub(lines.len() + 2);
        for &p in &plus {
            for &n in &minus {
                let common = bits_and(&rays[p].zero, &rays[n].zero);
                if bits_count(&common) < min_common {
                    continue;
                }
                let blocked = rays
                    .iter()
                    .enumerate()
                    .any(|(o, r)| o != p && o != n && bits_subset(&common, &r.zero));
                if blocked {
                    continue;
                }
                let v = combine(&vals[p], &rays[n].v, &-&vals[n], &rays[p].v);
                let mut zero = common;
                bit_set(&mut zero, k);
                next.push(Ray { v: primitive(v), zero });
            }
        }
        let mut kept: Vec<Ray> = Vec::new();
        for (i, mut r) in rays.into_iter().enumerate() {
            if vals[i].is_positive() {
                continue;
            }
            if vals[i].is_zero() {
                bit_set(&mut r.zero, k);
            }
            kept.push(r);
        }
        kept.extend(next);
        rays = kept;
    }
    ConeGenerators {
        rays: rays.into_iter().map(|r| r.v).collect(),
        lines,
    }
}

/// Minkowski–Weyl generators of a polyhedron via its homogenization.
pub fn polyhedron_generators(p: &Polyhedron) -> Generators {
    let d = p.dim();
    let lift = |coeffs: &[Rational], rhs: &Rational| {
        let mut v = coeffs.to_vec();
        v.push(-rhs);
        v
    };
    let mut ineqs: Vec<Vec<Rational>> = p.ineqs().iter().map(|h| lift(&h.coeffs, &h.rhs)).collect();
    let mut s_nonneg = zeros(d + 1);
    s_nonneg[d] = -Rational::one();
    ineqs.push(s_nonneg);
    let eqs: Vec<Vec<Rational>> = p.eqs().iter().map(|h| lift(&h.coeffs, &h.rhs)).collect();
    let cone = cone_generators(d + 1, &ineqs, &eqs);
    let mut out = Generators::default();
    for r in cone.rays {
        let s = r[d].clone();
        if s.is_positive() {
            out.vertices.push(r[..d].iter().map(|x| x / &s).collect());
        } else {
            out.rays.push(r[..d].to_vec());
        }
    }
    out.lines = cone.lines.into_iter().map(|l| l[..d].to_vec()).collect();
    if out.vertices.is_empty() {
        return Generators::default();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyhedra::Halfspace;
    use crate::rational::{int, vec_of};

    #[test]
    fn square_has_four_vertices() {
        let hs = |c: &[i64], b: i64| Halfspace::new(vec_of(c), int(b));
        let p = Polyhedron::new(
            2,
            vec![hs(&[1, 0], 1), hs(&[-1, 0], 0), hs(&[0, 1], 1), hs(&[0, -1], 0)],
            vec![],
        );
        let g = polyhedron_generators(&p);
        let mut v = g.vertices.clone();
        v.sort();
        assert_eq!(v, vec![vec_of(&[0, 0]), vec_of(&[0, 1]), vec_of(&[1, 0]), vec_of(&[1, 1])]);
        assert!(g.rays.is_empty() && g.lines.is_empty());
    }

    #[test]
    fn halfplane_keeps_a_line() {
        let g = cone_generators(2, &[vec_of(&[1, 0])], &[]);
        assert_eq!(g.lines.len(), 1);
        assert_eq!(g.rays, vec![vec_of(&[-1, 0])]);
        assert!(dot(&g.lines[0], &vec_of(&[1, 0])).is_zero());
    }

    #[test]
    fn orthant_rays() {
        let g = cone_generators(3, &[vec_of(&[-1, 0, 0]), vec_of(&[0, -1, 0]), vec_of(&[0, 0, -1])], &[]);
        assert!(g.lines.is_empty());
        let mut r = g.rays.clone();
        r.sort();
        assert_eq!(r, vec![vec_of(&[0, 0, 1]), vec_of(&[0, 1, 0]), vec_of(&[1, 0, 0])]);
    }
}
