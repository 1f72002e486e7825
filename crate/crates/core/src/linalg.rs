//! Exact dense linear algebra over the rationals.

use num_traits::{One, Zero};

use crate::rational::{dot, zeros, Rational};

/// Reduced row echelon form in place. Returns the pivot columns.
pub fn rref(rows: &mut Vec<Vec<Rational>>, ncols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == rows.len() {
            break;
        }
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, p);
        let inv = Rational::one() / &rows[r][c];
        for v in rows[r].iter_mut() {
            *v *= &inv;
        }
        for i in 0..rows.len() {
            if i != r && !rows[i][c].is_zero() {
                let f = rows[i][c].clone();
                for k in 0..rows[i].len() {
                    let d = &f * &rows[r][k];
                    rows[i][k] -= d;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    rows.truncate(r);
    pivots
}

pub fn rank(rows: &[Vec<Rational>], ncols: usize) -> usize {
    let mut m = rows.to_vec();
    rref(&mut m, ncols).len()
}

/// Basis of `{x : M x = 0}`, one vector per free column with a 1 in that column.
pub fn nullspace(rows: &[Vec<Rational>], ncols: usize) -> Vec<Vec<Rational>> {
    let mut m = rows.to_vec();
    let pivots = rref(&mut m, ncols);
    let mut basis = Vec::new();
    for free in (0..ncols).filter(|c| !pivots.contains(c)) {
        let mut v = zeros(ncols);
        v[free] = Rational::one();
        for (row, &pc) in m.iter().zip(&pivots) {
            v[pc] = -&row[free];
        }
        basis.push(v);
    }
    basis
}

/// Solves `A x = b`; returns some solution, or `None` if inconsistent.
pub fn solve(a: &[Vec<Rational>], b: &[Rational], ncols: usize) -> Option<Vec<Rational>> {
    let mut aug: Vec<Vec<Rational>> = a
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    let pivots = rref(&mut aug, ncols + 1);
    if pivots.last() == Some(&ncols) {
        return None;
    }
    let mut x = zeros(ncols);
    for (row, &pc) in aug.iter().zip(&pivots) {
        x[pc] = row[ncols].clone();
    }
    Some(x)
}

/// Orthogonal projection of `x` onto the complement of `span(basis)`.
pub fn project_out(x: &[Rational], basis: &[Vec<Rational>]) -> Vec<Rational> {
    if basis.is_empty() {
        return x.to_vec();
    }
    let k = basis.len();
    let gram: Vec<Vec<Rational>> = (0..k)
        .map(|i| (0..k).map(|j| dot(&basis[i], &basis[j])).collect())
        .collect();
    let rhs: Vec<Rational> = basis.iter().map(|b| dot(b, x)).collect();
    let lambda = solve(&gram, &rhs, k).expect("gram system of a spanning set is consistent");
    let mut out = x.to_vec();
    for (l, b) in lambda.iter().zip(basis) {
        for (o, bi) in out.iter_mut().zip(b) {
            *o -= l * bi;
        }
    }
    out
}

pub fn mat_vec(a: &[Vec<Rational>], x: &[Rational]) -> Vec<Rational> {
    a.iter().map(|row| dot(row, x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{frac, vec_of};

    #[test]
    fn nullspace_of_difference_row() {
        let ns = nullspace(&[vec_of(&[1, -1])], 2);
        assert_eq!(ns, vec![vec_of(&[1, 1])]);
    }

    #[test]
    fn solve_detects_inconsistency() {
        let a = vec![vec_of(&[1, 1]), vec_of(&[2, 2])];
        assert!(solve(&a, &vec_of(&[1, 3]), 2).is_none());
        let x = solve(&a, &vec_of(&[1, 2]), 2).unwrap();
        assert_eq!(&x[0] + &x[1], frac(1, 1));
    }

    #[test]
    fn projection_is_orthogonal() {
        let b = vec![vec_of(&[1, 1])];
        let p = project_out(&vec_of(&[3, 1]), &b);
        assert_eq!(p, vec_of(&[1, -1]));
    }
}
