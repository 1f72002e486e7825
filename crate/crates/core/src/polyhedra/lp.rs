//! Exact linear programming over `{w : A w ≤ b, E w = e}` with free variables.
//!
//! Equalities are removed by exact row reduction, free variables are pivoted into
//! the basis first, and the remaining problem runs a two-phase dictionary simplex
//! with the largest-coefficient rule, falling back to Bland's rule on stalling.
//! Arithmetic is attempted in checked `i128` fractions and falls back to arbitrary
//! precision on overflow.

use std::cmp::Ordering;
use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, ToPrimitive, Zero};

use super::Halfspace;
use crate::rational::Rational;

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal {
        value: Rational,
        point: Vec<Rational>,
    },
    /// The objective grows without bound along `ray` starting from the feasible `point`.
    Unbounded {
        point: Vec<Rational>,
        ray: Vec<Rational>,
    },
    Infeasible,
}

impl LpOutcome {
    pub fn optimal_value(&self) -> Option<&Rational> {
        match self {
            LpOutcome::Optimal { value, .. } => Some(value),
            _ => None,
        }
    }

    pub fn point(&self) -> Option<&[Rational]> {
        match self {
            LpOutcome::Optimal { point, .. } | LpOutcome::Unbounded { point, .. } => Some(point),
            LpOutcome::Infeasible => None,
        }
    }
}

/// Maximizes `objective · w` subject to the given rows.
pub fn maximize(
    dim: usize,
    objective: &[Rational],
    ineqs: &[&Halfspace],
    eqs: &[&Halfspace],
) -> LpOutcome {
    debug_assert_eq!(objective.len(), dim);
    if let Some(small) = Problem::<Ratio<i128>>::convert(dim, objective, ineqs, eqs) {
        if let Ok(out) = small.solve() {
            return out.into_rational();
        }
    }
    let big = Problem::<Rational>::convert(dim, objective, ineqs, eqs)
        .expect("arbitrary precision conversion cannot fail");
    match big.solve() {
        Ok(out) => out.into_rational(),
        Err(Overflow) => unreachable!("arbitrary precision arithmetic does not overflow"),
    }
}

pub fn minimize(
    dim: usize,
    objective: &[Rational],
    ineqs: &[&Halfspace],
    eqs: &[&Halfspace],
) -> LpOutcome {
    let neg: Vec<Rational> = objective.iter().map(|c| -c).collect();
    match maximize(dim, &neg, ineqs, eqs) {
        LpOutcome::Optimal { value, point } => LpOutcome::Optimal {
            value: -value,
            point,
        },
        other => other,
    }
}

#[derive(Debug, Clone, Copy)]
struct Overflow;

type Res<T> = Result<T, Overflow>;

trait Field: Clone + Debug + Sized {
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    fn sign(&self) -> Ordering;
    fn add(&self, o: &Self) -> Res<Self>;
    fn sub(&self, o: &Self) -> Res<Self>;
    fn mul(&self, o: &Self) -> Res<Self>;
    fn div(&self, o: &Self) -> Res<Self>;
    fn neg(&self) -> Res<Self>;
    fn compare(&self, o: &Self) -> Ordering;
    fn from_rational(r: &Rational) -> Option<Self>;
    fn to_rational(&self) -> Rational;
}

impl Field for Rational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        num_traits::One::one()
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn sign(&self) -> Ordering {
        self.numer().sign().cmp(&num_bigint::Sign::NoSign)
    }
    fn add(&self, o: &Self) -> Res<Self> {
        Ok(self + o)
    }
    fn sub(&self, o: &Self) -> Res<Self> {
        Ok(self - o)
    }
    fn mul(&self, o: &Self) -> Res<Self> {
        Ok(self * o)
    }
    fn div(&self, o: &Self) -> Res<Self> {
        Ok(self / o)
    }
    fn neg(&self) -> Res<Self> {
        Ok(-self)
    }
    fn compare(&self, o: &Self) -> Ordering {
        self.cmp(o)
    }
    fn from_rational(r: &Rational) -> Option<Self> {
        Some(r.clone())
    }
    fn to_rational(&self) -> Rational {
        self.clone()
    }
}

impl Field for Ratio<i128> {
    fn zero() -> Self {
        Ratio::from_integer(0)
    }
    fn one() -> Self {
        Ratio::from_integer(1)
    }
    fn is_zero(&self) -> bool {
        *self.numer() == 0
    }
    fn sign(&self) -> Ordering {
        self.numer().cmp(&0)
    }
    fn add(&self, o: &Self) -> Res<Self> {
        self.checked_add(o).ok_or(Overflow)
    }
    fn sub(&self, o: &Self) -> Res<Self> {
        self.checked_sub(o).ok_or(Overflow)
    }
    fn mul(&self, o: &Self) -> Res<Self> {
        self.checked_mul(o).ok_or(Overflow)
    }
    fn div(&self, o: &Self) -> Res<Self> {
        self.checked_div(o).ok_or(Overflow)
    }
    fn neg(&self) -> Res<Self> {
        let n = self.numer().checked_neg().ok_or(Overflow)?;
        Ok(Ratio::new_raw(n, *self.denom()))
    }
    fn compare(&self, o: &Self) -> Ordering {
        self.cmp(o)
    }
    fn from_rational(r: &Rational) -> Option<Self> {
        let n = r.numer().to_i128()?;
        let d = r.denom().to_i128()?;
        Some(Ratio::new_raw(n, d))
    }
    fn to_rational(&self) -> Rational {
        Rational::new_raw(BigInt::from(*self.numer()), BigInt::from(*self.denom()))
    }
}

enum RawOutcome<F> {
    Optimal { value: F, point: Vec<F> },
    Unbounded { point: Vec<F>, ray: Vec<F> },
    Infeasible,
}

impl<F: Field> RawOutcome<F> {
    fn into_rational(self) -> LpOutcome {
        let conv = |v: Vec<F>| v.iter().map(F::to_rational).collect::<Vec<_>>();
        match self {
            RawOutcome::Optimal { value, point } => LpOutcome::Optimal {
                value: value.to_rational(),
                point: conv(point),
            },
            RawOutcome::Unbounded { point, ray } => LpOutcome::Unbounded {
                point: conv(point),
                ray: conv(ray),
            },
            RawOutcome::Infeasible => LpOutcome::Infeasible,
        }
    }
}

struct Problem<F> {
    dim: usize,
    objective: Vec<F>,
    ineqs: Vec<(Vec<F>, F)>,
    eqs: Vec<(Vec<F>, F)>,
}

/// An equality-eliminated variable: `w[col] = rhs - Σ coeffs[j] * w[free_cols[j]]`.
struct Substitution<F> {
    col: usize,
    coeffs: Vec<F>,
    rhs: F,
}

impl<F: Field> Problem<F> {
    fn convert(
        dim: usize,
        objective: &[Rational],
        ineqs: &[&Halfspace],
        eqs: &[&Halfspace],
    ) -> Option<Self> {
        let conv_vec = |v: &[Rational]| v.iter().map(F::from_rational).collect::<Option<Vec<F>>>();
        let conv_rows = |rows: &[&Halfspace]| {
            rows.iter()
                .map(|h| Some((conv_vec(&h.coeffs)?, F::from_rational(&h.rhs)?)))
                .collect::<Option<Vec<_>>>()
        };
        Some(Problem {
            dim,
            objective: conv_vec(objective)?,
            ineqs: conv_rows(ineqs)?,
            eqs: conv_rows(eqs)?,
        })
    }

    fn solve(&self) -> Res<RawOutcome<F>> {
        let (subs, free_cols) = match self.reduce_equalities()? {
            Some(x) => x,
            None => return Ok(RawOutcome::Infeasible),
        };
        let n = free_cols.len();
        // rewrite inequalities and objective over the free columns
        let mut rows = Vec::with_capacity(self.ineqs.len());
        for (a, b) in &self.ineqs {
            let (coeffs, shift) = substitute(a, &subs, &free_cols)?;
            rows.push((coeffs, b.sub(&shift)?));
        }
        let (obj, obj_shift) = substitute(&self.objective, &subs, &free_cols)?;
        let mut tab = Tableau::new(n, &rows, &obj, obj_shift)?;
        let raw = tab.run()?;
        let expand = |reduced: &[F], homogeneous: bool| -> Res<Vec<F>> {
            let mut full = vec![F::zero(); self.dim];
            for (j, &c) in free_cols.iter().enumerate() {
                full[c] = reduced[j].clone();
            }
            for s in &subs {
                let mut v = if homogeneous { F::zero() } else { s.rhs.clone() };
                for (j, c) in s.coeffs.iter().enumerate() {
                    if !c.is_zero() && !reduced[j].is_zero() {
                        v = v.sub(&c.mul(&reduced[j])?)?;
                    }
                }
                full[s.col] = v;
            }
            Ok(full)
        };
        Ok(match raw {
            TableauResult::Infeasible => RawOutcome::Infeasible,
            TableauResult::Optimal { value, point } => RawOutcome::Optimal {
                value,
                point: expand(&point, false)?,
            },
            TableauResult::Unbounded { point, ray } => RawOutcome::Unbounded {
                point: expand(&point, false)?,
                ray: expand(&ray, true)?,
            },
        })
    }

    /// Reduced row echelon form of the equality system. `None` when inconsistent.
    fn reduce_equalities(&self) -> Res<Option<(Vec<Substitution<F>>, Vec<usize>)>> {
        let mut rows: Vec<(Vec<F>, F)> = self.eqs.clone();
        let mut pivots: Vec<(usize, usize)> = Vec::new(); // (row, col)
        let mut next = 0;
        for col in 0..self.dim {
            let Some(r) = (next..rows.len()).find(|&r| !rows[r].0[col].is_zero()) else {
                continue;
            };
            rows.swap(next, r);
            let p = rows[next].0[col].clone();
            for k in 0..self.dim {
                if !rows[next].0[k].is_zero() {
                    rows[next].0[k] = rows[next].0[k].div(&p)?;
                }
            }
            rows[next].1 = rows[next].1.div(&p)?;
            for i in 0..rows.len() {
                if i == next || rows[i].0[col].is_zero() {
                    continue;
                }
                let f = rows[i].0[col].clone();
                for k in 0..self.dim {
                    if !rows[next].0[k].is_zero() {
                        let delta = f.mul(&rows[next].0[k])?;
                        rows[i].0[k] = rows[i].0[k].sub(&delta)?;
                    }
                }
                let delta = f.mul(&rows[next].1)?;
                rows[i].1 = rows[i].1.sub(&delta)?;
            }
            pivots.push((next, col));
            next += 1;
        }
        if rows[next..].iter().any(|(_, rhs)| !rhs.is_zero()) {
            return Ok(None);
        }
        let pivot_cols: Vec<usize> = pivots.iter().map(|&(_, c)| c).collect();
        let free_cols: Vec<usize> = (0..self.dim).filter(|c| !pivot_cols.contains(c)).collect();
        let subs = pivots
            .iter()
            .map(|&(r, col)| Substitution {
                col,
                coeffs: free_cols.iter().map(|&j| rows[r].0[j].clone()).collect(),
                rhs: rows[r].1.clone(),
            })
            .collect();
        Ok(Some((subs, free_cols)))
    }
}

/// Expresses `a · w` over the free columns: returns (coefficients, constant).
fn substitute<F: Field>(
    a: &[F],
    subs: &[Substitution<F>],
    free_cols: &[usize],
) -> Res<(Vec<F>, F)> {
    let mut coeffs: Vec<F> = free_cols.iter().map(|&c| a[c].clone()).collect();
    let mut shift = F::zero();
    for s in subs {
        let ap = &a[s.col];
        if ap.is_zero() {
            continue;
        }
        shift = shift.add(&ap.mul(&s.rhs)?)?;
        for (j, c) in s.coeffs.iter().enumerate() {
            if !c.is_zero() {
                coeffs[j] = coeffs[j].sub(&ap.mul(c)?)?;
            }
        }
    }
    Ok((coeffs, shift))
}

enum TableauResult<F> {
    Optimal { value: F, point: Vec<F> },
    Unbounded { point: Vec<F>, ray: Vec<F> },
    Infeasible,
}

/// Dictionary form: each basic variable equals `row[0] + Σ row[1+j] * nonbasic[j]`.
///
/// Variable ids: `0..n` free decision variables, `n..n+m` slacks, `n+m` artificial.
struct Tableau<F> {
    n: usize,
    rows: Vec<Vec<F>>,
    basic: Vec<usize>,
    nonbasic: Vec<usize>,
    obj: Vec<F>,
    aux: Option<Vec<F>>,
    /// Consecutive degenerate pivots; past a threshold Bland's rule takes over for good.
    stalled: usize,
    bland: bool,
}

const STALL_LIMIT: usize = 32;

impl<F: Field> Tableau<F> {
    fn new(n: usize, rows: &[(Vec<F>, F)], obj: &[F], obj_shift: F) -> Res<Self> {
        let mut t_rows = Vec::with_capacity(rows.len());
        for (a, b) in rows {
            let mut r = Vec::with_capacity(n + 1);
            r.push(b.clone());
            for c in a {
                r.push(c.neg()?);
            }
            t_rows.push(r);
        }
        let mut o = Vec::with_capacity(n + 1);
        o.push(obj_shift);
        o.extend(obj.iter().cloned());
        Ok(Tableau {
            n,
            basic: (n..n + rows.len()).collect(),
            nonbasic: (0..n).collect(),
            rows: t_rows,
            obj: o,
            aux: None,
            stalled: 0,
            bland: false,
        })
    }

    fn is_free(&self, var: usize) -> bool {
        var < self.n
    }

    fn pivot(&mut self, r: usize, j: usize) -> Res<()> {
        let col = j + 1;
        let piv = self.rows[r][col].clone();
        let mut new_row = Vec::with_capacity(self.rows[r].len());
        for (k, v) in self.rows[r].iter().enumerate() {
            if k == col {
                new_row.push(F::one().div(&piv)?);
            } else if v.is_zero() {
                new_row.push(F::zero());
            } else {
                new_row.push(v.neg()?.div(&piv)?);
            }
        }
        let apply = |row: &mut Vec<F>, new_row: &[F]| -> Res<()> {
            let f = row[col].clone();
            if f.is_zero() {
                return Ok(());
            }
            for k in 0..row.len() {
                if k == col {
                    row[k] = f.mul(&new_row[k])?;
                } else if !new_row[k].is_zero() {
                    row[k] = row[k].add(&f.mul(&new_row[k])?)?;
                }
            }
            Ok(())
        };
        for i in 0..self.rows.len() {
            if i != r {
                apply(&mut self.rows[i], &new_row)?;
            }
        }
        apply(&mut self.obj, &new_row)?;
        if let Some(aux) = self.aux.as_mut() {
            apply(aux, &new_row)?;
        }
        self.rows[r] = new_row;
        std::mem::swap(&mut self.basic[r], &mut self.nonbasic[j]);
        Ok(())
    }

    fn run(&mut self) -> Res<TableauResult<F>> {
        // phase 0: free variables enter the basis and never leave
        for j in 0..self.nonbasic.len() {
            if !self.is_free(self.nonbasic[j]) {
                continue;
            }
            let r = (0..self.rows.len())
                .find(|&r| !self.is_free(self.basic[r]) && !self.rows[r][j + 1].is_zero());
            if let Some(r) = r {
                self.pivot(r, j)?;
            }
        }
        if !self.phase_one()? {
            return Ok(TableauResult::Infeasible);
        }
        // free variables left nonbasic span lines of the feasible set
        for j in 0..self.nonbasic.len() {
            if self.is_free(self.nonbasic[j]) && !self.obj[j + 1].is_zero() {
                let positive = self.obj[j + 1].sign() == Ordering::Greater;
                let ray = self.ray_for(j, positive)?;
                return Ok(TableauResult::Unbounded {
                    point: self.current_point(),
                    ray,
                });
            }
        }
        loop {
            match self.choose_entering(&self.obj) {
                None => {
                    return Ok(TableauResult::Optimal {
                        value: self.obj[0].clone(),
                        point: self.current_point(),
                    })
                }
                Some(j) => match self.choose_leaving(j)? {
                    Some(r) => self.simplex_pivot(r, j)?,
                    None => {
                        let ray = self.ray_for(j, true)?;
                        return Ok(TableauResult::Unbounded {
                            point: self.current_point(),
                            ray,
                        });
                    }
                },
            }
        }
    }

    /// Returns false when the constraints are infeasible.
    fn phase_one(&mut self) -> Res<bool> {
        let mut worst: Option<usize> = None;
        for r in 0..self.rows.len() {
            if self.is_free(self.basic[r]) || self.rows[r][0].sign() != Ordering::Less {
                continue;
            }
            worst = match worst {
                Some(w) if self.rows[w][0].compare(&self.rows[r][0]) != Ordering::Greater => Some(w),
                _ => Some(r),
            };
        }
        let Some(start) = worst else {
            return Ok(true);
        };
        let art = self.n + self.rows.len();
        for r in 0..self.rows.len() {
            let coef = if self.is_free(self.basic[r]) { F::zero() } else { F::one() };
            self.rows[r].push(coef);
        }
        self.obj.push(F::zero());
        let mut aux = vec![F::zero(); self.nonbasic.len() + 2];
        *aux.last_mut().expect("nonempty") = F::one().neg()?;
        self.aux = Some(aux);
        self.nonbasic.push(art);
        let art_col = self.nonbasic.len() - 1;
        self.pivot(start, art_col)?;
        loop {
            let aux = self.aux.as_ref().expect("phase one objective");
            match self.choose_entering(aux) {
                None => break,
                Some(j) => match self.choose_leaving(j)? {
                    Some(r) => self.simplex_pivot(r, j)?,
                    None => unreachable!("phase one objective is bounded above by zero"),
                },
            }
        }
        let feasible = self.aux.as_ref().expect("phase one objective")[0].sign() != Ordering::Less;
        if !feasible {
            return Ok(false);
        }
        if let Some(r) = self.basic.iter().position(|&v| v == art) {
            let j = (0..self.nonbasic.len())
                .find(|&j| !self.is_free(self.nonbasic[j]) && !self.rows[r][j + 1].is_zero());
            match j {
                Some(j) => self.pivot(r, j)?,
                None => {
                    self.rows.remove(r);
                    self.basic.remove(r);
                }
            }
        }
        let j = self
            .nonbasic
            .iter()
            .position(|&v| v == art)
            .expect("artificial variable is nonbasic");
        for row in self.rows.iter_mut() {
            row.remove(j + 1);
        }
        self.obj.remove(j + 1);
        self.nonbasic.remove(j);
        self.aux = None;
        Ok(true)
    }

    fn simplex_pivot(&mut self, r: usize, j: usize) -> Res<()> {
        if self.rows[r][0].is_zero() {
            self.stalled += 1;
            self.bland |= self.stalled > STALL_LIMIT;
        } else {
            self.stalled = 0;
        }
        self.pivot(r, j)
    }

    /// Largest positive reduced cost among nonnegative nonbasic variables, or the
    /// lowest id once Bland's rule is in force.
    fn choose_entering(&self, objective: &[F]) -> Option<usize> {
        let candidates = (0..self.nonbasic.len())
            .filter(|&j| !self.is_free(self.nonbasic[j]))
            .filter(|&j| objective[j + 1].sign() == Ordering::Greater);
        if self.bland {
            return candidates.min_by_key(|&j| self.nonbasic[j]);
        }
        candidates.min_by(|&a, &b| {
            objective[b + 1]
                .compare(&objective[a + 1])
                .then(self.nonbasic[a].cmp(&self.nonbasic[b]))
        })
    }

    fn choose_leaving(&self, j: usize) -> Res<Option<usize>> {
        let mut best: Option<(usize, F)> = None;
        for r in 0..self.rows.len() {
            if self.is_free(self.basic[r]) {
                continue;
            }
            let coef = &self.rows[r][j + 1];
            if coef.sign() != Ordering::Less {
                continue;
            }
            let ratio = self.rows[r][0].div(&coef.neg()?)?;
            best = match best {
                None => Some((r, ratio)),
                Some((br, bv)) => match ratio.compare(&bv) {
                    Ordering::Less => Some((r, ratio)),
                    Ordering::Equal if self.basic[r] < self.basic[br] => Some((r, ratio)),
                    _ => Some((br, bv)),
                },
            };
        }
        Ok(best.map(|(r, _)| r))
    }

    fn current_point(&self) -> Vec<F> {
        let mut x = vec![F::zero(); self.n];
        for (r, &v) in self.basic.iter().enumerate() {
            if v < self.n {
                x[v] = self.rows[r][0].clone();
            }
        }
        x
    }

    fn ray_for(&self, j: usize, positive: bool) -> Res<Vec<F>> {
        let mut ray = vec![F::zero(); self.n];
        let sgn = |v: &F| if positive { Ok(v.clone()) } else { v.neg() };
        if self.nonbasic[j] < self.n {
            ray[self.nonbasic[j]] = sgn(&F::one())?;
        }
        for (r, &v) in self.basic.iter().enumerate() {
            if v < self.n {
                ray[v] = sgn(&self.rows[r][j + 1])?;
            }
        }
        Ok(ray)
    }
}
