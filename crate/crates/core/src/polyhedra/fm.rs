//! Fourier–Motzkin projection with exact redundancy pruning.

use num_traits::{Signed, Zero};

use super::{dominance_filter, drop_redundant, independent_equalities, Halfspace, PolyError, Polyhedron};
use crate::rational::{dot, Rational};

const DEFAULT_ROW_CAP: usize = 20_000;

/// Row cap for a single elimination step, read from `STOCHDP_FM_ROW_CAP`.
pub fn fm_row_cap() -> usize {
    parse_cap(std::env::var("STOCHDP_FM_ROW_CAP").ok().as_deref())
}

fn parse_cap(v: Option<&str>) -> usize {
    v.and_then(|v| v.trim().parse().ok())
        .filter(|&c| c > 0)
        .unwrap_or(DEFAULT_ROW_CAP)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Prune {
    /// Full LP redundancy removal over the whole system.
    Full,
    /// New rows are tested only against rows supported inside the union of the new supports.
    Local,
}

/// The rows that bounded an eliminated variable, kept for back-substitution.
#[derive(Clone, Debug)]
pub enum Bounds {
    Equality(Halfspace),
    Inequalities(Vec<Halfspace>),
}

#[derive(Clone, Debug)]
pub struct EliminationStep {
    pub var: usize,
    pub bounds: Bounds,
}

impl EliminationStep {
    /// A value for `var` consistent with the recorded rows, given the others in `w`.
    /// Picks the tightest lower bound, else the tightest upper bound, else zero.
    pub fn choose_value(&self, w: &[Rational]) -> Rational {
        let j = self.var;
        let rest = |h: &Halfspace| {
            let mut s = dot(&h.coeffs, w);
            s -= &h.coeffs[j] * &w[j];
            &h.rhs - s
        };
        match &self.bounds {
            Bounds::Equality(h) => rest(h) / &h.coeffs[j],
            Bounds::Inequalities(rows) => {
                let mut lower: Option<Rational> = None;
                let mut upper: Option<Rational> = None;
                for h in rows {
                    let c = &h.coeffs[j];
                    let b = rest(h) / c;
                    if c.is_negative() {
                        if lower.as_ref().map_or(true, |l| b > *l) {
                            lower = Some(b);
                        }
                    } else if upper.as_ref().map_or(true, |u| b < *u) {
                        upper = Some(b);
                    }
                }
                lower.or(upper).unwrap_or_else(Rational::zero)
            }
        }
    }
}

/// Eliminates one coordinate; the column stays in place with zero coefficients.
pub fn eliminate_step(
    p: &Polyhedron,
    var: usize,
    prune: Prune,
) -> Result<(Polyhedron, EliminationStep), PolyError> {
    eliminate_step_capped(p, var, prune, fm_row_cap())
}

pub(crate) fn eliminate_step_capped(
    p: &Polyhedron,
    var: usize,
    prune: Prune,
    cap: usize,
) -> Result<(Polyhedron, EliminationStep), PolyError> {
    let dim = p.dim();
    if p.is_trivially_empty() {
        let step = EliminationStep {
            var,
            bounds: Bounds::Inequalities(Vec::new()),
        };
        return Ok((Polyhedron::empty(dim), step));
    }
    if let Some(pos) = p.eqs().iter().position(|e| !e.coeffs[var].is_zero()) {
        let pivot = p.eqs()[pos].clone();
        let sub = |h: &Halfspace| {
            if h.coeffs[var].is_zero() {
                return h.clone();
            }
            let f = &h.coeffs[var] / &pivot.coeffs[var];
            let mut coeffs: Vec<Rational> =
                h.coeffs.iter().zip(&pivot.coeffs).map(|(a, b)| a - &f * b).collect();
            coeffs[var] = Rational::zero();
            Halfspace::new(coeffs, &h.rhs - &f * &pivot.rhs)
        };
        let ineqs = p.ineqs().iter().map(sub).collect();
        let eqs = p
            .eqs()
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != pos)
            .map(|(_, h)| sub(h))
            .collect();
        let q = Polyhedron::new(dim, ineqs, eqs);
        let q = prune_all(&q, prune, None);
        let step = EliminationStep {
            var,
            bounds: Bounds::Equality(pivot),
        };
        return Ok((q, step));
    }

    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut keep = Vec::new();
    for h in p.ineqs() {
        let c = &h.coeffs[var];
        if c.is_positive() {
            pos.push(h);
        } else if c.is_negative() {
            neg.push(h);
        } else {
            keep.push(h.clone());
        }
    }
    let produced = keep.len() + pos.len() * neg.len();
    if produced > cap {
        return Err(PolyError::RowCapExceeded { cap });
    }
    let bounds = Bounds::Inequalities(pos.iter().chain(neg.iter()).map(|h| (*h).clone()).collect());
    let old = keep.len();
    for a in &pos {
        for b in &neg {
            let ca = &a.coeffs[var];
            let cb = -&b.coeffs[var];
            let mut coeffs: Vec<Rational> = a
                .coeffs
                .iter()
                .zip(&b.coeffs)
                .map(|(x, y)| &cb * x + ca * y)
                .collect();
            coeffs[var] = Rational::zero();
            keep.push(Halfspace::new(coeffs, &cb * &a.rhs + ca * &b.rhs));
        }
    }
    let q = Polyhedron::new(dim, keep, p.eqs().to_vec());
    let q = prune_all(&q, prune, Some(old));
    Ok((q, EliminationStep { var, bounds }))
}

fn prune_all(q: &Polyhedron, prune: Prune, fresh_from: Option<usize>) -> Polyhedron {
    match prune {
        Prune::Full => q.reduce(),
        Prune::Local => prune_local(q, fresh_from.unwrap_or(0)),
    }
}

/// Support-local pruning. Fresh rows are tested against every row supported inside the
/// union of the fresh supports. Rows listed before `fresh_from` are assumed
/// non-redundant among themselves and are only used as witnesses.
fn prune_local(q: &Polyhedron, fresh_from: usize) -> Polyhedron {
    if q.is_trivially_empty() {
        return Polyhedron::empty(q.dim());
    }
    let Some(eqs) = independent_equalities(q.eqs()) else {
        return Polyhedron::empty(q.dim());
    };
    let old = &q.ineqs()[..fresh_from.min(q.ineqs().len())];
    let old_keys: std::collections::BTreeSet<Vec<Rational>> =
        old.iter().map(|h| h.coeffs.clone()).collect();
    let rows = dominance_filter(q.ineqs());
    let mut supp: Vec<usize> = rows
        .iter()
        .filter(|h| !old_keys.contains(&h.coeffs))
        .flat_map(Halfspace::support)
        .collect();
    supp.sort_unstable();
    supp.dedup();
    let inside = |h: &Halfspace| h.support().iter().all(|c| supp.binary_search(c).is_ok());
    let restrict = |h: &Halfspace| {
        Halfspace::new(supp.iter().map(|&c| h.coeffs[c].clone()).collect(), h.rhs.clone())
    };
    let local: Vec<usize> = (0..rows.len()).filter(|&k| inside(&rows[k])).collect();
    let local_rows: Vec<Halfspace> = local.iter().map(|&k| restrict(&rows[k])).collect();
    let local_eqs: Vec<Halfspace> = eqs.iter().filter(|h| inside(h)).map(restrict).collect();
    let test: Vec<bool> = local.iter().map(|&k| !old_keys.contains(&rows[k].coeffs)).collect();
    let Some(alive) = drop_redundant(supp.len(), &local_rows, &local_eqs, &test) else {
        return Polyhedron::empty(q.dim());
    };
    let dead: std::collections::BTreeSet<usize> =
        local.iter().zip(alive).filter(|(_, a)| !a).map(|(&k, _)| k).collect();
    let rows: Vec<Halfspace> = rows
        .into_iter()
        .enumerate()
        .filter_map(|(k, h)| (!dead.contains(&k)).then_some(h))
        .collect();
    Polyhedron::from_parts_unchecked(q.dim(), rows, eqs)
}

/// Projects `p` onto the coordinates not listed in `coords`, eliminating them in order.
/// The result lives in the space of the remaining coordinates, in increasing order.
pub fn fm_eliminate(p: &Polyhedron, coords: &[usize]) -> Result<Polyhedron, PolyError> {
    let mut q = p.clone();
    for &c in coords {
        q = eliminate_step(&q, c, Prune::Full)?.0;
    }
    let keep: Vec<usize> = (0..p.dim()).filter(|c| !coords.contains(c)).collect();
    Ok(q.select_columns(&keep))
}
