//! Exact rational scalars and the extended value `+∞`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

/// Arbitrary-precision fraction in canonical form (reduced, positive denominator).
pub type Rational = BigRational;

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

pub fn frac(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

pub fn zeros(n: usize) -> Vec<Rational> {
    vec![Rational::zero(); n]
}

pub fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .filter(|(x, y)| !x.is_zero() && !y.is_zero())
        .fold(Rational::zero(), |acc, (x, y)| acc + x * y)
}

pub fn vec_of(values: &[i64]) -> Vec<Rational> {
    values.iter().map(|&v| int(v)).collect()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid rational literal `{0}` (expected -?[0-9]+(/[1-9][0-9]*)?)")]
pub struct ParseRationalError(pub String);

/// Parses the wire grammar `-?[0-9]+(/[1-9][0-9]*)?`.
pub fn parse_rational(s: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError(s.to_string());
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n, Some(d)),
        None => (s, None),
    };
    let digits = num.strip_prefix('-').unwrap_or(num);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err());
    }
    let numer: BigInt = num.parse().map_err(|_| err())?;
    let denom: BigInt = match den {
        None => BigInt::one(),
        Some(d) => {
            if d.is_empty() || d.starts_with('0') || !d.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err());
            }
            d.parse().map_err(|_| err())?
        }
    };
    Ok(Rational::new(numer, denom))
}

/// Canonical `p/q` rendering; the denominator is always printed.
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// `[p/q, …]` rendering of a vector.
pub fn format_vector(v: &[Rational]) -> String {
    let parts: Vec<String> = v.iter().map(format_rational).collect();
    format!("[{}]", parts.join(", "))
}

/// Decimal rendering truncated toward zero after `places` digits.
pub fn decimal_string(r: &Rational, places: usize) -> String {
    let neg = r.is_negative();
    let abs = r.abs();
    let (whole, rem) = abs.numer().div_rem(abs.denom());
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    out.push_str(&whole.to_string());
    if places > 0 {
        out.push('.');
        let mut rem = rem;
        let ten = BigInt::from(10);
        for _ in 0..places {
            rem *= &ten;
            let (d, r2) = rem.div_rem(abs.denom());
            out.push_str(&d.to_string());
            rem = r2;
        }
    }
    out
}

/// A value in `R ∪ {+∞}`. `−∞` never appears as a value; it is signalled as an error.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ExtReal {
    Finite(Rational),
    PlusInfinity,
}

impl ExtReal {
    pub fn zero() -> Self {
        ExtReal::Finite(Rational::zero())
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(&self) -> Option<&Rational> {
        match self {
            ExtReal::Finite(r) => Some(r),
            ExtReal::PlusInfinity => None,
        }
    }

    pub fn scale(&self, factor: &Rational) -> ExtReal {
        debug_assert!(factor.is_positive());
        match self {
            ExtReal::Finite(r) => ExtReal::Finite(r * factor),
            ExtReal::PlusInfinity => ExtReal::PlusInfinity,
        }
    }

    pub fn render(&self) -> String {
        match self {
            ExtReal::Finite(r) => format_rational(r),
            ExtReal::PlusInfinity => "+inf".to_string(),
        }
    }
}

impl From<Rational> for ExtReal {
    fn from(r: Rational) -> Self {
        ExtReal::Finite(r)
    }
}

impl Add for ExtReal {
    type Output = ExtReal;
    fn add(self, rhs: ExtReal) -> ExtReal {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::PlusInfinity,
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.cmp(b),
            (ExtReal::Finite(_), ExtReal::PlusInfinity) => Ordering::Less,
            (ExtReal::PlusInfinity, ExtReal::Finite(_)) => Ordering::Greater,
            (ExtReal::PlusInfinity, ExtReal::PlusInfinity) => Ordering::Equal,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_wire_grammar() {
        assert_eq!(parse_rational("3").unwrap(), int(3));
        assert_eq!(parse_rational("-3/6").unwrap(), frac(-1, 2));
        assert_eq!(parse_rational("0/1").unwrap(), int(0));
        for bad in ["", "-", "1/0", "1/01", "+1", "1.5", "1/-2", "a", "1/"] {
            assert!(parse_rational(bad).is_err(), "{bad} should be rejected");
        }
    }

    #[test]
    fn renders_with_explicit_denominator() {
        assert_eq!(format_rational(&int(0)), "0/1");
        assert_eq!(format_rational(&frac(-6, 4)), "-3/2");
        assert_eq!(decimal_string(&frac(-1, 3), 4), "-0.3333");
        assert_eq!(decimal_string(&frac(7, 2), 2), "3.50");
    }

    #[test]
    fn extended_order_puts_infinity_last() {
        assert!(ExtReal::Finite(int(10)) < ExtReal::PlusInfinity);
        assert_eq!(ExtReal::Finite(int(1)) + ExtReal::PlusInfinity, ExtReal::PlusInfinity);
    }
}
