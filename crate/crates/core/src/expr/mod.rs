//! Exact multivariate polynomials over the rationals and the expression
//! grammar used for generator components and log-densities.

mod parse;
mod poly;

pub use parse::parse_poly;
pub use poly::{CompiledPoly, Exponent, PolyExpr};

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Arbitrary-precision rational in lowest terms with positive denominator.
pub type Rational = num_rational::BigRational;

pub fn rational(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rational_int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Parses `"p"`, `"-p"` or `"p/q"`.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text, "1"),
    };
    let num: BigInt = num.parse().ok()?;
    let den: BigInt = den.parse().ok()?;
    if den.is_zero() || den.is_negative() {
        return None;
    }
    Some(Rational::new(num, den))
}

pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn rational_to_f64(r: &Rational) -> f64 {
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            // very large numerator and denominator
            let shift = r.denom().bits().max(r.numer().bits()).saturating_sub(900);
            let n = (r.numer() >> shift).to_f64().unwrap_or(f64::NAN);
            let d = (r.denom() >> shift).to_f64().unwrap_or(f64::NAN);
            n / d
        }
    }
}
