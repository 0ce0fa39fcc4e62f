use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Signed, Zero};

use super::{format_rational, rational_to_f64, Rational};
use crate::error::{Error, Result};

/// Exponent multi-index, one entry per chart variable.
pub type Exponent = Vec<u32>;

/// Polynomial in canonical form: sorted exponent map, no zero coefficients.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PolyExpr {
    nvars: usize,
    terms: BTreeMap<Exponent, Rational>,
}

impl PolyExpr {
    pub fn zero(nvars: usize) -> Self {
        PolyExpr {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: Rational) -> Self {
        let mut p = Self::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(vec![0; nvars], c);
        }
        p
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, Rational::one())
    }

    /// The coordinate function `x_axis`.
    pub fn var(nvars: usize, axis: usize) -> Self {
        assert!(axis < nvars, "variable index out of range");
        let mut e = vec![0; nvars];
        e[axis] = 1;
        Self::monomial(e, Rational::one())
    }

    pub fn monomial(exp: Exponent, c: Rational) -> Self {
        let nvars = exp.len();
        let mut p = Self::zero(nvars);
        if !c.is_zero() {
            p.terms.insert(exp, c);
        }
        p
    }

    /// Builds from arbitrary `(exponent, coefficient)` pairs, merging repeats.
    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Exponent, Rational)>) -> Result<Self> {
        let mut p = Self::zero(nvars);
        for (e, c) in terms {
            if e.len() != nvars {
                return Err(Error::ArityMismatch {
                    expected: nvars,
                    found: e.len(),
                });
            }
            p.add_term(e, c);
        }
        Ok(p)
    }

    fn add_term(&mut self, e: Exponent, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, &Rational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, exp: &[u32]) -> Rational {
        self.terms.get(exp).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.keys().all(|e| e.iter().all(|&k| k == 0))
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).max()
    }

    pub fn depends_on(&self, axis: usize) -> bool {
        self.terms.keys().any(|e| e[axis] > 0)
    }

    fn check_arity(&self, other: &Self) -> Result<()> {
        if self.nvars != other.nvars {
            return Err(Error::ArityMismatch {
                expected: self.nvars,
                found: other.nvars,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_arity(other)?;
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_arity(other)?;
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), -c.clone());
        }
        Ok(out)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_arity(other)?;
        let mut out = Self::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        Ok(out)
    }

    pub fn neg(&self) -> Self {
        PolyExpr {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), -c.clone())).collect(),
        }
    }

    pub fn scale(&self, s: &Rational) -> Self {
        if s.is_zero() {
            return Self::zero(self.nvars);
        }
        PolyExpr {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
        }
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one(self.nvars);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base).expect("same arity");
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base).expect("same arity");
            }
        }
        acc
    }

    /// Exact evaluation at a rational point.
    pub fn eval(&self, point: &[Rational]) -> Result<Rational> {
        if point.len() != self.nvars {
            return Err(Error::ArityMismatch {
                expected: self.nvars,
                found: point.len(),
            });
        }
        let mut acc = Rational::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (x, &k) in point.iter().zip(e) {
                if k > 0 {
                    t *= num_traits::pow(x.clone(), k as usize);
                }
            }
            acc += t;
        }
        Ok(acc)
    }

    /// Floating-point evaluation; panics on arity mismatch.
    pub fn eval_f64(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.nvars, "point arity");
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut t = rational_to_f64(c);
                for (x, &k) in point.iter().zip(e) {
                    if k > 0 {
                        t *= x.powi(k as i32);
                    }
                }
                t
            })
            .sum()
    }

    /// Coefficients converted once for repeated floating-point evaluation.
    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| (e.clone(), rational_to_f64(c)))
                .collect(),
        }
    }

    pub fn partial_derivative(&self, axis: usize) -> Self {
        assert!(axis < self.nvars, "axis out of range");
        let mut out = Self::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[axis] == 0 {
                continue;
            }
            let mut d = e.clone();
            d[axis] -= 1;
            out.add_term(d, c * Rational::from_integer(e[axis].into()));
        }
        out
    }

    /// Re-embeds into a chart with `nvars` variables, sending variable `i` to `map[i]`.
    pub fn remap(&self, nvars: usize, map: &[usize]) -> Self {
        let mut out = Self::zero(nvars);
        for (e, c) in &self.terms {
            let mut ne = vec![0; nvars];
            for (i, &k) in e.iter().enumerate() {
                ne[map[i]] += k;
            }
            out.add_term(ne, c.clone());
        }
        out
    }

    /// Prints with the given variable names; output re-parses to `self`.
    pub fn to_string_with(&self, vars: &[impl AsRef<str>]) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut out = String::new();
        // highest total degree first, then lexicographically largest exponent
        let mut terms: Vec<_> = self.terms.iter().collect();
        terms.sort_by(|(a, _), (b, _)| {
            let da: u32 = a.iter().sum();
            let db: u32 = b.iter().sum();
            db.cmp(&da).then(b.cmp(a))
        });
        for (i, (e, c)) in terms.into_iter().enumerate() {
            let mono: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(v, &k)| {
                    let name = vars[v].as_ref();
                    if k == 1 {
                        name.to_string()
                    } else {
                        format!("{name}^{k}")
                    }
                })
                .collect();
            let abs = c.abs();
            let body = if mono.is_empty() {
                format_rational(&abs)
            } else if abs.is_one() {
                mono.join("*")
            } else {
                format!("{}*{}", format_rational(&abs), mono.join("*"))
            };
            if i == 0 {
                if c.is_negative() {
                    // a leading sign is only legal on an integer literal
                    if mono.is_empty() {
                        out.push('-');
                        out.push_str(&body);
                    } else if abs.is_one() {
                        out.push_str("-1*");
                        out.push_str(&body);
                    } else {
                        out.push('-');
                        out.push_str(&body);
                    }
                } else {
                    out.push_str(&body);
                }
            } else {
                out.push_str(if c.is_negative() { " - " } else { " + " });
                out.push_str(&body);
            }
        }
        out
    }
}

impl fmt::Debug for PolyExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (0..self.nvars).map(|i| format!("x{i}")).collect();
        write!(f, "PolyExpr({})", self.to_string_with(&names))
    }
}

/// Floating-point image of a [`PolyExpr`] for grid sampling.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    nvars: usize,
    terms: Vec<(Exponent, f64)>,
}

impl CompiledPoly {
    pub fn eval(&self, point: &[f64]) -> f64 {
        debug_assert_eq!(point.len(), self.nvars);
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut t = *c;
                for (x, &k) in point.iter().zip(e) {
                    if k > 0 {
                        t *= x.powi(k as i32);
                    }
                }
                t
            })
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_poly, rational, rational_int};

    fn p(s: &str) -> PolyExpr {
        parse_poly(s, &["x", "y"]).unwrap()
    }

    #[test]
    fn arithmetic_examples() {
        assert_eq!(p("x").add(&p("0")).unwrap(), p("x"));
        assert!(p("x+y").sub(&p("x+y")).unwrap().is_zero());
        assert_eq!(p("x+1").mul(&p("x-1")).unwrap(), p("x^2 - 1"));
    }

    #[test]
    fn product_matches_pointwise_product_at_random_points() {
        // oracle: (x+1)(x-1) evaluated factor by factor
        let a = p("x+1");
        let b = p("x-1");
        let prod = a.mul(&b).unwrap();
        for (n, d) in [(3, 7), (-5, 2), (11, 13), (0, 1), (-9, 4)] {
            let z = vec![rational(n, d), rational(2, 3)];
            let lhs = prod.eval(&z).unwrap();
            let rhs = a.eval(&z).unwrap() * b.eval(&z).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(p("x^2*y").eval(&[rational_int(2), rational_int(3)]).unwrap(), rational_int(12));
        assert!(p("0").eval(&[rational(1, 3), rational(7, 2)]).unwrap().is_zero());
        let half = rational(1, 2);
        assert_eq!(p("(x+y)^2").eval(&[half.clone(), half]).unwrap(), rational_int(1));
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(p("x^2*y").partial_derivative(0), p("2*x*y"));
        assert!(p("7/3").partial_derivative(1).is_zero());
        assert_eq!(p("x^3 - x*y").partial_derivative(1), p("-1*x"));
    }

    #[test]
    fn arity_mismatch_is_reported() {
        let a = PolyExpr::var(2, 0);
        let b = PolyExpr::var(3, 0);
        assert!(matches!(a.add(&b), Err(Error::ArityMismatch { .. })));
        assert!(matches!(a.eval(&[rational_int(1)]), Err(Error::ArityMismatch { .. })));
    }

    #[test]
    fn pow_matches_repeated_multiplication() {
        let q = p("x - 2*y + 1/3");
        let mut acc = PolyExpr::one(2);
        for k in 0..5 {
            assert_eq!(q.pow(k), acc);
            acc = acc.mul(&q).unwrap();
        }
    }
}
