//! Polynomial vector fields on a single chart: brackets, μ-divergence, formal
//! adjoints and the horizontal differential in the frame-orthonormal
//! presentation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{format_rational, parse_poly, parse_rational, rational_to_f64, PolyExpr, Rational};

/// One coordinate axis of a chart.
#[derive(Clone, Debug, PartialEq)]
pub enum Axis {
    /// Circle of the given length; node coordinates live in `[-period/2, period/2)`.
    Periodic { period: f64, text: String },
    /// Closed interval with homogeneous Dirichlet boundary.
    Interval { lo: Rational, hi: Rational },
}

impl Axis {
    pub fn periodic(text: &str) -> Result<Self> {
        let period = parse_length(text)
            .ok_or_else(|| Error::schema("period", format!("cannot parse `{text}`")))?;
        if !(period > 0.0) {
            return Err(Error::schema("period", "must be positive"));
        }
        Ok(Axis::Periodic {
            period,
            text: text.trim().to_string(),
        })
    }

    pub fn interval(lo: Rational, hi: Rational) -> Result<Self> {
        if lo >= hi {
            return Err(Error::schema("axes", "interval needs lo < hi"));
        }
        Ok(Axis::Interval { lo, hi })
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, Axis::Periodic { .. })
    }

    pub fn describe(&self) -> AxisDescriptor {
        match self {
            Axis::Periodic { text, .. } => AxisDescriptor::Periodic { period: text.clone() },
            Axis::Interval { lo, hi } => AxisDescriptor::Interval {
                lo: format_rational(lo),
                hi: format_rational(hi),
            },
        }
    }
}

/// Serialized form of an [`Axis`], as it appears in spec files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum AxisDescriptor {
    Periodic { period: String },
    Interval { lo: String, hi: String },
}

/// Accepts `p/q`, `p/q*pi`, `pi` or `k*pi` so that circles of length `2*pi` are expressible.
pub fn parse_length(text: &str) -> Option<f64> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if t == "pi" {
        return Some(std::f64::consts::PI);
    }
    if let Some(coef) = t.strip_suffix("*pi") {
        return parse_rational(coef).map(|r| rational_to_f64(&r) * std::f64::consts::PI);
    }
    parse_rational(&t).map(|r| rational_to_f64(&r))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    var_names: Vec<String>,
    axes: Vec<Axis>,
}

impl Chart {
    pub fn new(var_names: Vec<String>, axes: Vec<Axis>) -> Result<Self> {
        if var_names.is_empty() {
            return Err(Error::schema("chart.vars", "at least one variable required"));
        }
        if var_names.len() != axes.len() {
            return Err(Error::schema("chart.axes", "one axis per variable required"));
        }
        for (i, v) in var_names.iter().enumerate() {
            let ok = v.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && v.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !ok {
                return Err(Error::schema("chart.vars", format!("`{v}` is not an identifier")));
            }
            if var_names[..i].contains(v) {
                return Err(Error::schema("chart.vars", format!("duplicate variable `{v}`")));
            }
        }
        Ok(Chart { var_names, axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn all_periodic(&self) -> bool {
        self.axes.iter().all(Axis::is_periodic)
    }

    /// Closed-interval membership on Interval axes; Periodic axes accept any value.
    pub fn contains(&self, point: &[Rational]) -> bool {
        point.len() == self.dim()
            && self.axes.iter().zip(point).all(|(a, x)| match a {
                Axis::Periodic { .. } => true,
                Axis::Interval { lo, hi } => lo <= x && x <= hi,
            })
    }

    pub(crate) fn check_point(&self, point: &[Rational]) -> Result<()> {
        if point.len() != self.dim() {
            return Err(Error::ArityMismatch {
                expected: self.dim(),
                found: point.len(),
            });
        }
        if !self.contains(point) {
            let text: Vec<String> = point.iter().map(format_rational).collect();
            return Err(Error::PointOutsideChart(format!("({})", text.join(", "))));
        }
        Ok(())
    }

    pub fn parse(&self, src: &str) -> Result<PolyExpr> {
        parse_poly(src, &self.var_names)
    }

    /// Sub-chart on the given axes, in the given order.
    pub fn restrict(&self, axes: &[usize]) -> Chart {
        Chart {
            var_names: axes.iter().map(|&a| self.var_names[a].clone()).collect(),
            axes: axes.iter().map(|&a| self.axes[a].clone()).collect(),
        }
    }
}

pub(crate) fn same_chart(a: &Arc<Chart>, b: &Arc<Chart>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// `Σ_i X_i ∂/∂x_i` with polynomial coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    chart: Arc<Chart>,
    components: Vec<PolyExpr>,
}

impl VectorField {
    pub fn new(chart: Arc<Chart>, components: Vec<PolyExpr>) -> Result<Self> {
        if components.len() != chart.dim() {
            return Err(Error::ArityMismatch {
                expected: chart.dim(),
                found: components.len(),
            });
        }
        if let Some(c) = components.iter().find(|c| c.nvars() != chart.dim()) {
            return Err(Error::ArityMismatch {
                expected: chart.dim(),
                found: c.nvars(),
            });
        }
        Ok(VectorField { chart, components })
    }

    pub fn parse(chart: &Arc<Chart>, components: &[&str]) -> Result<Self> {
        let comps = components
            .iter()
            .map(|s| chart.parse(s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(chart.clone(), comps)
    }

    pub fn zero(chart: &Arc<Chart>) -> Self {
        let n = chart.dim();
        VectorField {
            chart: chart.clone(),
            components: vec![PolyExpr::zero(n); n],
        }
    }

    /// The coordinate field `∂/∂x_axis`.
    pub fn coordinate(chart: &Arc<Chart>, axis: usize) -> Self {
        let mut v = Self::zero(chart);
        v.components[axis] = PolyExpr::one(chart.dim());
        v
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn components(&self) -> &[PolyExpr] {
        &self.components
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(PolyExpr::is_zero)
    }

    pub fn max_degree(&self) -> u32 {
        self.components.iter().filter_map(PolyExpr::degree).max().unwrap_or(0)
    }

    fn check_chart(&self, other: &Arc<Chart>) -> Result<()> {
        if same_chart(&self.chart, other) {
            Ok(())
        } else {
            Err(Error::ChartMismatch)
        }
    }

    fn check_poly(&self, f: &PolyExpr) -> Result<()> {
        if f.nvars() != self.chart.dim() {
            return Err(Error::ArityMismatch {
                expected: self.chart.dim(),
                found: f.nvars(),
            });
        }
        Ok(())
    }

    /// Derivation action `X(f)`.
    pub fn apply(&self, f: &PolyExpr) -> Result<PolyExpr> {
        self.check_poly(f)?;
        let mut acc = PolyExpr::zero(self.chart.dim());
        for (i, c) in self.components.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let d = f.partial_derivative(i);
            if !d.is_zero() {
                acc = acc.add(&c.mul(&d)?)?;
            }
        }
        Ok(acc)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_chart(&other.chart)?;
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.add(b))
            .collect::<Result<_>>()?;
        Ok(VectorField {
            chart: self.chart.clone(),
            components,
        })
    }

    pub fn neg(&self) -> Self {
        VectorField {
            chart: self.chart.clone(),
            components: self.components.iter().map(PolyExpr::neg).collect(),
        }
    }

    /// Module action `f·X`.
    pub fn scale(&self, f: &PolyExpr) -> Result<Self> {
        self.check_poly(f)?;
        let components = self.components.iter().map(|c| c.mul(f)).collect::<Result<_>>()?;
        Ok(VectorField {
            chart: self.chart.clone(),
            components,
        })
    }

    pub fn eval(&self, point: &[Rational]) -> Result<Vec<Rational>> {
        self.components.iter().map(|c| c.eval(point)).collect()
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.components
            .iter()
            .map(|c| c.to_string_with(self.chart.var_names()))
            .collect()
    }
}

/// `[X, Y]_i = Σ_j (X_j ∂_j Y_i − Y_j ∂_j X_i)`.
pub fn lie_bracket(x: &VectorField, y: &VectorField) -> Result<VectorField> {
    x.check_chart(&y.chart)?;
    let components = (0..x.chart.dim())
        .map(|i| x.apply(&y.components[i])?.sub(&y.apply(&x.components[i])?))
        .collect::<Result<_>>()?;
    Ok(VectorField {
        chart: x.chart.clone(),
        components,
    })
}

/// Density `μ = e^φ · Lebesgue` given by its logarithm.
#[derive(Clone, Debug, PartialEq)]
pub struct LogDensity {
    chart: Arc<Chart>,
    phi: PolyExpr,
}

impl LogDensity {
    pub fn new(chart: Arc<Chart>, phi: PolyExpr) -> Result<Self> {
        if phi.nvars() != chart.dim() {
            return Err(Error::ArityMismatch {
                expected: chart.dim(),
                found: phi.nvars(),
            });
        }
        Ok(LogDensity { chart, phi })
    }

    pub fn lebesgue(chart: &Arc<Chart>) -> Self {
        LogDensity {
            chart: chart.clone(),
            phi: PolyExpr::zero(chart.dim()),
        }
    }

    pub fn parse(chart: &Arc<Chart>, src: &str) -> Result<Self> {
        Self::new(chart.clone(), chart.parse(src)?)
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn phi(&self) -> &PolyExpr {
        &self.phi
    }

    pub fn density_at(&self, point: &[f64]) -> f64 {
        self.phi.eval_f64(point).exp()
    }
}

/// `div_μ(X) = Σ_i ∂_i X_i + X(φ)`.
pub fn divergence_mu(x: &VectorField, mu: &LogDensity) -> Result<PolyExpr> {
    x.check_chart(&mu.chart)?;
    let mut acc = x.apply(&mu.phi)?;
    for (i, c) in x.components.iter().enumerate() {
        acc = acc.add(&c.partial_derivative(i))?;
    }
    Ok(acc)
}

/// Formal adjoint in `L²(μ)`: `X* f = −X f − div_μ(X) f`.
pub fn formal_adjoint_apply(x: &VectorField, mu: &LogDensity, f: &PolyExpr) -> Result<PolyExpr> {
    let div = divergence_mu(x, mu)?;
    Ok(x.apply(f)?.add(&div.mul(f)?)?.neg())
}

fn check_generators(gens: &[VectorField]) -> Result<()> {
    if let Some(first) = gens.first() {
        for g in &gens[1..] {
            first.check_chart(&g.chart)?;
        }
    }
    Ok(())
}

/// Components `(X_1 f, …, X_k f)` of the horizontal differential.
pub fn horizontal_gradient(gens: &[VectorField], f: &PolyExpr) -> Result<Vec<PolyExpr>> {
    check_generators(gens)?;
    gens.iter().map(|x| x.apply(f)).collect()
}

/// `d*ω = Σ_i X_i*(ω_i)`.
pub fn horizontal_codifferential(
    gens: &[VectorField],
    mu: &LogDensity,
    omega: &[PolyExpr],
) -> Result<PolyExpr> {
    check_generators(gens)?;
    if omega.len() != gens.len() {
        return Err(Error::LengthMismatch {
            expected: gens.len(),
            found: omega.len(),
        });
    }
    let mut acc = PolyExpr::zero(mu.chart.dim());
    for (x, w) in gens.iter().zip(omega) {
        acc = acc.add(&formal_adjoint_apply(x, mu, w)?)?;
    }
    Ok(acc)
}

/// Symbolic sum of squares `Σ_i X_i* X_i f`.
pub fn sum_of_squares_apply(gens: &[VectorField], mu: &LogDensity, f: &PolyExpr) -> Result<PolyExpr> {
    horizontal_codifferential(gens, mu, &horizontal_gradient(gens, f)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{rational, rational_int};

    pub(crate) fn plane() -> Arc<Chart> {
        Arc::new(
            Chart::new(
                vec!["x".into(), "y".into()],
                vec![
                    Axis::interval(rational_int(-4), rational_int(4)).unwrap(),
                    Axis::interval(rational_int(-4), rational_int(4)).unwrap(),
                ],
            )
            .unwrap(),
        )
    }

    fn vf(c: &Arc<Chart>, s: &[&str]) -> VectorField {
        VectorField::parse(c, s).unwrap()
    }

    #[test]
    fn bracket_examples() {
        let c = plane();
        let b = lie_bracket(&vf(&c, &["1", "0"]), &vf(&c, &["0", "x"])).unwrap();
        assert_eq!(b, vf(&c, &["0", "1"]));
        let x = vf(&c, &["x*y", "y^2 - x"]);
        assert!(lie_bracket(&x, &x).unwrap().is_zero());
        let b = lie_bracket(&vf(&c, &["0", "x"]), &vf(&c, &["y", "0"])).unwrap();
        assert_eq!(b, vf(&c, &["x", "-1*y"]));
    }

    #[test]
    fn bracket_acts_as_commutator_on_test_functions() {
        // oracle: [X,Y]f = X(Yf) − Y(Xf) by exact composition
        let c = plane();
        let x = vf(&c, &["0", "x"]);
        let y = vf(&c, &["y", "0"]);
        let b = lie_bracket(&x, &y).unwrap();
        for f in ["x^3*y - 2*y^2", "x*y + 5", "(x - y)^4"] {
            let f = c.parse(f).unwrap();
            let lhs = b.apply(&f).unwrap();
            let rhs = x.apply(&y.apply(&f).unwrap()).unwrap().sub(&y.apply(&x.apply(&f).unwrap()).unwrap()).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn divergence_examples() {
        let c = plane();
        let flat = LogDensity::lebesgue(&c);
        assert!(divergence_mu(&vf(&c, &["1", "0"]), &flat).unwrap().is_zero());
        assert_eq!(divergence_mu(&vf(&c, &["x", "0"]), &flat).unwrap(), c.parse("1").unwrap());
        let mu = LogDensity::parse(&c, "x^2").unwrap();
        assert_eq!(divergence_mu(&vf(&c, &["1", "0"]), &mu).unwrap(), c.parse("2*x").unwrap());
    }

    /// Midpoint-rule check of ∫(Xf)g e^φ = −∫ f (Xg + div_μ(X) g) e^φ on [-1,1]²
    /// for f, g vanishing on the boundary.
    #[test]
    fn divergence_satisfies_integration_by_parts_numerically() {
        let c = plane();
        let mu = LogDensity::parse(&c, "x^2").unwrap();
        let x = vf(&c, &["1", "0"]);
        let bump = "(1 - x^2)^2*(1 - y^2)^2";
        let f = c.parse(&format!("{bump}*(x + 2*y)")).unwrap();
        let g = c.parse(&format!("{bump}*(1 + x*y)")).unwrap();
        let div = divergence_mu(&x, &mu).unwrap();
        let xf = x.apply(&f).unwrap();
        let xg = x.apply(&g).unwrap();
        let n = 400;
        let h = 2.0 / n as f64;
        let (mut lhs, mut rhs) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let p = [-1.0 + (i as f64 + 0.5) * h, -1.0 + (j as f64 + 0.5) * h];
                let w = mu.density_at(&p) * h * h;
                lhs += xf.eval_f64(&p) * g.eval_f64(&p) * w;
                rhs -= f.eval_f64(&p) * (xg.eval_f64(&p) + div.eval_f64(&p) * g.eval_f64(&p)) * w;
            }
        }
        assert!((lhs - rhs).abs() < 1e-4 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn adjoint_examples() {
        let c = plane();
        let flat = LogDensity::lebesgue(&c);
        let dx = vf(&c, &["1", "0"]);
        assert_eq!(formal_adjoint_apply(&dx, &flat, &c.parse("x").unwrap()).unwrap(), c.parse("-1").unwrap());
        assert!(formal_adjoint_apply(&dx, &flat, &c.parse("1").unwrap()).unwrap().is_zero());
        let xdy = vf(&c, &["0", "x"]);
        assert_eq!(
            formal_adjoint_apply(&xdy, &flat, &c.parse("y").unwrap()).unwrap(),
            c.parse("-1*x").unwrap()
        );
    }

    #[test]
    fn gradient_and_codifferential_examples() {
        let c = plane();
        let flat = LogDensity::lebesgue(&c);
        let gr = vec![vf(&c, &["1", "0"]), vf(&c, &["0", "x"])];
        let p = |s: &str| c.parse(s).unwrap();
        assert_eq!(horizontal_gradient(&gr, &p("x")).unwrap(), vec![p("1"), p("0")]);
        assert!(horizontal_gradient(&gr, &p("1")).unwrap().iter().all(PolyExpr::is_zero));
        assert_eq!(horizontal_gradient(&gr, &p("y")).unwrap(), vec![p("0"), p("x")]);

        assert!(horizontal_codifferential(&gr, &flat, &[p("1"), p("0")]).unwrap().is_zero());
        assert_eq!(horizontal_codifferential(&gr, &flat, &[p("x"), p("0")]).unwrap(), p("-1"));
        let grad = horizontal_gradient(&gr, &p("x^2")).unwrap();
        // Σ X_i*X_i x² = −∂x(2x) = −2
        assert_eq!(horizontal_codifferential(&gr, &flat, &grad).unwrap(), p("-2"));
        assert!(matches!(
            horizontal_codifferential(&gr, &flat, &[p("1")]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn chart_mismatch_is_detected() {
        let a = plane();
        let b = Arc::new(
            Chart::new(
                vec!["x".into(), "y".into()],
                vec![Axis::periodic("1").unwrap(), Axis::periodic("1").unwrap()],
            )
            .unwrap(),
        );
        let x = VectorField::coordinate(&a, 0);
        let y = VectorField::coordinate(&b, 0);
        assert!(matches!(lie_bracket(&x, &y), Err(Error::ChartMismatch)));
    }

    #[test]
    fn lengths_and_membership() {
        assert!((parse_length("2*pi").unwrap() - 2.0 * std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(parse_length("3/2"), Some(1.5));
        assert!(Axis::periodic("0").is_err());
        assert!(Axis::interval(rational_int(1), rational_int(1)).is_err());
        let c = plane();
        assert!(c.contains(&[rational_int(4), rational(-7, 2)]));
        assert!(!c.contains(&[rational(9, 2), rational_int(0)]));
    }
}
