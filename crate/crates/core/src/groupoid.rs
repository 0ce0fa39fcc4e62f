//! Discrete trivial groupoid chart `W = U × U × T` of a product foliation:
//! convolution, involution, the δ-twisted representation on `L²(μ)`,
//! leafwise representations and the multiplier correction `l_X`.

use std::io::{Read, Write};
use std::ops::{Add, AddAssign, Mul, Sub};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{rational, PolyExpr};
use crate::grid::{difference_matrix, CsrMatrix, GridSpec, Stencil};
use crate::par;
use crate::vfield::{same_chart, LogDensity, VectorField};

/// Real or complex kernel values.
pub trait Scalar:
    Copy + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + AddAssign + PartialEq + 'static
{
    const DTYPE: &'static str;
    fn zero() -> Self;
    fn from_real(x: f64) -> Self;
    fn conj(self) -> Self;
    fn abs_sq(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    fn width() -> usize;
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
    fn zero() -> Self {
        0.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
    fn abs_sq(self) -> f64 {
        self * self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(b: &[u8]) -> Self {
        f64::from_le_bytes(b[..8].try_into().unwrap())
    }
    fn width() -> usize {
        8
    }
}

impl Scalar for Complex64 {
    const DTYPE: &'static str = "c128";
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn abs_sq(self) -> f64 {
        self.norm_sqr()
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.re.to_le_bytes());
        out.extend_from_slice(&self.im.to_le_bytes());
    }
    fn read_le(b: &[u8]) -> Self {
        Complex64::new(f64::read_le(&b[..8]), f64::read_le(&b[8..16]))
    }
    fn width() -> usize {
        16
    }
}

/// Values `k(x, x′, y)` stored x-major, then x′, then y.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel<S: Scalar = f64> {
    nu: usize,
    nt: usize,
    values: Vec<S>,
}

impl<S: Scalar> Kernel<S> {
    pub fn zeros(nu: usize, nt: usize) -> Self {
        Kernel {
            nu,
            nt,
            values: vec![S::zero(); nu * nu * nt],
        }
    }

    pub fn from_values(nu: usize, nt: usize, values: Vec<S>) -> Result<Self> {
        if values.len() != nu * nu * nt {
            return Err(Error::LengthMismatch {
                expected: nu * nu * nt,
                found: values.len(),
            });
        }
        Ok(Kernel { nu, nt, values })
    }

    pub fn from_fn(nu: usize, nt: usize, mut f: impl FnMut(usize, usize, usize) -> S) -> Self {
        let mut values = Vec::with_capacity(nu * nu * nt);
        for x in 0..nu {
            for xp in 0..nu {
                for y in 0..nt {
                    values.push(f(x, xp, y));
                }
            }
        }
        Kernel { nu, nt, values }
    }

    #[inline]
    pub fn idx(&self, x: usize, xp: usize, y: usize) -> usize {
        (x * self.nu + xp) * self.nt + y
    }

    #[inline]
    pub fn at(&self, x: usize, xp: usize, y: usize) -> S {
        self.values[self.idx(x, xp, y)]
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.nu, self.nu, self.nt]
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// Euclidean norm of the value array.
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs_sq()).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b).abs_sq())
            .sum::<f64>()
            .sqrt()
    }

    /// Little-endian value array plus a JSON sidecar at `<path>.json`.
    pub fn export(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = Vec::with_capacity(self.values.len() * S::width());
        for v in &self.values {
            v.write_le(&mut bytes);
        }
        std::fs::File::create(path)?.write_all(&bytes)?;
        let side = KernelSidecar {
            shape: self.shape().to_vec(),
            axis_order: vec!["x".into(), "x'".into(), "y".into()],
            endianness: "little".into(),
            dtype: S::DTYPE.into(),
        };
        std::fs::write(sidecar_path(path), serde_json::to_vec_pretty(&side)?)?;
        Ok(())
    }

    pub fn import(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side: KernelSidecar = serde_json::from_slice(&std::fs::read(sidecar_path(path))?)?;
        if side.dtype != S::DTYPE || side.endianness != "little" || side.shape.len() != 3 || side.shape[0] != side.shape[1] {
            return Err(Error::schema("kernel sidecar", "unsupported dtype, endianness or shape"));
        }
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let (nu, nt) = (side.shape[0], side.shape[2]);
        if bytes.len() != nu * nu * nt * S::width() {
            return Err(Error::LengthMismatch {
                expected: nu * nu * nt * S::width(),
                found: bytes.len(),
            });
        }
        let values = bytes.chunks_exact(S::width()).map(S::read_le).collect();
        Self::from_values(nu, nt, values)
    }
}

fn sidecar_path(p: &Path) -> std::path::PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSidecar {
    pub shape: Vec<usize>,
    pub axis_order: Vec<String>,
    pub endianness: String,
    pub dtype: String,
}

pub fn build_chart(grid: &GridSpec, leaf_axes: &[usize], alpha: &LogDensity, mu: &LogDensity) -> Result<GroupoidChart> {
    GroupoidChart::build(grid, leaf_axes, alpha, mu)
}

#[derive(Clone, Debug)]
pub struct GroupoidChart {
    grid: GridSpec,
    leaf_axes: Vec<usize>,
    nu: usize,
    nt: usize,
    /// Grid node of base point `(x, y)`, stored at `x * nt + y`.
    node: Vec<usize>,
    alpha: Vec<f64>,
    mu: Vec<f64>,
    haar: Vec<f64>,
    /// `μ · Π h` over all axes: the base measure for inner products.
    weight: Vec<f64>,
    delta: Vec<f64>,
    log_alpha: PolyExpr,
    log_mu: PolyExpr,
}

/// Scalar quality checks for a chart and kernel pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuasiInvariance {
    /// `|LHS − RHS| / (|LHS| + |RHS| + 1)` with `δ(γ⁻¹)` weighting `f(γ⁻¹)`.
    pub residual: f64,
    /// The same with `δ(γ)` as printed in the displayed identity.
    pub literal_form_residual: f64,
}

impl GroupoidChart {
    /// `leaf_axes` span `U`; the remaining axes span `T`.
    pub fn build(grid: &GridSpec, leaf_axes: &[usize], alpha: &LogDensity, mu: &LogDensity) -> Result<Self> {
        if !same_chart(alpha.chart(), grid.chart()) || !same_chart(mu.chart(), grid.chart()) {
            return Err(Error::GridMismatch("densities live on a different chart".into()));
        }
        let n = grid.chart().dim();
        let mut leaf = leaf_axes.to_vec();
        leaf.sort_unstable();
        leaf.dedup();
        if leaf.is_empty() || leaf.len() != leaf_axes.len() || leaf.iter().any(|&a| a >= n) {
            return Err(Error::GridMismatch(format!("invalid leaf axes {leaf_axes:?}")));
        }
        let trans: Vec<usize> = (0..n).filter(|a| !leaf.contains(a)).collect();
        let shape = grid.shape();
        let nu: usize = leaf.iter().map(|&a| shape[a]).product();
        let nt: usize = trans.iter().map(|&a| shape[a]).product();
        let strides = grid.strides();
        let unravel = |mut i: usize, axes: &[usize]| -> usize {
            let mut node = 0;
            for &a in axes.iter().rev() {
                node += (i % shape[a]) * strides[a];
                i /= shape[a];
            }
            node
        };
        let node: Vec<usize> = (0..nu * nt)
            .map(|b| unravel(b / nt, &leaf) + unravel(b % nt, &trans))
            .collect();
        let points = grid.node_points();
        let psi = alpha.phi().compile();
        let phi = mu.phi().compile();
        let hu: f64 = leaf.iter().map(|&a| grid.spacing(a)).product();
        let vol = grid.cell_volume();
        let la: Vec<f64> = node.iter().map(|&i| psi.eval(&points[i])).collect();
        let lm: Vec<f64> = node.iter().map(|&i| phi.eval(&points[i])).collect();
        let alpha_s: Vec<f64> = la.iter().map(|v| v.exp()).collect();
        let mu_s: Vec<f64> = lm.iter().map(|v| v.exp()).collect();
        let haar = alpha_s.iter().map(|a| a * hu).collect();
        let weight = mu_s.iter().map(|m| m * vol).collect();
        // log δ(x, x′, y) = (φ − ψ)(x, y) − (φ − ψ)(x′, y), so δ(x, x, y) = 1 exactly.
        let ratio: Vec<f64> = lm.iter().zip(&la).map(|(m, a)| m - a).collect();
        let mut delta = vec![0.0; nu * nu * nt];
        for x in 0..nu {
            for xp in 0..nu {
                for y in 0..nt {
                    delta[(x * nu + xp) * nt + y] = (ratio[x * nt + y] - ratio[xp * nt + y]).exp();
                }
            }
        }
        Ok(GroupoidChart {
            grid: grid.clone(),
            leaf_axes: leaf,
            nu,
            nt,
            node,
            alpha: alpha_s,
            mu: mu_s,
            haar,
            weight,
            delta,
            log_alpha: alpha.phi().clone(),
            log_mu: mu.phi().clone(),
        })
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn leaf_axes(&self) -> &[usize] {
        &self.leaf_axes
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn haar(&self) -> &[f64] {
        &self.haar
    }

    pub fn delta(&self, x: usize, xp: usize, y: usize) -> f64 {
        self.delta[(x * self.nu + xp) * self.nt + y]
    }

    /// Grid coordinates of base point `(x, y)`.
    pub fn base_point(&self, x: usize, y: usize) -> Vec<f64> {
        self.grid.node_points()[self.node[x * self.nt + y]].clone()
    }

    /// Samples `f` at every base point, `(x, y)` order.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let pts = self.grid.node_points();
        self.node.iter().map(|&i| f(&pts[i])).collect()
    }

    /// Samples `f(x-point, x′-point)` on every arrow `(x, x′, y)`.
    pub fn sample_kernel(&self, f: impl Fn(&[f64], &[f64]) -> f64) -> Kernel<f64> {
        let pts = self.grid.node_points();
        Kernel::from_fn(self.nu, self.nt, |x, xp, y| {
            f(&pts[self.node[x * self.nt + y]], &pts[self.node[xp * self.nt + y]])
        })
    }

    /// `k(x, x′, y) = 1/ν(x′, y)` on the diagonal: the discrete unit.
    pub fn unit(&self) -> Kernel<f64> {
        Kernel::from_fn(self.nu, self.nt, |x, xp, y| if x == xp { 1.0 / self.haar[xp * self.nt + y] } else { 0.0 })
    }

    fn check<S: Scalar>(&self, k: &Kernel<S>) -> Result<()> {
        if k.nu != self.nu || k.nt != self.nt {
            return Err(Error::ChartMismatch);
        }
        Ok(())
    }

    fn check_base<S>(&self, u: &[S]) -> Result<()> {
        if u.len() != self.nu * self.nt {
            return Err(Error::LengthMismatch {
                expected: self.nu * self.nt,
                found: u.len(),
            });
        }
        Ok(())
    }

    /// Max of `|δ(x,x′)δ(x′,x″) − δ(x,x″)| / δ(x,x″)` together with `max |δ(x,x) − 1|`.
    pub fn cocycle_residual(&self) -> f64 {
        let (nu, nt) = (self.nu, self.nt);
        let worst = par::map_range(nu, |x| {
            let mut w: f64 = 0.0;
            for xp in 0..nu {
                for xpp in 0..nu {
                    for y in 0..nt {
                        let lhs = self.delta(x, xp, y) * self.delta(xp, xpp, y);
                        let rhs = self.delta(x, xpp, y);
                        w = w.max((lhs - rhs).abs() / rhs);
                    }
                }
            }
            for y in 0..nt {
                w = w.max((self.delta(x, x, y) - 1.0).abs());
            }
            w
        });
        worst.into_iter().fold(0.0, f64::max)
    }

    /// `(k1 ∗ k2)(x, x′, y) = Σ_{x₁} k1(x, x₁, y) k2(x₁, x′, y) ν(x₁, y)`.
    pub fn convolve<S: Scalar>(&self, k1: &Kernel<S>, k2: &Kernel<S>) -> Result<Kernel<S>> {
        self.check(k1)?;
        self.check(k2)?;
        let (nu, nt) = (self.nu, self.nt);
        let rows = par::map_range(nu, |x| {
            let mut row = vec![S::zero(); nu * nt];
            for x1 in 0..nu {
                for y in 0..nt {
                    let a = k1.at(x, x1, y) * S::from_real(self.haar[x1 * nt + y]);
                    for xp in 0..nu {
                        row[xp * nt + y] += a * k2.at(x1, xp, y);
                    }
                }
            }
            row
        });
        Kernel::from_values(nu, nt, rows.concat())
    }

    /// `k*(x, x′, y) = conj k(x′, x, y)`.
    pub fn involution<S: Scalar>(&self, k: &Kernel<S>) -> Result<Kernel<S>> {
        self.check(k)?;
        Ok(Kernel::from_fn(self.nu, self.nt, |x, xp, y| k.at(xp, x, y).conj()))
    }

    /// `R(k)u(x, y) = Σ_{x′} k(x, x′, y) δ^{-1/2}(x, x′, y) u(x′, y) ν(x′, y)`.
    pub fn represent<S: Scalar>(&self, k: &Kernel<S>, u: &[S]) -> Result<Vec<S>> {
        self.check(k)?;
        self.check_base(u)?;
        let (nu, nt) = (self.nu, self.nt);
        let rows = par::map_range(nu, |x| {
            (0..nt)
                .map(|y| {
                    let mut acc = S::zero();
                    for xp in 0..nu {
                        let w = self.haar[xp * nt + y] / self.delta(x, xp, y).sqrt();
                        acc += k.at(x, xp, y) * S::from_real(w) * u[xp * nt + y];
                    }
                    acc
                })
                .collect::<Vec<S>>()
        });
        Ok(rows.concat())
    }

    /// `⟨u, v⟩_μ = Σ u v̄ μ Π h`.
    pub fn inner<S: Scalar>(&self, u: &[S], v: &[S]) -> S {
        u.iter()
            .zip(v)
            .zip(&self.weight)
            .fold(S::zero(), |acc, ((a, b), w)| acc + *a * b.conj() * S::from_real(*w))
    }

    pub fn norm<S: Scalar>(&self, u: &[S]) -> f64 {
        u.iter().zip(&self.weight).map(|(a, w)| a.abs_sq() * w).sum::<f64>().sqrt()
    }

    /// Both sides of the quasi-invariance identity for a test function `f` on arrows.
    pub fn quasi_invariance(&self, f: &Kernel<f64>) -> Result<QuasiInvariance> {
        self.check(f)?;
        let (nu, nt) = (self.nu, self.nt);
        let vol_t: f64 = self.grid.cell_volume() / self.leaf_axes.iter().map(|&a| self.grid.spacing(a)).product::<f64>();
        let mut lhs = 0.0;
        let mut lit = 0.0;
        let mut rhs = 0.0;
        for x in 0..nu {
            for y in 0..nt {
                let dmu = self.mu[x * nt + y] * self.haar_u() * vol_t;
                for xp in 0..nu {
                    let nu_w = self.haar[xp * nt + y];
                    lhs += dmu * self.delta(xp, x, y) * f.at(xp, x, y) * nu_w;
                    lit += dmu * self.delta(x, xp, y) * f.at(xp, x, y) * nu_w;
                    rhs += dmu * f.at(x, xp, y) * nu_w;
                }
            }
        }
        let scale = lhs.abs() + rhs.abs() + 1.0;
        Ok(QuasiInvariance {
            residual: (lhs - rhs).abs() / scale,
            literal_form_residual: (lit - rhs).abs() / (lit.abs() + rhs.abs() + 1.0),
        })
    }

    /// Relative residual of the quasi-invariance identity, `δ(γ⁻¹)` weighting `f(γ⁻¹)`.
    pub fn quasi_invariance_residual(&self, f: &Kernel<f64>) -> Result<f64> {
        Ok(self.quasi_invariance(f)?.residual)
    }

    fn haar_u(&self) -> f64 {
        self.leaf_axes.iter().map(|&a| self.grid.spacing(a)).product()
    }

    /// `R_x(k)` on the source fiber through base node `index` (grid order): the
    /// matrix `[k(a, b, y₀) ν(b, y₀)]`.
    pub fn leafwise_rep<S: Scalar>(&self, k: &Kernel<S>, index: usize) -> Result<Vec<Vec<S>>> {
        self.check(k)?;
        let total = self.nu * self.nt;
        if index >= total {
            return Err(Error::IndexOutOfRange { index, len: total });
        }
        let b = self.node.iter().position(|&n| n == index).expect("node map is a bijection");
        let y = b % self.nt;
        Ok((0..self.nu)
            .map(|a| {
                (0..self.nu)
                    .map(|c| k.at(a, c, y) * S::from_real(self.haar[c * self.nt + y]))
                    .collect()
            })
            .collect())
    }

    /// Centered-difference matrices of `X` along `U`, one per transversal node.
    fn leaf_differences(&self, x: &VectorField) -> Vec<CsrMatrix> {
        let g = &self.grid;
        let shape: Vec<usize> = self.leaf_axes.iter().map(|&a| g.shape()[a]).collect();
        let st = Stencil::new(
            shape,
            self.leaf_axes.iter().map(|&a| g.spacing(a)).collect(),
            self.leaf_axes.iter().map(|&a| g.chart().axes()[a].is_periodic()).collect(),
        );
        let pts = g.node_points();
        let comps: Vec<_> = self.leaf_axes.iter().map(|&a| x.components()[a].compile()).collect();
        (0..self.nt)
            .map(|y| {
                let coeffs: Vec<Option<Vec<f64>>> = comps
                    .iter()
                    .map(|c| Some((0..self.nu).map(|xi| c.eval(&pts[self.node[xi * self.nt + y]])).collect()))
                    .collect();
                difference_matrix(&st, &coeffs)
            })
            .collect()
    }

    /// `l_X = ½ X(log α) − ½ X(log μ)` with the relative residual
    /// `‖X̂ R(k)u − R((r*X̂ + l_X) k) u‖_μ / ‖u‖_μ`.
    pub fn multiplier_correction(&self, x: &VectorField, k: &Kernel<f64>, u: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check(k)?;
        self.check_base(u)?;
        if !same_chart(x.chart(), self.grid.chart()) {
            return Err(Error::ChartMismatch);
        }
        let n = self.grid.chart().dim();
        if (0..n).any(|a| !self.leaf_axes.contains(&a) && !x.components()[a].is_zero()) {
            return Err(Error::TangencyViolation);
        }
        let half = rational(1, 2);
        let l_sym = x.apply(&self.log_alpha)?.sub(&x.apply(&self.log_mu)?)?.scale(&half);
        let l_c = l_sym.compile();
        let l_x = self.sample(|p| l_c.eval(p));
        if x.is_zero() {
            return Ok((l_x, 0.0));
        }
        let (nu, nt) = (self.nu, self.nt);
        let diffs = self.leaf_differences(x);
        let apply_leaf = |w: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; nu * nt];
            for y in 0..nt {
                let col: Vec<f64> = (0..nu).map(|xi| w[xi * nt + y]).collect();
                for (xi, v) in diffs[y].matvec(&col).into_iter().enumerate() {
                    out[xi * nt + y] = v;
                }
            }
            out
        };
        let lhs = apply_leaf(&self.represent(k, u)?);
        // (r*X̂ + l_X) k: difference in the range slot, plus l_X at the range point.
        let mut lk = Kernel::<f64>::zeros(nu, nt);
        for y in 0..nt {
            for xp in 0..nu {
                let col: Vec<f64> = (0..nu).map(|xi| k.at(xi, xp, y)).collect();
                for (xi, v) in diffs[y].matvec(&col).into_iter().enumerate() {
                    let i = lk.idx(xi, xp, y);
                    lk.values[i] = v + l_x[xi * nt + y] * k.at(xi, xp, y);
                }
            }
        }
        let rhs = self.represent(&lk, u)?;
        let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        Ok((l_x, self.norm(&diff) / self.norm(u)))
    }
}
