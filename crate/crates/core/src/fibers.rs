//! Evaluation fibers `D_x`, module fibers `𝒟_x = 𝒟/I_x𝒟` through bounded-degree
//! polynomial syzygies, and continuity-point detection.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::error::Result;
use crate::exact;
use crate::expr::{Exponent, PolyExpr, Rational};
use crate::par;
use crate::vfield::VectorField;

/// Relations `Σ f_i X_i = 0` with `deg f_i ≤ degree_bound`, as a basis over ℚ.
#[derive(Clone, Debug, PartialEq)]
pub struct SyzygyBasis {
    pub degree_bound: u32,
    pub basis: Vec<Vec<PolyExpr>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FiberReport {
    pub point: Vec<Rational>,
    pub dim_ev: usize,
    pub dim_mod: usize,
    pub degree_bound: u32,
    pub is_continuity_point: bool,
}

/// Default syzygy degree bound: twice the largest component degree, plus two.
pub fn default_degree_bound(gens: &[VectorField]) -> u32 {
    2 * gens.iter().map(VectorField::max_degree).max().unwrap_or(0) + 2
}

fn check_points(gens: &[VectorField], x: &[Rational]) -> Result<()> {
    match gens.first() {
        Some(g) => g.chart().check_point(x),
        None => Ok(()),
    }
}

fn eval_rows(gens: &[VectorField], x: &[Rational]) -> Result<Vec<Vec<Rational>>> {
    gens.iter().map(|g| g.eval(x)).collect()
}

/// `dim D_x`: exact rank of `[X_1(x) … X_k(x)]`.
pub fn eval_fiber_dim(gens: &[VectorField], x: &[Rational]) -> Result<usize> {
    check_points(gens, x)?;
    if gens.is_empty() {
        return Ok(0);
    }
    Ok(exact::rank(&eval_rows(gens, x)?, x.len()))
}

/// All exponents of total degree ≤ d in n variables, graded then lexicographic.
fn monomials_up_to(n: usize, d: u32) -> Vec<Exponent> {
    let mut out = Vec::new();
    for total in 0..=d {
        let mut cur = vec![0u32; n];
        fill(&mut cur, 0, total, &mut out);
    }
    out
}

fn fill(cur: &mut Exponent, pos: usize, left: u32, out: &mut Vec<Exponent>) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    if cur.is_empty() {
        if left == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e;
        fill(cur, pos + 1, left - e, out);
    }
    cur[pos] = 0;
}

/// Exact nullspace of `(f_1, …, f_k) ↦ Σ f_i X_i` restricted to `deg f_i ≤ d`.
pub fn syzygy_basis(gens: &[VectorField], degree_bound: u32) -> Result<SyzygyBasis> {
    let k = gens.len();
    if k == 0 {
        return Ok(SyzygyBasis {
            degree_bound,
            basis: Vec::new(),
        });
    }
    let n = gens[0].chart().dim();
    for g in &gens[1..] {
        if !crate::vfield::same_chart(gens[0].chart(), g.chart()) {
            return Err(crate::Error::ChartMismatch);
        }
    }
    let monos = monomials_up_to(n, degree_bound);
    let ncols = k * monos.len();

    // Row key: (component, product monomial).
    let mut rows: BTreeMap<(usize, Exponent), Vec<Rational>> = BTreeMap::new();
    for (i, g) in gens.iter().enumerate() {
        for (j, comp) in g.components().iter().enumerate() {
            for (e, c) in comp.terms() {
                for (a, m) in monos.iter().enumerate() {
                    let prod: Exponent = e.iter().zip(m).map(|(p, q)| p + q).collect();
                    let row = rows
                        .entry((j, prod))
                        .or_insert_with(|| vec![Rational::zero(); ncols]);
                    row[i * monos.len() + a] += c;
                }
            }
        }
    }
    let rows: Vec<Vec<Rational>> = rows.into_values().collect();
    let null = exact::nullspace(&rows, ncols);

    let basis = null
        .into_iter()
        .map(|v| {
            (0..k)
                .map(|i| {
                    let terms = monos
                        .iter()
                        .zip(&v[i * monos.len()..(i + 1) * monos.len()])
                        .filter(|(_, c)| !c.is_zero())
                        .map(|(m, c)| (m.clone(), c.clone()));
                    PolyExpr::from_terms(n, terms)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyzygyBasis {
        degree_bound,
        basis,
    })
}

fn evaluated_relations(syz: &SyzygyBasis, x: &[Rational]) -> Result<Vec<Vec<Rational>>> {
    syz.basis
        .iter()
        .map(|t| t.iter().map(|f| f.eval(x)).collect())
        .collect()
}

fn module_dim_from(k: usize, syz: &SyzygyBasis, x: &[Rational]) -> Result<usize> {
    let rel = evaluated_relations(syz, x)?;
    Ok(k - exact::rank(&rel, k))
}

/// Upper bound for `dim 𝒟_x`: `k − dim span{ f(x) : f ∈ syzygies of degree ≤ d }`.
pub fn module_fiber_dim(gens: &[VectorField], x: &[Rational], degree_bound: u32) -> Result<usize> {
    check_points(gens, x)?;
    let syz = syzygy_basis(gens, degree_bound)?;
    module_dim_from(gens.len(), &syz, x)
}

pub fn continuity_scan(
    gens: &[VectorField],
    points: &[Vec<Rational>],
    degree_bound: u32,
) -> Result<Vec<FiberReport>> {
    for p in points {
        check_points(gens, p)?;
    }
    let syz = syzygy_basis(gens, degree_bound)?;
    par::map_slice(points, |p| {
        let dim_ev = eval_fiber_dim(gens, p)?;
        let dim_mod = module_dim_from(gens.len(), &syz, p)?;
        Ok(FiberReport {
            point: p.clone(),
            dim_ev,
            dim_mod,
            degree_bound,
            is_continuity_point: dim_ev == dim_mod,
        })
    })
    .into_iter()
    .collect()
}

/// Generator indices (0-based, ascending greedy) whose classes form a basis of `ℚ^k / ev_x(Syz)`.
pub fn minimal_presentation_at(gens: &[VectorField], x: &[Rational], degree_bound: u32) -> Result<Vec<usize>> {
    check_points(gens, x)?;
    let k = gens.len();
    let syz = syzygy_basis(gens, degree_bound)?;
    let mut rows = evaluated_relations(&syz, x)?;
    let mut r = exact::rank(&rows, k);
    let mut chosen = Vec::new();
    for i in 0..k {
        let mut e = vec![Rational::zero(); k];
        e[i] = Rational::from_integer(1.into());
        rows.push(e);
        let r2 = exact::rank(&rows, k);
        if r2 > r {
            chosen.push(i);
            r = r2;
        } else {
            rows.pop();
        }
    }
    Ok(chosen)
}
