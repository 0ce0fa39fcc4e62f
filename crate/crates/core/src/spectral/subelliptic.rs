//! Norm-gain probe `r = ‖u‖_ε / (‖M⁻¹Au‖₀ + ‖u‖₀)` on periodic grids.
//!
//! Besides seeded random trials, the operator is block-diagonalized over
//! Fourier modes along periodic axes on which nothing depends, and each block
//! is searched for its worst band-limited function.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{assemble_laplacian, fft_nd, frequency_axis, strides, GridSpec};
use crate::par;
use crate::spec::DistributionSpec;
use crate::vfield::Axis;

/// Largest dense block searched for the worst case.
const MAX_BLOCK: usize = 1024;
/// Exact ratios are evaluated on this many leading generalized eigenvectors per block.
const CANDIDATES: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubellipticGridResult {
    pub resolution: Vec<usize>,
    pub random_ratio: f64,
    pub worst_case_ratio: Option<f64>,
    pub ratio: f64,
    pub blocks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubellipticReport {
    pub epsilon: f64,
    pub trials: usize,
    pub seed: u64,
    pub invariant_axes: Vec<usize>,
    pub grids: Vec<SubellipticGridResult>,
    pub ratios: Vec<f64>,
    /// `max r / min r − 1` across grids.
    pub relative_variation: f64,
    /// Least-squares slope of `log r` against `log N`, `N` the largest resolution.
    pub loglog_slope: f64,
    pub periodic_surrogate: bool,
}

fn sobolev_from_values(g: &GridSpec, periods: &[f64], values: &[f64], s: f64) -> f64 {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut data, g.shape(), false);
    let w = crate::grid::sobolev_weights(g.shape(), periods, s);
    let sum: f64 = data.iter().zip(&w).map(|(c, w)| w * c.norm_sqr()).sum();
    (g.cell_volume() / g.len() as f64 * sum).sqrt()
}

/// Least-squares slope of `log r` against `log n`.
pub fn loglog_slope(ns: &[f64], rs: &[f64]) -> f64 {
    let k = ns.len() as f64;
    if ns.len() < 2 {
        return 0.0;
    }
    let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ys: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

pub fn subelliptic_ratio(
    spec: &DistributionSpec,
    grids: &[GridSpec],
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<SubellipticReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    if !spec.chart.all_periodic() {
        return Err(Error::NonPeriodicChart);
    }
    let periods: Vec<f64> = spec
        .chart
        .axes()
        .iter()
        .map(|a| match a {
            Axis::Periodic { period, .. } => *period,
            Axis::Interval { .. } => unreachable!(),
        })
        .collect();
    let n = spec.chart.dim();
    let invariant: Vec<usize> = (0..n)
        .filter(|&a| {
            !spec.log_density.phi().depends_on(a)
                && spec.generators.iter().all(|x| x.components().iter().all(|c| !c.depends_on(a)))
        })
        .collect();

    let mut results = Vec::new();
    for (gi, g) in grids.iter().enumerate() {
        if !crate::vfield::same_chart(g.chart(), &spec.chart) {
            return Err(Error::ChartMismatch);
        }
        let op = assemble_laplacian(spec, g)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(gi as u64));
        let mut random_ratio: f64 = 0.0;
        for _ in 0..trials {
            let mut u: Vec<f64> = (0..g.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = op.mass_norm_sq(&u).sqrt();
            u.iter_mut().for_each(|v| *v /= norm);
            let lu = op.apply_normalized(&u);
            let r = sobolev_from_values(g, &periods, &u, epsilon)
                / (sobolev_from_values(g, &periods, &lu, 0.0) + sobolev_from_values(g, &periods, &u, 0.0));
            random_ratio = random_ratio.max(r);
        }
        let (worst, blocks) = worst_case(spec, g, &periods, &invariant, epsilon)?;
        let ratio = worst.map_or(random_ratio, |w| w.max(random_ratio));
        results.push(SubellipticGridResult {
            resolution: g.shape().to_vec(),
            random_ratio,
            worst_case_ratio: worst,
            ratio,
            blocks,
        });
    }
    let ratios: Vec<f64> = results.iter().map(|r| r.ratio).collect();
    let ns: Vec<f64> = grids
        .iter()
        .map(|g| *g.shape().iter().max().unwrap() as f64)
        .collect();
    let hi = ratios.iter().copied().fold(f64::MIN, f64::max);
    let lo = ratios.iter().copied().fold(f64::MAX, f64::min);
    Ok(SubellipticReport {
        epsilon,
        trials,
        seed,
        invariant_axes: invariant,
        relative_variation: if ratios.is_empty() { 0.0 } else { hi / lo - 1.0 },
        loglog_slope: loglog_slope(&ns, &ratios),
        grids: results,
        ratios,
        periodic_surrogate: spec.is_periodic_surrogate(),
    })
}

/// Signed integer frequencies kept by the band limit `|k| ≤ N/4`.
fn band(nn: usize) -> Vec<(usize, i64)> {
    (0..nn)
        .filter_map(|i| {
            let k = if 2 * i <= nn { i as i64 } else { i as i64 - nn as i64 };
            (4 * k.unsigned_abs() as usize <= nn).then_some((i, k))
        })
        .collect()
}

/// Max over Fourier blocks of the best ratio found in each; `None` when blocks are too large.
fn worst_case(
    spec: &DistributionSpec,
    g: &GridSpec,
    periods: &[f64],
    invariant: &[usize],
    epsilon: f64,
) -> Result<(Option<f64>, usize)> {
    let n = g.chart().dim();
    let shape = g.shape();
    let h = g.spacings();
    let free: Vec<usize> = (0..n).filter(|a| !invariant.contains(a)).collect();
    let bshape: Vec<usize> = free.iter().map(|&a| shape[a]).collect();
    let bsize: usize = bshape.iter().product();
    if bsize > MAX_BLOCK {
        return Ok((None, 0));
    }
    let bstrides = strides(&bshape);
    let freq: Vec<Vec<f64>> = (0..n).map(|a| frequency_axis(shape[a], periods[a])).collect();
    let coords: Vec<Vec<f64>> = (0..n).map(|a| g.coords(a)).collect();

    // Block nodes: coordinates along free axes; invariant axes fixed at their first node.
    let points: Vec<Vec<f64>> = (0..bsize)
        .map(|b| {
            let mut p: Vec<f64> = (0..n).map(|a| coords[a][0]).collect();
            for (k, &a) in free.iter().enumerate() {
                p[a] = coords[a][(b / bstrides[k]) % bshape[k]];
            }
            p
        })
        .collect();
    let phi = spec.log_density.phi().compile();
    let vol = g.cell_volume();
    let mass: Vec<f64> = points.iter().map(|p| phi.eval(p).exp() * vol).collect();
    let comps: Vec<Vec<Vec<f64>>> = spec
        .generators
        .iter()
        .map(|x| {
            x.components()
                .iter()
                .map(|c| {
                    let f = c.compile();
                    points.iter().map(|p| f.eval(p)).collect()
                })
                .collect()
        })
        .collect();

    // Band-limited unitary Fourier basis on the block and its free-axis frequencies.
    let bands: Vec<Vec<(usize, i64)>> = free.iter().map(|&a| band(shape[a])).collect();
    let mut qmodes: Vec<Vec<usize>> = vec![Vec::new()];
    for b in &bands {
        qmodes = qmodes
            .into_iter()
            .flat_map(|m| {
                b.iter().map(move |&(i, _)| {
                    let mut m = m.clone();
                    m.push(i);
                    m
                })
            })
            .collect();
    }
    let nq = qmodes.len();
    let mut q = DMatrix::<Complex64>::zeros(bsize, nq);
    for (c, m) in qmodes.iter().enumerate() {
        let mut col = vec![Complex64::new(0.0, 0.0); bsize];
        let idx: usize = m.iter().zip(&bstrides).map(|(i, s)| i * s).sum();
        col[idx] = Complex64::new(1.0, 0.0);
        fft_nd(&mut col, &bshape, true);
        let scale = 1.0 / (bsize as f64).sqrt();
        for (r, v) in col.iter().enumerate() {
            q[(r, c)] = v * scale;
        }
    }
    let free_xi2: Vec<f64> = qmodes
        .iter()
        .map(|m| m.iter().zip(&free).map(|(&i, &a)| freq[a][i].powi(2)).sum())
        .collect();

    // Free-axis centered differences on the block (periodic wrap).
    let diff = |a_pos: usize, coef: &[f64]| -> DMatrix<Complex64> {
        let a = free[a_pos];
        let mut d = DMatrix::<Complex64>::zeros(bsize, bsize);
        let nn = bshape[a_pos];
        let s = bstrides[a_pos];
        for r in 0..bsize {
            let i = (r / s) % nn;
            let w = coef[r] / (2.0 * h[a]);
            let fwd = r - i * s + ((i + 1) % nn) * s;
            let bwd = r - i * s + ((i + nn - 1) % nn) * s;
            d[(r, fwd)] += Complex64::new(w, 0.0);
            d[(r, bwd)] -= Complex64::new(w, 0.0);
        }
        d
    };
    let free_diffs: Vec<Vec<DMatrix<Complex64>>> = comps
        .iter()
        .map(|c| (0..free.len()).map(|k| diff(k, &c[free[k]])).collect())
        .collect();

    let inv_bands: Vec<Vec<(usize, i64)>> = invariant.iter().map(|&a| band(shape[a])).collect();
    let mut kmodes: Vec<Vec<usize>> = vec![Vec::new()];
    for b in &inv_bands {
        kmodes = kmodes
            .into_iter()
            .flat_map(|m| {
                b.iter().map(move |&(i, _)| {
                    let mut m = m.clone();
                    m.push(i);
                    m
                })
            })
            .collect();
    }

    let best = par::map_slice(&kmodes, |km| {
        let inv_xi2: f64 = km.iter().zip(invariant).map(|(&i, &a)| freq[a][i].powi(2)).sum();
        // X̂_j(k) = Σ_free diag(X_ja) D_a + Σ_inv diag(X_ja) i sin(ξ_a h_a)/h_a
        let mut a_k = DMatrix::<Complex64>::zeros(bsize, bsize);
        for (j, c) in comps.iter().enumerate() {
            let mut xj = DMatrix::<Complex64>::zeros(bsize, bsize);
            for d in &free_diffs[j] {
                xj += d;
            }
            for (&i, &a) in km.iter().zip(invariant) {
                let sym = Complex64::new(0.0, (freq[a][i] * h[a]).sin() / h[a]);
                for r in 0..bsize {
                    xj[(r, r)] += sym * c[a][r];
                }
            }
            let mut mx = xj.clone();
            for r in 0..bsize {
                for col in 0..bsize {
                    mx[(r, col)] *= mass[r];
                }
            }
            a_k += xj.adjoint() * mx;
        }
        let mut hq = a_k * &q;
        for r in 0..bsize {
            for col in 0..nq {
                hq[(r, col)] /= mass[r];
            }
        }
        let w: Vec<f64> = free_xi2.iter().map(|f| (1.0 + f + inv_xi2).powf(epsilon)).collect();
        let mut bq = hq.adjoint() * &hq;
        for i in 0..nq {
            bq[(i, i)] += Complex64::new(1.0, 0.0);
        }
        let bq = (&bq + bq.adjoint()) * Complex64::new(0.5, 0.0);
        let chol = Cholesky::new(bq).expect("H^H H + I is positive definite");
        let linv = chol
            .l()
            .solve_lower_triangular(&DMatrix::<Complex64>::identity(nq, nq))
            .expect("nonsingular factor");
        let mut wl = linv.adjoint();
        for r in 0..nq {
            for col in 0..nq {
                wl[(r, col)] *= w[r];
            }
        }
        let c = &linv * wl;
        let c = (&c + c.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(c);
        let mut order: Vec<usize> = (0..nq).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
        let mut block_best: f64 = 0.0;
        for &k in order.iter().take(CANDIDATES) {
            let y = eig.eigenvectors.column(k).into_owned();
            let coef = linv.adjoint() * y;
            let num: f64 = (0..nq).map(|i| w[i] * coef[i].norm_sqr()).sum::<f64>().sqrt();
            let hu = (&hq * &coef).norm();
            let u = (&q * &coef).norm();
            block_best = block_best.max(num / (hu + u));
        }
        block_best
    });
    let worst = best.iter().copied().fold(0.0, f64::max);
    Ok((Some(worst), kmodes.len()))
}

