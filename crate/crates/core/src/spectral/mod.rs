//! Lowest generalized eigenpairs of `(A, M)`, global-versus-leafwise
//! spectrum comparison and the subelliptic norm-gain probe.

mod band;
mod dense;
mod lobpcg;
mod subelliptic;

use nalgebra::DMatrix;
use serde::Serialize;

pub use dense::{dense_eigenpairs, dense_spectrum};
pub use subelliptic::{loglog_slope, subelliptic_ratio, SubellipticGridResult, SubellipticReport};

use crate::error::{Error, Result};
use crate::grid::{GridDescriptor, SparseSymOp};
use crate::par;

pub const DEFAULT_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub solver: String,
    pub block_size: usize,
    pub iterations: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub threads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridDescriptor>,
    /// M-orthonormal eigenvectors, one per column.
    #[serde(skip)]
    pub vectors: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub global: SpectrumReport,
    pub leafwise: Vec<SpectrumReport>,
    pub cutoff: f64,
    pub hausdorff_defect: f64,
    pub tolerance: f64,
}

fn block_size(m: usize, dim: usize) -> usize {
    (m + (m / 4).max(5)).min(dim)
}

/// Generalized residual `‖Av − λMv‖ / ‖Mv‖`.
pub fn residual(op: &SparseSymOp, lambda: f64, v: &[f64]) -> f64 {
    let av = op.apply(v);
    let mut num = 0.0;
    let mut den = 0.0;
    for ((a, m), x) in av.iter().zip(op.mass()).zip(v) {
        num += (a - lambda * m * x).powi(2);
        den += (m * x).powi(2);
    }
    (num / den).sqrt()
}

/// The `m` smallest eigenpairs of `Av = λMv`.
///
/// Problems where a LOBPCG iteration would cost about as much as a full
/// dense solve (block size above `dim / 12`) are solved densely; larger ones
/// by LOBPCG from a seeded Gaussian block.
pub fn lowest_eigenpairs(op: &SparseSymOp, m: usize, tol: f64, seed: u64) -> Result<SpectrumReport> {
    let dim = op.dim();
    if m == 0 || m > dim {
        return Err(Error::InvalidArgument(format!("requested {m} eigenpairs of a {dim}-dimensional operator")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let b = block_size(m, dim);
    let (values, vectors, iterations, converged, solver) = if 12 * b >= dim {
        let (vals, vecs) = dense_eigenpairs(op);
        (vals[..m].to_vec(), vecs.columns(0, m).into_owned(), 0, true, "dense".to_string())
    } else {
        let cap = (10.0 * m as f64 * (dim as f64).sqrt()).ceil() as usize;
        let out = lobpcg::lobpcg(op, m, b, tol, seed, cap);
        (
            out.values,
            out.vectors,
            out.iterations,
            out.converged,
            format!("lobpcg/{}", out.preconditioner),
        )
    };
    let residuals: Vec<f64> = par::map_range(m, |j| {
        let v: Vec<f64> = vectors.column(j).iter().copied().collect();
        residual(op, values[j], &v)
    });
    let converged = converged && residuals.iter().all(|&r| r <= tol);
    let report = SpectrumReport {
        eigenvalues: values,
        residuals,
        converged,
        solver,
        block_size: b,
        iterations,
        seed,
        tolerance: tol,
        threads: par::thread_count(),
        grid: None,
        vectors,
    };
    if report.converged {
        Ok(report)
    } else {
        Err(Error::NoConvergence { report: Box::new(report) })
    }
}

/// `max_{λ leafwise, λ ≤ cutoff} dist(λ, global)`, with the cutoff the largest
/// computed global eigenvalue.
pub fn hausdorff_defect(global: &[f64], leafwise: &[&[f64]]) -> (f64, f64) {
    let cutoff = global.last().copied().unwrap_or(f64::NEG_INFINITY);
    let defect = leafwise
        .iter()
        .flat_map(|l| l.iter())
        .filter(|&&l| l <= cutoff)
        .map(|&l| global.iter().map(|&g| (g - l).abs()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    (cutoff, defect)
}

pub fn compare_spectra(
    global: &SparseSymOp,
    leaves: &[SparseSymOp],
    m: usize,
    tol: f64,
    seed: u64,
) -> Result<ComparisonReport> {
    let g = lowest_eigenpairs(global, m, tol, seed)?;
    let l = par::map_slice(leaves, |op| lowest_eigenpairs(op, m.min(op.dim()), tol, seed))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let leaf_vals: Vec<&[f64]> = l.iter().map(|r| r.eigenvalues.as_slice()).collect();
    let (cutoff, defect) = hausdorff_defect(&g.eigenvalues, &leaf_vals);
    Ok(ComparisonReport {
        global: g,
        leafwise: l,
        cutoff,
        hausdorff_defect: defect,
        tolerance: tol,
    })
}
