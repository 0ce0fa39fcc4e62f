//! Block preconditioned conjugate-gradient Rayleigh-quotient minimization on
//! `B = M^{-1/2} A M^{-1/2}` with explicit reorthogonalization.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::band::BandCholesky;
use crate::grid::SparseSymOp;
use crate::par;

pub(crate) enum Precond {
    Band(BandCholesky),
    Jacobi(Vec<f64>),
}

impl Precond {
    pub fn name(&self) -> &'static str {
        match self {
            Precond::Band(_) => "banded-cholesky",
            Precond::Jacobi(_) => "jacobi",
        }
    }
}

pub(crate) struct Outcome {
    pub values: Vec<f64>,
    /// Node-space vectors, M-orthonormal, one per column.
    pub vectors: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub preconditioner: &'static str,
}

struct Problem<'a> {
    op: &'a SparseSymOp,
    /// `M^{-1/2}`
    s: Vec<f64>,
    pre: Precond,
}

impl Problem<'_> {
    fn apply_b(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows();
        let cols = par::map_range(x.ncols(), |j| {
            let t: Vec<f64> = (0..n).map(|i| x[(i, j)] * self.s[i]).collect();
            let y = self.op.matrix().matvec(&t);
            y.iter().zip(&self.s).map(|(a, b)| a * b).collect::<Vec<f64>>()
        });
        DMatrix::from_fn(n, x.ncols(), |i, j| cols[j][i])
    }

    /// `M^{1/2} (A + τM)^{-1} M^{1/2}` applied columnwise.
    fn precondition(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        let n = r.nrows();
        let cols = par::map_range(r.ncols(), |j| {
            let t: Vec<f64> = (0..n).map(|i| r[(i, j)] / self.s[i]).collect();
            let z = match &self.pre {
                Precond::Band(ch) => ch.solve(&t),
                Precond::Jacobi(d) => t.iter().zip(d).map(|(a, b)| a / b).collect(),
            };
            z.iter().zip(&self.s).map(|(a, b)| a / b).collect::<Vec<f64>>()
        });
        DMatrix::from_fn(n, r.ncols(), |i, j| cols[j][i])
    }

    /// `‖Av − λMv‖ / ‖Mv‖` for `v = M^{-1/2} x`, from the standard-form residual `r = Bx − λx`.
    fn residual_norm(&self, r: &DMatrix<f64>, x: &DMatrix<f64>, j: usize) -> f64 {
        let num: f64 = (0..r.nrows()).map(|i| (r[(i, j)] / self.s[i]).powi(2)).sum();
        let den: f64 = (0..x.nrows()).map(|i| (x[(i, j)] / self.s[i]).powi(2)).sum();
        (num / den).sqrt()
    }
}

/// Removes components along `x` and returns an orthonormal basis of what is left.
fn orthonormalize_against(mut y: DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    for _ in 0..2 {
        // Column scales differ by orders of magnitude near convergence.
        for mut col in y.column_iter_mut() {
            let nrm = col.norm();
            if nrm > 0.0 {
                col /= nrm;
            }
        }
        if y.ncols() == 0 {
            return y;
        }
        for _ in 0..2 {
            let c = x.transpose() * &y;
            y -= x * c;
        }
        let gram = y.transpose() * &y;
        let eig = SymmetricEigen::new(gram);
        let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&k| eig.eigenvalues[k] > 1e-12 * top && eig.eigenvalues[k] > 1e-300)
            .collect();
        let mut t = DMatrix::<f64>::zeros(y.ncols(), keep.len());
        for (c, &k) in keep.iter().enumerate() {
            let scale = 1.0 / eig.eigenvalues[k].sqrt();
            for r in 0..y.ncols() {
                t[(r, c)] = eig.eigenvectors[(r, k)] * scale;
            }
        }
        y = &y * t;
    }
    y
}

fn rayleigh_ritz(s: &DMatrix<f64>, bs: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let g = s.transpose() * bs;
    let g = (&g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let vals = DVector::from_iterator(order.len(), order.iter().map(|&k| eig.eigenvalues[k]));
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

pub(crate) fn lobpcg(op: &SparseSymOp, m: usize, block: usize, tol: f64, seed: u64, max_iter: usize) -> Outcome {
    let n = op.dim();
    let s: Vec<f64> = op.mass().iter().map(|v| 1.0 / v.sqrt()).collect();
    let gersh = (0..n)
        .map(|i| op.matrix().row(i).1.iter().map(|v| v.abs()).sum::<f64>() / op.mass()[i])
        .fold(0.0, f64::max);
    // Small shift relative to the Gershgorin bound keeps A + τM definite on singular A.
    let tau = (1e-6 * gersh).max(f64::MIN_POSITIVE);
    let pre = match BandCholesky::factor(op, tau) {
        Some(ch) => Precond::Band(ch),
        None => Precond::Jacobi(
            (0..n)
                .map(|i| op.matrix().get(i, i) + tau * op.mass()[i])
                .collect(),
        ),
    };
    let prob = Problem { op, s, pre };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = DMatrix::from_fn(n, block, |_, _| StandardNormal.sample(&mut rng));
    let x0 = orthonormalize_against(x0, &DMatrix::zeros(n, 0));
    let bx0 = prob.apply_b(&x0);
    let (_, c) = rayleigh_ritz(&x0, &bx0);
    let mut x = &x0 * c.columns(0, block.min(x0.ncols()));
    let mut p: Option<DMatrix<f64>> = None;
    let mut iterations = 0;

    loop {
        let bx = prob.apply_b(&x);
        let (theta, c) = rayleigh_ritz(&x, &bx);
        x = &x * &c;
        let bx = bx * &c;
        let b = x.ncols();
        let mut r = bx.clone();
        for j in 0..b {
            let t = theta[j];
            r.column_mut(j).axpy(-t, &x.column(j), 1.0);
        }
        let res: Vec<f64> = (0..b).map(|j| prob.residual_norm(&r, &x, j)).collect();
        let done = res[..m].iter().all(|&v| v <= tol);
        if done || iterations >= max_iter {
            let vectors = DMatrix::from_fn(n, m, |i, j| x[(i, j)] * prob.s[i]);
            return Outcome {
                values: theta.iter().take(m).copied().collect(),
                vectors,
                iterations,
                converged: done,
                preconditioner: prob.pre.name(),
            };
        }
        iterations += 1;

        let active: Vec<usize> = (0..b).filter(|&j| res[j] > tol).collect();
        let ra = DMatrix::from_fn(n, active.len(), |i, k| r[(i, active[k])]);
        let w = prob.precondition(&ra);
        let y = match &p {
            Some(p) => {
                let mut y = DMatrix::zeros(n, w.ncols() + p.ncols());
                y.columns_mut(0, w.ncols()).copy_from(&w);
                y.columns_mut(w.ncols(), p.ncols()).copy_from(p);
                y
            }
            None => w,
        };
        let y = orthonormalize_against(y, &x);
        let by = prob.apply_b(&y);

        let k = y.ncols();
        let mut sm = DMatrix::zeros(n, b + k);
        sm.columns_mut(0, b).copy_from(&x);
        sm.columns_mut(b, k).copy_from(&y);
        let mut bs = DMatrix::zeros(n, b + k);
        bs.columns_mut(0, b).copy_from(&bx);
        bs.columns_mut(b, k).copy_from(&by);
        let (_, c) = rayleigh_ritz(&sm, &bs);
        let c = c.columns(0, b).into_owned();
        let cy = c.rows(b, k).into_owned();
        x = &sm * &c;
        p = (k > 0).then(|| orthonormalize_against(&y * &cy, &DMatrix::zeros(n, 0)));
        // Renormalize Ritz vectors against drift.
        x = orthonormalize_against(x, &DMatrix::zeros(n, 0));
    }
}
