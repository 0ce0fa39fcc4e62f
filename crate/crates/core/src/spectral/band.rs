//! Banded Cholesky factorization of `A + τM` under the grid-axis ordering
//! that minimizes bandwidth, used as a shift-invert preconditioner.

use crate::grid::{CsrMatrix, SparseSymOp};

/// Band storage above this many entries falls back to a diagonal preconditioner.
const MAX_BAND_ENTRIES: usize = 25_000_000;

pub(crate) struct BandCholesky {
    n: usize,
    bw: usize,
    /// Row `i` holds `L[i][i-bw ..= i]`.
    l: Vec<f64>,
    /// `perm[i]` is the banded position of node `i`.
    perm: Vec<usize>,
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Node relabeling for the axis order `order` (slowest first).
fn relabel(shape: &[usize], order: &[usize]) -> Vec<usize> {
    let n: usize = shape.iter().product();
    let strides = crate::grid::strides(shape);
    let new_shape: Vec<usize> = order.iter().map(|&a| shape[a]).collect();
    let new_strides = crate::grid::strides(&new_shape);
    (0..n)
        .map(|i| {
            order
                .iter()
                .zip(&new_strides)
                .map(|(&a, &s)| ((i / strides[a]) % shape[a]) * s)
                .sum()
        })
        .collect()
}

fn bandwidth(a: &CsrMatrix, perm: &[usize]) -> usize {
    a.triplets()
        .map(|(i, j, _)| perm[i].abs_diff(perm[j]))
        .max()
        .unwrap_or(0)
}

impl BandCholesky {
    /// Factors `A + τM`; `None` when the band is too wide or the shifted matrix is not positive definite.
    pub fn factor(op: &SparseSymOp, tau: f64) -> Option<Self> {
        let a = op.matrix();
        let n = op.dim();
        let shape = op.shape();
        let orders = if shape.len() <= 6 {
            permutations(shape.len())
        } else {
            vec![(0..shape.len()).collect()]
        };
        let (perm, bw) = orders
            .iter()
            .map(|o| {
                let p = relabel(shape, o);
                let b = bandwidth(a, &p);
                (p, b)
            })
            .min_by_key(|(_, b)| *b)?;
        if n.checked_mul(bw + 1)? > MAX_BAND_ENTRIES {
            return None;
        }
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            let pi = perm[i];
            for (&c, &v) in cols.iter().zip(vals) {
                let pc = perm[c];
                if pc <= pi {
                    l[pi * w + bw - (pi - pc)] += v;
                }
            }
            l[pi * w + bw] += tau * op.mass()[i];
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(bw));
                let mut s = l[i * w + bw - (i - j)];
                for k in klo..j {
                    s -= l[i * w + bw - (i - k)] * l[j * w + bw - (j - k)];
                }
                if i == j {
                    if !(s > 0.0) {
                        return None;
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + bw - (i - j)] = s / l[j * w + bw];
                }
            }
        }
        Some(BandCholesky { n, bw, l, perm })
    }

    /// Solves `(A + τM) x = b` in node ordering.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut y = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            y[p] = b[i];
        }
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = y[i];
            for k in lo..i {
                s -= self.l[i * w + bw - (i - k)] * y[k];
            }
            y[i] = s / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = y[i];
            for k in i + 1..=hi {
                s -= self.l[k * w + bw - (k - i)] * y[k];
            }
            y[i] = s / self.l[i * w + bw];
        }
        self.perm.iter().map(|&p| y[p]).collect()
    }
}
