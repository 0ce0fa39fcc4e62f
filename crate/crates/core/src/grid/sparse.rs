use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::par;

/// Compressed sparse rows, columns ascending within each row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

/// Sorts by column (stable, so equal columns add in insertion order) and merges.
pub(crate) fn merge_row(mut row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    row.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
    for (c, v) in row {
        match out.last_mut() {
            Some(last) if last.0 == c => last.1 += v,
            _ => out.push((c, v)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    out
}

impl CsrMatrix {
    /// Rows must already be sorted and duplicate-free.
    pub fn from_sorted_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut data = Vec::with_capacity(nnz);
        for r in &rows {
            for &(c, v) in r {
                debug_assert!(c < ncols);
                indices.push(c);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows: rows.len(),
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); nrows];
        for &(r, c, v) in triplets {
            rows[r].push((c, v));
        }
        Self::from_sorted_rows(ncols, rows.into_iter().map(merge_row).collect())
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_sorted_rows(ncols, vec![Vec::new(); nrows])
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.data[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|p| vals[p]).unwrap_or(0.0)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        par::map_range(self.nrows, |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
        })
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut rows = vec![Vec::new(); self.ncols];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                rows[c].push((i, v));
            }
        }
        Self::from_sorted_rows(self.nrows, rows)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                m[(i, c)] = v;
            }
        }
        m
    }

    /// Entrywise equality with the transpose, no tolerance.
    pub fn is_exactly_symmetric(&self) -> bool {
        self.nrows == self.ncols && *self == self.transpose()
    }

    /// Infinity norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&c, &v)| (i, c, v))
        })
    }
}

/// Symmetric `A` with diagonal mass `M`; the operator is `M⁻¹A` on `L²(M)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymOp {
    a: CsrMatrix,
    mass: Vec<f64>,
    shape: Vec<usize>,
}

impl SparseSymOp {
    pub fn new(a: CsrMatrix, mass: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() != mass.len() {
            return Err(Error::LengthMismatch {
                expected: a.nrows(),
                found: mass.len(),
            });
        }
        if shape.iter().product::<usize>() != mass.len() {
            return Err(Error::GridMismatch("shape does not match operator size".into()));
        }
        if let Some(m) = mass.iter().find(|m| !(**m > 0.0)) {
            return Err(Error::InvalidArgument(format!("mass entry {m} is not positive")));
        }
        Ok(SparseSymOp { a, mass, shape })
    }

    pub fn dim(&self) -> usize {
        self.mass.len()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.a
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.a.matvec(u)
    }

    /// `M⁻¹ A u`.
    pub fn apply_normalized(&self, u: &[f64]) -> Vec<f64> {
        let mut v = self.a.matvec(u);
        for (x, m) in v.iter_mut().zip(&self.mass) {
            *x /= m;
        }
        v
    }

    pub fn quadratic_form(&self, u: &[f64]) -> f64 {
        self.apply(u).iter().zip(u).map(|(a, b)| a * b).sum()
    }

    pub fn mass_norm_sq(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.mass).map(|(x, m)| m * x * x).sum()
    }

    /// Text export: `dim nnz`, `row col value` lines, a `mass` line, then the mass entries.
    pub fn export(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "{} {}", self.dim(), self.a.nnz())?;
        for (i, j, v) in self.a.triplets() {
            writeln!(w, "{i} {j} {v:.16e}")?;
        }
        writeln!(w, "mass")?;
        for m in &self.mass {
            writeln!(w, "{m:.16e}")?;
        }
        Ok(())
    }

    /// Reads the export format; the result is one-dimensional in shape.
    pub fn import(r: impl BufRead) -> Result<Self> {
        let bad = |what: &str| Error::InvalidArgument(format!("operator file: {what}"));
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| bad("missing header"))??;
        let mut it = header.split_whitespace();
        let dim: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad dim"))?;
        let nnz: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad nnz"))?;
        let mut trip = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let line = lines.next().ok_or_else(|| bad("truncated entries"))??;
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad("entry needs three fields"));
            }
            let i: usize = f[0].parse().map_err(|_| bad("row index"))?;
            let j: usize = f[1].parse().map_err(|_| bad("column index"))?;
            let v: f64 = f[2].parse().map_err(|_| bad("value"))?;
            if i >= dim || j >= dim {
                return Err(bad("index out of range"));
            }
            trip.push((i, j, v));
        }
        if lines.next().transpose()?.as_deref().map(str::trim) != Some("mass") {
            return Err(bad("missing mass sentinel"));
        }
        let mass = (0..dim)
            .map(|_| {
                let l = lines.next().ok_or_else(|| bad("truncated mass"))??;
                l.trim().parse::<f64>().map_err(|_| bad("mass value"))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(CsrMatrix::from_triplets(dim, dim, &trip), mass, vec![dim])
    }
}
