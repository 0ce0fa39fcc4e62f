use super::sparse::merge_row;
use super::{strides, CsrMatrix, GridSpec, SparseSymOp};
use crate::error::{Error, Result};
use crate::par;
use crate::spec::DistributionSpec;
use crate::vfield::{same_chart, LogDensity, VectorField};

/// Index arithmetic for a tensor grid with periodic or zero-extended axes.
#[derive(Clone, Debug)]
pub(crate) struct Stencil {
    pub shape: Vec<usize>,
    pub h: Vec<f64>,
    pub periodic: Vec<bool>,
    strides: Vec<usize>,
}

impl Stencil {
    pub fn new(shape: Vec<usize>, h: Vec<f64>, periodic: Vec<bool>) -> Self {
        let strides = strides(&shape);
        Stencil {
            shape,
            h,
            periodic,
            strides,
        }
    }

    pub fn of(g: &GridSpec) -> Self {
        let periodic = g.chart().axes().iter().map(|a| a.is_periodic()).collect();
        Self::new(g.shape().to_vec(), g.spacings(), periodic)
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    /// Neighbor of `node` one step along `axis`; `None` past a Dirichlet end.
    fn neighbor(&self, node: usize, axis: usize, forward: bool) -> Option<usize> {
        let n = self.shape[axis];
        let s = self.strides[axis];
        let i = (node / s) % n;
        let j = match (forward, self.periodic[axis]) {
            (true, _) if i + 1 < n => i + 1,
            (true, true) => 0,
            (true, false) => return None,
            (false, _) if i > 0 => i - 1,
            (false, true) => n - 1,
            (false, false) => return None,
        };
        Some(node - i * s + j * s)
    }
}

/// Centered differences `Σ_a c_a(node) (u(node+e_a) − u(node−e_a)) / (2h_a)`, with
/// `coeffs[a]` the sampled component along axis `a` (`None` for a zero component).
pub(crate) fn difference_matrix(st: &Stencil, coeffs: &[Option<Vec<f64>>]) -> CsrMatrix {
    let rows = par::map_range(st.len(), |node| {
        let mut row = Vec::new();
        for (a, c) in coeffs.iter().enumerate() {
            let Some(c) = c else { continue };
            let w = c[node] / (2.0 * st.h[a]);
            if w == 0.0 {
                continue;
            }
            if let Some(p) = st.neighbor(node, a, true) {
                row.push((p, w));
            }
            if let Some(m) = st.neighbor(node, a, false) {
                row.push((m, -w));
            }
        }
        merge_row(row)
    });
    CsrMatrix::from_sorted_rows(st.len(), rows)
}

/// `Σ_j D_jᵀ M D_j`, upper triangle computed once and mirrored so that the
/// result is symmetric entry for entry.
pub(crate) fn gram_matrix(dim: usize, diffs: &[CsrMatrix], mass: &[f64]) -> CsrMatrix {
    let transposed: Vec<CsrMatrix> = diffs.iter().map(CsrMatrix::transpose).collect();
    let upper = par::map_range(dim, |i| {
        let mut row = Vec::new();
        for (d, t) in diffs.iter().zip(&transposed) {
            let (nodes, wi) = t.row(i);
            for (&n, &a) in nodes.iter().zip(wi) {
                let (cols, vals) = d.row(n);
                let start = cols.partition_point(|&c| c < i);
                for (&k, &b) in cols[start..].iter().zip(&vals[start..]) {
                    row.push((k, a * b * mass[n]));
                }
            }
        }
        merge_row(row)
    });
    let mut lower: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
    for (k, row) in upper.iter().enumerate() {
        for &(c, v) in row {
            if c > k {
                lower[c].push((k, v));
            }
        }
    }
    let rows = lower
        .into_iter()
        .zip(upper)
        .map(|(mut l, u)| {
            l.extend(u);
            l
        })
        .collect();
    CsrMatrix::from_sorted_rows(dim, rows)
}

fn sample_components(x: &VectorField, points: &[Vec<f64>]) -> Vec<Option<Vec<f64>>> {
    x.components()
        .iter()
        .map(|c| {
            if c.is_zero() {
                return None;
            }
            let f = c.compile();
            Some(par::map_slice(points, |p| f.eval(p)))
        })
        .collect()
}

pub fn discretize_field(x: &VectorField, g: &GridSpec) -> Result<CsrMatrix> {
    if !same_chart(x.chart(), g.chart()) {
        return Err(Error::ChartMismatch);
    }
    Ok(difference_matrix(&Stencil::of(g), &sample_components(x, &g.node_points())))
}

/// Node masses `e^φ(node) · Π h_a`.
pub fn mass_vector(mu: &LogDensity, g: &GridSpec) -> Result<Vec<f64>> {
    if !same_chart(mu.chart(), g.chart()) {
        return Err(Error::ChartMismatch);
    }
    let vol = g.cell_volume();
    let phi = mu.phi().compile();
    Ok(par::map_slice(&g.node_points(), |p| phi.eval(p).exp() * vol))
}

/// Assembles without periodicity validation.
pub fn assemble_from_fields(gens: &[VectorField], mu: &LogDensity, g: &GridSpec) -> Result<SparseSymOp> {
    let mass = mass_vector(mu, g)?;
    let diffs = gens
        .iter()
        .map(|x| discretize_field(x, g))
        .collect::<Result<Vec<_>>>()?;
    let a = gram_matrix(g.len(), &diffs, &mass);
    SparseSymOp::new(a, mass, g.shape().to_vec())
}

pub fn assemble_laplacian(spec: &DistributionSpec, g: &GridSpec) -> Result<SparseSymOp> {
    if !same_chart(&spec.chart, g.chart()) {
        return Err(Error::ChartMismatch);
    }
    if !spec.allow_nonperiodic {
        spec.check_periodicity()?;
    }
    assemble_from_fields(&spec.generators, &spec.log_density, g)
}

/// One leaf operator per transversal node, in row-major order over the
/// non-leaf axes. Leaf densities are `e^φ` restricted to the leaf.
pub fn leafwise_family(spec: &DistributionSpec, g: &GridSpec, leaf_axes: &[usize]) -> Result<Vec<SparseSymOp>> {
    if !same_chart(&spec.chart, g.chart()) {
        return Err(Error::ChartMismatch);
    }
    let n = g.chart().dim();
    let mut seen = vec![false; n];
    for &a in leaf_axes {
        if a >= n || seen[a] {
            return Err(Error::InvalidArgument(format!("invalid leaf axis list {leaf_axes:?}")));
        }
        seen[a] = true;
    }
    if leaf_axes.is_empty() {
        return Err(Error::InvalidArgument("at least one leaf axis required".into()));
    }
    let mut leaf: Vec<usize> = leaf_axes.to_vec();
    leaf.sort_unstable();
    let trans: Vec<usize> = (0..n).filter(|a| !seen[*a]).collect();
    for (name, x) in spec.names.iter().zip(&spec.generators) {
        if trans.iter().any(|&b| !x.components()[b].is_zero()) {
            return Err(Error::NotProductFoliation(name.clone()));
        }
    }
    if !spec.allow_nonperiodic {
        spec.check_periodicity()?;
    }

    let coords: Vec<Vec<f64>> = (0..n).map(|a| g.coords(a)).collect();
    let leaf_shape: Vec<usize> = leaf.iter().map(|&a| g.shape()[a]).collect();
    let trans_shape: Vec<usize> = trans.iter().map(|&a| g.shape()[a]).collect();
    let st = Stencil::new(
        leaf_shape.clone(),
        leaf.iter().map(|&a| g.spacing(a)).collect(),
        leaf.iter().map(|&a| g.chart().axes()[a].is_periodic()).collect(),
    );
    let leaf_vol: f64 = leaf.iter().map(|&a| g.spacing(a)).product();
    let leaf_len = st.len();
    let unravel = |mut i: usize, shape: &[usize]| {
        let mut out = vec![0; shape.len()];
        for a in (0..shape.len()).rev() {
            out[a] = i % shape[a];
            i /= shape[a];
        }
        out
    };
    let compiled: Vec<Vec<Option<crate::expr::CompiledPoly>>> = spec
        .generators
        .iter()
        .map(|x| leaf.iter().map(|&a| (!x.components()[a].is_zero()).then(|| x.components()[a].compile())).collect())
        .collect();
    let phi = spec.log_density.phi().compile();
    let ntrans: usize = trans_shape.iter().product();

    par::map_range(ntrans, |t| {
        let tidx = unravel(t, &trans_shape);
        let points: Vec<Vec<f64>> = (0..leaf_len)
            .map(|l| {
                let lidx = unravel(l, &leaf_shape);
                let mut p = vec![0.0; n];
                for (k, &a) in leaf.iter().enumerate() {
                    p[a] = coords[a][lidx[k]];
                }
                for (k, &b) in trans.iter().enumerate() {
                    p[b] = coords[b][tidx[k]];
                }
                p
            })
            .collect();
        let mass: Vec<f64> = points.iter().map(|p| phi.eval(p).exp() * leaf_vol).collect();
        let diffs: Vec<CsrMatrix> = compiled
            .iter()
            .map(|comps| {
                let sampled: Vec<Option<Vec<f64>>> = comps
                    .iter()
                    .map(|c| c.as_ref().map(|f| points.iter().map(|p| f.eval(p)).collect()))
                    .collect();
                difference_matrix(&st, &sampled)
            })
            .collect();
        SparseSymOp::new(gram_matrix(leaf_len, &diffs, &mass), mass, leaf_shape.clone())
    })
    .into_iter()
    .collect()
}
